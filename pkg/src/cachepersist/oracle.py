"""Ground truth for small instances: concrete LRU simulation and witness search.

A block is persistent iff no path from the entry makes it miss twice.
Whether a further access to the block misses depends only on the current
node, the content of the LRU cache and how often the block has missed so
far, so a breadth-first search over these triples is complete. Paths
are cut at length ``|V| + |V|*|E| + 2``: if any path makes a block miss
twice, a path within that length does too.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .cfg import AccessKind, ControlFlowGraph, Edge

DEFAULT_BUDGET = 2000


class BudgetExceeded(Exception):
    pass


class OracleUnsupported(ValueError):
    pass


def lru_simulate(trace: Sequence[str], k: int) -> list[bool]:
    """Hit (True) or miss (False) for every access of ``trace``."""
    if k < 1:
        raise ValueError("associativity must be at least 1")
    cache: list[str] = []  # most recent first
    out = []
    for b in trace:
        hit = b in cache
        out.append(hit)
        if hit:
            cache.remove(b)
        cache.insert(0, b)
        del cache[k:]
    return out


def age(trace: Sequence[str], b: str) -> int | None:
    """Distinct blocks accessed since the last access to ``b``, itself included.

    Returns None if ``b`` never occurs in ``trace``.
    """
    for i in range(len(trace) - 1, -1, -1):
        if trace[i] == b:
            return len(set(trace[i:]))
    return None


def _step(cache: tuple[str, ...], b: str, k: int) -> tuple[bool, tuple[str, ...]]:
    hit = b in cache
    rest = tuple(x for x in cache if x != b)
    return hit, ((b,) + rest)[:k]


@dataclass(frozen=True)
class Witness:
    """A path from the entry on which ``block`` misses twice."""

    block: str
    path: tuple[Edge, ...]
    miss_positions: tuple[int, int]

    def trace(self) -> list[str]:
        return [e.access.block for e in self.path if e.access.kind is AccessKind.SINGLE]

    def describe(self) -> str:
        steps = [f"{e.source} -{str(e.access) or 'eps'}-> {e.target}" for e in self.path]
        return "; ".join(steps)


def length_bound(cfg: ControlFlowGraph) -> int:
    v, e = len(cfg.nodes), len(cfg.edges)
    return v + v * e + 2


def _check(cfg: ControlFlowGraph, budget: int) -> None:
    size = len(cfg.nodes) * len(cfg.edges)
    if size > budget:
        raise BudgetExceeded(
            f"|V|*|E| = {size} exceeds the oracle budget of {budget}")
    for e in cfg.edges:
        if e.access.kind not in (AccessKind.SINGLE, AccessKind.EMPTY):
            raise OracleUnsupported(
                "the oracle only handles single-block and empty edges")


def find_witness(cfg: ControlFlowGraph, b: str, k: int, budget: int = DEFAULT_BUDGET,
                 max_length: int | None = None) -> Witness | None:
    """Shortest path on which ``b`` misses twice, or None if ``b`` is persistent.

    Ties between equally short paths go to the one whose edge indices are
    lexicographically smallest.
    """
    _check(cfg, budget)
    if k < 1:
        raise ValueError("associativity must be at least 1")
    bound = length_bound(cfg) if max_length is None else max_length
    out_edges = cfg.out_edges
    start = (cfg.entry, (), 0)
    parent: dict[tuple, tuple | None] = {start: None}
    depth = {start: 0}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        node, cache, misses = state
        if depth[state] >= bound:
            continue
        for e in out_edges[node]:
            acc = e.access
            new_cache, new_misses = cache, misses
            if acc.kind is AccessKind.SINGLE:
                hit, new_cache = _step(cache, acc.block, k)
                if acc.block == b and not hit:
                    new_misses += 1
            nxt = (e.target, new_cache, new_misses)
            if nxt in parent:
                continue
            parent[nxt] = (state, e)
            depth[nxt] = depth[state] + 1
            if new_misses >= 2:
                return _rebuild(parent, nxt, b, k)
            queue.append(nxt)
    return None


def _rebuild(parent, state, b: str, k: int) -> Witness:
    path = []
    while parent[state] is not None:
        state, e = parent[state]
        path.append(e)
    path.reverse()
    return Witness(b, tuple(path), _miss_positions(path, b, k))


def _miss_positions(path, b: str, k: int) -> tuple[int, int]:
    """Path indices of the first two edges on which ``b`` misses."""
    accesses = [(i, e.access.block) for i, e in enumerate(path)
                if e.access.kind is AccessKind.SINGLE]
    hits = lru_simulate([blk for _, blk in accesses], k)
    found = [i for (i, blk), hit in zip(accesses, hits) if blk == b and not hit]
    return found[0], found[1]


def brute_force_persistent(cfg: ControlFlowGraph, b: str, k: int,
                           budget: int = DEFAULT_BUDGET, fallback: bool = False) -> bool:
    """True iff ``b`` can never miss twice.

    With ``fallback`` set, instances over budget are decided by the explicit
    exact analysis instead of raising :class:`BudgetExceeded`.
    """
    try:
        return find_witness(cfg, b, k, budget) is None
    except BudgetExceeded:
        if not fallback:
            raise
    from .exact_explicit import ExactExplicitDomain
    from .solver import program_scope, analyze_scope
    domain = ExactExplicitDomain(k, cfg.block_ids, "0")
    return analyze_scope(cfg, program_scope(cfg), domain, [b]).persistent[b]
