"""Test-input generators: the Hamiltonian-circuit reduction and random CFGs."""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass

from .cfg import (EMPTY, UNKNOWN, Access, ControlFlowGraph, Edge, MemoryBlock,
                  dominators, reachable)

HAMILTONIAN_BLOCK = "b"
MAX_BRUTE_FORCE_VERTICES = 10


@dataclass(frozen=True)
class UndirectedGraph:
    n: int
    edges: frozenset  # of frozenset({u, v})

    def __post_init__(self):
        norm = set()
        for e in self.edges:
            pair = frozenset(e)
            if len(pair) != 2:
                raise ValueError(f"self-loop or malformed edge {tuple(e)!r}")
            if not all(0 <= v < self.n for v in pair):
                raise ValueError(f"edge {tuple(sorted(pair))} outside 0..{self.n - 1}")
            norm.add(pair)
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "UndirectedGraph":
        return cls(n, frozenset(frozenset(p) for p in pairs))

    def has_edge(self, u: int, v: int) -> bool:
        return frozenset((u, v)) in self.edges

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.edges)


def parse_edge_list(text: str) -> UndirectedGraph:
    """Read ``u v`` pairs, one per line; ``n <count>`` optionally fixes the size."""
    n = None
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = re.split(r"[\s,\-]+", line)
        try:
            if parts[0] == "n" and len(parts) == 2:
                n = int(parts[1])
            elif len(parts) == 2:
                pairs.append((int(parts[0]), int(parts[1])))
            else:
                raise ValueError
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'u v' or 'n <count>'") from None
    if n is None:
        n = 1 + max((max(p) for p in pairs), default=-1)
    return UndirectedGraph.from_pairs(n, pairs)


def brute_force_hamiltonian(g: UndirectedGraph) -> bool:
    """Does a cycle through all vertices exist? Tries every ordering."""
    if g.n > MAX_BRUTE_FORCE_VERTICES:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_VERTICES} vertices")
    if g.n < 2:
        return False
    for perm in itertools.permutations(range(1, g.n)):
        tour = (0,) + perm
        if all(g.has_edge(tour[i], tour[(i + 1) % g.n]) for i in range(g.n)):
            return True
    return False


def _vertex_block(j: int) -> str:
    return f"v{j}"


def gen_hamiltonian_cfg(g: UndirectedGraph, line_size: int = 16,
                        num_sets: int = 32) -> tuple[ControlFlowGraph, str, int]:
    """CFG on which block ``b`` is not persistent at ``k = n`` iff ``g`` is Hamiltonian.

    Layer ``l`` holds a copy of every vertex; moving to vertex ``j`` accesses
    the block of ``j``. A path from the first copy of vertex 0 to the last
    copy of vertex 0 followed by the back edge (which accesses ``b``) sees
    ``n + 1`` distinct blocks exactly when it visits every vertex once.
    Nodes unreachable from the entry are left out. All blocks map to the
    same cache set.
    """
    n = g.n
    if n < 2:
        raise ValueError("the reduction needs at least two vertices")
    first, last = "v0_0", f"v0_{n}"

    def name(j, layer):
        return f"v{j}_{layer}"

    edges = []
    for j in range(1, n):
        if g.has_edge(0, j):
            edges.append(Edge(first, Access.single(_vertex_block(j)), name(j, 1)))
    for layer in range(1, n - 1):
        for j in range(1, n):
            for j2 in range(1, n):
                if g.has_edge(j, j2):
                    edges.append(Edge(name(j, layer), Access.single(_vertex_block(j2)),
                                      name(j2, layer + 1)))
    for j in range(1, n):
        if g.has_edge(j, 0):
            edges.append(Edge(name(j, n - 1), Access.single(_vertex_block(0)), last))
    edges.append(Edge(last, Access.single(HAMILTONIAN_BLOCK), first))

    all_nodes = [first] + [name(j, layer) for layer in range(1, n) for j in range(1, n)] + [last]
    succ: dict[str, list[str]] = {v: [] for v in all_nodes}
    for e in edges:
        succ[e.source].append(e.target)
    live = reachable(first, succ)
    stride = line_size * num_sets
    blocks = [MemoryBlock(_vertex_block(j), j * stride) for j in range(n)]
    blocks.append(MemoryBlock(HAMILTONIAN_BLOCK, n * stride))
    cfg = ControlFlowGraph(
        nodes=tuple(v for v in all_nodes if v in live),
        edges=tuple(e for e in edges if e.source in live),
        entry=first,
        blocks=tuple(blocks),
    )
    return cfg, HAMILTONIAN_BLOCK, n


def gen_random_cfg(seed: int, num_nodes: int = 5, num_blocks: int = 3,
                   branch_factor: int = 2, loop_probability: float = 0.3,
                   many_rate: float = 0.0, unknown_rate: float = 0.0,
                   empty_rate: float = 0.2, max_many: int | None = None) -> ControlFlowGraph:
    """Seeded random reducible CFG.

    A random tree from the entry makes every node reachable, extra forward
    edges add branching (up to ``branch_factor`` successors per node) and
    each node gets a back edge to one of its dominators with probability
    ``loop_probability``. Edge labels are unknown, many, empty or single
    with the given rates.
    """
    if num_nodes < 1 or num_blocks < 1 or branch_factor < 1:
        raise ValueError("node count, block count and branch factor must be positive")
    for rate in (loop_probability, many_rate, unknown_rate, empty_rate):
        if not 0.0 <= rate <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
    if many_rate > 0 and num_blocks < 2:
        raise ValueError("many labels need at least two blocks")
    rng = random.Random(seed)
    nodes = [f"n{i}" for i in range(num_nodes)]
    blocks = [f"b{i}" for i in range(num_blocks)]
    max_many = num_blocks if max_many is None else max(2, min(max_many, num_blocks))

    def label() -> Access:
        r = rng.random()
        if r < unknown_rate:
            return UNKNOWN
        r -= unknown_rate
        if r < many_rate:
            size = rng.randint(2, max_many)
            return Access.many(rng.sample(blocks, size))
        r -= many_rate
        if r < empty_rate:
            return EMPTY
        return Access.single(rng.choice(blocks))

    pairs: list[tuple[int, int]] = []
    out_degree = [0] * num_nodes
    for j in range(1, num_nodes):
        i = rng.randrange(j)
        pairs.append((i, j))
        out_degree[i] += 1
    for i in range(num_nodes - 1):
        while out_degree[i] < branch_factor and rng.random() < 0.5:
            pairs.append((i, rng.randrange(i + 1, num_nodes)))
            out_degree[i] += 1
    succ: dict[str, list[str]] = {v: [] for v in nodes}
    pred: dict[str, list[str]] = {v: [] for v in nodes}
    for i, j in pairs:
        succ[nodes[i]].append(nodes[j])
        pred[nodes[j]].append(nodes[i])
    dom = dominators(nodes, nodes[0], succ, pred)
    for i, v in enumerate(nodes):
        if rng.random() < loop_probability:
            heads = sorted(dom[v], key=nodes.index)
            pairs.append((i, nodes.index(rng.choice(heads))))
    pairs.sort(key=lambda p: p[0])
    edges = tuple(Edge(nodes[i], label(), nodes[j]) for i, j in pairs)
    return ControlFlowGraph(nodes=tuple(nodes), edges=edges, entry=nodes[0],
                            blocks=tuple(MemoryBlock(b) for b in blocks))

