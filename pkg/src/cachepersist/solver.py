"""Fixpoint engine, scope driver, differential checker and constraint emitter."""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .baseline import (BlockCsDomain, CMustDomain, Domain, GlobalCsDomain,
                       MustDomain, ProductDomain)
from .cfg import (AccessKind, CacheConfig, ControlFlowGraph, Scope,
                  block_set_index, detect_natural_loops, project_to_cache_set)
from .exact_explicit import ExactExplicitDomain
from .exact_zdd import ExactZddDomain

PROGRAM_SCOPE = "program"
FORMAT_VERSION = 1
EXPLICIT_TIER0_MAX_BLOCKS = 12


class AnalysisError(Exception):
    pass


class FixpointError(AnalysisError):
    pass


# -- domain registry -----------------------------------------------------------

DomainFactory = Callable[[int, Sequence[str]], Domain]

DOMAINS: dict[str, DomainFactory] = {
    "must": MustDomain,
    "cmust": CMustDomain,
    "blockcs": BlockCsDomain,
    "globalcs": GlobalCsDomain,
    "product": ProductDomain,
    "exact": ExactZddDomain,
    "exact-explicit-0": lambda k, blocks: ExactExplicitDomain(k, blocks, "0"),
    "exact-explicit-up": lambda k, blocks: ExactExplicitDomain(k, blocks, "up"),
    "exact-explicit-k": lambda k, blocks: ExactExplicitDomain(k, blocks, "k"),
}


def register_domain(name: str, factory: DomainFactory) -> None:
    DOMAINS[name] = factory


def make_domain(name: str, k: int, blocks: Sequence[str]) -> Domain:
    try:
        factory = DOMAINS[name]
    except KeyError:
        raise AnalysisError(
            f"unknown domain {name!r}; choose from {', '.join(DOMAINS)}") from None
    if name == "exact-explicit-0" and len(blocks) > EXPLICIT_TIER0_MAX_BLOCKS:
        raise AnalysisError(
            f"exact-explicit-0 is limited to {EXPLICIT_TIER0_MAX_BLOCKS} blocks "
            f"per cache set, got {len(blocks)}")
    return factory(k, blocks)


# -- fixpoint -----------------------------------------------------------------

# observer(event, node, state): event is "update" or "join"
Observer = Callable[[str, str, Any], None]


@dataclass
class FixpointResult:
    states: dict[str, Any]
    iterations: int

    def __getitem__(self, node):
        return self.states[node]


def solve_fixpoint(cfg: ControlFlowGraph, domain: Domain, order: str = "rpo",
                   max_iterations: int = 1_000_000,
                   observer: Observer | None = None) -> FixpointResult:
    """Least solution of the abstract equations by worklist iteration.

    ``order`` is ``"rpo"`` (priority by reverse postorder) or ``"fifo"``.
    Nodes are only visited once some state reaches them; unreached nodes
    end up with ``domain.bottom()``.
    """
    rpo = {n: i for i, n in enumerate(cfg.reverse_postorder())}
    states: dict[str, Any] = {cfg.entry: domain.init_entry()}
    if order == "rpo":
        heap = [(rpo[cfg.entry], cfg.entry)]
        pending = {cfg.entry}

        def push(n):
            if n not in pending:
                pending.add(n)
                heapq.heappush(heap, (rpo[n], n))

        def pop():
            n = heapq.heappop(heap)[1]
            pending.discard(n)
            return n

        def nonempty():
            return bool(heap)
    elif order == "fifo":
        queue = deque([cfg.entry])
        pending = {cfg.entry}

        def push(n):
            if n not in pending:
                pending.add(n)
                queue.append(n)

        def pop():
            n = queue.popleft()
            pending.discard(n)
            return n

        def nonempty():
            return bool(queue)
    else:
        raise ValueError(f"unknown worklist order {order!r}")

    iterations = 0
    while nonempty():
        iterations += 1
        if iterations > max_iterations:
            raise FixpointError(
                f"no fixpoint after {max_iterations} iterations "
                f"({domain.name}, {len(cfg.nodes)} nodes, pending {sorted(pending)})")
        v = pop()
        src = states[v]
        for e in cfg.out_edges[v]:
            new = domain.update(src, e.access)
            if observer:
                observer("update", e.target, new)
            w = e.target
            if w in states:
                joined = domain.join(states[w], new)
                if observer:
                    observer("join", w, joined)
                if joined == states[w]:
                    continue
                new = joined
            states[w] = new
            push(w)
    for n in cfg.nodes:
        states.setdefault(n, domain.bottom())
    return FixpointResult(states, iterations)


# -- scopes -----------------------------------------------------------------------

def program_scope(cfg: ControlFlowGraph) -> Scope:
    return Scope(PROGRAM_SCOPE, cfg.entry, frozenset(cfg.nodes))


def select_scopes(cfg: ControlFlowGraph, mode: str = "auto") -> list[Scope]:
    """Scopes to analyze; the whole program always comes first."""
    scopes = [program_scope(cfg)]
    if mode == "whole":
        return scopes
    if mode == "explicit":
        return scopes + list(cfg.scopes)
    if mode == "auto":
        return scopes + (list(cfg.scopes) if cfg.scopes else detect_natural_loops(cfg))
    raise AnalysisError(f"unknown scope mode {mode!r}")


def scope_subgraph(cfg: ControlFlowGraph, scope: Scope) -> ControlFlowGraph:
    """The scope's members with the header as entry; exit edges are cut."""
    if scope.name == PROGRAM_SCOPE and scope.members == frozenset(cfg.nodes):
        return cfg
    if scope.header not in cfg.successors:
        raise AnalysisError(f"scope {scope.name!r}: header {scope.header!r} not in graph")
    members = scope.members
    return ControlFlowGraph(
        nodes=tuple(n for n in cfg.nodes if n in members),
        edges=tuple(e for e in cfg.edges if e.source in members and e.target in members),
        entry=scope.header,
        blocks=cfg.blocks,
    )


def scope_access_locations(cfg: ControlFlowGraph, scope: Scope) -> dict[str, frozenset[str]]:
    """``V_b`` restricted to the scope; accesses on exit edges count."""
    return {b: locs & scope.members for b, locs in cfg.access_locations.items()}


@dataclass
class ScopeResult:
    scope: Scope
    persistent: dict[str, bool]
    accessed: dict[str, bool]
    iterations: int
    fixpoint: FixpointResult | None = None


def analyze_scope(cfg: ControlFlowGraph, scope: Scope, domain: Domain,
                  blocks: Sequence[str] | None = None, order: str = "rpo",
                  keep_states: bool = False) -> ScopeResult:
    """Classify ``blocks`` (default: the domain's universe) within one scope.

    A block is persistent if the domain classifies it persistent at every
    scope location followed by a possible access to it.
    """
    sub = scope_subgraph(cfg, scope)
    result = solve_fixpoint(sub, domain, order=order)
    locs = scope_access_locations(cfg, scope)
    persistent, accessed = {}, {}
    for b in (domain.blocks if blocks is None else blocks):
        where = locs.get(b, frozenset())
        accessed[b] = bool(where)
        persistent[b] = all(domain.classify(result.states[v], b) for v in where)
    return ScopeResult(scope, persistent, accessed, result.iterations,
                       result if keep_states else None)


# -- whole-program driver ------------------------------------------------------------

def cache_set_partition(cfg: ControlFlowGraph, config: CacheConfig) -> dict[int, list[str]]:
    sets: dict[int, list[str]] = {}
    for b in cfg.blocks:
        sets.setdefault(block_set_index(b, config), []).append(b.id)
    return dict(sorted(sets.items()))


def _projections(cfg, config):
    """(set index, projected cfg, blocks of that set) for every used set."""
    for idx, blocks in cache_set_partition(cfg, config).items():
        proj = cfg if config.num_sets == 1 else project_to_cache_set(cfg, config, idx)
        yield idx, proj, blocks


@dataclass
class BlockVerdict:
    cache_set: int
    accessed: bool
    persistent: dict[str, bool] = field(default_factory=dict)


@dataclass
class ScopeReport:
    scope: Scope
    blocks: dict[str, BlockVerdict] = field(default_factory=dict)


@dataclass
class AnalysisReport:
    config: CacheConfig
    domains: list[str]
    scopes: list[ScopeReport]
    stats: dict[str, dict[str, int]]

    def scope(self, name: str) -> ScopeReport:
        for s in self.scopes:
            if s.scope.name == name:
                return s
        raise KeyError(name)

    def persistent_blocks(self, scope: str, domain: str) -> set[str]:
        return {b for b, v in self.scope(scope).blocks.items() if v.persistent[domain]}

    def is_persistent(self, scope: str, block: str, domain: str) -> bool:
        return self.scope(scope).blocks[block].persistent[domain]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": {"associativity": self.config.associativity,
                       "num_sets": self.config.num_sets,
                       "line_size": self.config.line_size},
            "domains": list(self.domains),
            "scopes": [
                {
                    "name": s.scope.name,
                    "header": s.scope.header,
                    "members": sorted(s.scope.members),
                    "blocks": {
                        b: {"set": v.cache_set, "accessed": v.accessed,
                            "classification": {
                                d: "Persistent" if v.persistent[d] else "NotPersistent"
                                for d in self.domains}}
                        for b, v in s.blocks.items()
                    },
                }
                for s in self.scopes
            ],
            "stats": self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_text(self) -> str:
        c = self.config
        lines = [f"cache: k={c.associativity} sets={c.num_sets} line={c.line_size}"]
        for s in self.scopes:
            lines.append(f"scope {s.scope.name} (header {s.scope.header}, "
                         f"{len(s.scope.members)} nodes)")
            header = ["block", "set", "accessed"] + self.domains
            rows = [[b, str(v.cache_set), "yes" if v.accessed else "no"]
                    + ["Persistent" if v.persistent[d] else "NotPersistent"
                       for d in self.domains]
                    for b, v in s.blocks.items()]
            widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
            for r in [header] + rows:
                lines.append("  " + "  ".join(x.ljust(w) for x, w in zip(r, widths)).rstrip())
        for d in self.domains:
            st = self.stats.get(d, {})
            lines.append(f"stats {d}: " + " ".join(f"{k}={v}" for k, v in st.items()))
        return "\n".join(lines) + "\n"


def analyze_program(cfg: ControlFlowGraph, config: CacheConfig,
                    domains: Sequence[str], scope_mode: str = "auto",
                    order: str = "rpo",
                    on_result: Callable[[str, int, ScopeResult, Domain], None] | None = None
                    ) -> AnalysisReport:
    """Run every selected domain on every cache set and scope.

    ``on_result(domain_name, set_index, scope_result, domain)`` is called
    after each run while the domain still holds its internal state.
    """
    domains = list(domains)
    if not domains:
        raise AnalysisError("no domain selected")
    for d in domains:
        if d not in DOMAINS:
            raise AnalysisError(f"unknown domain {d!r}; choose from {', '.join(DOMAINS)}")
    scopes = select_scopes(cfg, scope_mode)
    reports = [ScopeReport(s) for s in scopes]
    stats = {d: {"iterations": 0} for d in domains}
    for idx, proj, blocks in _projections(cfg, config):
        for r in reports:
            for b in blocks:
                r.blocks[b] = BlockVerdict(idx, False)
        for d in domains:
            for r in reports:
                domain = make_domain(d, config.associativity, blocks)
                try:
                    res = analyze_scope(proj, r.scope, domain, order=order,
                                        keep_states=on_result is not None)
                except ValueError as exc:
                    raise AnalysisError(f"{d}: {exc}") from exc
                stats[d]["iterations"] += res.iterations
                for key, val in domain.stats().items():
                    stats[d][key] = max(stats[d].get(key, 0), val)
                if on_result:
                    on_result(d, idx, res, domain)
                domain.release()
                for b in blocks:
                    verdict = r.blocks[b]
                    verdict.accessed = res.accessed[b]
                    verdict.persistent[d] = res.persistent[b]
    for r in reports:
        order_of = {b.id: i for i, b in enumerate(cfg.blocks)}
        r.blocks = dict(sorted(r.blocks.items(), key=lambda kv: order_of[kv[0]]))
    return AnalysisReport(config, domains, reports, stats)


# -- differential mode -------------------------------------------------------------

@dataclass(frozen=True)
class Discrepancy:
    cache_set: int
    scope: str
    node: str
    event: str
    block: str


@dataclass
class DifferentialReport:
    reference: str
    subject: str
    gaps: list[Discrepancy] = field(default_factory=list)
    violations: list[Discrepancy] = field(default_factory=list)

    @property
    def sound(self) -> bool:
        return not self.violations

    def gap_blocks(self) -> list[str]:
        return list(dict.fromkeys(g.block for g in self.gaps))

    def violation_blocks(self) -> list[str]:
        return list(dict.fromkeys(v.block for v in self.violations))

    def to_dict(self) -> dict:
        def rows(items):
            return [{"set": x.cache_set, "scope": x.scope, "node": x.node,
                     "event": x.event, "block": x.block} for x in items]
        return {"format_version": FORMAT_VERSION, "reference": self.reference,
                "subject": self.subject, "sound": self.sound,
                "gap_blocks": self.gap_blocks(),
                "violation_blocks": self.violation_blocks(),
                "gaps": rows(self.gaps), "violations": rows(self.violations)}

    def to_text(self) -> str:
        lines = [f"reference {self.reference}, subject {self.subject}"]
        for b in self.gap_blocks():
            where = sorted({(g.scope, g.node) for g in self.gaps if g.block == b})
            lines.append(f"precision gap: {b} at " +
                         ", ".join(f"{s}:{n}" for s, n in where))
        for b in self.violation_blocks():
            where = sorted({(v.scope, v.node) for v in self.violations if v.block == b})
            lines.append(f"SOUNDNESS VIOLATION: {b} at " +
                         ", ".join(f"{s}:{n}" for s, n in where))
        lines.append(f"gaps: {len(self.gap_blocks())} block(s), "
                     f"violations: {len(self.violation_blocks())} block(s)")
        lines.append("verdict: " + ("sound" if self.sound else "UNSOUND"))
        return "\n".join(lines) + "\n"


class PairDomain(Domain):
    """Runs two domains in lockstep on the same schedule."""

    def __init__(self, first: Domain, second: Domain):
        super().__init__(first.k, first.blocks)
        self.first, self.second = first, second
        self.name = f"{first.name}+{second.name}"

    def bottom(self):
        return self.first.bottom(), self.second.bottom()

    def init_entry(self):
        return self.first.init_entry(), self.second.init_entry()

    def update(self, state, access):
        return self.first.update(state[0], access), self.second.update(state[1], access)

    def join(self, a, b):
        return self.first.join(a[0], b[0]), self.second.join(a[1], b[1])

    def classify(self, state, block):
        return self.first.classify(state[0], block) and self.second.classify(state[1], block)


def differential_check(cfg: ControlFlowGraph, config: CacheConfig, subject: str,
                       reference: str = "exact", scope_mode: str = "auto",
                       order: str = "rpo") -> DifferentialReport:
    """Compare classifications of ``subject`` against ``reference`` after every step."""
    report = DifferentialReport(reference, subject)
    seen: set[Discrepancy] = set()
    for idx, proj, blocks in _projections(cfg, config):
        for scope in select_scopes(proj, scope_mode):
            ref = make_domain(reference, config.associativity, blocks)
            sub = make_domain(subject, config.associativity, blocks)
            pair = PairDomain(ref, sub)

            def observe(event, node, state, scope=scope, idx=idx):
                for b in blocks:
                    r = ref.classify(state[0], b)
                    s = sub.classify(state[1], b)
                    if r == s:
                        continue
                    item = Discrepancy(idx, scope.name, node, event, b)
                    if item in seen:
                        continue
                    seen.add(item)
                    (report.violations if s else report.gaps).append(item)

            sub_cfg = scope_subgraph(proj, scope)
            try:
                observe("init", sub_cfg.entry, pair.init_entry())
                solve_fixpoint(sub_cfg, pair, order=order, observer=observe)
            except ValueError as exc:
                raise AnalysisError(str(exc)) from exc
            ref.release()
            sub.release()
    return report


# -- constraint emission ------------------------------------------------------------

def emit_persistence_constraints(report: AnalysisReport, cfg: ControlFlowGraph,
                                 domains: Sequence[str] | None = None) -> str:
    """Linear constraints bounding misses of persistent blocks per scope entry.

    A block counts as persistent if any of ``domains`` (default: all
    domains in the report) proves it; every domain is sound, so the union
    is too. ``m_<block>_<scope>`` is the number of misses of the block on
    the listed edges inside the scope, ``entries_<scope>`` the number of
    times the scope is entered.
    """
    domains = list(report.domains if domains is None else domains)
    lines = []
    for s in report.scopes:
        name = s.scope.name
        body = []
        for b, verdict in s.blocks.items():
            if not verdict.accessed or not any(verdict.persistent[d] for d in domains):
                continue
            edges = [f"{e.source}->{e.target}" for e in cfg.edges
                     if e.source in s.scope.members and e.access.kind is not AccessKind.EMPTY
                     and b in e.access.may_access(cfg.block_ids)]
            body.append(f"# m_{b}_{name} sums misses of {b} on: {' '.join(edges)}")
            body.append(f"m_{b}_{name} <= entries_{name};")
        if body:
            lines.append(f"# scope {name} (header {s.scope.header})")
            lines.extend(body)
    return "\n".join(lines) + ("\n" if lines else "")
