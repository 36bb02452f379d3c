"""Control-flow graphs whose edges carry memory accesses.

A graph is a set of locations, a list of labeled edges and an entry
location. Each edge label says which memory block(s) the edge touches:
exactly one block, one of several candidate blocks, an unknown block, or
nothing at all. Persistence scopes (usually loops) are attached to the
graph and can be given explicitly in the text format or discovered with
:func:`detect_natural_loops`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence


class CfgError(ValueError):
    """Raised for malformed or invalid control-flow graphs."""


class CfgSyntaxError(CfgError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class IrreducibleLoopError(CfgError):
    pass


@dataclass(frozen=True)
class MemoryBlock:
    id: str
    address: int | None = None


class AccessKind(enum.Enum):
    SINGLE = "single"
    MANY = "many"
    UNKNOWN = "unknown"
    EMPTY = "empty"


@dataclass(frozen=True)
class Access:
    """The memory access performed along one edge.

    ``blocks`` is sorted and only populated for SINGLE (one block) and
    MANY (two or more blocks). Use the constructors rather than building
    instances by hand so that MANY labels stay normalized.
    """

    kind: AccessKind
    blocks: tuple[str, ...] = ()

    @classmethod
    def single(cls, block: str) -> "Access":
        return cls(AccessKind.SINGLE, (block,))

    @classmethod
    def many(cls, blocks: Iterable[str]) -> "Access":
        distinct = tuple(sorted(set(blocks)))
        if not distinct:
            raise CfgError("an access set must name at least one block")
        if len(distinct) == 1:
            return cls.single(distinct[0])
        return cls(AccessKind.MANY, distinct)

    @property
    def is_empty(self) -> bool:
        return self.kind is AccessKind.EMPTY

    @property
    def block(self) -> str:
        if self.kind is not AccessKind.SINGLE:
            raise CfgError(f"{self.kind.value} access has no single block")
        return self.blocks[0]

    def may_access(self, universe: Sequence[str]) -> tuple[str, ...]:
        if self.kind is AccessKind.UNKNOWN:
            return tuple(universe)
        return self.blocks

    def __str__(self) -> str:
        if self.kind is AccessKind.SINGLE:
            return self.blocks[0]
        if self.kind is AccessKind.MANY:
            return "{" + ",".join(self.blocks) + "}"
        if self.kind is AccessKind.UNKNOWN:
            return "?"
        return ""


EMPTY = Access(AccessKind.EMPTY)
UNKNOWN = Access(AccessKind.UNKNOWN)


@dataclass(frozen=True)
class Edge:
    source: str
    access: Access
    target: str


@dataclass(frozen=True)
class Scope:
    name: str
    header: str
    members: frozenset[str]


@dataclass(frozen=True)
class CacheConfig:
    associativity: int = 8
    num_sets: int = 32
    line_size: int = 16

    def __post_init__(self):
        if self.associativity < 1:
            raise CfgError("associativity must be at least 1")
        if self.num_sets < 1:
            raise CfgError("number of cache sets must be at least 1")
        if self.line_size < 1 or self.line_size & (self.line_size - 1):
            raise CfgError("line size must be a positive power of two")

    def set_index(self, address: int) -> int:
        return (address // self.line_size) % self.num_sets


@dataclass(frozen=True)
class ControlFlowGraph:
    """A validated control-flow graph ``(V, E, i)`` plus blocks and scopes.

    Instances validate themselves on construction and are immutable
    afterwards. ``blocks`` fixes the block universe and its order, which
    downstream analyses use as variable order.
    """

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    entry: str
    blocks: tuple[MemoryBlock, ...] = ()
    scopes: tuple[Scope, ...] = ()
    node_addresses: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "scopes", tuple(self.scopes))
        object.__setattr__(self, "node_addresses", dict(self.node_addresses))
        self._validate()

    def _validate(self) -> None:
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise CfgError("duplicate node declaration")
        if self.entry not in node_set:
            raise CfgError(f"entry node {self.entry!r} is not declared")
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise CfgError("duplicate block declaration")
        known = set(ids)
        for e in self.edges:
            for end in (e.source, e.target):
                if end not in node_set:
                    raise CfgError(f"edge endpoint undeclared: {end!r}")
            for b in e.access.blocks:
                if b not in known:
                    raise CfgError(f"edge accesses undeclared block {b!r}")
        unreachable = node_set - reachable(self.entry, self.successors)
        if unreachable:
            first = next(n for n in self.nodes if n in unreachable)
            raise CfgError(f"unreachable node: {first!r}")
        names = set()
        for scope in self.scopes:
            if scope.name in names:
                raise CfgError(f"duplicate scope name {scope.name!r}")
            names.add(scope.name)
            self._validate_scope(scope)

    def _validate_scope(self, scope: Scope) -> None:
        for m in scope.members:
            if m not in self.successors:
                raise CfgError(f"scope member undeclared: {m!r} in {scope.name!r}")
        if scope.header not in scope.members:
            raise CfgError(f"scope {scope.name!r}: header is not a member")

        def inner(n):
            return [w for w in self.successors[n] if w in scope.members]

        stray = scope.members - reachable(scope.header, inner)
        if stray:
            raise CfgError(
                f"scope {scope.name!r}: members {sorted(stray)} are not "
                "reachable from the header inside the scope"
            )
        dom = self.dominators
        for e in self.edges:
            if (e.target == scope.header and e.source not in scope.members
                    and scope.header in dom[e.source]):
                raise CfgError(
                    f"scope {scope.name!r}: back edge from {e.source!r} "
                    "enters the header from outside the scope"
                )

    @cached_property
    def block_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.blocks)

    @cached_property
    def block_map(self) -> dict[str, MemoryBlock]:
        return {b.id: b for b in self.blocks}

    @cached_property
    def successors(self) -> dict[str, list[str]]:
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            succ[e.source].append(e.target)
        return succ

    @cached_property
    def predecessors(self) -> dict[str, list[str]]:
        pred: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            pred[e.target].append(e.source)
        return pred

    @cached_property
    def out_edges(self) -> dict[str, list[Edge]]:
        out: dict[str, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            out[e.source].append(e)
        return out

    @cached_property
    def dominators(self) -> dict[str, frozenset[str]]:
        return dominators(self.nodes, self.entry, self.successors, self.predecessors)

    @cached_property
    def access_locations(self) -> dict[str, frozenset[str]]:
        """``V_b`` for every block: locations followed by a possible access to it."""
        locs: dict[str, set[str]] = {b: set() for b in self.block_ids}
        for e in self.edges:
            for b in e.access.may_access(self.block_ids):
                locs[b].add(e.source)
        return {b: frozenset(v) for b, v in locs.items()}

    def reverse_postorder(self) -> list[str]:
        return reverse_postorder(self.entry, self.successors, self.nodes)

    def with_edges(self, edges: Iterable[Edge]) -> "ControlFlowGraph":
        return replace(self, edges=tuple(edges))


def reachable(start: str, successors) -> set[str]:
    """Nodes reachable from ``start``; ``successors`` is a mapping or callable."""
    step = successors if callable(successors) else successors.__getitem__
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for w in step(n):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def reverse_postorder(entry: str, successors: Mapping[str, Sequence[str]],
                      order: Sequence[str] = ()) -> list[str]:
    # Iterative DFS; successors visited in declaration order for determinism.
    post: list[str] = []
    seen = {entry}
    stack: list[tuple[str, Iterator[str]]] = [(entry, iter(successors[entry]))]
    while stack:
        node, it = stack[-1]
        for w in it:
            if w not in seen:
                seen.add(w)
                stack.append((w, iter(successors[w])))
                break
        else:
            stack.pop()
            post.append(node)
    post.reverse()
    return post


def dominators(nodes, entry, successors, predecessors) -> dict[str, frozenset[str]]:
    rpo = reverse_postorder(entry, successors)
    full = frozenset(rpo)
    dom = {n: full for n in rpo}
    dom[entry] = frozenset([entry])
    changed = True
    while changed:
        changed = False
        for n in rpo:
            if n == entry:
                continue
            preds = [dom[p] for p in predecessors[n] if p in dom]
            new = frozenset.intersection(*preds) | {n}
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


def detect_natural_loops(cfg: ControlFlowGraph) -> list[Scope]:
    """Find one scope per loop header, innermost loops first.

    Back edges sharing a header are merged into a single loop. Raises
    :class:`IrreducibleLoopError` if some cycle is not entered through a
    dominating header.
    """
    dom = cfg.dominators
    _check_reducible(cfg, dom)
    bodies: dict[str, set[str]] = {}
    for e in cfg.edges:
        if e.target in dom[e.source]:
            body = bodies.setdefault(e.target, {e.target})
            stack = [e.source]
            while stack:
                n = stack.pop()
                if n not in body:
                    body.add(n)
                    stack.extend(cfg.predecessors[n])
    position = {n: i for i, n in enumerate(cfg.nodes)}
    loops = [Scope(f"loop_{h}", h, frozenset(body)) for h, body in bodies.items()]
    loops.sort(key=lambda s: (len(s.members), position[s.header]))
    return loops


def _check_reducible(cfg: ControlFlowGraph, dom) -> None:
    on_stack = {cfg.entry}
    seen = {cfg.entry}
    stack = [(cfg.entry, iter(cfg.successors[cfg.entry]))]
    while stack:
        node, it = stack[-1]
        for w in it:
            if w in on_stack and w not in dom[node]:
                raise IrreducibleLoopError(
                    f"irreducible loop; declare scopes explicitly (cycle through {w!r})")
            if w not in seen:
                seen.add(w)
                on_stack.add(w)
                stack.append((w, iter(cfg.successors[w])))
                break
        else:
            stack.pop()
            on_stack.discard(node)


def project_to_cache_set(cfg: ControlFlowGraph, config: CacheConfig,
                         set_index: int) -> ControlFlowGraph:
    """Keep only the accesses that map to cache set ``set_index``.

    Accesses to other sets become empty edges; unknown accesses are kept
    since they may touch any set.
    """
    if not 0 <= set_index < config.num_sets:
        raise CfgError(f"set index {set_index} out of range")
    if config.num_sets == 1:
        return cfg
    in_set = {b.id for b in cfg.blocks if block_set_index(b, config) == set_index}
    edges = []
    for e in cfg.edges:
        acc = e.access
        if acc.kind in (AccessKind.SINGLE, AccessKind.MANY):
            kept = [b for b in acc.blocks if b in in_set]
            acc = Access.many(kept) if kept else EMPTY
        edges.append(Edge(e.source, acc, e.target))
    return cfg.with_edges(edges)


def block_set_index(block: MemoryBlock, config: CacheConfig) -> int:
    if config.num_sets == 1:
        return 0
    if block.address is None:
        raise CfgError(f"block {block.id!r} has no address but the cache has "
                       f"{config.num_sets} sets")
    if block.address % config.line_size:
        raise CfgError(f"block {block.id!r} address {block.address:#x} is not "
                       f"aligned to the {config.line_size}-byte line size")
    return config.set_index(block.address)


def expand_access_sets(cfg: ControlFlowGraph,
                       unknown_pool: Sequence[str] | None = None) -> ControlFlowGraph:
    """Replace every MANY edge by parallel SINGLE edges.

    If ``unknown_pool`` is given, UNKNOWN edges are expanded as well: into
    one SINGLE edge per block of the universe plus one per pool block
    (pool blocks are added to the universe).
    """
    blocks = list(cfg.blocks)
    if unknown_pool is not None:
        fresh = [p for p in unknown_pool if p not in cfg.block_map]
        blocks += [MemoryBlock(p) for p in fresh]
    universe = [b.id for b in blocks]
    edges = []
    for e in cfg.edges:
        if e.access.kind is AccessKind.MANY:
            edges += [Edge(e.source, Access.single(b), e.target) for b in e.access.blocks]
        elif e.access.kind is AccessKind.UNKNOWN and unknown_pool is not None:
            edges += [Edge(e.source, Access.single(b), e.target) for b in universe]
        else:
            edges.append(e)
    return replace(cfg, edges=tuple(edges), blocks=tuple(blocks))


# -- text format -----------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(#.*)|(->)|([A-Za-z0-9_.$]+)|([@{},;?]))")


def _tokenize(text: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        pos = 0
        while pos < len(line):
            m = _TOKEN.match(line, pos)
            if not m:
                if line[pos:].strip() == "":
                    break
                raise CfgSyntaxError(f"unexpected character {line[pos]!r}",
                                     lineno, pos + 1)
            if m.group(1) is not None:
                break
            tok = m.group(2) or m.group(3) or m.group(4)
            if tok is None:
                break
            yield tok, lineno, m.start(m.lastindex) + 1
            pos = m.end()
    yield None, len(text.splitlines()) + 1, 1


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0]

    def where(self):
        _, line, col = self.tokens[self.i]
        return line, col

    def fail(self, msg):
        raise CfgSyntaxError(msg, *self.where())

    def next(self):
        tok = self.tokens[self.i]
        if tok[0] is None:
            self.fail("unexpected end of input")
        self.i += 1
        return tok[0]

    def expect(self, tok):
        if self.peek() != tok:
            self.fail(f"expected {tok!r}, found {self.peek()!r}")
        self.i += 1

    def ident(self, what):
        tok = self.peek()
        if tok is None or not re.fullmatch(r"[A-Za-z0-9_.$]+", tok):
            self.fail(f"expected {what}, found {tok!r}")
        self.i += 1
        return tok

    def address(self):
        tok = self.ident("hex address")
        try:
            return int(tok, 16)
        except ValueError:
            self.fail(f"invalid hex address {tok!r}")


def parse_cfg(text: str) -> ControlFlowGraph:
    """Parse and validate a CFG document.

    >>> g = parse_cfg("entry n0;")
    >>> g.nodes, g.edges
    (('n0',), ())
    """
    p = _Parser(text)
    entry = None
    nodes: list[str] = []
    node_addr: dict[str, int] = {}
    blocks: dict[str, MemoryBlock] = {}
    declared_blocks: set[str] = set()
    edges: list[Edge] = []
    scopes: list[Scope] = []

    def mention(b):
        if b not in blocks:
            blocks[b] = MemoryBlock(b)

    while p.peek() is not None:
        line, col = p.where()
        kw = p.next()
        if kw == "entry":
            if entry is not None:
                raise CfgSyntaxError("entry declared twice", line, col)
            entry = p.ident("node id")
        elif kw == "node":
            n = p.ident("node id")
            if n in nodes:
                raise CfgSyntaxError(f"duplicate node declaration {n!r}", line, col)
            nodes.append(n)
            if p.peek() == "@":
                p.next()
                node_addr[n] = p.address()
        elif kw == "block":
            b = p.ident("block id")
            if b in declared_blocks:
                raise CfgSyntaxError(f"duplicate block declaration {b!r}", line, col)
            declared_blocks.add(b)
            addr = None
            if p.peek() == "@":
                p.next()
                addr = p.address()
            blocks[b] = MemoryBlock(b, addr)
        elif kw == "edge":
            src = p.ident("node id")
            p.expect("->")
            dst = p.ident("node id")
            acc = EMPTY
            if p.peek() == "access":
                p.next()
                acc = _parse_label(p)
                for b in acc.blocks:
                    mention(b)
            edges.append(Edge(src, acc, dst))
        elif kw == "scope":
            name = p.ident("scope name")
            p.expect("header")
            header = p.ident("node id")
            p.expect("members")
            members = [p.ident("node id")]
            while p.peek() == ",":
                p.next()
                members.append(p.ident("node id"))
            scopes.append(Scope(name, header, frozenset(members)))
        else:
            raise CfgSyntaxError(f"unknown statement {kw!r}", line, col)
        p.expect(";")

    if entry is None:
        raise CfgSyntaxError("missing entry declaration", *p.where())
    if entry not in nodes:
        nodes.append(entry)
    declared = set(nodes)
    for e in edges:
        for end in (e.source, e.target):
            if end not in declared:
                raise CfgError(f"edge endpoint undeclared: {end!r}")
    return ControlFlowGraph(tuple(nodes), tuple(edges), entry,
                            tuple(blocks.values()), tuple(scopes), node_addr)


def _parse_label(p: _Parser) -> Access:
    if p.peek() == "?":
        p.next()
        return UNKNOWN
    if p.peek() == "{":
        p.next()
        names = [p.ident("block id")]
        while p.peek() == ",":
            p.next()
            names.append(p.ident("block id"))
        p.expect("}")
        return Access.many(names)
    return Access.single(p.ident("block id"))


def print_cfg(cfg: ControlFlowGraph) -> str:
    out = [f"entry {cfg.entry};"]
    for n in cfg.nodes:
        addr = cfg.node_addresses.get(n)
        out.append(f"node {n};" if addr is None else f"node {n} @ {addr:#x};")
    for b in cfg.blocks:
        out.append(f"block {b.id};" if b.address is None
                   else f"block {b.id} @ {b.address:#x};")
    for e in cfg.edges:
        label = "" if e.access.is_empty else f" access {e.access}"
        out.append(f"edge {e.source} -> {e.target}{label};")
    position = {n: i for i, n in enumerate(cfg.nodes)}
    for s in cfg.scopes:
        members = ",".join(sorted(s.members, key=position.__getitem__))
        out.append(f"scope {s.name} header {s.header} members {members};")
    return "\n".join(out) + "\n"
