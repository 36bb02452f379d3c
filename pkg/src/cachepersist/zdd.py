"""Zero-suppressed decision diagrams over a fixed block universe.

A ZDD node ``(var, lo, hi)`` denotes the family ``lo ∪ {s ∪ {var} | s ∈ hi}``
where every set in ``lo`` and ``hi`` only uses variables after ``var``.
Node 0 is the empty family and node 1 the family ``{∅}``. Nodes are
hash-consed in a unique table, so two handles denote the same family iff
they point at the same node.

Besides the usual set-family algebra the manager provides the antichain
operators used by the persistence analysis: :meth:`ZddManager.max_set`,
:meth:`ZddManager.max_union` and :meth:`ZddManager.max_dot_product`.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

EMPTY = 0
BASE = 1
_TERMINAL_VAR = 1 << 30


class ZddError(ValueError):
    pass


class ZddHandle:
    """Reference to a node of one manager."""

    __slots__ = ("mgr", "node")

    def __init__(self, mgr: "ZddManager", node: int):
        self.mgr = mgr
        self.node = node

    def __eq__(self, other):
        return (isinstance(other, ZddHandle) and self.mgr is other.mgr
                and self.node == other.node)

    def __hash__(self):
        return hash(self.node)

    def __repr__(self):
        return f"ZddHandle({self.node})"


class ZddManager:
    """Owner of the node table, operation caches and variable order.

    ``blocks`` gives the variable order: the block at position ``i`` is
    variable ``i`` and sits above every variable ``j > i``.
    """

    def __init__(self, blocks: Sequence[str]):
        self.blocks = tuple(blocks)
        if len(set(self.blocks)) != len(self.blocks):
            raise ZddError("duplicate block in variable order")
        self._index = {b: i for i, b in enumerate(self.blocks)}
        self._var = [_TERMINAL_VAR, _TERMINAL_VAR]
        self._lo = [EMPTY, BASE]
        self._hi = [EMPTY, BASE]
        self._unique: dict[tuple[int, int, int], int] = {}
        self._free: list[int] = []
        self._refs: dict[int, int] = {}
        self._caches: dict[str, dict] = {}

    # -- node table --------------------------------------------------------

    def _mk(self, var: int, lo: int, hi: int) -> int:
        if hi == EMPTY:
            return lo
        key = (var, lo, hi)
        node = self._unique.get(key)
        if node is None:
            if self._free:
                node = self._free.pop()
                self._var[node], self._lo[node], self._hi[node] = key
            else:
                node = len(self._var)
                self._var.append(var)
                self._lo.append(lo)
                self._hi.append(hi)
            self._unique[key] = node
        return node

    def _cache(self, name: str) -> dict:
        c = self._caches.get(name)
        if c is None:
            c = self._caches[name] = {}
        return c

    def clear_caches(self) -> None:
        self._caches.clear()

    def _split(self, f: int, var: int) -> tuple[int, int]:
        """Cofactors of ``f`` with respect to ``var`` (at or above f's top)."""
        if self._var[f] == var:
            return self._lo[f], self._hi[f]
        return f, EMPTY

    def _node(self, h: ZddHandle) -> int:
        if not isinstance(h, ZddHandle):
            raise TypeError(f"expected ZddHandle, got {type(h).__name__}")
        if h.mgr is not self:
            raise ZddError("handle belongs to a different manager")
        return h.node

    def _h(self, node: int) -> ZddHandle:
        return ZddHandle(self, node)

    def index(self, block: str) -> int:
        try:
            return self._index[block]
        except KeyError:
            raise ZddError(f"unknown block {block!r}") from None

    # -- constructors --------------------------------------------------------

    def empty(self) -> ZddHandle:
        return self._h(EMPTY)

    def base(self) -> ZddHandle:
        return self._h(BASE)

    def singleton_family(self, block: str) -> ZddHandle:
        """The family ``{{block}}``."""
        return self._h(self._mk(self.index(block), EMPTY, BASE))

    def set_node(self, blocks: Iterable[str]) -> int:
        node = BASE
        for i in sorted({self.index(b) for b in blocks}, reverse=True):
            node = self._mk(i, EMPTY, node)
        return node

    def from_sets(self, sets: Iterable[Iterable[str]]) -> ZddHandle:
        node = EMPTY
        for s in sets:
            node = self._union(node, self.set_node(s))
        return self._h(node)

    # -- plain family algebra ------------------------------------------------

    def union(self, f: ZddHandle, g: ZddHandle) -> ZddHandle:
        return self._h(self._union(self._node(f), self._node(g)))

    def _union(self, f: int, g: int) -> int:
        if f == EMPTY or f == g:
            return g
        if g == EMPTY:
            return f
        if f > g:
            f, g = g, f
        cache = self._cache("union")
        r = cache.get((f, g))
        if r is not None:
            return r
        v = min(self._var[f], self._var[g])
        f0, f1 = self._split(f, v)
        g0, g1 = self._split(g, v)
        if v == _TERMINAL_VAR:
            r = BASE
        else:
            r = self._mk(v, self._union(f0, g0), self._union(f1, g1))
        cache[(f, g)] = r
        return r

    def product(self, f: ZddHandle, g: ZddHandle) -> ZddHandle:
        """All pairwise unions ``{s ∪ t | s ∈ f, t ∈ g}``."""
        return self._h(self._product(self._node(f), self._node(g)))

    def _product(self, f: int, g: int) -> int:
        if f == EMPTY or g == EMPTY:
            return EMPTY
        if f == BASE:
            return g
        if g == BASE:
            return f
        if f > g:
            f, g = g, f
        cache = self._cache("product")
        r = cache.get((f, g))
        if r is not None:
            return r
        v = min(self._var[f], self._var[g])
        f0, f1 = self._split(f, v)
        g0, g1 = self._split(g, v)
        hi = self._union(self._product(f1, g1),
                         self._union(self._product(f1, g0), self._product(f0, g1)))
        r = self._mk(v, self._product(f0, g0), hi)
        cache[(f, g)] = r
        return r

    # -- antichain operators -------------------------------------------------

    def _not_subsumed(self, f: int, g: int) -> int:
        """Members of ``f`` that are not a subset of any member of ``g``."""
        if f == EMPTY or g == EMPTY:
            return f
        if f == BASE or f == g:
            return EMPTY
        cache = self._cache("not_subsumed")
        r = cache.get((f, g))
        if r is not None:
            return r
        if g == BASE:
            # only ∅ is a subset of ∅
            r = self._without_empty_set(f)
        else:
            v = min(self._var[f], self._var[g])
            f0, f1 = self._split(f, v)
            g0, g1 = self._split(g, v)
            lo = self._not_subsumed(self._not_subsumed(f0, g0), g1)
            r = self._mk(v, lo, self._not_subsumed(f1, g1))
        cache[(f, g)] = r
        return r

    def _without_empty_set(self, f: int) -> int:
        if f <= BASE:
            return EMPTY
        return self._mk(self._var[f], self._without_empty_set(self._lo[f]), self._hi[f])

    def max_set(self, f: ZddHandle) -> ZddHandle:
        """Members of ``f`` not strictly contained in another member."""
        return self._h(self._max_set(self._node(f)))

    def _max_set(self, f: int) -> int:
        if f <= BASE:
            return f
        cache = self._cache("max_set")
        r = cache.get(f)
        if r is not None:
            return r
        hi = self._max_set(self._hi[f])
        lo = self._not_subsumed(self._max_set(self._lo[f]), hi)
        r = self._mk(self._var[f], lo, hi)
        cache[f] = r
        return r

    def max_union(self, f: ZddHandle, g: ZddHandle) -> ZddHandle:
        return self._h(self._max_union(self._node(f), self._node(g)))

    def _max_union(self, f: int, g: int) -> int:
        return self._max_set(self._union(f, g))

    def max_dot_product(self, f: ZddHandle, g: ZddHandle) -> ZddHandle:
        return self._h(self._max_dot_product(self._node(f), self._node(g)))

    def _max_dot_product(self, f: int, g: int) -> int:
        return self._max_set(self._product(f, g))

    # -- queries ---------------------------------------------------------------

    def max_cardinality(self, f: ZddHandle) -> int:
        """Size of the largest member; 0 for both ``{}`` and ``{∅}``."""
        r = self._max_card(self._node(f))
        return max(r, 0)

    def _max_card(self, f: int) -> int:
        if f == EMPTY:
            return -1
        if f == BASE:
            return 0
        cache = self._cache("max_card")
        r = cache.get(f)
        if r is None:
            hi = self._max_card(self._hi[f])
            r = max(self._max_card(self._lo[f]), hi + 1 if hi >= 0 else -1)
            cache[f] = r
        return r

    def count_sets(self, f: ZddHandle) -> int:
        return self._count(self._node(f))

    def _count(self, f: int) -> int:
        if f <= BASE:
            return f
        cache = self._cache("count")
        r = cache.get(f)
        if r is None:
            r = cache[f] = self._count(self._lo[f]) + self._count(self._hi[f])
        return r

    def node_count(self, f: ZddHandle) -> int:
        return len(self._reachable([self._node(f)]))

    def _reachable(self, roots: Iterable[int]) -> set[int]:
        seen: set[int] = set()
        stack = [r for r in roots if r > BASE]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            for c in (self._lo[n], self._hi[n]):
                if c > BASE and c not in seen:
                    stack.append(c)
        return seen

    def enumerate_sets(self, f: ZddHandle, cap: int = 100_000) -> list[frozenset[str]]:
        """All members of ``f``, ordered lexicographically by variable index."""
        node = self._node(f)
        n = self._count(node)
        if n > cap:
            raise ZddError(f"family has {n} members, more than the cap of {cap}")
        out: list[tuple[int, ...]] = []
        self._collect(node, (), out)
        out.sort()
        return [frozenset(self.blocks[i] for i in s) for s in out]

    def _collect(self, f: int, prefix: tuple[int, ...], out: list) -> None:
        if f == EMPTY:
            return
        if f == BASE:
            out.append(prefix)
            return
        self._collect(self._lo[f], prefix, out)
        self._collect(self._hi[f], prefix + (self._var[f],), out)

    def total_nodes(self) -> int:
        """Live internal nodes in the unique table."""
        return len(self._unique)

    # -- garbage collection --------------------------------------------------

    def ref(self, h: ZddHandle) -> ZddHandle:
        node = self._node(h)
        self._refs[node] = self._refs.get(node, 0) + 1
        return h

    def deref(self, h: ZddHandle) -> None:
        node = self._node(h)
        count = self._refs.get(node, 0)
        if count <= 0:
            raise ZddError("deref of a handle without references")
        if count == 1:
            del self._refs[node]
        else:
            self._refs[node] = count - 1

    def collect_garbage(self, roots: Iterable[ZddHandle] = ()) -> int:
        """Free every node not reachable from a referenced handle or ``roots``.

        Handles to freed nodes become dangling. Operation caches are
        cleared. Returns the number of freed nodes.
        """
        live = self._reachable(list(self._refs) + [self._node(r) for r in roots])
        dead = [n for n in self._unique.values() if n not in live]
        for n in dead:
            del self._unique[(self._var[n], self._lo[n], self._hi[n])]
            self._var[n] = _TERMINAL_VAR
            self._lo[n] = self._hi[n] = EMPTY
            self._free.append(n)
        self.clear_caches()
        return len(dead)

    # -- debugging -------------------------------------------------------------

    def to_dot(self, roots: Mapping[str, ZddHandle], name: str = "zdd") -> str:
        """Graphviz rendering of the shared graph below ``roots``."""
        nodes = {label: self._node(h) for label, h in roots.items()}
        lines = [f'digraph "{name}" {{', '  node [shape=circle];',
                 '  t0 [label="0", shape=box];', '  t1 [label="1", shape=box];']

        def ref(n):
            return f"t{n}" if n <= BASE else f"n{n}"

        for n in sorted(self._reachable(nodes.values())):
            lines.append(f'  n{n} [label="{self.blocks[self._var[n]]}"];')
            lines.append(f"  n{n} -> {ref(self._lo[n])} [style=dashed];")
            lines.append(f"  n{n} -> {ref(self._hi[n])};")
        for i, (label, n) in enumerate(nodes.items()):
            lines.append(f'  r{i} [label="{label}", shape=plaintext];')
            lines.append(f"  r{i} -> {ref(n)};")
        lines.append("}")
        return "\n".join(lines) + "\n"


# Function-style aliases so callers can write ``max_union(mgr, f, g)``.

def empty(mgr: ZddManager) -> ZddHandle:
    return mgr.empty()


def base(mgr: ZddManager) -> ZddHandle:
    return mgr.base()


def singleton_family(mgr: ZddManager, block: str) -> ZddHandle:
    return mgr.singleton_family(block)


def max_set(mgr: ZddManager, f: ZddHandle) -> ZddHandle:
    return mgr.max_set(f)


def max_union(mgr: ZddManager, f: ZddHandle, g: ZddHandle) -> ZddHandle:
    return mgr.max_union(f, g)


def max_dot_product(mgr: ZddManager, f: ZddHandle, g: ZddHandle) -> ZddHandle:
    return mgr.max_dot_product(f, g)


def max_cardinality(mgr: ZddManager, f: ZddHandle) -> int:
    return mgr.max_cardinality(f)


def enumerate_sets(mgr: ZddManager, f: ZddHandle, cap: int = 100_000) -> list[frozenset[str]]:
    return mgr.enumerate_sets(f, cap)


def count_sets(mgr: ZddManager, f: ZddHandle) -> int:
    return mgr.count_sets(f)


def node_count(mgr: ZddManager, f: ZddHandle) -> int:
    return mgr.node_count(f)
