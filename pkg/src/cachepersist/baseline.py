"""Classical persistence analyses and the domain contract they share.

Every domain exposes ``bottom``, ``init_entry``, ``update``, ``join``,
``leq`` and ``classify``. States are plain immutable values (dicts are
never mutated after construction), so they can be compared with ``==``
and stored freely by the solver.

An access the analysis cannot resolve (``Unknown``) may touch any block,
including one that was never accessed before. Domains that treat absent
entries as "never accessed" therefore give such blocks a fresh entry on
an unknown access.
"""

from __future__ import annotations

import math
from functools import reduce
from typing import Any, Iterable, Mapping, Sequence

from .cfg import Access, AccessKind

INF = math.inf


class Domain:
    """Interface consumed by the fixpoint solver."""

    name = "domain"

    def __init__(self, k: int, blocks: Sequence[str]):
        if k < 1:
            raise ValueError("associativity must be at least 1")
        self.k = k
        self.blocks = tuple(blocks)

    def bottom(self) -> Any:
        raise NotImplementedError

    def init_entry(self) -> Any:
        raise NotImplementedError

    def update(self, state, access: Access) -> Any:
        raise NotImplementedError

    def join(self, a, b) -> Any:
        raise NotImplementedError

    def join_all(self, states: Iterable) -> Any:
        return reduce(self.join, states, self.bottom())

    def leq(self, a, b) -> bool:
        return self.join(a, b) == b

    def classify(self, state, block: str) -> bool:
        raise NotImplementedError

    def describe(self, state, block: str) -> str:
        """Short human-readable view of what ``state`` knows about ``block``."""
        return repr(state)

    def stats(self) -> dict:
        return {}

    def release(self) -> None:
        """Drop internal caches between independent runs."""


def _lift_many(update_one, join, state, access: Access):
    """Join of the single-block updates over every block of a MANY label."""
    return reduce(join, (update_one(state, b) for b in access.blocks))


# -- Must ---------------------------------------------------------------------

def must_update(s: Mapping[str, int] | None, label: Access, k: int):
    """LRU must-cache update; ages count the block itself, so a hit is age <= k."""
    if s is None:
        return None
    kind = label.kind
    if kind is AccessKind.EMPTY:
        return s
    if kind is AccessKind.SINGLE:
        return _must_access(s, label.block, k)
    if kind is AccessKind.MANY:
        return _lift_many(lambda st, b: _must_access(st, b, k), must_join, s, label)
    return {b: a + 1 for b, a in s.items() if a + 1 <= k}


def _must_access(s: Mapping[str, int], b: str, k: int) -> dict[str, int]:
    old = s.get(b, k + 1)
    out = {b: 1}
    for other, age in s.items():
        if other == b:
            continue
        age = age + 1 if age < old else age
        if age <= k:
            out[other] = age
    return out


def must_join(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return {x: max(a[x], b[x]) for x in a if x in b}


class MustDomain(Domain):
    name = "must"

    def bottom(self):
        return None

    def init_entry(self):
        return {}

    def update(self, state, access):
        return must_update(state, access, self.k)

    def join(self, a, b):
        return must_join(a, b)

    def classify(self, state, block):
        return state is None or block in state

    def describe(self, state, block):
        if state is None:
            return "bottom"
        return f"age {state[block]}" if block in state else "not cached"


# -- C-Must -----------------------------------------------------------------

def _cmust_inc(bound, k: int):
    return INF if bound + 1 > k else bound + 1


def cmust_update(s: Mapping[str, float], label: Access, k: int,
                 universe: Sequence[str] = (), reset: int = 1) -> dict:
    """Conflict-count update; bounds above ``k`` saturate to infinity.

    ``reset`` is the bound an accessed block restarts from. It is a
    parameter only so tests can build a deliberately broken variant.
    """
    kind = label.kind
    if kind is AccessKind.EMPTY:
        return s
    if kind is AccessKind.SINGLE:
        b = label.block
        out = {x: _cmust_inc(v, k) for x, v in s.items() if x != b}
        out[b] = reset
        return out
    if kind is AccessKind.MANY:
        return _lift_many(
            lambda st, b: cmust_update(st, Access.single(b), k, universe, reset),
            cmust_join, s, label)
    out = {x: _cmust_inc(v, k) for x, v in s.items()}
    for x in universe:
        out.setdefault(x, reset)
    return out


def cmust_join(a: Mapping[str, float], b: Mapping[str, float]) -> dict:
    out = dict(a)
    for x, v in b.items():
        out[x] = max(out[x], v) if x in out else v
    return out


class CMustDomain(Domain):
    name = "cmust"
    reset = 1

    def bottom(self):
        return {}

    def init_entry(self):
        return {}

    def update(self, state, access):
        return cmust_update(state, access, self.k, self.blocks, self.reset)

    def join(self, a, b):
        return cmust_join(a, b)

    def classify(self, state, block):
        return state.get(block, 0) <= self.k

    def describe(self, state, block):
        if block not in state:
            return "never accessed"
        v = state[block]
        return "inf" if v == INF else str(v)


# -- Block-CS ---------------------------------------------------------------
# An entry is (named conflicting blocks, number of anonymous conflicts).

def blockcs_update(s: Mapping[str, tuple[frozenset, int]], label: Access, k: int,
                   universe: Sequence[str] = ()) -> dict:
    kind = label.kind
    if kind is AccessKind.EMPTY:
        return s
    if kind is AccessKind.SINGLE:
        b = label.block
        out = {x: (named | {b}, anon) for x, (named, anon) in s.items() if x != b}
        out[b] = (frozenset([b]), 0)
        return out
    if kind is AccessKind.MANY:
        return _lift_many(
            lambda st, b: blockcs_update(st, Access.single(b), k, universe),
            blockcs_join, s, label)
    out = {x: (named, min(anon + 1, k + 1)) for x, (named, anon) in s.items()}
    for x in universe:
        out.setdefault(x, (frozenset([x]), 0))
    return out


def blockcs_join(a, b) -> dict:
    out = dict(a)
    for x, (named, anon) in b.items():
        if x in out:
            n2, a2 = out[x]
            out[x] = (named | n2, max(anon, a2))
        else:
            out[x] = (named, anon)
    return out


def blockcs_bound(entry) -> int:
    named, anon = entry
    return len(named) + anon


class BlockCsDomain(Domain):
    name = "blockcs"

    def bottom(self):
        return {}

    def init_entry(self):
        return {}

    def update(self, state, access):
        return blockcs_update(state, access, self.k, self.blocks)

    def join(self, a, b):
        return blockcs_join(a, b)

    def classify(self, state, block):
        return block not in state or blockcs_bound(state[block]) <= self.k

    def describe(self, state, block):
        if block not in state:
            return "never accessed"
        named, anon = state[block]
        text = "{" + ",".join(sorted(named)) + "}"
        return text + (f"+{anon}?" if anon else "")


# -- Global-CS --------------------------------------------------------------

def globalcs_update(s: tuple[frozenset, int], label: Access, k: int) -> tuple[frozenset, int]:
    named, anon = s
    if label.kind is AccessKind.EMPTY:
        return s
    if label.kind is AccessKind.UNKNOWN:
        return named, min(anon + 1, k + 1)
    return named | frozenset(label.blocks), anon


def globalcs_join(a, b):
    return a[0] | b[0], max(a[1], b[1])


def globalcs_classify(s: tuple[frozenset, int], b: str, k: int) -> bool:
    return len(s[0]) + s[1] <= k


class GlobalCsDomain(Domain):
    name = "globalcs"

    def bottom(self):
        return frozenset(), 0

    def init_entry(self):
        return frozenset(), 0

    def update(self, state, access):
        return globalcs_update(state, access, self.k)

    def join(self, a, b):
        return globalcs_join(a, b)

    def classify(self, state, block):
        return globalcs_classify(state, block, self.k)

    def describe(self, state, block):
        named, anon = state
        return "{" + ",".join(sorted(named)) + "}" + (f"+{anon}?" if anon else "")


# -- C-Must x Must x Block-CS ---------------------------------------------------

def product_classify(must, cmust, bcs, b: str, k: int) -> bool:
    if cmust.get(b, 0) <= k:
        return True
    if b not in bcs or blockcs_bound(bcs[b]) <= k:
        return True
    return must is None or b in must


def product_reduce(must, cmust, bcs, k: int) -> dict:
    """Tighten C-Must bounds with what Must and Block-CS already prove."""
    out = dict(cmust)
    for b, bound in cmust.items():
        if must is not None and b in must:
            bound = min(bound, must[b])
        if b in bcs:
            n = blockcs_bound(bcs[b])
            if n <= k:
                bound = min(bound, n)
        out[b] = bound
    return out


class ProductDomain(Domain):
    """C-Must x Must x Block-CS.

    With ``cooperative`` set, the C-Must component is reduced against the
    other two after each update and join; otherwise the three analyses run
    independently and only the classification combines them.
    """

    name = "product"

    def __init__(self, k, blocks, cooperative: bool = True):
        super().__init__(k, blocks)
        self.cooperative = cooperative

    def bottom(self):
        return None, {}, {}

    def init_entry(self):
        return {}, {}, {}

    def _reduce(self, must, cm, bcs):
        if self.cooperative:
            cm = product_reduce(must, cm, bcs, self.k)
        return must, cm, bcs

    def update(self, state, access):
        must, cm, bcs = state
        if must is None:
            return state
        return self._reduce(must_update(must, access, self.k),
                            cmust_update(cm, access, self.k, self.blocks),
                            blockcs_update(bcs, access, self.k, self.blocks))

    def join(self, a, b):
        return self._reduce(must_join(a[0], b[0]), cmust_join(a[1], b[1]),
                            blockcs_join(a[2], b[2]))

    def classify(self, state, block):
        return product_classify(*state, block, self.k)

    def describe(self, state, block):
        must, cm, bcs = state
        parts = [
            "cmust " + CMustDomain.describe(self, cm, block),
            "must " + MustDomain.describe(self, must, block),
            "blockcs " + BlockCsDomain.describe(self, bcs, block),
        ]
        return "; ".join(parts)
