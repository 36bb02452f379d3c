"""Exact persistence analysis with ZDD-backed conflict families.

A state maps each block to either :data:`TOP` or a tuple of ``k`` slots.
Slot ``i`` is a ZDD antichain of conflict sets, each of which stands for
that set plus ``i`` further unknown blocks. Absent blocks were never
accessed. Any slot whose largest set plus its index exceeds ``k`` turns
the whole entry into ``TOP``, so a non-``TOP`` entry is always
persistent at that point.

With only single-block accesses, slot 0 holds exactly the families of
the explicit ``"k"`` tier in :mod:`cachepersist.exact_explicit`.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Mapping, Sequence

from .baseline import Domain
from .cfg import Access, AccessKind
from .exact_explicit import TOP, format_family
from .zdd import ZddHandle, ZddManager

Slots = tuple  # tuple[ZddHandle, ...] of length k


def _limit(mgr: ZddManager, slots: Slots, k: int):
    for i, f in enumerate(slots):
        if f.node != 0 and mgr.max_cardinality(f) + i > k:
            return TOP
    return slots


def reset_slots(mgr: ZddManager, b: str, k: int) -> Slots:
    return (mgr.singleton_family(b),) + (mgr.empty(),) * (k - 1)


def zdd_update_single(mgr: ZddManager, s: Mapping[str, object], b: str, k: int) -> dict:
    fb = mgr.singleton_family(b)
    out = {}
    for x, slots in s.items():
        if x == b:
            continue
        if slots is TOP:
            out[x] = TOP
        else:
            out[x] = _limit(mgr, tuple(mgr.max_dot_product(f, fb) for f in slots), k)
    out[b] = reset_slots(mgr, b, k)
    return out


def zdd_update_many(mgr: ZddManager, s: Mapping[str, object], blocks: Iterable[str],
                    k: int) -> dict:
    return reduce(lambda a, c: zdd_join(mgr, a, c, k),
                  (zdd_update_single(mgr, s, b, k) for b in sorted(set(blocks))))


def zdd_update_unknown(mgr: ZddManager, s: Mapping[str, object], k: int,
                       accessible: Sequence[str] | None = None) -> dict:
    """Access to one block the analysis cannot name.

    Known entries shift one slot to the right (one more anonymous
    conflict), going ``TOP`` if the last slot was occupied. Blocks in
    ``accessible`` that were never accessed may have been accessed now, so
    they start out as if accessed. ``accessible`` defaults to the whole
    universe.
    """
    empty = mgr.empty()
    out = {}
    for x, slots in s.items():
        if slots is TOP or slots[k - 1] != empty:
            out[x] = TOP
        else:
            out[x] = _limit(mgr, (empty,) + slots[:-1], k)
    for x in (mgr.blocks if accessible is None else accessible):
        if x not in out:
            out[x] = reset_slots(mgr, x, k)
    return out


def zdd_join(mgr: ZddManager, s: Mapping[str, object], t: Mapping[str, object],
             k: int) -> dict:
    out = dict(s)
    for x, theirs in t.items():
        mine = out.get(x)
        if mine is None:
            out[x] = theirs
        elif mine is TOP or theirs is TOP:
            out[x] = TOP
        elif mine != theirs:
            out[x] = tuple(mgr.max_union(f, g) for f, g in zip(mine, theirs))
    return out


def zdd_classify(mgr: ZddManager, s: Mapping[str, object], b: str, k: int) -> bool:
    slots = s.get(b)
    if slots is None:
        return True
    if slots is TOP:
        return False
    return all(f.node == 0 or mgr.max_cardinality(f) + i <= k
               for i, f in enumerate(slots))


class ExactZddDomain(Domain):
    """The production exact analysis.

    ``many_threshold`` (default ``k``) is the largest access set handled
    as a join of single updates; larger sets use the anonymous shift.
    """

    name = "exact"

    def __init__(self, k: int, blocks: Sequence[str], many_threshold: int | None = None):
        super().__init__(k, blocks)
        self.mgr = ZddManager(self.blocks)
        self.many_threshold = k if many_threshold is None else many_threshold
        self.peak_nodes = 0

    def bottom(self):
        return {}

    def init_entry(self):
        return {}

    def update(self, state, access: Access):
        kind = access.kind
        if kind is AccessKind.EMPTY:
            return state
        if kind is AccessKind.SINGLE:
            out = zdd_update_single(self.mgr, state, access.block, self.k)
        elif kind is AccessKind.MANY and len(access.blocks) <= self.many_threshold:
            out = zdd_update_many(self.mgr, state, access.blocks, self.k)
        elif kind is AccessKind.MANY:
            out = zdd_update_unknown(self.mgr, state, self.k, access.blocks)
        else:
            out = zdd_update_unknown(self.mgr, state, self.k)
        self.peak_nodes = max(self.peak_nodes, self.mgr.total_nodes())
        return out

    def join(self, a, b):
        out = zdd_join(self.mgr, a, b, self.k)
        self.peak_nodes = max(self.peak_nodes, self.mgr.total_nodes())
        return out

    def classify(self, state, block):
        return zdd_classify(self.mgr, state, block, self.k)

    def slot_sets(self, state, block: str):
        """Explicit view of an entry: ``None``, ``TOP`` or a list of families."""
        slots = state.get(block)
        if slots is None or slots is TOP:
            return slots
        return [frozenset(self.mgr.enumerate_sets(f)) for f in slots]

    def describe(self, state, block):
        view = self.slot_sets(state, block)
        if view is None:
            return "never accessed"
        if view is TOP:
            return "TOP"
        parts = [format_family(view[0], self.blocks)]
        for i, fam in enumerate(view[1:], 1):
            if fam:
                parts.append(f"+{i}:" + format_family(fam, self.blocks))
        return " ".join(parts)

    def to_dot(self, states: Mapping[str, Mapping[str, object]]) -> str:
        roots: dict[str, ZddHandle] = {}
        for node, state in states.items():
            for b in sorted(state, key=self.blocks.index):
                slots = state[b]
                if slots is TOP:
                    continue
                for i, f in enumerate(slots):
                    if f.node != 0:
                        roots[f"{node}:{b}:{i}"] = f
        return self.mgr.to_dot(roots)

    def stats(self):
        return {"peak_zdd_nodes": self.peak_nodes}

    def release(self):
        self.mgr.collect_garbage()
