"""Exact conflict-set analysis over explicit sets of sets.

Three tiers share one representation, a dict from block to family:

* tier ``"0"`` keeps every possible conflict set,
* tier ``"up"`` keeps only maximal sets (``max_set`` after every step),
* tier ``"k"`` additionally collapses any family holding a set larger
  than ``k`` to :data:`TOP`.

An absent block has the empty family: it was never accessed on any path
reaching the location. These tiers are reference implementations and
may be exponentially slow; the production analysis lives in
:mod:`cachepersist.exact_zdd`.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Mapping, Sequence

from .cfg import Access, AccessKind
from .baseline import Domain

Family = frozenset  # frozenset[frozenset[str]]


class _Top:
    __slots__ = ()

    def __repr__(self):
        return "TOP"


TOP = _Top()

TIERS = ("0", "up", "k")


def max_set(family: Iterable[frozenset]) -> frozenset:
    """Drop every set that is a proper subset of another member."""
    sets = sorted(set(family), key=len, reverse=True)
    kept: list[frozenset] = []
    for s in sets:
        if not any(s < t for t in kept):
            kept.append(s)
    return frozenset(kept)


def limit(family, k: int):
    if family is TOP or any(len(s) > k for s in family):
        return TOP
    return family


def max_cardinality(family) -> int:
    return max((len(s) for s in family), default=0)


def _check_tier(tier: str) -> None:
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}; expected one of {TIERS}")


def _normalize(tier: str, family, k: int):
    if family is TOP or tier == "0":
        return family
    family = max_set(family)
    return limit(family, k) if tier == "k" else family


def ecs_update(tier: str, s: Mapping[str, object], b: str, k: int) -> dict:
    """Access to ``b``: ``b`` restarts at ``{{b}}``, everyone else gains ``b``."""
    out = {}
    for x, fam in s.items():
        if x != b:
            out[x] = fam if fam is TOP else _normalize(tier, frozenset(f | {b} for f in fam), k)
    out[b] = frozenset([frozenset([b])])
    return out


def ecs_join(tier: str, a: Mapping[str, object], b: Mapping[str, object], k: int) -> dict:
    out = dict(a)
    for x, fam in b.items():
        mine = out.get(x)
        if mine is None:
            out[x] = fam
        elif mine is TOP or fam is TOP:
            out[x] = TOP
        else:
            out[x] = _normalize(tier, mine | fam, k)
    return out


def ecs_classify(s: Mapping[str, object], b: str, k: int) -> bool:
    fam = s.get(b, frozenset())
    return fam is not TOP and max_cardinality(fam) <= k


def format_family(family, order: Sequence[str] | None = None) -> str:
    """Deterministic rendering such as ``{{v},{v,w}}`` or ``TOP``."""
    if family is TOP:
        return "TOP"
    rank = {b: i for i, b in enumerate(order or ())}

    def pos(b):
        return rank.get(b, len(rank)), b

    sets = [sorted(s, key=pos) for s in family]
    sets.sort(key=lambda items: (len(items), [pos(b) for b in items]))
    return "{" + ",".join("{" + ",".join(s) + "}" for s in sets) + "}"


class ExactExplicitDomain(Domain):
    """Explicit-set exact analysis of one tier.

    MANY labels are handled as the join of the single-block updates, which
    matches parallel single-access edges. UNKNOWN labels are rejected.
    """

    def __init__(self, k, blocks, tier: str = "k"):
        super().__init__(k, blocks)
        _check_tier(tier)
        self.tier = tier
        self.name = "exact-explicit-" + tier

    def bottom(self):
        return {}

    def init_entry(self):
        return {}

    def update(self, state, access: Access):
        kind = access.kind
        if kind is AccessKind.EMPTY:
            return state
        if kind is AccessKind.SINGLE:
            return ecs_update(self.tier, state, access.block, self.k)
        if kind is AccessKind.MANY:
            return reduce(self.join, (ecs_update(self.tier, state, b, self.k)
                                      for b in access.blocks))
        raise ValueError("explicit exact analysis does not support unknown accesses")

    def join(self, a, b):
        return ecs_join(self.tier, a, b, self.k)

    def classify(self, state, block):
        return ecs_classify(state, block, self.k)

    def describe(self, state, block):
        return format_family(state.get(block, frozenset()), self.blocks)
