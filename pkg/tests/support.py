"""Shared helpers for the test suite: figure graphs, corpora and reference code."""

from __future__ import annotations

import itertools
import random
from pathlib import Path

from cachepersist.cfg import parse_cfg
from cachepersist.exact_explicit import TOP
from cachepersist.generators import gen_random_cfg
from cachepersist.solver import analyze_scope, make_domain, program_scope, solve_fixpoint

DATA = Path(__file__).parent / "data"


def fs(*sets):
    """Family literal: ``fs("v", "vw")`` is ``{{v}, {v, w}}`` for one-letter blocks."""
    return frozenset(frozenset(s) for s in sets)


BASELINES = ("must", "cmust", "blockcs", "globalcs", "product")

# v's conflict families at l0..l4 of the four-node example with k = 3
TABLE = {
    "0": [fs(), fs("v"), fs("v", "vw", "vx", "vwx"), fs("vw", "vx", "vwx"),
          fs("vw", "vx", "vwx", "vwy", "vxy", "vwxy")],
    "up": [fs(), fs("v"), fs("vwx"), fs("vwx"), fs("vwxy")],
    "k": [fs(), fs("v"), fs("vwx"), fs("vwx"), TOP],
}


def load(name: str):
    return parse_cfg((DATA / f"{name}.cfg").read_text())


def corpus_params(seed: int) -> dict:
    rng = random.Random(10_000 + seed)
    return dict(num_nodes=rng.randint(1, 8), num_blocks=rng.randint(1, 6),
                branch_factor=rng.randint(1, 3), loop_probability=rng.choice([0.2, 0.4, 0.6]),
                empty_rate=rng.choice([0.0, 0.2, 0.4]))


def fuzz_corpus(count: int, **overrides):
    """``count`` seeded (cfg, k) pairs with single and empty labels only."""
    for seed in range(count):
        params = corpus_params(seed)
        params.update(overrides)
        yield gen_random_cfg(seed, **params), 1 + seed % 4


def program_verdicts(cfg, domain_name: str, k: int) -> dict[str, bool]:
    domain = make_domain(domain_name, k, cfg.block_ids)
    return analyze_scope(cfg, program_scope(cfg), domain).persistent


def location_verdicts(cfg, domain_name: str, k: int) -> dict[tuple[str, str], bool]:
    """Classification of every block at every node of the fixpoint."""
    domain = make_domain(domain_name, k, cfg.block_ids)
    states = solve_fixpoint(cfg, domain).states
    return {(n, b): domain.classify(states[n], b) for n in cfg.nodes for b in cfg.block_ids}


# -- explicit reference for set families -----------------------------------------

def ref_max_set(family):
    return frozenset(s for s in family if not any(s < t for t in family))


def ref_product(f, g):
    return frozenset(s | t for s in f for t in g)


def random_family(rng: random.Random, universe, max_sets: int = 6):
    sets = set()
    for _ in range(rng.randint(0, max_sets)):
        sets.add(frozenset(b for b in universe if rng.random() < 0.4))
    return frozenset(sets)


def all_subsets(universe):
    return [frozenset(c) for r in range(len(universe) + 1)
            for c in itertools.combinations(universe, r)]
