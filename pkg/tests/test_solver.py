import json

import pytest

from cachepersist.baseline import INF, Domain
from cachepersist.cfg import CacheConfig, Scope, parse_cfg
from cachepersist.solver import (AnalysisError, FixpointError, analyze_program,
                                 analyze_scope, differential_check,
                                 emit_persistence_constraints, make_domain, program_scope,
                                 register_domain, scope_subgraph, select_scopes,
                                 solve_fixpoint, DOMAINS)

from support import BASELINES, fuzz_corpus, load

ALL = ["exact", *BASELINES]


def test_single_node():
    cfg = parse_cfg("entry n0;")
    d = make_domain("exact", 2, [])
    assert solve_fixpoint(cfg, d).states == {"n0": d.init_entry()}


def test_fig3_cmust_fixpoint():
    cfg = load("fig3")
    states = solve_fixpoint(cfg, make_domain("cmust", 2, cfg.block_ids)).states
    assert states["S0"]["x"] == INF and states["S1"]["x"] == INF


@pytest.mark.parametrize("name", ["exact-explicit-0", "exact", "cmust", "product"])
@pytest.mark.parametrize("fig, k", [("fig1", 2), ("fig2", 2), ("fig4", 3), ("fig6", 3)])
def test_fixpoint_is_least_solution(name, fig, k):
    cfg = load(fig)
    d = make_domain(name, k, cfg.block_ids)
    states = solve_fixpoint(cfg, d).states
    for n in cfg.nodes:
        incoming = [d.update(states[e.source], e.access) for e in cfg.edges if e.target == n]
        if n == cfg.entry:
            incoming.append(d.init_entry())
        for s in incoming:
            assert d.leq(s, states[n])
        # nothing strictly lower satisfies all incoming inequalities
        assert d.join_all(incoming) == states[n]


def test_lowering_a_state_breaks_an_inequality():
    cfg = load("fig4")
    d = make_domain("exact-explicit-0", 3, cfg.block_ids)
    states = solve_fixpoint(cfg, d).states
    fam = states["l2"]["v"]
    for dropped in fam:
        lowered = dict(states["l2"], v=fam - {dropped})
        incoming = [d.update(states[e.source], e.access) for e in cfg.edges if e.target == "l2"]
        assert not all(d.leq(s, lowered) for s in incoming)


def test_schedule_independence():
    for cfg, k in fuzz_corpus(150):
        for name in ("exact", "product", "blockcs"):
            rpo = analyze_program(cfg, CacheConfig(k, 1), [name], order="rpo")
            fifo = analyze_program(cfg, CacheConfig(k, 1), [name], order="fifo")
            assert rpo.to_dict()["scopes"] == fifo.to_dict()["scopes"]


class Counter(Domain):
    name = "counter"

    def bottom(self):
        return 0

    def init_entry(self):
        return 0

    def update(self, s, access):
        return s + 1

    def join(self, a, b):
        return max(a, b)

    def classify(self, s, b):
        return True


def test_iteration_guard():
    cfg = load("fig1")
    with pytest.raises(FixpointError, match="no fixpoint"):
        solve_fixpoint(cfg, Counter(1, []), max_iterations=50)
    with pytest.raises(ValueError):
        solve_fixpoint(cfg, Counter(1, []), order="lifo")


def test_fig1_loop_scope_every_domain():
    cfg = load("fig1")
    scope = cfg.scopes[0]
    for name in ("exact", "blockcs", "globalcs", "product"):
        res = analyze_scope(cfg, scope, make_domain(name, 2, cfg.block_ids))
        assert res.persistent == {"x": True, "y": True}, name


def test_fig6_outer_scope_only_exact():
    cfg = load("fig6")
    outer = select_scopes(cfg, "auto")[-1]
    assert outer.header == "S0"
    for name in ALL:
        res = analyze_scope(cfg, outer, make_domain(name, 3, cfg.block_ids))
        assert res.persistent["v"] is (name == "exact"), name


def test_scope_without_accesses():
    cfg = parse_cfg("entry a; node a; node b; edge a -> b access x; edge b -> b;"
                    "scope quiet header b members b;")
    res = analyze_scope(cfg, cfg.scopes[0], make_domain("exact", 1, cfg.block_ids))
    assert res.persistent == {"x": True}
    assert res.accessed == {"x": False}


def test_exit_edges_count_as_accesses():
    # the only access to y inside the loop sits on the exit edge
    cfg = load("fig4")
    loop = select_scopes(cfg)[-1]
    res = analyze_scope(cfg, loop, make_domain("exact", 3, cfg.block_ids))
    assert res.accessed == {"v": False, "w": True, "x": True, "y": True}
    sub = scope_subgraph(cfg, loop)
    assert sub.entry == "l2" and {e.target for e in sub.edges} <= {"l2", "l3"}


def test_fig4_inner_scope_all_domains():
    cfg = load("fig4")
    report = analyze_program(cfg, CacheConfig(3, 1), ALL)
    inner = report.scopes[-1]
    assert inner.scope.members == {"l2", "l3"}
    for name in ALL:
        assert report.is_persistent(inner.scope.name, "v", name)


def test_scope_modes():
    cfg = load("fig1")
    assert [s.name for s in select_scopes(cfg, "whole")] == ["program"]
    assert [s.name for s in select_scopes(cfg, "explicit")] == ["program", "loop1"]
    assert [s.name for s in select_scopes(cfg, "auto")] == ["program", "loop1"]
    assert [s.name for s in select_scopes(load("fig3"), "explicit")] == ["program"]
    assert [s.name for s in select_scopes(load("fig3"), "auto")] == ["program", "loop_S0"]
    with pytest.raises(AnalysisError):
        select_scopes(cfg, "sideways")


def test_cache_set_decomposition():
    cfg = parse_cfg("""
        entry a; node a; node b;
        block p @ 0x00; block q @ 0x10; block r @ 0x20;
        edge a -> b access p; edge a -> b access r; edge b -> a access q;
    """)
    report = analyze_program(cfg, CacheConfig(1, 2, 16), ["exact"], "whole")
    blocks = report.scope("program").blocks
    assert {b: v.cache_set for b, v in blocks.items()} == {"p": 0, "q": 1, "r": 0}
    # q is alone in its set; p and r evict each other
    assert report.persistent_blocks("program", "exact") == {"q"}
    merged = analyze_program(cfg, CacheConfig(1, 1, 16), ["exact"], "whole")
    assert merged.persistent_blocks("program", "exact") == set()


def test_domain_selection_errors():
    cfg = load("fig1")
    with pytest.raises(AnalysisError, match="no domain selected"):
        analyze_program(cfg, CacheConfig(2, 1), [])
    with pytest.raises(AnalysisError, match="unknown domain"):
        analyze_program(cfg, CacheConfig(2, 1), ["lru"])
    big = parse_cfg("entry a; node a;" + "".join(f"edge a -> a access b{i};" for i in range(13)))
    with pytest.raises(AnalysisError, match="limited to 12 blocks"):
        analyze_program(big, CacheConfig(2, 1), ["exact-explicit-0"])
    unknown = parse_cfg("entry a; node a; edge a -> a access ?; edge a -> a access x;")
    with pytest.raises(AnalysisError, match="unknown accesses"):
        analyze_program(unknown, CacheConfig(2, 1), ["exact-explicit-k"])


def test_report_formats():
    report = analyze_program(load("fig1"), CacheConfig(2, 1), ["exact", "cmust"])
    data = json.loads(report.to_json())
    assert data["format_version"] == 1
    assert data["scopes"][1]["blocks"]["x"]["classification"] == {
        "exact": "Persistent", "cmust": "NotPersistent"}
    text = report.to_text()
    assert "scope loop1 (header S0, 2 nodes)" in text
    assert text == analyze_program(load("fig1"), CacheConfig(2, 1), ["exact", "cmust"]).to_text()


def test_exact_dominates_every_baseline_on_corpus():
    for cfg, k in fuzz_corpus(120):
        report = analyze_program(cfg, CacheConfig(k, 1), ALL)
        for s in report.scopes:
            exact = report.persistent_blocks(s.scope.name, "exact")
            for name in BASELINES:
                assert report.persistent_blocks(s.scope.name, name) <= exact


def test_differential_blockcs_on_fig2():
    rep = differential_check(load("fig2"), CacheConfig(2, 1), "blockcs")
    assert rep.sound
    assert rep.gap_blocks() == ["v"]
    assert any(g.node == "S0" for g in rep.gaps)


def test_differential_cmust_on_fig3():
    rep = differential_check(load("fig3"), CacheConfig(2, 1), "cmust")
    assert rep.sound
    assert sorted(rep.gap_blocks()) == ["x", "y"]


@pytest.mark.parametrize("fig", ["fig1", "fig2", "fig3", "fig4", "fig6"])
def test_differential_explicit_tier0_has_no_gaps(fig):
    for k in (1, 2, 3, 4):
        rep = differential_check(load(fig), CacheConfig(k, 1), "exact-explicit-0")
        assert rep.gaps == [] and rep.violations == []


def test_differential_flags_broken_domain():
    from cachepersist.baseline import CMustDomain

    class Broken(CMustDomain):
        reset = 0

    register_domain("cmust-broken", Broken)
    try:
        rep = differential_check(load("fig3"), CacheConfig(1, 1), "cmust-broken")
    finally:
        del DOMAINS["cmust-broken"]
    assert not rep.sound
    assert sorted(rep.violation_blocks()) == ["x", "y"]
    assert "SOUNDNESS VIOLATION" in rep.to_text()


def test_constraints_fig1():
    cfg = load("fig1")
    report = analyze_program(cfg, CacheConfig(2, 1), ["exact"], "explicit")
    doc = emit_persistence_constraints(report, cfg)
    lines = [ln for ln in doc.splitlines() if not ln.startswith("#")]
    assert "m_x_loop1 <= entries_loop1;" in lines
    assert "m_y_loop1 <= entries_loop1;" in lines
    assert "# m_x_loop1 sums misses of x on: S0->S1" in doc


def test_constraints_empty_when_nothing_persistent():
    cfg = load("fig3")
    report = analyze_program(cfg, CacheConfig(1, 1), ["exact"])
    assert emit_persistence_constraints(report, cfg) == ""


def test_constraints_inner_scope_only():
    cfg = load("fig6")
    report = analyze_program(cfg, CacheConfig(1, 1), ["exact"])
    doc = emit_persistence_constraints(report, cfg)
    lines = [ln for ln in doc.splitlines() if not ln.startswith("#")]
    assert lines == ["m_w_loop_S2 <= entries_loop_S2;"]


def test_program_scope_shape():
    cfg = load("fig2")
    s = program_scope(cfg)
    assert s == Scope("program", "S0", frozenset(cfg.nodes))
    assert scope_subgraph(cfg, s) is cfg
