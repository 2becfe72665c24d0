import math

import numpy as np
import pytest

from stochmatch.augmenter import (
    GTable,
    build_fractional,
    build_g_table,
    build_tables_exact,
    build_tables_monte_carlo,
    combine,
    end_to_end,
    round_fractional,
    run_pipeline_once,
)
from stochmatch.estimator import ProbEstimate
from stochmatch.gadgets import benchmark_6v8e, relaxed_suite_8v, star
from stochmatch.graph_core import (
    Edge,
    FractionalMatching,
    Params,
    Realization,
    StochasticGraph,
    gen_random_graph,
    make_matching,
    weight_of,
)
from stochmatch.sparsifier import QueryPlan, classify_edges
from stochmatch.vb_matching import VBOutput


def graph(n, edges):
    return StochasticGraph(n=n, edges=tuple(Edge(*e) for e in edges))


def exact_estimate(value):
    return ProbEstimate(value, 0, 0.0)


def fake_vb(g, alive, mc_edges=()):
    matching = make_matching(g, mc_edges)
    log = tuple((v, None, None) for v in range(g.n))
    return VBOutput(matching=matching, alive=frozenset(alive), activation_log=log,
                    permutation=tuple(range(g.n)), clip_events=0,
                    revealed_mask=0, revealed_bits=0)


def full_plan(g, t=1):
    return QueryPlan(t=t, q_mask=g.full_mask, rounds=(), parent=g.token)


def params_for(g, eps=0.2):
    return Params(epsilon=eps, delta=1 / 576.0, p_min=g.p_min)


def test_build_g_table_values_and_flags():
    g = graph(3, [(0, 1, 2.0, 0.8), (1, 2, 1.0, 0.5)])
    classes = classify_edges(np.array([0.8, 0.004]), tau=0.05)
    params = params_for(g)
    table = build_g_table(
        g, classes, np.array([0.8, 0.004]),
        {1: exact_estimate(0.4)}, {1: exact_estimate(0.2)}, params)
    # g = 0.004 / (0.5 * 0.4 * 0.2) = 0.1
    assert table.get(1) == pytest.approx(0.1)
    assert table.get(0) == 0.0  # crucial edges are not in the table
    assert 1 in table.eps3_flags  # 0.1 > 0.2^3
    assert 1 in table.eps2_flags


def test_build_g_table_zero_denominator_flagged():
    g = graph(3, [(0, 1, 2.0, 0.8), (1, 2, 1.0, 0.5)])
    classes = classify_edges(np.array([0.8, 0.004]), tau=0.05)
    table = build_g_table(
        g, classes, np.array([0.8, 0.004]),
        {1: exact_estimate(0.0)}, {1: exact_estimate(0.2)}, params_for(g))
    assert table.get(1) == 0.0
    assert table.zero_denominator == (1,)


def test_build_fractional_empty_alive_set():
    g = graph(3, [(0, 1, 2.0, 0.8), (1, 2, 1.0, 0.5)])
    classes = classify_edges(np.array([0.8, 0.004]), tau=0.05)
    params = params_for(g)
    table = build_g_table(g, classes, np.array([0.8, 0.004]),
                          {1: exact_estimate(0.4)}, {1: exact_estimate(0.2)}, params)
    f, record = build_fractional(
        g, classes, full_plan(g), Realization(g.full_mask, g.token),
        fake_vb(g, alive=[]), table, params)
    assert f.values == {}
    assert not any(record.vertex_survived)


def test_build_fractional_direct_rule():
    g = graph(3, [(0, 1, 2.0, 0.8), (1, 2, 1.0, 0.5)])
    classes = classify_edges(np.array([0.8, 0.004]), tau=0.05)
    params = params_for(g)
    table = GTable(values={1: 0.001}, q_in_plan={}, pair_alive={},
                   eps3_flags=(), eps2_flags=(), zero_denominator=())
    f, record = build_fractional(
        g, classes, full_plan(g), Realization(g.full_mask, g.token),
        fake_vb(g, alive=[0, 1, 2]), table, params)
    assert f.get(1) == pytest.approx(params.gamma * 0.001)
    assert f.get(0) == 0.0
    assert record.vertex_survived == (True, True, True)
    assert record.edge_survived == (True, True)


def test_build_fractional_requires_queried_and_realized():
    g = graph(3, [(0, 1, 2.0, 0.8), (1, 2, 1.0, 0.5)])
    classes = classify_edges(np.array([0.8, 0.004]), tau=0.05)
    params = params_for(g)
    table = GTable(values={1: 0.001}, q_in_plan={}, pair_alive={},
                   eps3_flags=(), eps2_flags=(), zero_denominator=())
    not_queried = QueryPlan(t=1, q_mask=0b01, rounds=(), parent=g.token)
    f, _ = build_fractional(g, classes, not_queried,
                            Realization(g.full_mask, g.token),
                            fake_vb(g, alive=[0, 1, 2]), table, params)
    assert f.values == {}
    unrealized = Realization(0b01, g.token)
    f2, _ = build_fractional(g, classes, full_plan(g), unrealized,
                             fake_vb(g, alive=[0, 1, 2]), table, params)
    assert f2.values == {}


def test_build_fractional_star_overload_zeroes_all():
    gadget = star(4)
    g = gadget.graph
    params = params_for(g)
    # force gamma*g = 0.3 per spoke: center degree 1.2 > 1, all four zeroed
    target = 0.3 / params.gamma
    classes = classify_edges(np.zeros(g.m), tau=0.5)  # everything non-crucial
    table = GTable(values={e: target for e in range(g.m)}, q_in_plan={},
                   pair_alive={}, eps3_flags=(), eps2_flags=(), zero_denominator=())
    f, record = build_fractional(
        g, classes, full_plan(g), Realization(g.full_mask, g.token),
        fake_vb(g, alive=range(g.n)), table, params)
    assert f.values == {}
    assert record.overloaded[0]
    assert not any(record.overloaded[1:])
    # leaves are alive and under the cap, yet their only edge died with the center
    assert record.vertex_survived[1]
    assert record.edge_survived == (False,) * g.m


def test_round_fractional_trivial_cases():
    g = graph(3, [(0, 1, 2.0, 0.8), (1, 2, 1.0, 0.5)])
    empty = FractionalMatching(values={}, parent=g.token)
    assert len(round_fractional(g, empty)) == 0
    single = FractionalMatching(values={1: 0.2}, parent=g.token)
    m = round_fractional(g, single)
    assert m.sorted_edges() == [1]


def test_round_fractional_triangle_bound():
    g = graph(3, [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (0, 2, 1.0, 1.0)])
    f = FractionalMatching(values={0: 0.3, 1: 0.3, 2: 0.3}, parent=g.token)
    m = round_fractional(g, f)
    eps = 0.2
    assert weight_of(m, g) == 1.0
    assert weight_of(m, g) >= (1 - eps / 2) * f.dot_weights(g)


def test_round_fractional_small_value_regime_bound():
    # constructed fractional matchings with values <= eps^3 satisfy the
    # rounding guarantee on every instance
    eps = 0.3
    cap = eps**3
    rng = np.random.default_rng(15)
    for trial in range(40):
        g = gen_random_graph(8, 0.5, {"name": "uniform", "low": 0.2, "high": 3.0},
                             {"name": "constant", "value": 0.5},
                             seed=int(rng.integers(0, 2**31)))
        if g.m == 0:
            continue
        values = {}
        load = np.zeros(g.n)
        for e in range(g.m):
            if rng.random() < 0.7:
                val = float(rng.uniform(0, cap))
                u, v, _w, _p = g.edges[e]
                if load[u] + val <= 1 and load[v] + val <= 1:
                    values[e] = val
                    load[u] += val
                    load[v] += val
        f = FractionalMatching(values=values, parent=g.token)
        m = round_fractional(g, f)
        assert weight_of(m, g) >= (1 - eps / 2) * f.dot_weights(g) - 1e-12


def test_combine_trivial_sides():
    g = graph(4, [(0, 1, 2.0, 0.9), (2, 3, 1.0, 0.9)])
    classes = classify_edges(np.array([0.9, 0.004]), tau=0.05)
    plan = full_plan(g)
    realization = Realization(g.full_mask, g.token)
    # no non-crucial matching: crucial side returned
    vb = fake_vb(g, alive=[2, 3], mc_edges=[0])
    m, scheme = combine(g, plan, realization, vb, make_matching(g, []), classes)
    assert m.sorted_edges() == [0]
    assert scheme == "crucial"
    # no crucial edges at all: the rounded matching is returned
    classes_none = classify_edges(np.array([0.004, 0.004]), tau=0.05)
    vb_empty = fake_vb(g, alive=[0, 1, 2, 3])
    m2, scheme2 = combine(g, plan, realization, vb_empty,
                          make_matching(g, [1]), classes_none)
    assert m2.sorted_edges() == [1]
    assert scheme2 == "augmented"


def test_combine_prefers_heavier_scheme():
    # crucial-only beats the augmented union when the run matched nothing
    g = graph(4, [(0, 1, 5.0, 0.9), (1, 2, 1.0, 0.9), (2, 3, 0.5, 0.9)])
    classes = classify_edges(np.array([0.9, 0.9, 0.004]), tau=0.05)
    plan = full_plan(g)
    realization = Realization(g.full_mask, g.token)
    vb = fake_vb(g, alive=[0, 1, 2, 3], mc_edges=[])
    m_n = make_matching(g, [2])
    m, scheme = combine(g, plan, realization, vb, m_n, classes)
    # scheme a = MM{edges 0,1} = edge 0 (5.0) vs scheme b = {2} (0.5)
    assert scheme == "crucial"
    assert weight_of(m, g) == 5.0
    both = (weight_of(make_matching(g, [0]), g),
            weight_of(make_matching(g, [2]), g))
    assert weight_of(m, g) >= max(both)


def test_combine_detects_invariant_breach():
    g = graph(3, [(0, 1, 2.0, 0.9), (1, 2, 1.0, 0.9)])
    classes = classify_edges(np.array([0.9, 0.004]), tau=0.05)
    vb = fake_vb(g, alive=[2], mc_edges=[0])
    bogus_m_n = make_matching(g, [1])  # touches matched vertex 1
    with pytest.raises(RuntimeError):
        combine(g, full_plan(g), Realization(g.full_mask, g.token), vb,
                bogus_m_n, classes)


def test_end_to_end_full_plan_control_ratio_one():
    gadget = benchmark_6v8e()
    g = gadget.graph
    params = params_for(g)
    tables = build_tables_exact(g, params, gadget.t, tau=gadget.tau)
    res = end_to_end(g, tables, gadget.t, runs=200, seed=4, force_full_plan=True)
    assert res.ratio == 1.0
    for r in res.runs:
        assert r.ratio == 1.0


def test_end_to_end_single_edge_expected_weight():
    g = graph(2, [(0, 1, 2.0, 0.6)])
    params = params_for(g)
    tables = build_tables_exact(g, params, 4, tau=0.5)
    # sampled plan: E[ALG] = w * p * Pr[edge in plan]
    res = end_to_end(g, tables, 4, runs=20_000, seed=6)
    mean_alg = float(np.mean([r.alg_weight for r in res.runs]))
    keep = 0.6 * (1 - 0.4**4)
    target = 2.0 * keep
    se = 2.0 * math.sqrt(keep * (1 - keep) / len(res.runs))
    assert abs(mean_alg - target) <= 3 * se
    # querying everything: E[ALG] = w * p exactly
    full = end_to_end(g, tables, 4, runs=20_000, seed=6, force_full_plan=True)
    mean_full = float(np.mean([r.alg_weight for r in full.runs]))
    se_full = 2.0 * math.sqrt(0.6 * 0.4 / len(full.runs))
    assert abs(mean_full - 2.0 * 0.6) <= 3 * se_full


def test_end_to_end_paired_sweep_monotone():
    gadget = benchmark_6v8e()
    g = gadget.graph
    tables = build_tables_exact(g, params_for(g), gadget.t, tau=gadget.tau)
    r1 = end_to_end(g, tables, 1, runs=800, seed=7)
    r16 = end_to_end(g, tables, 16, runs=800, seed=7)
    for a, b in zip(r1.runs, r16.runs):
        assert b.mmq_weight >= a.mmq_weight - 1e-12
    assert r16.ratio >= r1.ratio - 3 * (r1.ratio_std_err() + r16.ratio_std_err())


def test_end_to_end_structural_invariants():
    gadget = benchmark_6v8e()
    g = gadget.graph
    tables = build_tables_exact(g, params_for(g), gadget.t, tau=gadget.tau)
    res = end_to_end(g, tables, 4, runs=600, seed=9)
    for r in res.runs:
        assert r.max_post_degree <= 1.0 + 1e-9
        assert r.alg_weight <= r.mmq_weight + 1e-9  # ALG lives inside the plan
        assert r.mmq_weight <= r.mmg_weight + 1e-9


def test_end_to_end_f_support_flags():
    # f_e nonzero only for realized, queried, non-crucial, both-alive edges
    gadget = relaxed_suite_8v()
    g = gadget.graph
    params = Params(epsilon=gadget.epsilon, delta=1 / 576.0, p_min=g.p_min)
    tables = build_tables_exact(g, params, gadget.t, tau=gadget.tau)
    for idx in range(50):
        record, f_vec, out = run_pipeline_once(g, tables, gadget.t, 3, idx)
        for e in range(g.m):
            if f_vec[e] > 0:
                assert not tables.classes.is_crucial(e)
                u, v = g.endpoints(e)
                assert u in out.alive and v in out.alive


def test_end_to_end_worker_independence():
    gadget = benchmark_6v8e()
    g = gadget.graph
    tables = build_tables_exact(g, params_for(g), gadget.t, tau=gadget.tau)
    a = end_to_end(g, tables, 4, runs=300, seed=12, workers=1)
    b = end_to_end(g, tables, 4, runs=300, seed=12, workers=2)
    assert [r.alg_weight for r in a.runs] == [r.alg_weight for r in b.runs]
    assert a.ratio == b.ratio


def test_monte_carlo_tables_agree_with_exact():
    gadget = benchmark_6v8e()
    g = gadget.graph
    params = params_for(g)
    exact = build_tables_exact(g, params, gadget.t, tau=gadget.tau)
    mc = build_tables_monte_carlo(g, params, gadget.t, seed=31, tau=gadget.tau,
                                  x_trials=40_000, q_trials=8000,
                                  pair_trials=20_000)
    assert mc.classes.crucial_mask == exact.classes.crucial_mask
    assert mc.estimates is not None
    for e in mc.classes.noncrucial():
        rel = abs(mc.g_table.get(e) - exact.g_table.get(e)) / exact.g_table.get(e)
        assert rel < 0.15, (e, mc.g_table.get(e), exact.g_table.get(e))
    res = end_to_end(g, mc, 4, runs=400, seed=32)
    assert 0.5 <= res.ratio <= 1.0


def test_monte_carlo_tables_with_sampled_conditionals():
    # force the per-batch conditional resampling path end to end
    gadget = benchmark_6v8e()
    g = gadget.graph
    params = params_for(g)
    mc = build_tables_monte_carlo(g, params, 4, seed=33, tau=gadget.tau,
                                  x_trials=8000, q_trials=2000,
                                  pair_trials=2000, cond_trials=300,
                                  exact_conditionals=False)
    res = end_to_end(g, mc, 4, runs=200, seed=34)
    assert all(r.max_post_degree <= 1.0 + 1e-9 for r in res.runs)
    assert 0.5 <= res.ratio <= 1.0


def test_mean_f_tracks_gamma_x_on_relaxed_suite():
    gadget = relaxed_suite_8v()
    g = gadget.graph
    params = Params(epsilon=gadget.epsilon, delta=1 / 576.0, p_min=g.p_min)
    tables = build_tables_exact(g, params, gadget.t, tau=gadget.tau)
    res = end_to_end(g, tables, gadget.t, runs=6000, seed=13)
    mean_f = res.mean_f()
    se = res.mean_f_std_err()
    for e in tables.classes.noncrucial():
        target = (1 - params.epsilon / 2) * tables.x[e]
        assert mean_f[e] >= target - 3 * se[e]
