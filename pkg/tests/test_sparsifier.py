import numpy as np
from scipy import stats as sps

from stochmatch.exact import exact_x
from stochmatch.gadgets import benchmark_6v8e
from stochmatch.graph_core import Edge, StochasticGraph, gen_random_graph
from stochmatch.mwm import mm_edge_mask
from stochmatch.parallel import rng_from
from stochmatch.sparsifier import (
    QueryPlan,
    build_query_plan,
    check_crucial_coverage,
    classify_edges,
    plan_round_masks,
)


def graph(n, edges):
    return StochasticGraph(n=n, edges=tuple(Edge(*e) for e in edges))


def test_plan_t1_is_single_matching():
    g = benchmark_6v8e().graph
    plan = build_query_plan(g, t=1, seed=0)
    assert plan.max_degree(g) <= 1
    assert len(plan.rounds) == 1
    assert plan.q_mask == plan.rounds[0]


def test_plan_deterministic_p1_graph():
    g = graph(4, [(0, 1, 2.0, 1.0), (1, 2, 3.0, 1.0), (2, 3, 2.0, 1.0)])
    plan = build_query_plan(g, t=7, seed=3)
    fixed = mm_edge_mask(g, g.full_mask)
    assert plan.q_mask == fixed
    assert all(r == fixed for r in plan.rounds)


def test_plan_determinism_per_seed():
    g = benchmark_6v8e().graph
    assert build_query_plan(g, 4, seed=9).q_mask == build_query_plan(g, 4, seed=9).q_mask


def test_plan_max_degree_bound_random_family():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = gen_random_graph(7, 0.6, {"name": "uniform", "low": 0.1, "high": 2.0},
                             {"name": "uniform", "low": 0.3, "high": 0.9},
                             seed=int(rng.integers(0, 2**31)))
        if g.m == 0:
            continue
        t = int(rng.integers(1, 6))
        plan = build_query_plan(g, t, seed=int(rng.integers(0, 2**31)))
        assert plan.max_degree(g) <= t


def test_single_edge_membership_closed_form():
    # Pr[e in Q] = 1 - (1-p)^t for a lone edge, where x_e = p_e
    g = graph(2, [(0, 1, 1.0, 0.4)])
    t, draws = 5, 30_000
    hits = 0
    for i in range(draws):
        if build_query_plan(g, t, seed=i).contains(0):
            hits += 1
    freq = hits / draws
    target = 1 - 0.6**5
    se = np.sqrt(target * (1 - target) / draws)
    assert abs(freq - target) <= 3 * se
    assert round(target, 5) == 0.92224


def test_nested_prefix_rounds():
    g = benchmark_6v8e().graph
    small = build_query_plan(g, 3, seed=77)
    large = build_query_plan(g, 9, seed=77)
    assert large.rounds[:3] == small.rounds


def test_plan_round_masks_prefix_stream():
    g = benchmark_6v8e().graph
    a = plan_round_masks(g, 4, rng_from(5))
    b = plan_round_masks(g, 11, rng_from(5))
    assert b[:4] == a


def test_classify_extremes_and_ties():
    x = np.array([0.3, 0.05])
    assert classify_edges(x, 0.0).crucial() == [0, 1]
    assert classify_edges(x, 1.1).crucial() == []
    classes = classify_edges(x, 0.1)
    assert classes.crucial() == [0]
    assert classes.noncrucial() == [1]
    tie = classify_edges(np.array([0.1]), 0.1)
    assert tie.crucial() == [0]  # ties go to the crucial side


def test_round_homogeneity_across_plan_rounds():
    # rounds are iid draws of the optimum: per-edge membership counts across
    # rounds pass a chi-square homogeneity test
    g = benchmark_6v8e().graph
    t, draws = 4, 4000
    counts = np.zeros((t, g.m), dtype=np.int64)
    rng = rng_from(123)
    for _ in range(draws):
        for i, mask in enumerate(plan_round_masks(g, t, rng)):
            for e in range(g.m):
                counts[i, e] += (mask >> e) & 1
    for e in range(g.m):
        obs = np.array([counts[:, e], draws - counts[:, e]])
        if obs[0].min() < 5:
            continue
        _stat, p_value, _dof, _exp = sps.chi2_contingency(obs)
        assert p_value > 1e-4, (e, counts[:, e])


def test_coverage_report_floors():
    g = graph(2, [(0, 1, 1.0, 0.5)])
    x = exact_x(g)  # = [0.5]
    classes = classify_edges(x, tau=0.4)
    report = check_crucial_coverage(g, classes, x, epsilon=0.5, t=10,
                                    trials=4000, seed=3)
    assert report.theory_precondition_met  # 10 >= 1/(0.4*0.5) = 5
    freq, floor, passed = report.coverage[0]
    assert passed
    target = 1 - 0.5**10
    assert abs(freq - target) <= 3 * np.sqrt(target * (1 - target) / 4000)
    # unconditional floor holds for every edge
    assert all(ok for _f, _fl, ok in report.claim_floor.values())
    assert report.degree_bound_ok
    assert report.all_passed


def test_coverage_informational_when_precondition_unmet():
    g = benchmark_6v8e().graph
    x = exact_x(g)
    classes = classify_edges(x, tau=0.02)
    report = check_crucial_coverage(g, classes, x, epsilon=0.05, t=2,
                                    trials=500, seed=1)
    assert not report.theory_precondition_met
    # crucial coverage entries are then never gated failures
    assert all(ok for _f, _fl, ok in report.coverage.values())


def test_plan_json_roundtrip():
    g = benchmark_6v8e().graph
    plan = build_query_plan(g, 5, seed=2)
    back = QueryPlan.from_json(plan.to_json(), g)
    assert back.q_mask == plan.q_mask
    assert back.rounds == plan.rounds
    assert back.t == plan.t
