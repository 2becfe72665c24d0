"""Statistical verification of the pipeline's probabilistic guarantees.

Every check is a deterministic function of (instance, seed, trials) and
produces a :class:`CheckReport`.  Monte Carlo frequencies are compared
against enumeration oracles within 3 standard errors where instance size
permits exact enumeration; structural facts (matching validity, degree caps,
alive-set disjointness) are asserted exactly inside the sampled runs
themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .augmenter import PipelineTables, build_tables_exact
from .estimator import VBSampler, estimate_pair_alive
from .gadgets import (
    Gadget,
    positive_covariance_control,
    relaxed_suite_8v,
    shared_tie_fixture,
    var_z_synthetic_x,
    verification_gadgets,
)
from .graph_core import Params, StochasticGraph, sample_mask
from .parallel import rng_from, run_blocks
from .sparsifier import plan_round_masks
from .vb_matching import attenuation_g, exact_vb_enumeration, run_vb

_TAG_VB = 0x21
_TAG_NA = 0x22
_TAG_Z = 0x23
_TAG_Y = 0x24
_TAG_IND = 0x25

PAIR_ALIVE_FLOOR = 1.0 / 576.0  # 1/36 * 0.25^2


@dataclass(frozen=True)
class CheckReport:
    name: str
    verdict: str  # "pass" | "fail" | "inconclusive"
    gated: bool
    estimate: float
    std_err: float
    threshold: float
    trials: int
    details: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.gated and self.verdict == "fail"

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "gated": self.gated,
            "estimate": self.estimate,
            "std_err": self.std_err,
            "threshold": self.threshold,
            "trials": self.trials,
            "details": self.details,
        }


def two_point_covariance(q: float) -> float:
    """Covariance of indicators under the law 'exactly one of two, first w.p. q'."""
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must be a probability")
    return -q * (1.0 - q)


def _se(freq: float, trials: int) -> float:
    return math.sqrt(max(freq * (1.0 - freq), 0.0) / trials)


# ---------------------------------------------------------------------------
# Shared VB sampling


def _vb_stats_block(sampler: VBSampler, pairs: tuple, perm, seed: int,
                    block: int, count: int):
    rng = rng_from(seed, _TAG_VB, block)
    g = sampler.view.graph
    active = np.zeros(g.m, dtype=np.int64)
    selected = np.zeros(g.m, dtype=np.int64)
    alive = np.zeros(g.n, dtype=np.int64)
    pair_counts = np.zeros(len(pairs), dtype=np.int64)
    clip = 0
    for _ in range(count):
        out = run_vb(sampler.view, sampler.y, sampler.cond, rng, permutation=perm)
        clip += out.clip_events
        for _v, partner, e in out.activation_log:
            if partner is not None:
                active[e] += 1
        for e in out.matching.edges:
            selected[e] += 1
        for v in out.alive:
            alive[v] += 1
        for j, (u, v) in enumerate(pairs):
            if u in out.alive and v in out.alive:
                pair_counts[j] += 1
    return active, selected, alive, pair_counts, clip


def sample_vb_statistics(sampler: VBSampler, pairs, trials: int, seed: int,
                         perm=None, workers=None):
    pairs = tuple(pairs)
    parts = run_blocks(_vb_stats_block, (sampler, pairs, perm, seed), trials, workers)
    active = sum(p[0] for p in parts)
    selected = sum(p[1] for p in parts)
    alive = sum(p[2] for p in parts)
    pair_counts = sum(p[3] for p in parts)
    clip = sum(p[4] for p in parts)
    return active, selected, alive, dict(zip(pairs, pair_counts)), clip


def _try_enumeration(gadget: Gadget):
    sampler = gadget.sampler()
    try:
        return exact_vb_enumeration(sampler.view, sampler.y, sampler.cond)
    except ValueError:
        return None


def _noncrucial_pairs(g: StochasticGraph, crucial_mask: int):
    """Vertex pairs with no crucial edge between them (guarantee scope)."""
    out = []
    adjacent = []
    for u in range(g.n):
        for v in range(u + 1, g.n):
            idx = g.pair_index.get((u, v))
            if idx is not None and (crucial_mask >> idx) & 1:
                adjacent.append((u, v))
            else:
                out.append((u, v))
    return out, adjacent


# ---------------------------------------------------------------------------
# Checks


def check_activation(gadget: Gadget, trials: int, seed: int,
                     workers=None) -> CheckReport:
    """Activation frequency of every crucial edge vs g(y) and the oracle."""
    sampler = gadget.sampler()
    g = gadget.graph
    active, _sel, _alive, _pairs, clip = sample_vb_statistics(
        sampler, (), trials, seed, workers=workers)
    dist = _try_enumeration(gadget)
    y = sampler.y
    details = {}
    z_max = 0.0
    oracle_gap = 0.0
    for e in range(g.m):
        if not (gadget.crucial_mask >> e) & 1:
            continue
        freq = active[e] / trials
        target = attenuation_g(float(y[e]))
        se = _se(freq, trials)
        entry = {"freq": freq, "g_of_y": target, "se": se}
        gaps = [abs(freq - target)]
        if dist is not None:
            exact = dist.edge_active_prob(e)
            entry["exact"] = exact
            gaps.append(abs(freq - exact))
            oracle_gap = max(oracle_gap, abs(exact - target))
        z_edge = max(gap / se if se > 0 else (0.0 if gap == 0 else math.inf)
                     for gap in gaps)
        z_max = max(z_max, z_edge)
        entry["z"] = z_edge
        details[str(e)] = entry
    verdict = "pass" if z_max <= 3.0 else "fail"
    return CheckReport(
        name=f"activation[{gadget.name}]", verdict=verdict, gated=True,
        estimate=z_max, std_err=0.0, threshold=3.0, trials=trials,
        details={"edges": details, "oracle_vs_g_gap": oracle_gap,
                 "enumerated": dist is not None, "clip_events": clip},
    )


def check_selectability(gadget: Gadget, trials: int, seed: int,
                        workers=None) -> CheckReport:
    """Matching membership vs the enumeration oracle, and the 8/15 line."""
    sampler = gadget.sampler()
    g = gadget.graph
    _act, selected, _alive, _pairs, _clip = sample_vb_statistics(
        sampler, (), trials, seed, workers=workers)
    dist = _try_enumeration(gadget)
    y = sampler.y
    details = {}
    z_max = 0.0
    ratio_floor_ok = True
    for e in range(g.m):
        if not (gadget.crucial_mask >> e) & 1:
            continue
        freq = selected[e] / trials
        se = _se(freq, trials)
        entry = {"freq": freq, "se": se, "target_8_15": (8.0 / 15.0) * float(y[e])}
        if dist is not None:
            exact = dist.edge_selected_prob(e)
            gap = abs(freq - exact)
            z_edge = gap / se if se > 0 else (0.0 if gap == 0 else math.inf)
            z_max = max(z_max, z_edge)
            entry["exact"] = exact
            entry["z"] = z_edge
        if freq < (8.0 / 15.0) * float(y[e]) - 3.0 * se:
            ratio_floor_ok = False
            entry["below_8_15"] = True
        details[str(e)] = entry
    single_edge = bin(gadget.crucial_mask).count("1") == 1
    verdict = "pass"
    if dist is not None and z_max > 3.0:
        verdict = "fail"
    if single_edge and not ratio_floor_ok:
        verdict = "fail"
    return CheckReport(
        name=f"selectability[{gadget.name}]", verdict=verdict, gated=True,
        estimate=z_max, std_err=0.0, threshold=3.0, trials=trials,
        details={"edges": details, "enumerated": dist is not None,
                 "eight_fifteenths_floor_ok": ratio_floor_ok,
                 "eight_fifteenths_gated": single_edge},
    )


def check_pair_alive(gadget: Gadget, trials: int, seed: int,
                     workers=None) -> CheckReport:
    """Joint alive frequency of non-adjacent pairs vs floor and oracle."""
    sampler = gadget.sampler()
    g = gadget.graph
    pairs, adjacent = _noncrucial_pairs(g, gadget.crucial_mask)
    _act, _sel, alive, pair_counts, _clip = sample_vb_statistics(
        sampler, tuple(pairs + adjacent), trials, seed, workers=workers)
    dist = _try_enumeration(gadget)
    details = {}
    verdict = "pass"
    worst = 1.0
    for u, v in pairs:
        freq = pair_counts[(u, v)] / trials
        se = _se(freq, trials)
        entry = {"freq": freq, "se": se}
        if freq < PAIR_ALIVE_FLOOR - 3.0 * se:
            verdict = "fail"
            entry["below_floor"] = True
        if dist is not None:
            exact = dist.pair_alive_prob(u, v)
            entry["exact"] = exact
            gap = abs(freq - exact)
            if se > 0 and gap / se > 3.0:
                verdict = "fail"
                entry["off_oracle"] = True
            elif se == 0 and gap > 0:
                verdict = "fail"
                entry["off_oracle"] = True
        worst = min(worst, freq)
        details[f"{u}-{v}"] = entry
    for u, v in adjacent:
        freq = pair_counts[(u, v)] / trials
        details[f"{u}-{v}"] = {"freq": freq, "adjacent": True}
    # marginal floor: Pr[v alive] >= 1 - y_v within the band
    y = sampler.y
    singles = {}
    for v in range(g.n):
        freq = alive[v] / trials
        y_v = float(sum(y[e] for e in g.incident[v] if (gadget.crucial_mask >> e) & 1))
        se = _se(freq, trials)
        singles[str(v)] = {"freq": freq, "floor": 1.0 - y_v}
        if freq < 1.0 - y_v - 3.0 * se:
            verdict = "fail"
            singles[str(v)]["below_floor"] = True
    return CheckReport(
        name=f"pair_alive[{gadget.name}]", verdict=verdict, gated=True,
        estimate=worst, std_err=0.0, threshold=PAIR_ALIVE_FLOOR, trials=trials,
        details={"pairs": details, "enumerated": dist is not None,
                 "alive_single": singles},
    )


# ---------------------------------------------------------------------------
# Negative association of plan membership


def _plan_pair_block(g: StochasticGraph, t: int, pairs: tuple, seed: int,
                     block: int, count: int) -> np.ndarray:
    rng = rng_from(seed, _TAG_NA, block)
    cells = np.zeros((len(pairs), 4), dtype=np.int64)  # n00 n01 n10 n11
    for _ in range(count):
        q_mask = 0
        for mask in plan_round_masks(g, t, rng):
            q_mask |= mask
        for j, (e1, e2) in enumerate(pairs):
            a = (q_mask >> e1) & 1
            b = (q_mask >> e2) & 1
            cells[j, 2 * a + b] += 1
    return cells


def covariance_from_cells(cells: np.ndarray) -> tuple[float, float]:
    """Sample covariance of two Bernoulli indicators and its standard error."""
    total = int(cells.sum())
    p11 = cells[3] / total
    pa = (cells[2] + cells[3]) / total
    pb = (cells[1] + cells[3]) / total
    cov = p11 - pa * pb
    # moment estimator of Var(cov_hat): E[(a-pa)^2 (b-pb)^2] - cov^2, over n
    m22 = 0.0
    for cell, (a, b) in zip(cells, ((0, 0), (0, 1), (1, 0), (1, 1))):
        m22 += cell / total * ((a - pa) ** 2) * ((b - pb) ** 2)
    var = max(m22 - cov**2, 0.0) / total
    return float(cov), math.sqrt(var)


def incident_edge_pairs(g: StochasticGraph) -> list[tuple[int, int]]:
    out = []
    for v in range(g.n):
        inc = g.incident[v]
        for i in range(len(inc)):
            for j in range(i + 1, len(inc)):
                pair = (min(inc[i], inc[j]), max(inc[i], inc[j]))
                if pair not in out:
                    out.append(pair)
    return sorted(set(out))


def check_negative_association(gadget: Gadget, trials: int, seed: int,
                               workers=None) -> CheckReport:
    """Plan-membership covariance of incident edge pairs is <= +3*SE.

    Declared pairs of the gadget are gated as well (that is how the negative
    control forces a failure).  The structural 'exactly one of the two edges
    per plan' fact is recorded for the tie fixture.
    """
    g = gadget.graph
    pairs = incident_edge_pairs(g)
    pairs += [p for p in gadget.declared_pairs if p not in pairs]
    if not pairs:
        return CheckReport(name=f"negative_association[{gadget.name}]",
                           verdict="pass", gated=True, estimate=0.0,
                           std_err=0.0, threshold=0.0, trials=0,
                           details={"pairs": {}})
    parts = run_blocks(_plan_pair_block, (g, gadget.t, tuple(pairs), seed),
                       trials, workers)
    cells = sum(parts)
    details = {}
    verdict = "pass"
    worst = -math.inf
    for j, (e1, e2) in enumerate(pairs):
        cov, se = covariance_from_cells(cells[j])
        entry = {"cov": cov, "se": se}
        exactly_one = int(cells[j, 1] + cells[j, 2])
        entry["exactly_one_freq"] = exactly_one / trials
        if cov > 3.0 * se:
            verdict = "fail"
            entry["positive"] = True
        worst = max(worst, cov - 3.0 * se)
        details[f"{e1},{e2}"] = entry
    return CheckReport(
        name=f"negative_association[{gadget.name}]", verdict=verdict, gated=True,
        estimate=worst, std_err=0.0, threshold=0.0, trials=trials,
        details={"pairs": details},
    )


# ---------------------------------------------------------------------------
# Var(Z_v) and Y_v concentration


def _z_block(sampler: VBSampler, support: tuple, h_values: tuple, n: int,
             seed: int, block: int, count: int):
    rng = rng_from(seed, _TAG_Z, block)
    sums = np.zeros(n)
    sumsq = np.zeros(n)
    for _ in range(count):
        out = run_vb(sampler.view, sampler.y, sampler.cond, rng)
        z = np.zeros(n)
        for (u, v), h in zip(support, h_values):
            if u in out.alive:
                z[v] += h
            if v in out.alive:
                z[u] += h
        sums += z
        sumsq += z * z
    return sums, sumsq


def check_var_z(gadget: Gadget, synthetic_x: dict[tuple[int, int], float],
                tau: float, trials: int, seed: int, slack: float = 0.2,
                workers=None) -> CheckReport:
    """Sample variance of the alive-weighted neighborhood sums vs 10*tau/delta^2.

    ``synthetic_x`` must be a fractional matching on the complement of the
    crucial graph with every value at most ``tau``; pair-alive denominators
    are measured first, and ``delta_hat`` is their minimum.
    """
    if any(x > tau + 1e-12 for x in synthetic_x.values()):
        raise ValueError("synthetic fractional matching exceeds tau")
    sampler = gadget.sampler()
    g = gadget.graph
    support = tuple(sorted((min(u, v), max(u, v)) for u, v in synthetic_x))
    pair_est = estimate_pair_alive(sampler, list(support), trials, seed + 1, workers)
    delta_hat = min(est.estimate.value for est in pair_est.values()) if support else 1.0
    if delta_hat <= 0.0:
        raise ValueError("measured pair-alive floor is zero; cannot form h values")
    h_values = tuple(
        synthetic_x[pair] / pair_est[pair].estimate.value for pair in support
    )
    parts = run_blocks(_z_block, (sampler, support, h_values, g.n, seed), trials, workers)
    sums = sum(p[0] for p in parts)
    sumsq = sum(p[1] for p in parts)
    mean = sums / trials
    var = (sumsq - trials * mean**2) / (trials - 1)
    bound = 10.0 * tau / delta_hat**2 * (1.0 + slack)
    worst = float(np.max(var)) if g.n else 0.0
    verdict = "pass" if worst <= bound else "fail"
    return CheckReport(
        name=f"var_z[{gadget.name}]", verdict=verdict, gated=True,
        estimate=worst, std_err=0.0, threshold=bound, trials=trials,
        details={"delta_hat": delta_hat, "tau": tau,
                 "variance_per_vertex": [float(v) for v in var],
                 "pair_alive": {f"{u}-{v}": pair_est[(u, v)].estimate.value
                                for u, v in support}},
    )


def _y_block(g: StochasticGraph, tables: PipelineTables, t: int, seed: int,
             block: int, count: int) -> np.ndarray:
    rng = rng_from(seed, _TAG_Y, block)
    rows = np.zeros((count, g.n))
    classes = tables.classes
    sampler = tables.sampler
    for i in range(count):
        q_mask = 0
        for mask in plan_round_masks(g, t, rng):
            q_mask |= mask
        real_mask = sample_mask(g, rng)
        out = run_vb(sampler.view, sampler.y, sampler.cond, rng,
                     realization_mask=real_mask)
        queried = q_mask & real_mask
        for e in classes.noncrucial():
            if not (queried >> e) & 1:
                continue
            u, v = g.endpoints(e)
            g_e = tables.g_table.get(e)
            if u in out.alive:
                rows[i, v] += g_e
            if v in out.alive:
                rows[i, u] += g_e
    return rows


def check_concentration_y(gadget: Gadget, tables: PipelineTables, trials: int,
                          seed: int, workers=None) -> CheckReport:
    """Concentration of the fractional-degree precursor.

    The (eta, beta) tail bound needs the theory-scale plan size, which desk
    instances cannot realize, so those tails are reported without a gate and
    the verdict stays inconclusive below the theory t.  What *is* gated, at
    any scale, is the same functional form the bound rests on: the mass
    beyond c standard deviations of the mean must be at most 1/c^2 within
    the band, for several c.
    """
    g = gadget.graph
    params = tables.params
    parts = run_blocks(_y_block, (g, tables, gadget.t, seed), trials, workers)
    rows = np.vstack(parts)
    eta, beta = params.eta, params.beta
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)
    tail_center = (np.abs(rows - means) >= eta).mean(axis=0)
    tail_high = (rows >= 1.0 + 3.0 * eta).mean(axis=0)

    cheb_fail = False
    cheb = {}
    worst_excess = -math.inf
    for c in (3.0, 5.0, 10.0):
        bound = 1.0 / c**2
        for v in range(g.n):
            if stds[v] <= 0.0:
                continue
            mass = float((np.abs(rows[:, v] - means[v]) >= c * stds[v]).mean())
            se = _se(mass, trials)
            key = f"c={c:g},v={v}"
            cheb[key] = {"mass": mass, "bound": bound, "se": se}
            worst_excess = max(worst_excess, mass - bound - 3.0 * se)
            if mass > bound + 3.0 * se:
                cheb_fail = True
                cheb[key]["exceeded"] = True
    details = {
        "eta": eta,
        "beta": beta,
        "mean_Y": [float(x) for x in means],
        "tail_center_vs_eta": [float(x) for x in tail_center],
        "tail_high_vs_1_plus_3eta": [float(x) for x in tail_high],
        "theory_tails_gated": False,
        "chebyshev": cheb,
        "t_theory": params.t_theory,
        "t_used": gadget.t,
    }
    if cheb_fail:
        verdict = "fail"
    else:
        verdict = "inconclusive" if gadget.t < params.t_theory else "pass"
    estimate = 0.0 if worst_excess == -math.inf else worst_excess
    return CheckReport(
        name=f"concentration_y[{gadget.name}]", verdict=verdict, gated=True,
        estimate=estimate, std_err=0.0, threshold=0.0, trials=trials,
        details=details,
    )


# ---------------------------------------------------------------------------
# Influential-variable independence


def _log_joint_block(sampler: VBSampler, perm: tuple, u: int, w: int, seed: int,
                     block: int, count: int) -> dict:
    rng = rng_from(seed, _TAG_IND, block)
    counts: dict[tuple, int] = {}
    for _ in range(count):
        out = run_vb(sampler.view, sampler.y, sampler.cond, rng, permutation=perm)
        xu = next(p for v, p, _e in out.activation_log if v == u)
        xw = next(p for v, p, _e in out.activation_log if v == w)
        key = (xu, xw)
        counts[key] = counts.get(key, 0) + 1
    return counts


def check_influence_independence(gadget: Gadget, u: int, w: int, perm,
                                 trials: int, seed: int, alpha: float = 1e-3,
                                 workers=None) -> CheckReport:
    """Chi-square test of pairwise independence of two activation records.

    Runs with a fixed arrival order (the independence statement is per
    order); expected cell masses come from the exact enumeration marginals.
    """
    sampler = gadget.sampler()
    dist = exact_vb_enumeration(sampler.view, sampler.y, sampler.cond)
    comp = dist.component_of(u)
    if w not in comp.vertices:
        raise ValueError("both vertices must be in one crucial component")
    rel_order = tuple(v for v in perm if v in comp.vertices)
    log_law = comp.per_order[rel_order]["log"]
    pu: dict = {}
    pw: dict = {}
    for log, prob in log_law.items():
        xu = next(p for v, p in log if v == u)
        xw = next(p for v, p in log if v == w)
        pu[xu] = pu.get(xu, 0.0) + prob
        pw[xw] = pw.get(xw, 0.0) + prob
    parts = run_blocks(_log_joint_block, (sampler, tuple(perm), u, w, seed),
                       trials, workers)
    counts: dict[tuple, int] = {}
    for part in parts:
        for key, k in part.items():
            counts[key] = counts.get(key, 0) + k
    statistic = 0.0
    cells = 0
    for xu, prob_u in pu.items():
        for xw, prob_w in pw.items():
            expected = prob_u * prob_w * trials
            if expected <= 0.0:
                continue
            observed = counts.get((xu, xw), 0)
            statistic += (observed - expected) ** 2 / expected
            cells += 1
    dof = max(cells - 1, 1)
    p_value = float(sps.chi2.sf(statistic, dof))
    verdict = "pass" if p_value >= alpha else "fail"
    return CheckReport(
        name=f"influence_independence[{gadget.name}:{u},{w}]", verdict=verdict,
        gated=True, estimate=p_value, std_err=0.0, threshold=alpha, trials=trials,
        details={"statistic": statistic, "dof": dof,
                 "marginals_u": {str(k): v for k, v in pu.items()},
                 "marginals_w": {str(k): v for k, v in pw.items()}},
    )


# ---------------------------------------------------------------------------
# Suite


def default_suite(trials: int = 20_000, seed: int = 2024,
                  include_negative_control: bool = False,
                  workers=None) -> list[CheckReport]:
    """The bundled verification suite over the shipped gadget instances."""
    reports: list[CheckReport] = []
    for gadget in verification_gadgets():
        reports.append(check_activation(gadget, trials, seed, workers))
        reports.append(check_selectability(gadget, trials, seed + 1, workers))
        reports.append(check_pair_alive(gadget, trials, seed + 2, workers))
        if gadget.graph.m >= 2:
            reports.append(check_negative_association(gadget, trials, seed + 3, workers))

    tie = shared_tie_fixture()
    oracle = two_point_covariance(0.5)
    reports.append(CheckReport(
        name="two_point_oracle[shared_tie]",
        verdict="pass" if oracle == -0.25 else "fail",
        gated=True, estimate=oracle, std_err=0.0, threshold=-0.25, trials=0,
        details={"note": "covariance of the symmetric exactly-one-of-two law"},
    ))
    reports.append(check_negative_association(tie, trials, seed + 4, workers))

    relaxed = relaxed_suite_8v()
    params = Params(epsilon=relaxed.epsilon, delta=PAIR_ALIVE_FLOOR,
                    p_min=relaxed.graph.p_min)
    tables = build_tables_exact(relaxed.graph, params, relaxed.t, tau=relaxed.tau)
    reports.append(check_var_z(relaxed, var_z_synthetic_x(relaxed, relaxed.tau),
                               relaxed.tau, trials, seed + 5, workers=workers))
    reports.append(check_concentration_y(relaxed, tables, trials, seed + 6, workers))

    if include_negative_control:
        reports.append(check_negative_association(
            positive_covariance_control(), trials, seed + 7, workers))
    return reports


def reports_to_json(reports: list[CheckReport]) -> str:
    return json.dumps([r.to_json_dict() for r in reports], indent=2, sort_keys=True)


def format_report_table(reports: list[CheckReport]) -> str:
    name_width = max(len(r.name) for r in reports) if reports else 4
    lines = [f"{'check'.ljust(name_width)}  verdict       estimate      threshold   trials"]
    for r in reports:
        lines.append(
            f"{r.name.ljust(name_width)}  {r.verdict:<12}  {r.estimate:>12.6g}  "
            f"{r.threshold:>10.6g}  {r.trials:>6d}"
        )
    return "\n".join(lines)


def gated_failures(reports: list[CheckReport]) -> list[CheckReport]:
    return [r for r in reports if r.failed]
