"""Query-plan construction and crucial/non-crucial classification.

The plan is the union of maximum-weight matchings of ``t`` independently
sampled realizations, so its max-degree is at most ``t`` by construction.
Round ``i`` of a plan draws from the stream ``(seed, PLAN, i)``: plans with
the same seed are nested across ``t`` (smaller plans are prefixes of larger
ones), which is what makes paired ``t``-sweeps comparable run by run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph_core import StochasticGraph, sample_mask
from .mwm import mm_edge_mask
from .parallel import rng_from

_TAG_PLAN_ROUND = 0x51


def mask_edges(mask: int) -> list[int]:
    out = []
    e = 0
    while mask:
        if mask & 1:
            out.append(e)
        mask >>= 1
        e += 1
    return out


@dataclass(frozen=True)
class QueryPlan:
    """Sparse subgraph to query: union of per-round matchings, with provenance."""

    t: int
    q_mask: int
    rounds: tuple[int, ...]
    parent: str

    def edges(self) -> list[int]:
        return mask_edges(self.q_mask)

    def contains(self, e: int) -> bool:
        return bool((self.q_mask >> e) & 1)

    def max_degree(self, g: StochasticGraph) -> int:
        deg = [0] * g.n
        for e in self.edges():
            u, v = g.endpoints(e)
            deg[u] += 1
            deg[v] += 1
        return max(deg, default=0)

    def to_json(self) -> str:
        rounds = [mask_edges(mask) for mask in self.rounds]
        return json.dumps({"t": self.t, "edges": self.edges(), "matchings": rounds})

    @classmethod
    def from_json(cls, text: str, g: StochasticGraph) -> "QueryPlan":
        data = json.loads(text)
        rounds = []
        for edges in data["matchings"]:
            mask = 0
            for e in edges:
                mask |= 1 << int(e)
            rounds.append(mask)
        q_mask = 0
        for e in data["edges"]:
            q_mask |= 1 << int(e)
        return cls(t=int(data["t"]), q_mask=q_mask, rounds=tuple(rounds), parent=g.token)


def build_query_plan(g: StochasticGraph, t: int, seed: int) -> QueryPlan:
    """Union of MM over ``t`` independent seeded realizations."""
    if t < 1:
        raise ValueError("t must be at least 1")
    rounds = []
    q_mask = 0
    for i in range(t):
        rng = rng_from(seed, _TAG_PLAN_ROUND, i)
        mask = sample_mask(g, rng)
        round_mask = mm_edge_mask(g, mask)
        rounds.append(round_mask)
        q_mask |= round_mask
    return QueryPlan(t=t, q_mask=q_mask, rounds=tuple(rounds), parent=g.token)


def plan_round_masks(g: StochasticGraph, t: int, rng: np.random.Generator) -> list[int]:
    """Per-round matching masks drawn from one generator (hot path for re-draws).

    The vectorized draw consumes the stream row by row, so for a fixed
    generator state the first rounds of a larger ``t`` are exactly the rounds
    of a smaller one (nested plans).
    """
    if g.m == 0:
        return [0] * t
    if g.m <= 62:
        bits = rng.random((t, g.m)) < g.probs
        weights = np.int64(1) << np.arange(g.m, dtype=np.int64)
        masks = bits.astype(np.int64) @ weights
        return [mm_edge_mask(g, int(mask)) for mask in masks]
    return [mm_edge_mask(g, sample_mask(g, rng)) for _ in range(t)]


@dataclass(frozen=True)
class EdgeClasses:
    """Threshold split of the edges at ``tau``; ties go to the crucial side."""

    crucial_mask: int
    tau: float
    m: int

    @property
    def noncrucial_mask(self) -> int:
        return ((1 << self.m) - 1) & ~self.crucial_mask

    def is_crucial(self, e: int) -> bool:
        return bool((self.crucial_mask >> e) & 1)

    def crucial(self) -> list[int]:
        return [e for e in range(self.m) if self.is_crucial(e)]

    def noncrucial(self) -> list[int]:
        return [e for e in range(self.m) if not self.is_crucial(e)]


def classify_edges(x_hat: np.ndarray, tau: float) -> EdgeClasses:
    """Crucial iff the estimated optimum-membership probability is >= tau."""
    x_hat = np.asarray(x_hat, dtype=float)
    mask = 0
    for e, value in enumerate(x_hat):
        if value >= tau:
            mask |= 1 << e
    return EdgeClasses(crucial_mask=mask, tau=tau, m=len(x_hat))


@dataclass(frozen=True)
class CoverageReport:
    """Per-edge plan-membership frequencies against their guaranteed floors."""

    trials: int
    t: int
    epsilon: float
    tau: float
    theory_precondition_met: bool
    coverage: dict  # edge -> (freq, floor, passed) for crucial edges
    claim_floor: dict  # edge -> (freq, floor, passed) for all edges
    max_degree_seen: int
    degree_bound_ok: bool

    @property
    def all_passed(self) -> bool:
        cov_ok = all(passed for _f, _fl, passed in self.coverage.values())
        floor_ok = all(passed for _f, _fl, passed in self.claim_floor.values())
        return cov_ok and floor_ok and self.degree_bound_ok


def check_crucial_coverage(
    g: StochasticGraph,
    classes: EdgeClasses,
    x_hat: np.ndarray,
    epsilon: float,
    t: int,
    trials: int,
    seed: int,
) -> CoverageReport:
    """Measure Pr[edge joins the plan] across plan re-draws.

    Crucial edges are gated against the ``1 - epsilon`` floor whenever the
    ``t >= 1/(tau*epsilon)`` precondition actually holds (at practical ``t``
    it usually does not, and the floor is then informational only); every
    edge is gated against the unconditional ``min(1/3, t*x/3)`` floor.  The
    structural ``max degree <= t`` bound is checked on every sampled plan.
    """
    counts = np.zeros(g.m, dtype=np.int64)
    max_degree_seen = 0
    degree_ok = True
    for i in range(trials):
        rng = rng_from(seed, 0x5152, i)
        q_mask = 0
        for _ in range(t):
            q_mask |= mm_edge_mask(g, sample_mask(g, rng))
        deg = [0] * g.n
        for e in range(g.m):
            if (q_mask >> e) & 1:
                counts[e] += 1
                u, v = g.endpoints(e)
                deg[u] += 1
                deg[v] += 1
        top = max(deg, default=0)
        max_degree_seen = max(max_degree_seen, top)
        if top > t:
            degree_ok = False

    freq = counts / trials
    se = np.sqrt(np.maximum(freq * (1.0 - freq), 0.0) / trials)
    precondition = t >= 1.0 / (classes.tau * epsilon)

    coverage = {}
    for e in classes.crucial():
        floor = 1.0 - epsilon
        passed = (freq[e] >= floor - 3.0 * se[e]) or not precondition
        coverage[e] = (float(freq[e]), floor, bool(passed))
    claim_floor = {}
    for e in range(g.m):
        floor = min(1.0 / 3.0, t * float(x_hat[e]) / 3.0)
        passed = freq[e] >= floor - 3.0 * se[e]
        claim_floor[e] = (float(freq[e]), floor, bool(passed))

    return CoverageReport(
        trials=trials,
        t=t,
        epsilon=epsilon,
        tau=classes.tau,
        theory_precondition_met=bool(precondition),
        coverage=coverage,
        claim_floor=claim_floor,
        max_degree_seen=max_degree_seen,
        degree_bound_ok=degree_ok,
    )
