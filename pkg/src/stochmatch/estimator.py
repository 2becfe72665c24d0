"""Monte Carlo estimators for the probabilities the pipeline consumes.

Estimated quantities: per-edge optimum membership (x), oracle-matching
membership on the crucial side (y), its batch-conditional variant (y'),
plan membership (q), and joint alive probabilities of vertex pairs.  Every
estimate carries its binomial standard error; trials are chopped into fixed
blocks with index-derived streams so results do not depend on the worker
count.

Sampling for x and y exploits that a realization of a small graph is one of
at most ``2^m`` masks: trials are drawn vectorized, reduced to distinct
masks, and the matching oracle runs once per distinct mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph_core import StochasticGraph, sample_mask
from .mwm import GraphView, mm_edge_mask
from .parallel import rng_from, run_blocks, sum_counts
from .sparsifier import mask_edges, plan_round_masks
from .vb_matching import CondEstimator, run_vb

_TAG_X = 0x01
_TAG_Y = 0x02
_TAG_COND = 0x03
_TAG_PAIR = 0x04
_TAG_Q = 0x05

DEFAULT_TRIALS = 4000  # std_err <= 0.008 for probabilities near 0.5


@dataclass(frozen=True)
class ProbEstimate:
    """A probability estimate with its binomial standard error."""

    value: float
    trials: int
    std_err: float

    @classmethod
    def from_count(cls, count: int, trials: int) -> "ProbEstimate":
        value = count / trials
        return cls(value=value, trials=trials,
                   std_err=math.sqrt(max(value * (1.0 - value), 0.0) / trials))


def z_distance(a: ProbEstimate, b: ProbEstimate) -> float:
    """Two-sample z statistic; 0 when both estimates are degenerate and equal."""
    spread = math.hypot(a.std_err, b.std_err)
    diff = abs(a.value - b.value)
    if spread == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / spread


# ---------------------------------------------------------------------------
# Realization sampling helpers


def _sample_mask_block(g: StochasticGraph, seed: int, tag: int, block: int,
                       count: int) -> tuple[list, np.ndarray]:
    """Distinct realization masks and their multiplicities for one block."""
    rng = rng_from(seed, tag, block)
    if g.m == 0:
        return [0], np.array([count], dtype=np.int64)
    if g.m > 62:
        acc: dict[int, int] = {}
        for _ in range(count):
            mask = sample_mask(g, rng)
            acc[mask] = acc.get(mask, 0) + 1
        items = sorted(acc.items())
        return [m for m, _ in items], np.array([k for _, k in items], dtype=np.int64)
    bits = rng.random((count, g.m)) < g.probs
    weights = np.int64(1) << np.arange(g.m, dtype=np.int64)
    masks = bits.astype(np.int64) @ weights
    uniq, mult = np.unique(masks, return_counts=True)
    return [int(m) for m in uniq], mult


def _x_counts_block(g: StochasticGraph, seed: int, block: int, count: int) -> np.ndarray:
    masks, mult = _sample_mask_block(g, seed, _TAG_X, block, count)
    counts = np.zeros(g.m, dtype=np.int64)
    for mask, k in zip(masks, mult):
        mm = mm_edge_mask(g, mask)
        for e in mask_edges(mm):
            counts[e] += k
    return counts


def _y_counts_block(g: StochasticGraph, crucial_mask: int, seed: int, block: int,
                    count: int) -> np.ndarray:
    masks, mult = _sample_mask_block(g, seed, _TAG_Y, block, count)
    counts = np.zeros(g.m, dtype=np.int64)
    for mask, k in zip(masks, mult):
        mo = mm_edge_mask(g, mask) & crucial_mask
        for e in mask_edges(mo):
            counts[e] += k
    return counts


def estimate_x(g: StochasticGraph, trials: int = DEFAULT_TRIALS, seed: int = 0,
               workers: int | None = None) -> list[ProbEstimate]:
    """Per-edge frequency of membership in MM(realization)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    parts = run_blocks(_x_counts_block, (g, seed), trials, workers)
    counts = sum_counts(parts)
    return [ProbEstimate.from_count(int(c), trials) for c in counts]


def estimate_y(g: StochasticGraph, crucial_mask: int, trials: int = DEFAULT_TRIALS,
               seed: int = 0, workers: int | None = None) -> list[ProbEstimate]:
    """Per-edge frequency of membership in the oracle matching.

    Each trial samples the crucial realization jointly with a hallucinated
    copy of the non-crucial edges (one Bernoulli per edge in total), takes the
    maximum-weight matching and keeps its crucial side.  Entries for
    non-crucial edges are identically zero.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    parts = run_blocks(_y_counts_block, (g, crucial_mask, seed), trials, workers)
    counts = sum_counts(parts)
    return [ProbEstimate.from_count(int(c), trials) for c in counts]


def estimate_y_conditional(
    g: StochasticGraph,
    crucial_mask: int,
    e: int,
    revealed_mask: int,
    revealed_bits: int,
    trials: int,
    rng: np.random.Generator,
) -> ProbEstimate:
    """Conditional oracle-matching membership given a batch reveal.

    Revealed edges are frozen to their observed states; every other edge is
    resampled independently (hidden crucial edges and the whole hallucinated
    non-crucial copy).  Valid because edges realize independently, so
    conditioning is just freezing the revealed bits.  An empty reveal (first
    arrival) degenerates to the unconditional estimate.
    """
    if revealed_mask != 0:
        if not (revealed_mask >> e) & 1:
            raise ValueError("edge is not part of the revealed batch")
        if not (revealed_bits >> e) & 1:
            raise ValueError("activation only considers realized edges")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hidden = [i for i in range(g.m) if not (revealed_mask >> i) & 1]
    count = 0
    p_hidden = np.array([g.edges[i].p for i in hidden])
    for _ in range(trials):
        mask = revealed_bits
        if hidden:
            draws = rng.random(len(hidden)) < p_hidden
            for i, hit in zip(hidden, draws):
                if hit:
                    mask |= 1 << i
        mo = mm_edge_mask(g, mask) & crucial_mask
        if (mo >> e) & 1:
            count += 1
    return ProbEstimate.from_count(count, trials)


class MonteCarloConditional:
    """CondEstimator that estimates y' by conditional resampling.

    Each distinct (edge, batch) query gets its own stream derived from the
    master seed and the query key, and the result is cached, so estimates are
    deterministic regardless of query order; batch clipping downstream is
    logged by the run itself.
    """

    def __init__(self, g: StochasticGraph, crucial_mask: int, trials: int, seed: int):
        self.g = g
        self.crucial_mask = crucial_mask
        self.trials = trials
        self.seed = seed
        self._cache: dict[tuple[int, int, int], float] = {}

    def y_prime(self, e: int, batch_mask: int, batch_bits: int) -> float:
        key = (e, batch_mask, batch_bits)
        hit = self._cache.get(key)
        if hit is None:
            rng = rng_from(self.seed, _TAG_COND, e, batch_mask, batch_bits)
            est = estimate_y_conditional(
                self.g, self.crucial_mask, e, batch_mask, batch_bits,
                self.trials, rng,
            )
            hit = est.value
            self._cache[key] = hit
        return hit


# ---------------------------------------------------------------------------
# Plan membership and pair-alive estimation


def _q_counts_block(g: StochasticGraph, t: int, seed: int, block: int,
                    count: int) -> np.ndarray:
    rng = rng_from(seed, _TAG_Q, block)
    counts = np.zeros(g.m, dtype=np.int64)
    for _ in range(count):
        q_mask = 0
        for mask in plan_round_masks(g, t, rng):
            q_mask |= mask
        for e in mask_edges(q_mask):
            counts[e] += 1
    return counts


def estimate_q(g: StochasticGraph, t: int, trials: int, seed: int,
               workers: int | None = None) -> list[ProbEstimate]:
    """Per-edge frequency of plan membership across independent plan draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    parts = run_blocks(_q_counts_block, (g, t, seed), trials, workers)
    counts = sum_counts(parts)
    return [ProbEstimate.from_count(int(c), trials) for c in counts]


@dataclass(frozen=True)
class VBSampler:
    """Bundle of inputs needed to rerun the variance-bounding matching."""

    view: GraphView
    y: np.ndarray
    cond: CondEstimator


def _pair_alive_block(sampler: VBSampler, pairs: tuple, seed: int, block: int,
                      count: int) -> np.ndarray:
    rng = rng_from(seed, _TAG_PAIR, block)
    counts = np.zeros(len(pairs), dtype=np.int64)
    for _ in range(count):
        out = run_vb(sampler.view, sampler.y, sampler.cond, rng)
        for j, (u, v) in enumerate(pairs):
            if u in out.alive and v in out.alive:
                counts[j] += 1
    return counts


@dataclass(frozen=True)
class PairAliveEstimate:
    pair: tuple[int, int]
    estimate: ProbEstimate
    adjacent: bool  # pairs joined by a crucial edge are outside the guarantee


def estimate_pair_alive(
    sampler: VBSampler,
    pairs: list[tuple[int, int]],
    trials: int,
    seed: int,
    workers: int | None = None,
) -> dict[tuple[int, int], PairAliveEstimate]:
    """Joint alive frequency of vertex pairs across independent runs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    norm_pairs = tuple((min(u, v), max(u, v)) for u, v in pairs)
    parts = run_blocks(_pair_alive_block, (sampler, norm_pairs, seed), trials, workers)
    counts = sum_counts(parts)
    g = sampler.view.graph
    crucial_mask = sampler.view.effective_mask
    out = {}
    for j, pair in enumerate(norm_pairs):
        idx = g.pair_index.get(pair)
        adjacent = idx is not None and bool((crucial_mask >> idx) & 1)
        out[pair] = PairAliveEstimate(
            pair=pair,
            estimate=ProbEstimate.from_count(int(counts[j]), trials),
            adjacent=adjacent,
        )
    return out


# ---------------------------------------------------------------------------
# Estimate table


@dataclass
class EstimateTable:
    """Everything the augmenting stage needs, with standard errors."""

    graph_token: str
    x_hat: list[ProbEstimate]
    y_hat: dict[int, ProbEstimate]
    q_hat: list[ProbEstimate]
    pair_alive: dict[tuple[int, int], PairAliveEstimate] = field(default_factory=dict)

    def x_values(self) -> np.ndarray:
        return np.array([e.value for e in self.x_hat])

    def q_values(self) -> np.ndarray:
        return np.array([e.value for e in self.q_hat])

    def to_csv(self, g: StochasticGraph, header_comment: str | None = None) -> str:
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("edge_id,u,v,x_hat,x_se,y_hat,y_se,q_hat,q_se")
        for e in range(g.m):
            u, v, _w, _p = g.edges[e]
            x = self.x_hat[e]
            q = self.q_hat[e]
            y = self.y_hat.get(e)
            y_val = f"{y.value!r}" if y is not None else ""
            y_se = f"{y.std_err!r}" if y is not None else ""
            lines.append(
                f"{e},{u},{v},{x.value!r},{x.std_err!r},{y_val},{y_se},"
                f"{q.value!r},{q.std_err!r}"
            )
        return "\n".join(lines) + "\n"
