"""Exact maximum-weight matching on general graphs.

``max_weight_matching`` is the deterministic oracle the whole pipeline leans
on; it delegates to networkx's blossom (primal-dual) solver with a fixed
insertion order, and memoizes results per (graph, edge mask) since the Monte
Carlo loops revisit the same realized subgraphs constantly.
``brute_force_mwm`` is the independent cross-validation oracle: exhaustive
enumeration, small instances only.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx

from .graph_core import WEIGHT_TIE_TOL, Matching, StochasticGraph, make_matching


@dataclass(frozen=True)
class GraphView:
    """A stochastic graph restricted to an edge-index mask.

    ``mask=None`` means the whole edge set.  Used to point the matching
    oracle at a realization, at the query plan, or at the crucial edges.
    """

    graph: StochasticGraph
    mask: int | None = None

    def __post_init__(self):
        if self.mask is not None:
            if self.mask < 0 or (self.mask >> self.graph.m):
                raise ValueError("mask indexes edges outside the graph")

    @property
    def effective_mask(self) -> int:
        return self.graph.full_mask if self.mask is None else self.mask

    def edge_indices(self) -> list[int]:
        mask = self.effective_mask
        return [e for e in range(self.graph.m) if (mask >> e) & 1]


def max_weight_matching(view: GraphView) -> Matching:
    """Maximum-weight matching of the view; deterministic, memoized."""
    g = view.graph
    mask = view.effective_mask
    cache = g._caches.setdefault("mm", {})
    hit = cache.get(mask)
    if hit is None:
        hit = _solve(g, mask)
        cache[mask] = hit
    return hit[0]


def mm_edge_mask(g: StochasticGraph, mask: int) -> int:
    """Bitmask of MM(view) edges; same cache as :func:`max_weight_matching`."""
    cache = g._caches.setdefault("mm", {})
    hit = cache.get(mask)
    if hit is None:
        hit = _solve(g, mask)
        cache[mask] = hit
    return hit[1]


def _solve(g: StochasticGraph, mask: int) -> tuple[Matching, int]:
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n))
    for e in range(g.m):
        if (mask >> e) & 1:
            u, v, w, _p = g.edges[e]
            nxg.add_edge(u, v, weight=w)
    pairs = nx.max_weight_matching(nxg, maxcardinality=False)
    index = g.pair_index
    edges = [index[(min(u, v), max(u, v))] for u, v in pairs]
    matching = make_matching(g, edges)
    return matching, matching.as_mask()


def brute_force_mwm(view: GraphView) -> Matching:
    """Exhaustive maximum-weight matching; refuses views with > 20 edges.

    Ties within ``WEIGHT_TIE_TOL`` are broken toward the lexicographically
    smallest sorted edge-index vector, so the output is canonical.
    """
    g = view.graph
    edge_list = view.edge_indices()
    if len(edge_list) > 20:
        raise ValueError(f"brute force limited to 20 edges, got {len(edge_list)}")

    best_weight = 0.0
    best_edges: tuple[int, ...] = ()

    def consider(weight: float, chosen: tuple[int, ...]):
        nonlocal best_weight, best_edges
        if weight > best_weight + WEIGHT_TIE_TOL:
            best_weight, best_edges = weight, chosen
        elif weight >= best_weight - WEIGHT_TIE_TOL and chosen < best_edges:
            best_weight, best_edges = max(weight, best_weight), chosen

    def recurse(i: int, used: frozenset[int], weight: float, chosen: tuple[int, ...]):
        if i == len(edge_list):
            consider(weight, chosen)
            return
        e = edge_list[i]
        u, v = g.endpoints(e)
        recurse(i + 1, used, weight, chosen)
        if u not in used and v not in used:
            recurse(i + 1, used | {u, v}, weight + g.edges[e].w, chosen + (e,))

    recurse(0, frozenset(), 0.0, ())
    return make_matching(g, best_edges)
