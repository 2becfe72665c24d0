"""Weighted stochastic matching via sparse query plans.

Pipeline: estimate per-edge optimum-membership probabilities, build a query
plan as a union of sampled optimal matchings, split edges into crucial and
non-crucial at a threshold, run the variance-bounding matching on the
realized crucial edges, augment with a rounded fractional matching on alive
non-crucial edges, and keep the heavier of the two schemes.  The verifier
module checks the probabilistic guarantees of every stage against
enumeration oracles.
"""

from .augmenter import (
    GTable,
    PipelineTables,
    RunRecord,
    SurvivalRecord,
    build_fractional,
    build_g_table,
    build_tables_exact,
    build_tables_monte_carlo,
    combine,
    end_to_end,
    round_fractional,
    run_pipeline_once,
)
from .exact import ExactConditional, MatchingLaw, exact_expected_mm_weight, exact_x, prob_in_plan
from .estimator import (
    EstimateTable,
    MonteCarloConditional,
    ProbEstimate,
    VBSampler,
    estimate_pair_alive,
    estimate_q,
    estimate_x,
    estimate_y,
    estimate_y_conditional,
)
from .graph_core import (
    Edge,
    FractionalMatching,
    Matching,
    Params,
    Realization,
    StochasticGraph,
    gen_random_graph,
    is_valid_fractional,
    make_matching,
    read_graph,
    sample_realization,
    weight_of,
    write_graph,
)
from .mwm import GraphView, brute_force_mwm, max_weight_matching
from .sparsifier import (
    EdgeClasses,
    QueryPlan,
    build_query_plan,
    check_crucial_coverage,
    classify_edges,
)
from .vb_matching import (
    VBOutput,
    activate_batch,
    attenuation_g,
    exact_vb_enumeration,
    run_vb,
)
from .verifier import (
    CheckReport,
    check_activation,
    check_concentration_y,
    check_negative_association,
    check_pair_alive,
    check_selectability,
    check_var_z,
    default_suite,
    two_point_covariance,
)

__version__ = "0.1.0"
