"""Experiment orchestration: configuration, persistence, reports.

Subcommands: ``generate`` (write a graph file), ``run`` (end-to-end ratio
experiments with a t-sweep and a query-everything control row), ``verify``
(the statistical check suite; nonzero exit on a gated failure).  Flags
override config-file fields; every output file carries the config hash.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .augmenter import PipelineTables, build_tables_exact, build_tables_monte_carlo, end_to_end
from .gadgets import benchmark_6v8e
from .graph_core import Params, StochasticGraph, gen_random_graph, read_graph, write_graph
from .parallel import resolve_workers
from .verifier import default_suite, format_report_table, gated_failures, reports_to_json

DEFAULT_BUDGETS = {
    "x_trials": 20_000,
    "q_trials": 4000,
    "pair_trials": 20_000,
    "cond_trials": 400,
}


@dataclass
class ExperimentConfig:
    graph: dict = field(default_factory=lambda: {"bundled": "benchmark_6v8e"})
    seed: int = 1
    trials: int = 2000
    workers: int | None = None
    t: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    epsilon: float = 0.2
    delta: float = 1.0 / 576.0
    tau: float | None = 0.05
    out: str = "results"
    budgets: dict = field(default_factory=dict)
    tables: str = "auto"  # "auto" | "exact" | "monte_carlo"
    control_full_plan: bool = True
    verify_trials: int = 20_000
    negative_control: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial budget must be >= 1")
        if self.verify_trials < 1:
            raise ValueError("verify trial budget must be >= 1")
        if isinstance(self.t, int):
            self.t = [self.t]

    def to_canonical_dict(self) -> dict:
        return {
            "graph": self.graph,
            "seed": self.seed,
            "trials": self.trials,
            "t": list(self.t),
            "epsilon": self.epsilon,
            "delta": self.delta,
            "tau": self.tau,
            "budgets": {**DEFAULT_BUDGETS, **self.budgets},
            "tables": self.tables,
            "control_full_plan": self.control_full_plan,
            "verify_trials": self.verify_trials,
            "negative_control": self.negative_control,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.to_canonical_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)


def load_graph(config: ExperimentConfig) -> StochasticGraph:
    source = config.graph
    if "file" in source:
        return read_graph(source["file"])
    if "generator" in source:
        gen = source["generator"]
        return gen_random_graph(
            n=int(gen["n"]),
            density=float(gen["density"]),
            weight_law=gen.get("weight_law", {"name": "uniform", "low": 0.1, "high": 2.0}),
            prob_law=gen.get("prob_law", {"name": "uniform", "low": 0.3, "high": 0.9}),
            seed=int(gen.get("seed", config.seed)),
        )
    if source.get("bundled") == "benchmark_6v8e":
        return benchmark_6v8e().graph
    raise ValueError(f"unrecognized graph source: {source!r}")


def build_tables(g: StochasticGraph, config: ExperimentConfig, t_max: int) -> PipelineTables:
    params = Params.for_graph(g, config.epsilon, config.delta)
    budgets = {**DEFAULT_BUDGETS, **config.budgets}
    mode = config.tables
    if mode == "auto":
        mode = "exact" if g.m <= 14 else "monte_carlo"
    if mode == "exact":
        return build_tables_exact(
            g, params, t_max, tau=config.tau,
            pair_trials=budgets["pair_trials"], seed=config.seed,
            workers=config.workers,
        )
    return build_tables_monte_carlo(
        g, params, t_max, config.seed, tau=config.tau,
        x_trials=budgets["x_trials"], q_trials=budgets["q_trials"],
        pair_trials=budgets["pair_trials"], cond_trials=budgets["cond_trials"],
        workers=config.workers,
    )


def cmd_generate(config: ExperimentConfig) -> Path:
    """Write the configured graph to <out>/graph.txt."""
    g = load_graph(config)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "graph.txt"
    write_graph(g, path, header_comment=f"config_hash={config.config_hash()}")
    return path


def cmd_run(config: ExperimentConfig) -> Path:
    """t-sweep of the full pipeline; writes runs, aggregates and plot data."""
    g = load_graph(config)
    if g.m == 0:
        raise ValueError("cannot run the pipeline on an edgeless graph")
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    workers = resolve_workers(config.workers)

    t_values = sorted(set(int(t) for t in config.t))
    tables = build_tables(g, config, max(t_values))

    sweeps = []
    for t in t_values:
        sweeps.append(end_to_end(g, tables, t, config.trials, config.seed,
                                 workers=workers))
    control = None
    if config.control_full_plan:
        control = end_to_end(g, tables, max(t_values), config.trials, config.seed,
                             force_full_plan=True, workers=workers)

    runs_path = out_dir / "runs.jsonl"
    with open(runs_path, "w") as fh:
        fh.write(json.dumps({"config_hash": chash}, sort_keys=True) + "\n")
        for result in sweeps + ([control] if control else []):
            t_label = -1 if result.force_full_plan else result.t
            for record in result.runs:
                fh.write(json.dumps({
                    "seed": config.seed,
                    "run": record.run,
                    "t": t_label,
                    "ratio": record.ratio,
                    "scheme_chosen": record.scheme,
                    "weights": {
                        "alg": record.alg_weight,
                        "mm_Q": record.mmq_weight,
                        "mm_G": record.mmg_weight,
                    },
                }, sort_keys=True) + "\n")

    agg_path = out_dir / "aggregate.csv"
    with open(agg_path, "w") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write("seed,t,ratio,alg_weight,mmQ_weight,mmG_weight,scheme\n")
        for result in sweeps + ([control] if control else []):
            t_label = -1 if result.force_full_plan else result.t
            n = len(result.runs)
            mean_alg = sum(r.alg_weight for r in result.runs) / n
            mean_q = sum(r.mmq_weight for r in result.runs) / n
            mean_g = sum(r.mmg_weight for r in result.runs) / n
            frac_aug = sum(1 for r in result.runs if r.scheme == "augmented") / n
            fh.write(
                f"{config.seed},{t_label},{result.ratio!r},{mean_alg!r},"
                f"{mean_q!r},{mean_g!r},{frac_aug!r}\n"
            )

    plot_path = out_dir / "ratio_vs_t.txt"
    with open(plot_path, "w") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write("# t ratio   (t=-1 is the query-everything control; reference 0.681)\n")
        for result in sweeps + ([control] if control else []):
            t_label = -1 if result.force_full_plan else result.t
            fh.write(f"{t_label} {result.ratio!r}\n")

    summary = {
        "config_hash": chash,
        "graph": {"n": g.n, "m": g.m, "p_min": g.p_min, "token": g.token},
        "reference_ratio": 0.681,
        "sweep": [
            {
                "t": (-1 if r.force_full_plan else r.t),
                "ratio": r.ratio,
                "ratio_se": r.ratio_std_err(),
                "alg_ratio": r.alg_ratio,
                "runs": len(r.runs),
            }
            for r in sweeps + ([control] if control else [])
        ],
    }
    with open(out_dir / "summary.json", "w") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return out_dir


def cmd_verify(config: ExperimentConfig) -> int:
    """Run the statistical suite; returns a nonzero code on gated failure."""
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = default_suite(
        trials=config.verify_trials,
        seed=config.seed,
        include_negative_control=config.negative_control,
        workers=resolve_workers(config.workers),
    )
    payload = {
        "config_hash": config.config_hash(),
        "reports": json.loads(reports_to_json(reports)),
    }
    with open(out_dir / "verify_reports.json", "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(format_report_table(reports))
    failures = gated_failures(reports)
    if failures:
        print(f"\n{len(failures)} gated check(s) failed:")
        for r in failures:
            print(f"  FAIL {r.name}")
        return 1
    print("\nall gated checks passed")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochmatch",
        description="Stochastic matching sparsifier experiments and verification",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed (mandatory via flag or config)")
    parser.add_argument("--trials", type=int, help="pipeline runs per sweep point")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--t", type=int, help="single plan size (overrides sweep)")
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", help="write the configured graph file")
    sub.add_parser("run", help="run the end-to-end experiment sweep")
    verify_parser = sub.add_parser("verify", help="run the verification suite")
    verify_parser.add_argument("--negative-control", action="store_true",
                               help="include the forced-failure fixture")

    args = parser.parse_args(argv)
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "workers": args.workers,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "out": args.out,
    }
    if args.t is not None:
        overrides["t"] = [args.t]
    if getattr(args, "negative_control", False):
        overrides["negative_control"] = True
    config = load_config(args.config, overrides)

    if args.command == "generate":
        path = cmd_generate(config)
        print(path)
        return 0
    if args.command == "run":
        out = cmd_run(config)
        print(out)
        return 0
    if args.command == "verify":
        return cmd_verify(config)
    raise AssertionError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
