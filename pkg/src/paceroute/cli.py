"""Operator entry point: manifests in, traces/tables/reports out.

Subcommands: simulate, sweep, tune, bench, report, snapshot-inspect.
Manifests are TOML (or JSON); every knob can be overridden by environment
variables (PACEROUTE_<KEY> with dots as underscores) and by repeatable
``--set key=value`` flags. Precedence: CLI flag > env var > file > default.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import bench as bench_mod
from . import metrics, simulator, tuner
from .cost_model import load_registry
from .pacer import PacerConfig
from .router import BanditRouter, RouterConfig
from .simulator import (
    AddArm,
    Phase,
    PriceSet,
    RemoveArm,
    RewardCostMatrix,
    RewardMeanShift,
    Scenario,
    SyntheticArmSpec,
    SyntheticPortfolioSpec,
    WarmupSpec,
    onboarding_arm,
)

ENV_PREFIX = "PACEROUTE"

# Dotted manifest keys that may be overridden from the environment.
OVERRIDABLE_KEYS = (
    "budget_per_request",
    "pacing_enabled",
    "seeds",
    "prompt_order",
    "workers",
    "router.d",
    "router.alpha",
    "router.gamma",
    "router.v_max",
    "router.lambda0",
    "router.burn_in_pulls",
    "pacer.eta",
    "pacer.alpha_ema",
    "pacer.lambda_cap",
    "pacer.lambda_c",
    "warmup.mode",
    "warmup.n_eff",
    "warmup.train_prompts",
    "source.n_prompts",
    "source.seed",
)


class CliError(RuntimeError):
    pass


# -- config plumbing ----------------------------------------------------------


def load_document(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CliError(f"file not found: {path}")
    if path.suffix == ".json":
        return json.loads(path.read_text())
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def apply_overrides(cfg: dict, set_pairs: list[str] | None, env=os.environ) -> dict:
    """Environment first, then explicit --set pairs (highest precedence)."""
    for key in OVERRIDABLE_KEYS:
        env_name = f"{ENV_PREFIX}_{key.upper().replace('.', '_')}"
        if env_name in env:
            _set_dotted(cfg, key, _parse_value(env[env_name]))
    for pair in set_pairs or []:
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        _set_dotted(cfg, key.strip(), _parse_value(value.strip()))
    return cfg


def _parse_seeds(raw) -> tuple[int, ...]:
    if isinstance(raw, int):
        return tuple(range(raw))
    if isinstance(raw, str):
        return tuple(int(s) for s in raw.split(",") if s.strip())
    return tuple(int(s) for s in raw)


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# -- manifest -> domain objects -----------------------------------------------


def build_source(cfg: dict) -> tuple[RewardCostMatrix, RewardCostMatrix | None]:
    """Materialize (matrix, train_matrix) from the [source] section."""
    src = cfg.get("source", {})
    kind = src.get("kind", "synthetic")
    train_prompts = int(cfg.get("warmup", {}).get("train_prompts", 500))
    if kind == "matrix":
        registry = {p.model_id: p for p in load_registry(src["registry"])} if "registry" in src else None
        matrix = RewardCostMatrix.from_jsonl(src["path"], pricing=registry)
        train = (
            RewardCostMatrix.from_jsonl(src["train_path"], pricing=registry)
            if "train_path" in src
            else None
        )
        return matrix, train
    if kind != "synthetic":
        raise CliError(f"unknown source kind: {kind!r}")
    if "preset" in src:
        spec = simulator.PORTFOLIO_PRESETS[src["preset"]](
            d=int(src.get("d", 26)),
            noise_scale=float(src.get("noise", 0.04)),
            portfolio_seed=int(src.get("portfolio_seed", 7)),
        )
    else:
        arms = tuple(
            SyntheticArmSpec(
                model_id=a["model_id"],
                mean_reward=float(a["mean_reward"]),
                signal_scale=float(a["signal_scale"]),
                input_rate=float(a["input_rate_per_1k"]),
                output_rate=float(a["output_rate_per_1k"]),
                per_request_cost=a.get("per_request_cost"),
            )
            for a in src["arms"]
        )
        spec = SyntheticPortfolioSpec(
            d=int(src.get("d", 26)),
            arms=arms,
            noise_scale=float(src.get("noise", 0.0)),
            portfolio_seed=int(src.get("portfolio_seed", 7)),
        )
    for extra in src.get("extra_arms", []):
        spec = replace(spec, arms=spec.arms + (onboarding_arm(extra),))
    gen_seed = int(src.get("seed", 123))
    matrix = simulator.generate_synthetic(spec, int(src.get("n_prompts", 1824)), gen_seed)
    # Train split for offline warmup priors: same portfolio, disjoint draws.
    train = simulator.generate_synthetic(spec, train_prompts, gen_seed + 100_000)
    return matrix, train


_PERTURBATIONS = {
    "price_set": lambda p: PriceSet(p["arm"], float(p["input_rate"]), float(p["output_rate"])),
    "reward_mean_shift": lambda p: RewardMeanShift(p["arm"], float(p["target_mean"])),
    "add_arm": lambda p: AddArm(
        p["arm"],
        prior=p.get("prior", "cold"),
        heuristic_bias=float(p.get("heuristic_bias", 0.5)),
        n_eff=float(p.get("n_eff", 0.0)),
    ),
    "remove_arm": lambda p: RemoveArm(p["arm"]),
}


def build_scenario(cfg: dict, name: str) -> Scenario:
    phases = []
    for ph in cfg.get("phases", []):
        perts = tuple(_PERTURBATIONS[p["kind"]](p) for p in ph.get("perturbations", []))
        phases.append(
            Phase(
                length=int(ph["length"]),
                perturbations=perts,
                reuse_prompts_from=ph.get("reuse_prompts_from"),
            )
        )
    if not phases:
        raise CliError("manifest defines no phases")
    warm_cfg = cfg.get("warmup", {})
    warmup = WarmupSpec(
        mode=warm_cfg.get("mode", "none"),
        n_eff=float(warm_cfg.get("n_eff", 1164.0)),
        heuristic_bias=float(warm_cfg.get("heuristic_bias", 0.5)),
        train_prompts=int(warm_cfg.get("train_prompts", 500)),
        burn_in_initial_arms=warm_cfg.get("burn_in_initial_arms"),
    )
    budget = cfg.get("budget_per_request")
    return Scenario(
        name=cfg.get("name", name),
        phases=tuple(phases),
        budget_per_request=float(budget) if budget is not None else None,
        pacing_enabled=bool(cfg.get("pacing_enabled", True)),
        seeds=_parse_seeds(cfg.get("seeds", 1)),
        warmup=warmup,
        prompt_order=cfg.get("prompt_order", "shuffle"),
        initial_arms=tuple(cfg["initial_arms"]) if "initial_arms" in cfg else None,
    )


def build_router_config(cfg: dict, d: int) -> RouterConfig:
    r = cfg.get("router", {})
    return RouterConfig(
        d=int(r.get("d", d)),
        alpha=float(r.get("alpha", 0.01)),
        gamma=float(r.get("gamma", 0.997)),
        v_max=float(r.get("v_max", 200.0)),
        lambda0=float(r.get("lambda0", 1.0)),
        burn_in_pulls=int(r.get("burn_in_pulls", 20)),
        expected_tokens=float(r.get("expected_tokens", 1000.0)),
        cost_floor=float(r.get("cost_floor", 0.0001)),
        cost_ceil=float(r.get("cost_ceil", 0.10)),
    )


def build_pacer_config(cfg: dict) -> PacerConfig:
    p = cfg.get("pacer", {})
    return PacerConfig(
        eta=float(p.get("eta", 0.05)),
        alpha_ema=float(p.get("alpha_ema", 0.05)),
        lambda_cap=float(p.get("lambda_cap", 5.0)),
        lambda_c=float(p.get("lambda_c", 0.3)),
    )


# -- reporting helpers ----------------------------------------------------------


def _ci_or_marker(values: list[float], resamples: int = 10_000) -> dict:
    if len(values) >= 2:
        lo, hi = metrics.bootstrap_ci(np.array(values), resamples=resamples, seed=0)
        return {"mean": float(np.mean(values)), "ci95": [lo, hi]}
    return {"mean": float(np.mean(values)), "ci95": None, "note": "single seed: CI omitted"}


def write_summary(out_dir: Path, traces: list, budget: float | None) -> dict:
    summaries = [metrics.summarize_trace(t, budget=budget) for t in traces]
    n_phases = len(traces[0].phase_bounds)
    aggregate = {
        "n_seeds": len(traces),
        "regret": _ci_or_marker([s.cumulative_regret for s in summaries]),
        "mean_reward_per_phase": [
            _ci_or_marker([s.mean_reward_per_phase[p] for s in summaries]) for p in range(n_phases)
        ],
        "mean_cost_per_phase": [
            _ci_or_marker([s.mean_cost_per_phase[p] for s in summaries]) for p in range(n_phases)
        ],
    }
    if budget is not None:
        aggregate["compliance_per_phase"] = [
            _ci_or_marker([s.compliance_per_phase[p] for s in summaries]) for p in range(n_phases)
        ]
    if n_phases >= 3:
        aggregate["recovery_ratio"] = _ci_or_marker([s.recovery_ratio for s in summaries])
    doc = {"scenario": traces[0].scenario, "aggregate": aggregate, "per_seed": [asdict(s) for s in summaries]}
    atomic_write(out_dir / "summary.json", json.dumps(doc, indent=2, sort_keys=True))
    return doc


def write_compliance_csv(out_dir: Path, traces: list, budget: float | None) -> None:
    rows = []
    n_phases = len(traces[0].phase_bounds)
    for phase in range(n_phases):
        costs = [float(np.mean([r.cost for r in t.phase_rows(phase)])) for t in traces]
        rewards = [float(np.mean([r.reward for r in t.phase_rows(phase)])) for t in traces]
        row = {
            "phase": phase + 1,
            "mean_cost_usd": np.mean(costs),
            "mean_reward": np.mean(rewards),
        }
        if budget is not None:
            row["compliance_x"] = np.mean(costs) / budget
        rows.append(row)
    path = out_dir / "compliance.csv"
    tmp = path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    os.replace(tmp, path)


def emit_plots(out_dir: Path, traces: list, budget: float | None, window: int = 50) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arm_ids = traces[0].arm_ids
    fig, axes = plt.subplots(3, 1, figsize=(9, 10), sharex=True)
    reward_series = np.mean([metrics.windowed_mean(t.rewards(), window) for t in traces], axis=0)
    cost_series = np.mean([metrics.windowed_mean(t.costs(), window) for t in traces], axis=0)
    xs = np.arange(len(reward_series)) * window
    share = np.mean(
        [metrics.windowed_selection_fractions(t.arms_seq(), arm_ids, window) for t in traces], axis=0
    )
    for i, arm in enumerate(arm_ids):
        axes[0].plot(xs, share[:, i], label=arm)
    axes[0].set_ylabel("selection share")
    axes[0].legend(fontsize=8)
    axes[1].plot(xs, reward_series)
    axes[1].set_ylabel("windowed reward")
    axes[2].plot(xs, cost_series)
    if budget is not None:
        axes[2].axhline(budget, linestyle=":", color="k")
    axes[2].set_ylabel("windowed cost ($/req)")
    axes[2].set_xlabel("step")
    for t in traces[:1]:
        for lo, _ in t.phase_bounds[1:]:
            for ax in axes:
                ax.axvline(lo, color="gray", alpha=0.4)
    fig.tight_layout()
    fig.savefig(out_dir / "dynamics.png", dpi=120)
    plt.close(fig)


def emit_frontier_plot(out_dir: Path, points: list) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from . import tuner as tuner_mod

    fig, ax = plt.subplots(figsize=(7, 5))
    by_budget: dict[float, list] = {}
    for p in points:
        by_budget.setdefault(p.budget, []).append(p)
    means = [
        (float(np.mean([p.mean_cost for p in ps])), float(np.mean([p.mean_reward for p in ps])))
        for ps in by_budget.values()
    ]
    ax.scatter([p.mean_cost for p in points], [p.mean_reward for p in points], s=12, alpha=0.4, label="per-seed")
    frontier = tuner_mod.pareto_frontier(means)
    ax.plot([c for c, _ in frontier], [r for _, r in frontier], "o-", color="C1", label="frontier (seed mean)")
    ax.set_xscale("log")
    ax.set_xlabel("mean cost ($/req)")
    ax.set_ylabel("mean reward")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "frontier.png", dpi=120)
    plt.close(fig)


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = apply_overrides(load_document(args.scenario), args.set)
    if args.seeds is not None:
        cfg["seeds"] = args.seeds
    matrix, train = build_source(cfg)
    scenario = build_scenario(cfg, Path(args.scenario).stem)
    router_cfg = build_router_config(cfg, matrix.d)
    pacer_cfg = build_pacer_config(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = simulator.run_scenario(
        scenario, matrix, router_cfg, train_matrix=train, pacer_config=pacer_cfg, workers=args.workers
    )
    for trace in traces:
        trace.to_jsonl(out_dir / f"trace_seed{trace.seed:04d}.jsonl")
    atomic_write(
        out_dir / "manifest.json",
        json.dumps({"resolved": cfg, "router": asdict(router_cfg)}, indent=2, sort_keys=True, default=str),
    )
    write_summary(out_dir, traces, scenario.budget_per_request)
    write_compliance_csv(out_dir, traces, scenario.budget_per_request)
    if args.plots:
        emit_plots(out_dir, traces, scenario.budget_per_request)
    print(f"simulate: {len(traces)} trace(s) -> {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = apply_overrides(load_document(args.scenario), args.set)
    if args.seeds is not None:
        cfg["seeds"] = args.seeds
    matrix, train = build_source(cfg)
    router_cfg = build_router_config(cfg, matrix.d)
    pacer_cfg = build_pacer_config(cfg)
    warm_cfg = cfg.get("warmup", {})
    warmup = WarmupSpec(
        mode=warm_cfg.get("mode", "none"),
        n_eff=float(warm_cfg.get("n_eff", 1164.0)),
        train_prompts=int(warm_cfg.get("train_prompts", 500)),
    )
    budgets = [float(b) for b in cfg["budgets"]]
    seeds = _parse_seeds(cfg.get("seeds", 1))
    points = simulator.run_budget_sweep(
        budgets,
        matrix,
        router_cfg,
        seeds=seeds,
        n_prompts=cfg.get("n_prompts"),
        warmup=warmup,
        train_matrix=train,
        pacer_config=pacer_cfg,
        workers=args.workers,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep_points.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["budget", "seed", "mean_cost", "mean_reward"])
        writer.writeheader()
        writer.writerows([asdict(p) for p in points])
    aucs = []
    for seed in seeds:
        ops = [(p.mean_cost, p.mean_reward) for p in points if p.seed == seed]
        frontier = tuner.pareto_frontier(ops)
        aucs.append(tuner.frontier_auc(frontier, cost_bounds=(budgets[0], budgets[-1])))
    atomic_write(
        out_dir / "summary.json",
        json.dumps({"budgets": budgets, "auc": _ci_or_marker(aucs)}, indent=2, sort_keys=True),
    )
    if args.plots:
        emit_frontier_plot(out_dir, points)
    print(f"sweep: {len(points)} operating points -> {out_dir}")
    return 0


def cmd_tune(args) -> int:
    cfg = apply_overrides(load_document(args.grid), args.set)
    matrix, train = build_source(cfg)
    if train is None:
        raise CliError("tune requires a training split for warmup priors")
    router_cfg = build_router_config(cfg, matrix.d)
    alphas = [float(a) for a in cfg["alphas"]]
    gammas = [float(g) for g in cfg["gammas"]]
    if not alphas or not gammas:
        raise CliError("empty hyperparameter grid")
    seeds = _parse_seeds(cfg.get("seeds", 2))
    cells = tuner.evaluate_grid(
        alphas=alphas,
        gammas=gammas,
        t_adapt=float(cfg.get("t_adapt", 500.0)),
        matrix=matrix,
        train_matrix=train,
        budgets=[float(b) for b in cfg["budgets"]],
        seeds=seeds,
        config=router_cfg,
        degraded_arm=cfg["degraded_arm"],
        degrade_target=float(cfg.get("degrade_target", 0.50)),
        degrade_budget=cfg.get("degrade_budget"),
        degrade_phase_length=cfg.get("degrade_phase_length"),
        sweep_prompts=cfg.get("sweep_prompts"),
        workers=args.workers,
    )
    knee, frontier_idx = tuner.select_knee(cells)
    stability = tuner.knee_bootstrap_stability(
        cells, iterations=int(cfg.get("bootstrap_iterations", 2000)), seed=0
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "grid.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["alpha", "gamma", "n_eff", "auc", "p2_reward", "on_frontier"])
        writer.writeheader()
        for i, cell in enumerate(cells):
            writer.writerow(
                {
                    "alpha": cell.alpha,
                    "gamma": cell.gamma,
                    "n_eff": round(cell.n_eff, 1),
                    "auc": cell.auc,
                    "p2_reward": cell.p2_reward,
                    "on_frontier": i in frontier_idx,
                }
            )
    knee_doc = {
        "alpha": knee.alpha,
        "gamma": knee.gamma,
        "n_eff": knee.n_eff,
        "auc": knee.auc,
        "p2_reward": knee.p2_reward,
        "bootstrap": {
            "iterations": stability.iterations,
            "modal_fraction": stability.modal_fraction,
            "within_one_gamma_fraction": stability.within_one_gamma_fraction,
        },
    }
    atomic_write(out_dir / "knee.json", json.dumps(knee_doc, indent=2, sort_keys=True))
    print(f"tune: knee alpha={knee.alpha:g} gamma={knee.gamma:g} n_eff={knee.n_eff:.0f} -> {out_dir}")
    return 0


def cmd_bench(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = list(bench_mod.VARIANTS) if "all" in args.variant else args.variant
    results = []
    for d in args.d:
        for variant in variants:
            cfg = bench_mod.BenchConfig(
                d=d,
                variant=variant,
                measured_cycles=args.cycles,
                warmup_cycles=args.warmup_cycles,
                seed=args.seed,
            )
            results.append(bench_mod.run_bench(cfg))
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(results[0].to_row().keys()))
        writer.writeheader()
        writer.writerows([r.to_row() for r in results])
    atomic_write(
        out_dir / "bench.json",
        json.dumps(
            {"machine": bench_mod.machine_metadata(), "results": [r.to_row() for r in results]},
            indent=2,
            sort_keys=True,
        ),
    )
    for r in results:
        print(
            f"bench d={r.d} {r.variant}: route p50 {r.route_p50_us:.1f}us "
            f"update p50 {r.update_p50_us:.1f}us throughput {r.throughput_rps:.0f} req/s"
        )
    return 0


def cmd_report(args) -> int:
    trace_dir = Path(args.trace_dir)
    paths = sorted(trace_dir.glob("trace_seed*.jsonl"))
    if not paths:
        raise CliError(f"no trace files in {trace_dir}")
    traces = [simulator.SeedTrace.from_jsonl(p) for p in paths]
    budget = args.budget
    manifest_path = trace_dir / "manifest.json"
    if budget is None and manifest_path.exists():
        budget = json.loads(manifest_path.read_text())["resolved"].get("budget_per_request")
    out_dir = Path(args.out) if args.out else trace_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    write_summary(out_dir, traces, budget)
    write_compliance_csv(out_dir, traces, budget)
    if args.plots:
        emit_plots(out_dir, traces, budget)
    print(f"report: {len(traces)} trace(s) -> {out_dir}")
    return 0


def cmd_snapshot_inspect(args) -> int:
    doc = json.loads(Path(args.snapshot).read_text())
    router = BanditRouter.restore(doc)
    info = {
        "format_version": doc.get("format_version"),
        "step": router.t,
        "lambda_t": router.pacer.lambda_t,
        "c_bar": router.pacer.c_bar,
        "budget": router.pacer.budget,
        "arms": {
            mid: {
                "n_updates": router.arm(mid).state.n_updates,
                "c_tilde": router.arm(mid).c_tilde,
                "price_per_request": router.arm(mid).price,
            }
            for mid in router.arm_ids()
        },
        "pending_decisions": len(router._pending),
        "burn_in_queue": list(router._burn_in_queue),
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paceroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a manifest key")
        p.add_argument("--workers", type=int, default=1, help="parallel seed workers")

    p = sub.add_parser("simulate", help="run a phased scenario and write traces")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="seed count or comma list (overrides manifest)")
    p.add_argument("--plots", action="store_true")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="budget sweep for frontier/AUC analysis")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="seed count or comma list (overrides manifest)")
    p.add_argument("--plots", action="store_true")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="hyperparameter grid + knee selection")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", help="routing latency microbenchmark")
    p.add_argument("--d", type=int, action="append", default=None)
    p.add_argument("--variant", action="append", default=None)
    p.add_argument("--cycles", type=int, default=4500)
    p.add_argument("--warmup-cycles", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="regenerate tables/plots from traces")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("snapshot-inspect", help="summarize a router snapshot")
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_snapshot_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench":
        args.d = args.d or [26]
        args.variant = args.variant or ["all"]
    try:
        return args.func(args)
    except (CliError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
