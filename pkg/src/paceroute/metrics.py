"""Post-hoc trace analytics: regret, compliance, windowed series, recovery,
catastrophic-failure flags, and percentile-bootstrap confidence intervals.

All functions are pure and operate on immutable traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simulator import SeedTrace

DEFAULT_WINDOW = 50


def cumulative_regret(rewards: np.ndarray, oracle: np.ndarray) -> np.ndarray:
    """Running sum of per-step gaps between the oracle best reward and the
    chosen arm's reward."""
    rewards = np.asarray(rewards, dtype=float)
    oracle = np.asarray(oracle, dtype=float)
    if rewards.shape != oracle.shape:
        raise ValueError("oracle must cover every step")
    return np.cumsum(oracle - rewards)


def regret_at(regret_series: np.ndarray, k: int) -> float:
    """Cumulative regret after the first k steps (e.g. R@200)."""
    if not 1 <= k <= len(regret_series):
        raise ValueError(f"k must be in [1, {len(regret_series)}], got {k}")
    return float(regret_series[k - 1])


def compliance_ratio(costs: np.ndarray, budget: float) -> float:
    """Mean realized cost as a multiple of the ceiling (1.0 = at ceiling)."""
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    return float(np.mean(costs) / budget)


def windowed_mean(values: np.ndarray, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Non-overlapping window means; a trailing partial window is included."""
    values = np.asarray(values, dtype=float)
    return np.array([values[i : i + window].mean() for i in range(0, len(values), window)])


def windowed_selection_fractions(
    arms_seq: list[str], arm_ids: list[str], window: int = DEFAULT_WINDOW
) -> np.ndarray:
    """Per-window selection fraction for every arm, shape (n_windows, K).

    Rows sum to 1; arms never selected in a window get 0.
    """
    idx = {arm: i for i, arm in enumerate(arm_ids)}
    out = []
    for i in range(0, len(arms_seq), window):
        chunk = arms_seq[i : i + window]
        counts = np.zeros(len(arm_ids))
        for arm in chunk:
            counts[idx[arm]] += 1
        out.append(counts / len(chunk))
    return np.array(out)


def selection_fraction(arms_seq: list[str], arm: str) -> float:
    if not arms_seq:
        return 0.0
    return sum(1 for a in arms_seq if a == arm) / len(arms_seq)


def bootstrap_ci(
    values: np.ndarray,
    level: float = 0.95,
    resamples: int = 10_000,
    statistic: str = "mean",
    seed: int | None = None,
) -> tuple[float, float]:
    """Seed-level percentile bootstrap of the mean (or median) of per-seed
    statistics."""
    values = np.asarray(values, dtype=float)
    if len(values) < 1:
        raise ValueError("need at least one value")
    if statistic not in ("mean", "median"):
        raise ValueError(f"unknown statistic: {statistic}")
    rng = np.random.default_rng(seed)
    draws = values[rng.integers(0, len(values), size=(resamples, len(values)))]
    stats = np.mean(draws, axis=1) if statistic == "mean" else np.median(draws, axis=1)
    lo = (1.0 - level) / 2.0
    return (
        float(np.quantile(stats, lo)),
        float(np.quantile(stats, 1.0 - lo)),
    )


def catastrophic_flags(per_seed_regrets: np.ndarray, pooled_median: float) -> tuple[np.ndarray, int]:
    """Flag seeds whose cumulative regret exceeds 2x the pooled median across
    all conditions in the regime."""
    regrets = np.asarray(per_seed_regrets, dtype=float)
    flags = regrets > 2.0 * pooled_median
    return flags, int(flags.sum())


@dataclass
class WindowedSeries:
    window: int
    reward: list[float]
    cost: list[float]
    selection_fractions: dict[str, list[float]]


@dataclass
class TraceSummary:
    seed: int
    scenario: str
    cumulative_regret: float | None
    regret_at: dict[int, float]
    mean_reward_per_phase: list[float]
    mean_cost_per_phase: list[float]
    compliance_per_phase: list[float] | None
    recovery_ratio: float | None
    fallback_steps: int
    forced_steps: int
    selection_fraction_per_phase: dict[str, list[float]] = field(default_factory=dict)
    windowed: WindowedSeries | None = None


def summarize_trace(
    trace: SeedTrace,
    budget: float | None = None,
    regret_checkpoints: tuple[int, ...] = (200,),
    window: int | None = DEFAULT_WINDOW,
) -> TraceSummary:
    """Fold one trace into the headline statistics.

    The recovery ratio (last phase mean reward over first phase mean reward)
    is only reported for scenarios with 3+ phases. Pass ``window=None`` to
    skip the windowed time series.
    """
    rewards = trace.rewards()
    costs = trace.costs()
    regret_series = cumulative_regret(rewards, trace.oracle())
    n_phases = len(trace.phase_bounds)
    mean_reward, mean_cost, compliance, fractions = [], [], [], {}
    arms_seq = trace.arms_seq()
    for lo, hi in trace.phase_bounds:
        mean_reward.append(float(rewards[lo:hi].mean()))
        mean_cost.append(float(costs[lo:hi].mean()))
        if budget is not None:
            compliance.append(compliance_ratio(costs[lo:hi], budget))
    for arm in trace.arm_ids:
        fractions[arm] = [
            selection_fraction(arms_seq[lo:hi], arm) for lo, hi in trace.phase_bounds
        ]
    recovery = mean_reward[-1] / mean_reward[0] if n_phases >= 3 else None
    windowed = None
    if window is not None:
        shares = windowed_selection_fractions(arms_seq, trace.arm_ids, window)
        windowed = WindowedSeries(
            window=window,
            reward=windowed_mean(rewards, window).tolist(),
            cost=windowed_mean(costs, window).tolist(),
            selection_fractions={arm: shares[:, i].tolist() for i, arm in enumerate(trace.arm_ids)},
        )
    return TraceSummary(
        seed=trace.seed,
        scenario=trace.scenario,
        cumulative_regret=float(regret_series[-1]),
        regret_at={k: regret_at(regret_series, k) for k in regret_checkpoints if k <= len(regret_series)},
        mean_reward_per_phase=mean_reward,
        mean_cost_per_phase=mean_cost,
        compliance_per_phase=compliance if budget is not None else None,
        recovery_ratio=recovery,
        fallback_steps=sum(1 for r in trace.rows if r.fallback),
        forced_steps=sum(1 for r in trace.rows if r.forced),
        selection_fraction_per_phase=fractions,
        windowed=windowed,
    )
