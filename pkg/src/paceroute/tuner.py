"""Adaptation-horizon-constrained hyperparameter selection.

The forgetting factor and prior strength are coupled through a single
deployment-meaningful number: the adaptation horizon T, the step count after
which online evidence reaches weight parity with the prior under discounting.
Deriving n_eff from (gamma, T) collapses the 3D search to a 2D (alpha, gamma)
grid. Each grid cell is scored on two objectives (budget-paced frontier AUC
for stationary efficiency, phase-2 reward under a quality degradation for
resilience) and a single configuration is picked at the knee of the
non-dominated set: the point of maximal perpendicular distance to the chord
between the frontier's extreme endpoints after min-max normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .router import RouterConfig
from .simulator import (
    Phase,
    RewardCostMatrix,
    RewardMeanShift,
    Scenario,
    WarmupSpec,
    run_budget_sweep,
    run_scenario,
)

KNEE_TIE_ATOL = 1e-12


def neff_from_horizon(gamma: float, t_adapt: float) -> float:
    """Prior strength whose discounted weight reaches parity with online
    evidence after t_adapt steps: (gamma^-T - 1) / (1 - gamma), continuously
    extended to T at gamma = 1."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if t_adapt <= 0:
        raise ValueError(f"t_adapt must be positive, got {t_adapt}")
    if gamma == 1.0:
        return float(t_adapt)
    return math.expm1(-t_adapt * math.log(gamma)) / (1.0 - gamma)


def horizon_from_neff(gamma: float, n_eff: float) -> float:
    """Steps until online evidence overrides a prior of strength n_eff:
    -log(n_eff (1 - gamma) + 1) / log(gamma), continuously extended to n_eff
    at gamma = 1."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if n_eff < 0:
        raise ValueError(f"n_eff must be >= 0, got {n_eff}")
    if gamma == 1.0:
        return float(n_eff)
    return -math.log1p(n_eff * (1.0 - gamma)) / math.log(gamma)


def pareto_frontier(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated subset of (cost, reward) points, cost-sorted ascending.

    A point survives iff no other point has cost <= and reward >= with at
    least one strict; exact duplicates are deduplicated.
    """
    if not points:
        raise ValueError("need at least one point")
    ordered = sorted(points, key=lambda p: (p[0], -p[1]))
    frontier = []
    best = -math.inf
    for cost, reward in ordered:
        if reward > best:
            frontier.append((cost, reward))
            best = reward
    return frontier


def frontier_auc(
    frontier: list[tuple[float, float]],
    cost_bounds: tuple[float, float] | None = None,
) -> float:
    """Area under a cost-sorted frontier on a log-cost axis min-max
    normalized to [0, 1].

    ``cost_bounds`` fixes the normalization to the swept budget range so AUC
    values are comparable across grids; by default the frontier's own extent
    is used. The frontier is extended flat to the axis edges, so a
    single-point frontier returns that point's reward.
    """
    if not frontier:
        raise ValueError("empty frontier")
    costs = np.array([c for c, _ in frontier], dtype=float)
    rewards = np.array([r for _, r in frontier], dtype=float)
    if np.any(costs <= 0):
        raise ValueError("frontier costs must be positive for the log axis")
    lo, hi = cost_bounds if cost_bounds is not None else (costs.min(), costs.max())
    if lo <= 0 or hi < lo:
        raise ValueError(f"invalid cost bounds: ({lo}, {hi})")
    if len(frontier) == 1:
        return float(rewards[0])
    if hi == lo:
        return float(rewards.max())
    x = (np.log(costs) - math.log(lo)) / (math.log(hi) - math.log(lo))
    x = np.clip(x, 0.0, 1.0)
    if x[0] > 0.0:
        x = np.concatenate([[0.0], x])
        rewards = np.concatenate([[rewards[0]], rewards])
    if x[-1] < 1.0:
        x = np.concatenate([x, [1.0]])
        rewards = np.concatenate([rewards, [rewards[-1]]])
    return float(np.trapezoid(rewards, x))


def _normalize_minmax(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    if span == 0:
        return np.zeros_like(values)
    return (values - values.min()) / span


def knee_distances(points: list[tuple[float, float]]) -> np.ndarray:
    """Perpendicular distance of each point to the chord between the extreme
    endpoints, after min-max normalization of both coordinates. Points are
    taken in (first-coordinate ascending, second descending) order but
    distances are returned in input order."""
    pts = np.array(points, dtype=float)
    order = sorted(range(len(pts)), key=lambda i: (pts[i, 0], -pts[i, 1]))
    norm = np.column_stack([_normalize_minmax(pts[:, 0]), _normalize_minmax(pts[:, 1])])
    p0, p1 = norm[order[0]], norm[order[-1]]
    chord = p1 - p0
    length = np.linalg.norm(chord)
    if length == 0:
        return np.zeros(len(pts))
    rel = norm - p0
    cross = chord[0] * rel[:, 1] - chord[1] * rel[:, 0]
    return np.abs(cross) / length


def knee_point(points: list[tuple[float, float]]) -> int:
    """Index of the knee: maximal perpendicular distance to the endpoint
    chord. Ties (including collinear and two-point frontiers, where all
    distances vanish) resolve toward the higher first coordinate, then the
    higher second."""
    if not points:
        raise ValueError("need at least one point")
    if len(points) == 1:
        return 0
    dist = knee_distances(points)
    best = dist.max()
    ties = [i for i in range(len(points)) if dist[i] >= best - KNEE_TIE_ATOL]
    return max(ties, key=lambda i: (points[i][0], points[i][1]))


# -- grid evaluation ----------------------------------------------------------


@dataclass
class GridCell:
    alpha: float
    gamma: float
    n_eff: float
    auc_per_seed: np.ndarray
    p2_per_seed: np.ndarray

    @property
    def auc(self) -> float:
        return float(np.mean(self.auc_per_seed))

    @property
    def p2_reward(self) -> float:
        return float(np.mean(self.p2_per_seed))


def _non_dominated_max(pairs: list[tuple[float, float]]) -> list[int]:
    """Indices of points not dominated under joint maximization."""
    keep = []
    for i, (xi, yi) in enumerate(pairs):
        dominated = any(
            (xj >= xi and yj >= yi) and (xj > xi or yj > yi)
            for j, (xj, yj) in enumerate(pairs)
            if j != i
        )
        if not dominated:
            keep.append(i)
    return keep


def select_knee(cells: list[GridCell]) -> tuple[GridCell, list[int]]:
    """Knee-point cell over the non-dominated (AUC, P2-reward) set.

    Returns the selected cell and the indices of the non-dominated cells.
    """
    if not cells:
        raise ValueError("empty grid")
    pairs = [(c.auc, c.p2_reward) for c in cells]
    frontier_idx = _non_dominated_max(pairs)
    knee_local = knee_point([pairs[i] for i in frontier_idx])
    return cells[frontier_idx[knee_local]], frontier_idx


@dataclass
class StabilityReport:
    iterations: int
    modal_fraction: float
    within_one_gamma_fraction: float
    selections: dict[tuple[float, float], int]
    base_alpha: float
    base_gamma: float


def knee_bootstrap_stability(
    cells: list[GridCell], iterations: int = 2000, seed: int | None = None
) -> StabilityReport:
    """Seed-level bootstrap of the knee selection.

    Resamples seeds with replacement, recomputes both objectives' means,
    reruns knee selection, and tallies which (alpha, gamma) wins. Reports the
    modal selection fraction and the fraction landing within one gamma grid
    step of the full-data knee.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n_seeds = len(cells[0].auc_per_seed)
    if n_seeds < 2:
        raise ValueError("need at least two seeds to bootstrap")
    for c in cells:
        if len(c.auc_per_seed) != n_seeds or len(c.p2_per_seed) != n_seeds:
            raise ValueError("all cells must share the same seed count")
    base, _ = select_knee(cells)
    gamma_steps = {g: i for i, g in enumerate(sorted({c.gamma for c in cells}))}
    rng = np.random.default_rng(seed)
    tallies: dict[tuple[float, float], int] = {}
    within = 0
    auc_matrix = np.stack([c.auc_per_seed for c in cells])
    p2_matrix = np.stack([c.p2_per_seed for c in cells])
    for _ in range(iterations):
        idx = rng.integers(0, n_seeds, size=n_seeds)
        aucs = auc_matrix[:, idx].mean(axis=1)
        p2s = p2_matrix[:, idx].mean(axis=1)
        pairs = list(zip(aucs.tolist(), p2s.tolist()))
        frontier_idx = _non_dominated_max(pairs)
        sel = frontier_idx[knee_point([pairs[i] for i in frontier_idx])]
        key = (cells[sel].alpha, cells[sel].gamma)
        tallies[key] = tallies.get(key, 0) + 1
        if abs(gamma_steps[cells[sel].gamma] - gamma_steps[base.gamma]) <= 1:
            within += 1
    modal = max(tallies.values()) / iterations
    return StabilityReport(
        iterations=iterations,
        modal_fraction=modal,
        within_one_gamma_fraction=within / iterations,
        selections=tallies,
        base_alpha=base.alpha,
        base_gamma=base.gamma,
    )


def evaluate_grid(
    alphas: list[float],
    gammas: list[float],
    t_adapt: float,
    matrix: RewardCostMatrix,
    train_matrix: RewardCostMatrix,
    budgets: list[float],
    seeds: tuple[int, ...],
    config: RouterConfig,
    degraded_arm: str,
    degrade_target: float = 0.50,
    degrade_budget: float | None = None,
    degrade_phase_length: int | None = None,
    sweep_prompts: int | None = None,
    workers: int = 1,
) -> list[GridCell]:
    """Score every (alpha, gamma) cell on both objectives.

    Objective 1 sweeps the budgets with the pacer active and takes the
    per-seed frontier AUC over (mean cost, mean reward) operating points.
    Objective 2 runs a two-phase degradation of ``degraded_arm`` to
    ``degrade_target`` and takes the per-seed phase-2 mean reward.
    """
    if not alphas or not gammas:
        raise ValueError("empty hyperparameter grid")
    phase_len = degrade_phase_length if degrade_phase_length is not None else len(matrix) // 2
    cells = []
    for alpha in alphas:
        for gamma in gammas:
            n_eff = neff_from_horizon(gamma, t_adapt)
            cfg = replace(config, alpha=alpha, gamma=gamma)
            warmup = WarmupSpec(mode="offline", n_eff=n_eff)
            points = run_budget_sweep(
                budgets,
                matrix,
                cfg,
                seeds=seeds,
                n_prompts=sweep_prompts,
                warmup=warmup,
                train_matrix=train_matrix,
                workers=workers,
            )
            auc_per_seed = []
            for seed in seeds:
                ops = [(p.mean_cost, p.mean_reward) for p in points if p.seed == seed]
                auc_per_seed.append(
                    frontier_auc(pareto_frontier(ops), cost_bounds=(budgets[0], budgets[-1]))
                )
            scenario = Scenario(
                name=f"degrade-{alpha:g}-{gamma:g}",
                phases=(
                    Phase(length=phase_len),
                    Phase(length=phase_len, perturbations=(RewardMeanShift(degraded_arm, degrade_target),)),
                ),
                budget_per_request=degrade_budget,
                seeds=seeds,
                warmup=warmup,
            )
            traces = run_scenario(scenario, matrix, cfg, train_matrix=train_matrix, workers=workers)
            p2_per_seed = [float(t.rewards()[t.phase_bounds[1][0] :].mean()) for t in traces]
            cells.append(
                GridCell(
                    alpha=alpha,
                    gamma=gamma,
                    n_eff=n_eff,
                    auc_per_seed=np.array(auc_per_seed),
                    p2_per_seed=np.array(p2_per_seed),
                )
            )
    return cells
