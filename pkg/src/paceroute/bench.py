"""Routing latency microbenchmark.

Four configurations of the same decision rule, differing only in how the
per-arm inverse is maintained:

* ``full_router``  - the production BanditRouter (locks, registry, decision
  cache, pacing, forgetting) with Sherman-Morrison updates;
* ``bare_sm``      - the sufficient-statistics layer driven directly, rank-1
  Sherman-Morrison updates, no serving plumbing;
* ``cached_inverse`` - identical route() path to bare_sm, but update()
  re-inverts the design matrix directly (O(d^3));
* ``per_route_inverse`` - never caches an inverse: route() inverts every
  arm's design matrix on every call (worst-case baseline), update() only
  accumulates statistics.

All four produce identical decisions and near-identical posteriors on the
same input stream; they are timed over 4,500 measured route+update cycles
after a 500-cycle warmup, on synthetic unit-norm contexts.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import arm_stats
from .arm_stats import HeuristicPrior, init_heuristic
from .cost_model import ModelPricing, blended_rate, normalize_cost, per_request_price
from .pacer import BudgetPacer
from .router import BanditRouter, FeedbackRecord, RouterConfig, argmax_with_ties
from .simulator import three_tier_portfolio

# Pseudo-observation strength of the heuristic priors all variants start
# from. A warm start keeps every arm in play on the measured stream instead
# of letting the cheapest arm lock in at cold start.
BENCH_PRIOR_NEFF = 50.0

VARIANTS = ("full_router", "bare_sm", "cached_inverse", "per_route_inverse")


@dataclass(frozen=True)
class BenchConfig:
    d: int = 26
    k: int = 3
    variant: str = "full_router"
    measured_cycles: int = 4500
    warmup_cycles: int = 500
    seed: int = 0
    alpha: float = 0.01
    gamma: float = 0.997
    v_max: float = 200.0
    budget_per_request: float | None = 6.6e-4

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.k < 1 or self.d < 2:
            raise ValueError("need k >= 1 and d >= 2")


@dataclass
class BenchStream:
    """Precomputed inputs shared by every variant: contexts plus a full
    (step, arm) reward table, so the stream is decision-independent."""

    contexts: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    c_tilde: np.ndarray
    prices: np.ndarray
    arm_ids: list[str]
    prior_means: np.ndarray = None


def make_stream(cfg: BenchConfig) -> BenchStream:
    rng = np.random.default_rng(cfg.seed)
    portfolio = three_tier_portfolio(d=cfg.d)
    arms = list(portfolio.arms)[: cfg.k]
    while len(arms) < cfg.k:
        arms.append(arms[-1])
    n = cfg.warmup_cycles + cfg.measured_cycles
    g = rng.standard_normal((n, cfg.d - 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    contexts = np.concatenate([g, np.ones((n, 1))], axis=1)
    thetas = []
    for arm in arms:
        w = rng.standard_normal(cfg.d - 1)
        w *= arm.signal_scale / np.linalg.norm(w)
        thetas.append(np.concatenate([w, [arm.mean_reward]]))
    rewards = np.clip(
        contexts @ np.stack(thetas).T + 0.05 * rng.standard_normal((n, len(arms))), 0.0, 1.0
    )
    pricing = [portfolio.pricing()[a.model_id] for a in arms]
    c_tilde = np.array([normalize_cost(blended_rate(p)) for p in pricing])
    prices = np.array([per_request_price(p) for p in pricing])
    costs = np.tile(prices, (n, 1))
    return BenchStream(
        contexts=contexts,
        rewards=rewards,
        costs=costs,
        c_tilde=c_tilde,
        prices=prices,
        arm_ids=[f"arm-{i}-{a.model_id}" for i, a in enumerate(arms)],
        prior_means=np.array([a.mean_reward for a in arms]),
    )


class _BareSM:
    """Stripped-down engine: cached inverses, Sherman-Morrison updates."""

    def __init__(self, cfg: BenchConfig, stream: BenchStream) -> None:
        self.cfg = cfg
        self.states = [
            init_heuristic(cfg.d, BENCH_PRIOR_NEFF, float(stream.prior_means[a]))
            for a in range(cfg.k)
        ]
        self.c_tilde = stream.c_tilde
        self.prices = stream.prices
        self.pacer = BudgetPacer(budget_per_request=cfg.budget_per_request)
        self.rng = np.random.default_rng(cfg.seed)
        self.t = 0

    def _eligible(self) -> np.ndarray:
        if self.pacer.lambda_t <= 0:
            return np.arange(self.cfg.k)
        ceiling = self.prices.max() / (1.0 + self.pacer.lambda_t)
        idx = np.flatnonzero(self.prices <= ceiling)
        if len(idx) == 0:
            idx = np.array([int(np.argmin(self.prices))])
        return idx

    def _score(self, a: int, x: np.ndarray) -> float:
        state = self.states[a]
        dt = self.t - max(state.last_update, state.last_played)
        inflation = max(self.cfg.gamma**dt, 1.0 / self.cfg.v_max)
        v = state.variance(x) / inflation
        return (
            state.predict(x)
            + self.cfg.alpha * float(np.sqrt(max(v, 0.0)))
            - self.pacer.penalty(self.c_tilde[a])
        )

    def route(self, x: np.ndarray) -> int:
        eligible = self._eligible()
        scores = np.array([self._score(a, x) for a in eligible])
        a = int(eligible[argmax_with_ties(scores, self.rng)])
        self.t += 1
        self.states[a].last_played = self.t
        return a

    def update(self, a: int, x: np.ndarray, r: float, c: float) -> None:
        state = self.states[a]
        arm_stats.apply_forgetting(state, self.cfg.gamma, self.t - state.last_update)
        self._absorb(a, x, r)
        self.pacer.observe_cost(c)

    def _absorb(self, a: int, x: np.ndarray, r: float) -> None:
        arm_stats.absorb(self.states[a], x, r, self.t)

    def theta(self, a: int) -> np.ndarray:
        return self.states[a].theta_hat


class _CachedInverse(_BareSM):
    """Same route() path; update() re-inverts the design matrix directly."""

    def _absorb(self, a: int, x: np.ndarray, r: float) -> None:
        state = self.states[a]
        state.A += np.outer(x, x)
        state.b += r * x
        state.n_updates += 1
        state.last_update = self.t
        state.refresh_inverse()


class _PerRouteInverse:
    """Worst-case baseline: no cached inverse anywhere. route() pays K full
    inversions per call; update() only accumulates the raw statistics."""

    def __init__(self, cfg: BenchConfig, stream: BenchStream) -> None:
        self.cfg = cfg
        d = cfg.d
        self.lambda0 = 1.0
        seeds = [init_heuristic(d, BENCH_PRIOR_NEFF, float(stream.prior_means[a])) for a in range(cfg.k)]
        self.A = [s.A for s in seeds]
        self.b = [s.b for s in seeds]
        self.floor_bound = [s.floor_bound for s in seeds]
        self.last_update = [0] * cfg.k
        self.last_played = [0] * cfg.k
        self.c_tilde = stream.c_tilde
        self.prices = stream.prices
        self.pacer = BudgetPacer(budget_per_request=cfg.budget_per_request)
        self.rng = np.random.default_rng(cfg.seed)
        self.t = 0

    def route(self, x: np.ndarray) -> int:
        if self.pacer.lambda_t <= 0:
            eligible = np.arange(self.cfg.k)
        else:
            ceiling = self.prices.max() / (1.0 + self.pacer.lambda_t)
            eligible = np.flatnonzero(self.prices <= ceiling)
            if len(eligible) == 0:
                eligible = np.array([int(np.argmin(self.prices))])
        scores = np.empty(len(eligible))
        for i, a in enumerate(eligible):
            inv = np.linalg.inv(self.A[a])
            inv = (inv + inv.T) / 2.0
            dt = self.t - max(self.last_update[a], self.last_played[a])
            inflation = max(self.cfg.gamma**dt, 1.0 / self.cfg.v_max)
            v = float(x @ (inv @ x)) / inflation
            scores[i] = (
                float((inv @ self.b[a]) @ x)
                + self.cfg.alpha * float(np.sqrt(max(v, 0.0)))
                - self.pacer.penalty(self.c_tilde[a])
            )
        a = int(eligible[argmax_with_ties(scores, self.rng)])
        self.t += 1
        self.last_played[a] = self.t
        return a

    def update(self, a: int, x: np.ndarray, r: float, c: float) -> None:
        dt = self.t - self.last_update[a]
        if self.cfg.gamma < 1.0 and dt > 0:
            scale = self.cfg.gamma**dt
            self.A[a] *= scale
            self.b[a] *= scale
            self.floor_bound[a] *= scale
            floor = self.lambda0 * arm_stats.DECAY_FLOOR_FRACTION
            if self.floor_bound[a] < floor:
                self.A[a] += (floor - self.floor_bound[a]) * np.eye(self.cfg.d)
                self.floor_bound[a] = floor
        self.A[a] += np.outer(x, x)
        self.b[a] += r * x
        self.last_update[a] = self.t
        self.pacer.observe_cost(c)

    def theta(self, a: int) -> np.ndarray:
        return np.linalg.solve(self.A[a], self.b[a])


class _FullRouter:
    """Production router behind the same stepper interface."""

    def __init__(self, cfg: BenchConfig, stream: BenchStream) -> None:
        self.router = BanditRouter(
            RouterConfig(
                d=cfg.d,
                alpha=cfg.alpha,
                gamma=cfg.gamma,
                v_max=cfg.v_max,
                burn_in_pulls=0,
                seed=cfg.seed,
            ),
            BudgetPacer(budget_per_request=cfg.budget_per_request),
        )
        portfolio = three_tier_portfolio(d=cfg.d)
        pricing = portfolio.pricing()
        arms = list(portfolio.arms)[: cfg.k]
        while len(arms) < cfg.k:
            arms.append(arms[-1])
        self.arm_ids = stream.arm_ids
        self._arm_index = {arm_id: i for i, arm_id in enumerate(self.arm_ids)}
        for arm_id, arm in zip(self.arm_ids, arms):
            base = pricing[arm.model_id]
            self.router.add_arm(
                arm_id,
                ModelPricing(
                    model_id=arm_id,
                    input_rate=base.input_rate,
                    output_rate=base.output_rate,
                    per_request_cost_hint=base.per_request_cost_hint,
                ),
                prior=HeuristicPrior(arm.mean_reward),
                n_eff=BENCH_PRIOR_NEFF,
            )
        self._pending: str | None = None

    def route(self, x: np.ndarray) -> int:
        decision = self.router.route(x)
        self._pending = decision.request_id
        return self._arm_index[decision.arm_id]

    def update(self, a: int, x: np.ndarray, r: float, c: float) -> None:
        self.router.feedback(FeedbackRecord(self._pending, r, c))

    def theta(self, a: int) -> np.ndarray:
        return self.router.arm(self.arm_ids[a]).state.theta_hat


_ENGINES = {
    "full_router": _FullRouter,
    "bare_sm": _BareSM,
    "cached_inverse": _CachedInverse,
    "per_route_inverse": _PerRouteInverse,
}


def make_engine(cfg: BenchConfig, stream: BenchStream):
    return _ENGINES[cfg.variant](cfg, stream)


@dataclass
class BenchResult:
    variant: str
    d: int
    k: int
    measured_cycles: int
    route_p50_us: float
    route_p95_us: float
    update_p50_us: float
    update_p95_us: float
    throughput_rps: float
    machine: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {
            "variant": self.variant,
            "d": self.d,
            "k": self.k,
            "cycles": self.measured_cycles,
            "route_p50_us": round(self.route_p50_us, 2),
            "route_p95_us": round(self.route_p95_us, 2),
            "update_p50_us": round(self.update_p50_us, 2),
            "update_p95_us": round(self.update_p95_us, 2),
            "throughput_rps": round(self.throughput_rps, 1),
        }


def machine_metadata() -> dict:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def run_bench(cfg: BenchConfig, stream: BenchStream | None = None) -> BenchResult:
    """Time one variant over the shared stream; warmup cycles are excluded
    from the statistics."""
    stream = stream if stream is not None else make_stream(cfg)
    engine = make_engine(cfg, stream)
    n = cfg.warmup_cycles + cfg.measured_cycles
    route_ns = np.empty(cfg.measured_cycles)
    update_ns = np.empty(cfg.measured_cycles)
    for i in range(n):
        x = stream.contexts[i]
        t0 = time.perf_counter_ns()
        a = engine.route(x)
        t1 = time.perf_counter_ns()
        engine.update(a, x, float(stream.rewards[i, a]), float(stream.costs[i, a]))
        t2 = time.perf_counter_ns()
        if i >= cfg.warmup_cycles:
            route_ns[i - cfg.warmup_cycles] = t1 - t0
            update_ns[i - cfg.warmup_cycles] = t2 - t1
    total_s = (route_ns.sum() + update_ns.sum()) / 1e9
    return BenchResult(
        variant=cfg.variant,
        d=cfg.d,
        k=cfg.k,
        measured_cycles=cfg.measured_cycles,
        route_p50_us=float(np.percentile(route_ns, 50)) / 1e3,
        route_p95_us=float(np.percentile(route_ns, 95)) / 1e3,
        update_p50_us=float(np.percentile(update_ns, 50)) / 1e3,
        update_p95_us=float(np.percentile(update_ns, 95)) / 1e3,
        throughput_rps=cfg.measured_cycles / total_s,
        machine=machine_metadata(),
    )


def run_variant_stream(cfg: BenchConfig, stream: BenchStream, cycles: int) -> tuple[list[int], list[np.ndarray]]:
    """Drive one variant for ``cycles`` steps; returns the decision sequence
    and final per-arm estimates (the cross-variant equivalence oracle)."""
    engine = make_engine(cfg, stream)
    decisions = []
    for i in range(cycles):
        x = stream.contexts[i]
        a = engine.route(x)
        engine.update(a, x, float(stream.rewards[i, a]), float(stream.costs[i, a]))
        decisions.append(a)
    thetas = [np.array(engine.theta(a)) for a in range(cfg.k)]
    return decisions, thetas
