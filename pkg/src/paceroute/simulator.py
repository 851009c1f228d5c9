"""Offline closed-loop harness.

Replays a reward-cost matrix (real or synthetic) through the router under
phased perturbation scenarios: price changes, reward mean shifts, and runtime
arm additions/removals. Each seed owns a private router; prompts are shuffled
per seed and the permutation recorded, so every trace is reproducible from
(scenario, source, config, seed).

Perturbation semantics: price and reward perturbations are scoped to their
phase (each phase starts from the base matrix and applies its own list), so a
phase with no perturbations reverts to base conditions. Arm additions and
removals are registry events and persist from their boundary onward.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arm_stats import HeuristicPrior, WarmupPrior
from .cost_model import ModelPricing, blended_rate, per_request_price
from .pacer import PacerConfig
from .router import BanditRouter, FeedbackRecord, RouterConfig


# -- sources ---------------------------------------------------------------


@dataclass
class PromptRecord:
    prompt_id: str
    context: np.ndarray
    rewards: dict[str, float]
    costs: dict[str, float]


@dataclass
class RewardCostMatrix:
    """Full per-prompt, per-arm reward and cost table.

    ``pricing`` is the companion rate registry (kept out of the line format;
    see cost_model.load_registry for the file form).
    """

    records: list[PromptRecord]
    arm_ids: list[str]
    d: int
    pricing: dict[str, ModelPricing] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def mean_reward(self, arm_id: str) -> float:
        return float(np.mean([rec.rewards[arm_id] for rec in self.records]))

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(
                    json.dumps(
                        {
                            "prompt_id": rec.prompt_id,
                            "context": rec.context.tolist(),
                            "rewards": rec.rewards,
                            "costs": rec.costs,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def from_jsonl(cls, path: str | Path, pricing: dict[str, ModelPricing] | None = None) -> "RewardCostMatrix":
        records = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                records.append(
                    PromptRecord(
                        prompt_id=row["prompt_id"],
                        context=np.array(row["context"], dtype=float),
                        rewards={k: float(v) for k, v in row["rewards"].items()},
                        costs={k: float(v) for k, v in row["costs"].items()},
                    )
                )
        if not records:
            raise ValueError(f"{path}: empty matrix file")
        arm_ids = sorted(records[0].rewards)
        d = len(records[0].context)
        for rec in records:
            if sorted(rec.rewards) != arm_ids or sorted(rec.costs) != arm_ids:
                raise ValueError(f"{path}: prompt {rec.prompt_id} does not cover all arms")
            if len(rec.context) != d:
                raise ValueError(f"{path}: inconsistent context dimension at {rec.prompt_id}")
        return cls(records=records, arm_ids=arm_ids, d=d, pricing=dict(pricing or {}))


@dataclass(frozen=True)
class SyntheticArmSpec:
    model_id: str
    mean_reward: float
    signal_scale: float
    input_rate: float
    output_rate: float
    per_request_cost: float | None = None
    # Loading on the portfolio's shared difficulty direction. Negative values
    # make the arm dip on hard prompts; zero makes it flat/robust. This is
    # what gives expensive robust arms a genuine contextual niche.
    difficulty_loading: float = 0.0


@dataclass(frozen=True)
class SyntheticPortfolioSpec:
    """Linear-reward portfolio generator.

    True weight vectors are drawn once from ``portfolio_seed``: each arm gets
    a private direction at ``signal_scale`` plus a loading on one shared
    difficulty direction, with the trailing bias component set to the arm's
    target mean. Contexts drawn uniformly on the sphere then give marginal
    reward ~= mean_reward. Contexts and reward noise come from the seed
    passed to generate_synthetic.
    """

    d: int
    arms: tuple[SyntheticArmSpec, ...]
    noise_scale: float = 0.0
    portfolio_seed: int = 7

    def pricing(self) -> dict[str, ModelPricing]:
        return {
            a.model_id: ModelPricing(
                model_id=a.model_id,
                input_rate=a.input_rate,
                output_rate=a.output_rate,
                per_request_cost_hint=a.per_request_cost,
            )
            for a in self.arms
        }

    def true_weights(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.portfolio_seed)
        hard = rng.standard_normal(self.d - 1)
        hard /= np.linalg.norm(hard)
        thetas = {}
        for arm in self.arms:
            g = rng.standard_normal(self.d - 1)
            g /= np.linalg.norm(g)
            w = arm.signal_scale * g + arm.difficulty_loading * hard
            thetas[arm.model_id] = np.concatenate([w, [arm.mean_reward]])
        return thetas


def generate_synthetic(spec: SyntheticPortfolioSpec, n: int, seed: int) -> RewardCostMatrix:
    """Deterministically sample a reward-cost matrix from a portfolio spec.

    Contexts are i.i.d. standard normal, l2-normalized, with a unit bias
    appended; rewards are clip(theta*.x + noise, 0, 1); costs are each arm's
    per-request price. Oracle best-arm labels are implied by the full table.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    thetas = spec.true_weights()
    prices = {
        a.model_id: per_request_price(spec.pricing()[a.model_id]) for a in spec.arms
    }
    records = []
    for i in range(n):
        g = rng.standard_normal(spec.d - 1)
        u = g / np.linalg.norm(g)
        x = np.concatenate([u, [1.0]])
        rewards = {}
        for arm in spec.arms:
            r = float(thetas[arm.model_id] @ x)
            if spec.noise_scale > 0:
                r += spec.noise_scale * rng.standard_normal()
            rewards[arm.model_id] = float(np.clip(r, 0.0, 1.0))
        records.append(
            PromptRecord(
                prompt_id=f"p{i:06d}",
                context=x,
                rewards=rewards,
                costs={a.model_id: prices[a.model_id] for a in spec.arms},
            )
        )
    return RewardCostMatrix(
        records=records,
        arm_ids=[a.model_id for a in spec.arms],
        d=spec.d,
        pricing=spec.pricing(),
    )


# Three-tier portfolio calibrated to the cost structure used throughout the
# experiment suite: 530x per-request spread, budget-tier reward means, and a
# frontier arm that stays flat on the hard prompts where the cheaper tiers
# dip. Wide per-prompt quality spreads keep the dual's selection response
# smooth enough for tight budget tracking, matching judged-data behavior.
def three_tier_portfolio(d: int = 26, noise_scale: float = 0.05, portfolio_seed: int = 7) -> SyntheticPortfolioSpec:
    return SyntheticPortfolioSpec(
        d=d,
        noise_scale=noise_scale,
        portfolio_seed=portfolio_seed,
        arms=(
            SyntheticArmSpec("llama-8b", 0.793, 0.50, 0.0001, 0.0001, 2.9e-5, difficulty_loading=-0.70),
            SyntheticArmSpec("mistral-large", 0.923, 0.45, 0.001, 0.001, 5.3e-4, difficulty_loading=-0.60),
            SyntheticArmSpec("gemini-pro", 0.932, 0.45, 0.00125, 0.01, 1.5e-2, difficulty_loading=0.15),
        ),
    )


def onboarding_arm(kind: str) -> SyntheticArmSpec:
    """Fourth-arm variants for the cold-start onboarding experiments."""
    if kind == "good_cheap":
        return SyntheticArmSpec("flash-good", 0.93, 0.45, 0.0003, 0.0025, 2.0e-4, difficulty_loading=-0.15)
    if kind == "bad_cheap":
        return SyntheticArmSpec("flash-bad", 0.60, 0.30, 0.0003, 0.0025, 2.0e-4, difficulty_loading=-0.30)
    raise ValueError(f"unknown onboarding arm kind: {kind}")


PORTFOLIO_PRESETS = {
    "three_tier": three_tier_portfolio,
}


# -- warmup priors -----------------------------------------------------------


def fit_warmup_priors(
    matrix: RewardCostMatrix,
    arm_ids: list[str] | None = None,
    prompt_ids: set[str] | None = None,
    provenance: str = "offline-fit",
) -> dict[str, WarmupPrior]:
    """Fit offline sufficient statistics from a (subset of a) matrix.

    The matrix carries every arm's reward for every prompt, so all arms share
    the design matrix. theta_off is the exact least-squares solve, which makes
    the warm-start mean-preserving correction exact.
    """
    arm_ids = arm_ids if arm_ids is not None else matrix.arm_ids
    records = [r for r in matrix.records if prompt_ids is None or r.prompt_id in prompt_ids]
    if not records:
        raise ValueError("no prompts selected for prior fitting")
    X = np.stack([r.context for r in records])
    A_off = X.T @ X
    priors = {}
    for arm in arm_ids:
        r = np.array([rec.rewards[arm] for rec in records])
        b_off = X.T @ r
        theta_off, *_ = np.linalg.lstsq(A_off, b_off, rcond=None)
        priors[arm] = WarmupPrior(A_off=A_off, b_off=b_off, theta_off=theta_off, provenance=provenance)
    return priors


def invert_priors(priors: dict[str, WarmupPrior], arm_a: str, arm_b: str) -> dict[str, WarmupPrior]:
    """Adversarial prior construction: swap two arms' reward accumulators so
    the prior confidently encodes the wrong ranking."""
    out = dict(priors)
    pa, pb = priors[arm_a], priors[arm_b]
    out[arm_a] = WarmupPrior(pa.A_off, pb.b_off, pb.theta_off, provenance=f"{pa.provenance}-inverted")
    out[arm_b] = WarmupPrior(pb.A_off, pa.b_off, pa.theta_off, provenance=f"{pb.provenance}-inverted")
    return out


# -- scenarios ---------------------------------------------------------------


@dataclass(frozen=True)
class PriceSet:
    arm: str
    input_rate: float
    output_rate: float

    kind = "price_set"


@dataclass(frozen=True)
class RewardMeanShift:
    arm: str
    target_mean: float

    kind = "reward_mean_shift"


@dataclass(frozen=True)
class AddArm:
    arm: str
    prior: str = "cold"  # cold | heuristic
    heuristic_bias: float = 0.5
    n_eff: float = 0.0

    kind = "add_arm"


@dataclass(frozen=True)
class RemoveArm:
    arm: str

    kind = "remove_arm"


Perturbation = PriceSet | RewardMeanShift | AddArm | RemoveArm


@dataclass(frozen=True)
class Phase:
    length: int
    perturbations: tuple[Perturbation, ...] = ()
    # Replay the prompt slice used by an earlier phase instead of consuming
    # fresh prompts (controlled within-subject comparisons).
    reuse_prompts_from: int | None = None

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"phase length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class WarmupSpec:
    mode: str = "none"  # none | heuristic | offline
    n_eff: float = 1164.0
    heuristic_bias: float = 0.5
    train_prompts: int = 500
    # None: burn in initial arms only when starting cold.
    burn_in_initial_arms: bool | None = None

    def wants_burn_in(self) -> bool:
        if self.burn_in_initial_arms is not None:
            return self.burn_in_initial_arms
        return self.mode == "none"


@dataclass(frozen=True)
class Scenario:
    name: str
    phases: tuple[Phase, ...]
    budget_per_request: float | None = None
    # With pacing disabled the budget is kept for reporting only; the router
    # runs unconstrained (lambda_t pinned at 0).
    pacing_enabled: bool = True
    seeds: tuple[int, ...] = (0,)
    warmup: WarmupSpec = WarmupSpec()
    prompt_order: str = "shuffle"  # shuffle | in_order
    initial_arms: tuple[str, ...] | None = None  # None: all matrix arms

    def __post_init__(self) -> None:
        if not self.phases:
            raise ValueError("scenario needs at least one phase")
        if self.prompt_order not in ("shuffle", "in_order"):
            raise ValueError(f"unknown prompt_order: {self.prompt_order}")
        for i, ph in enumerate(self.phases):
            if ph.reuse_prompts_from is not None and not 0 <= ph.reuse_prompts_from < i:
                raise ValueError(f"phase {i} cannot reuse prompts from phase {ph.reuse_prompts_from}")


# -- traces ------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    phase: int
    prompt_id: str
    arm_id: str
    reward: float
    cost: float
    oracle_best: float
    lambda_t: float
    c_bar: float
    eligible_count: int
    forced: bool
    fallback: bool


@dataclass
class SeedTrace:
    seed: int
    scenario: str
    rows: list[StepRecord]
    permutation: list[int]
    phase_bounds: list[tuple[int, int]]
    arm_ids: list[str]
    realized_shift_means: dict[str, float] = field(default_factory=dict)

    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.rows])

    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.rows])

    def oracle(self) -> np.ndarray:
        return np.array([r.oracle_best for r in self.rows])

    def arms_seq(self) -> list[str]:
        return [r.arm_id for r in self.rows]

    def phase_rows(self, phase: int) -> list[StepRecord]:
        lo, hi = self.phase_bounds[phase]
        return self.rows[lo:hi]

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            header = {
                "seed": self.seed,
                "scenario": self.scenario,
                "permutation": self.permutation,
                "phase_bounds": self.phase_bounds,
                "arm_ids": self.arm_ids,
                "realized_shift_means": self.realized_shift_means,
            }
            fh.write(json.dumps({"meta": header}) + "\n")
            for row in self.rows:
                fh.write(json.dumps(row.__dict__) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "SeedTrace":
        with open(path) as fh:
            meta = json.loads(fh.readline())["meta"]
            rows = [StepRecord(**json.loads(line)) for line in fh if line.strip()]
        return cls(
            seed=meta["seed"],
            scenario=meta["scenario"],
            rows=rows,
            permutation=meta["permutation"],
            phase_bounds=[tuple(b) for b in meta["phase_bounds"]],
            arm_ids=meta["arm_ids"],
            realized_shift_means=meta.get("realized_shift_means", {}),
        )


# -- execution ---------------------------------------------------------------


def _effective_phase(
    matrix: RewardCostMatrix, phase: Phase
) -> tuple[dict[str, ModelPricing], dict[str, float], dict[str, float]]:
    """Resolve a phase's pricing map, per-arm cost scale, and reward shift."""
    pricing = dict(matrix.pricing)
    cost_scale = {arm: 1.0 for arm in matrix.arm_ids}
    reward_shift = {}
    for pert in phase.perturbations:
        if isinstance(pert, PriceSet):
            base = pricing[pert.arm]
            new = ModelPricing(
                model_id=pert.arm,
                input_rate=pert.input_rate,
                output_rate=pert.output_rate,
                per_request_cost_hint=base.per_request_cost_hint,
            )
            scale = blended_rate(new) / blended_rate(base)
            if base.per_request_cost_hint is not None:
                new = replace(new, per_request_cost_hint=base.per_request_cost_hint * scale)
            pricing[pert.arm] = new
            cost_scale[pert.arm] = scale
        elif isinstance(pert, RewardMeanShift):
            reward_shift[pert.arm] = pert.target_mean - matrix.mean_reward(pert.arm)
    return pricing, cost_scale, reward_shift


def run_single_seed(
    scenario: Scenario,
    matrix: RewardCostMatrix,
    config: RouterConfig,
    seed: int,
    priors: dict[str, WarmupPrior] | None = None,
    pacer_config: PacerConfig = PacerConfig(),
) -> SeedTrace:
    if matrix.d != config.d:
        raise ValueError(f"matrix dimension {matrix.d} != router dimension {config.d}")
    order_rng = np.random.default_rng(seed)
    if scenario.prompt_order == "shuffle":
        permutation = list(map(int, order_rng.permutation(len(matrix))))
    else:
        permutation = list(range(len(matrix)))

    # Assign prompt slices to phases up front, honoring reuse.
    cursor = 0
    phase_slices: list[list[int]] = []
    for phase in scenario.phases:
        if phase.reuse_prompts_from is not None:
            src = phase_slices[phase.reuse_prompts_from]
            if len(src) < phase.length:
                raise ValueError("reused phase is shorter than the reusing phase")
            phase_slices.append(src[: phase.length])
        else:
            if cursor + phase.length > len(permutation):
                raise ValueError(
                    f"scenario needs {cursor + phase.length} fresh prompts "
                    f"but the source has {len(permutation)}"
                )
            phase_slices.append(permutation[cursor : cursor + phase.length])
            cursor += phase.length

    initial = list(scenario.initial_arms) if scenario.initial_arms is not None else list(matrix.arm_ids)
    for arm in initial:
        if arm not in matrix.arm_ids:
            raise ValueError(f"initial arm {arm} not covered by the source matrix")

    warm = scenario.warmup
    budget = scenario.budget_per_request
    if budget is not None and not np.isfinite(budget):
        budget = None
    if not scenario.pacing_enabled:
        budget = None
    pacer = pacer_config.build(budget)
    router = BanditRouter(replace(config, seed=seed), pacer)
    initial_burn = None if warm.wants_burn_in() else 0
    for arm in initial:
        prior = None
        n_eff = 0.0
        if warm.mode == "heuristic":
            prior, n_eff = HeuristicPrior(warm.heuristic_bias), warm.n_eff
        elif warm.mode == "offline":
            if priors is None or arm not in priors:
                raise ValueError(f"offline warmup requested but no prior supplied for {arm}")
            prior, n_eff = priors[arm], warm.n_eff
        router.add_arm(arm, matrix.pricing[arm], prior=prior, n_eff=n_eff, burn_in_pulls=initial_burn)

    rows: list[StepRecord] = []
    phase_bounds: list[tuple[int, int]] = []
    realized_shift_means: dict[str, float] = {}
    step = 0
    prev_pricing = dict(matrix.pricing)
    for phase_idx, phase in enumerate(scenario.phases):
        pricing, cost_scale, reward_shift = _effective_phase(matrix, phase)
        for arm in router.arm_ids():
            if pricing[arm] != prev_pricing[arm]:
                router.update_pricing(arm, pricing[arm])
        for pert in phase.perturbations:
            if isinstance(pert, AddArm):
                if pert.arm not in matrix.arm_ids:
                    raise ValueError(f"added arm {pert.arm} not covered by the source matrix")
                prior = HeuristicPrior(pert.heuristic_bias) if pert.prior == "heuristic" else None
                router.add_arm(pert.arm, pricing[pert.arm], prior=prior, n_eff=pert.n_eff)
            elif isinstance(pert, RemoveArm):
                router.delete_arm(pert.arm)
        prev_pricing = pricing

        shift_acc: dict[str, list[float]] = {arm: [] for arm in reward_shift}
        start = step
        for rec_idx in phase_slices[phase_idx]:
            rec = matrix.records[rec_idx]
            live = router.arm_ids()
            rewards = {}
            for arm in live:
                r = rec.rewards[arm] + reward_shift.get(arm, 0.0)
                rewards[arm] = float(np.clip(r, 0.0, 1.0))
            decision = router.route(rec.context)
            reward = rewards[decision.arm_id]
            cost = rec.costs[decision.arm_id] * cost_scale[decision.arm_id]
            router.feedback(FeedbackRecord(decision.request_id, reward, cost))
            for arm in shift_acc:
                if arm in rewards:
                    shift_acc[arm].append(rewards[arm])
            rows.append(
                StepRecord(
                    step=step,
                    phase=phase_idx,
                    prompt_id=rec.prompt_id,
                    arm_id=decision.arm_id,
                    reward=reward,
                    cost=cost,
                    oracle_best=max(rewards.values()),
                    lambda_t=decision.lambda_at_decision,
                    c_bar=router.pacer.c_bar,
                    eligible_count=decision.eligible_count,
                    forced=decision.forced,
                    fallback=decision.fallback,
                )
            )
            step += 1
        phase_bounds.append((start, step))
        for arm, vals in shift_acc.items():
            if vals:
                realized_shift_means[f"phase{phase_idx}:{arm}"] = float(np.mean(vals))

    return SeedTrace(
        seed=seed,
        scenario=scenario.name,
        rows=rows,
        permutation=permutation,
        phase_bounds=phase_bounds,
        arm_ids=list(matrix.arm_ids),
        realized_shift_means=realized_shift_means,
    )


def _run_seed_task(args) -> SeedTrace:
    return run_single_seed(*args)


def run_scenario(
    scenario: Scenario,
    matrix: RewardCostMatrix,
    config: RouterConfig,
    train_matrix: RewardCostMatrix | None = None,
    pacer_config: PacerConfig = PacerConfig(),
    priors: dict[str, WarmupPrior] | None = None,
    workers: int = 1,
) -> list[SeedTrace]:
    """Run every scenario seed and return the per-seed traces (seed order)."""
    if scenario.warmup.mode == "offline" and priors is None:
        if train_matrix is None:
            raise ValueError("offline warmup requires a training matrix or explicit priors")
        priors = fit_warmup_priors(train_matrix)
    tasks = [(scenario, matrix, config, seed, priors, pacer_config) for seed in scenario.seeds]
    if workers <= 1 or len(tasks) <= 1:
        return [run_single_seed(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seed_task, tasks))


@dataclass(frozen=True)
class SweepPoint:
    budget: float
    seed: int
    mean_cost: float
    mean_reward: float


def run_budget_sweep(
    budgets: list[float],
    matrix: RewardCostMatrix,
    config: RouterConfig,
    seeds: tuple[int, ...] = (0,),
    n_prompts: int | None = None,
    warmup: WarmupSpec = WarmupSpec(),
    train_matrix: RewardCostMatrix | None = None,
    pacer_config: PacerConfig = PacerConfig(),
    workers: int = 1,
) -> list[SweepPoint]:
    """One closed-loop run per (budget, seed); emits operating points for
    frontier construction. Non-finite budgets run unconstrained."""
    if sorted(budgets) != list(budgets):
        raise ValueError("budgets must be sorted ascending")
    length = n_prompts if n_prompts is not None else len(matrix)
    priors = fit_warmup_priors(train_matrix) if warmup.mode == "offline" and train_matrix is not None else None
    points = []
    for budget in budgets:
        scenario = Scenario(
            name=f"sweep-{budget:g}",
            phases=(Phase(length=length),),
            budget_per_request=budget if np.isfinite(budget) else None,
            seeds=tuple(seeds),
            warmup=warmup,
        )
        traces = run_scenario(
            scenario,
            matrix,
            config,
            train_matrix=train_matrix,
            pacer_config=pacer_config,
            priors=priors,
            workers=workers,
        )
        for trace in traces:
            points.append(
                SweepPoint(
                    budget=float(budget),
                    seed=trace.seed,
                    mean_cost=float(trace.costs().mean()),
                    mean_reward=float(trace.rewards().mean()),
                )
            )
    return points
