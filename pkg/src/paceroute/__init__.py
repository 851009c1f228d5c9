"""Budget-paced, non-stationary contextual-bandit model routing."""

from .arm_stats import (
    ArmState,
    HeuristicPrior,
    WarmupPrior,
    absorb,
    apply_forgetting,
    init_cold,
    init_from_prior,
    init_heuristic,
)
from .cost_model import (
    DEFAULT_COST_CEIL,
    DEFAULT_COST_FLOOR,
    ConfigurationError,
    ModelPricing,
    blended_rate,
    load_registry,
    normalize_cost,
    per_request_price,
)
from .pacer import BudgetPacer, PacerConfig
from .router import (
    BanditRouter,
    DuplicateFeedbackError,
    FeedbackAck,
    FeedbackRecord,
    RouteDecision,
    RouterConfig,
    SnapshotError,
    UnknownRequestError,
)
from .simulator import (
    AddArm,
    Phase,
    PriceSet,
    PromptRecord,
    RemoveArm,
    RewardCostMatrix,
    RewardMeanShift,
    Scenario,
    SeedTrace,
    SyntheticArmSpec,
    SyntheticPortfolioSpec,
    WarmupSpec,
    fit_warmup_priors,
    generate_synthetic,
    invert_priors,
    onboarding_arm,
    run_budget_sweep,
    run_scenario,
    three_tier_portfolio,
)
from .tuner import (
    GridCell,
    frontier_auc,
    horizon_from_neff,
    knee_bootstrap_stability,
    knee_point,
    neff_from_horizon,
    pareto_frontier,
    select_knee,
)

__version__ = "0.1.0"

__all__ = [
    "ArmState",
    "HeuristicPrior",
    "WarmupPrior",
    "absorb",
    "apply_forgetting",
    "init_cold",
    "init_from_prior",
    "init_heuristic",
    "ConfigurationError",
    "ModelPricing",
    "blended_rate",
    "normalize_cost",
    "per_request_price",
    "load_registry",
    "DEFAULT_COST_FLOOR",
    "DEFAULT_COST_CEIL",
    "BudgetPacer",
    "PacerConfig",
    "BanditRouter",
    "RouterConfig",
    "RouteDecision",
    "FeedbackRecord",
    "FeedbackAck",
    "UnknownRequestError",
    "DuplicateFeedbackError",
    "SnapshotError",
    "PromptRecord",
    "RewardCostMatrix",
    "SyntheticArmSpec",
    "SyntheticPortfolioSpec",
    "Scenario",
    "Phase",
    "WarmupSpec",
    "PriceSet",
    "RewardMeanShift",
    "AddArm",
    "RemoveArm",
    "SeedTrace",
    "generate_synthetic",
    "three_tier_portfolio",
    "onboarding_arm",
    "fit_warmup_priors",
    "invert_priors",
    "run_scenario",
    "run_budget_sweep",
    "GridCell",
    "neff_from_horizon",
    "horizon_from_neff",
    "pareto_frontier",
    "frontier_auc",
    "knee_point",
    "select_knee",
    "knee_bootstrap_stability",
]
