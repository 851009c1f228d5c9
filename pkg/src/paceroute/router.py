"""Budget-paced non-stationary routing loop.

Per request the router scores every budget-eligible arm with a
staleness-inflated UCB minus the cost penalty, dispatches the argmax (uniform
random tie-break), and caches the context under the request id so feedback
arriving later can update the statistics without re-encoding. Feedback decays
the chosen arm's statistics by the elapsed steps since its last update,
absorbs the observation, and advances the budget pacer.

Two staleness clocks are deliberately distinct: exploration staleness counts
from the later of last update and last play (an arm dispatched but still
awaiting an asynchronous reward is not prematurely re-explored), while decay
staleness counts from the last statistics update only.
"""

from __future__ import annotations

import threading
from collections import OrderedDict, deque
from dataclasses import asdict, dataclass

import numpy as np

from . import arm_stats
from .arm_stats import ArmState, HeuristicPrior, WarmupPrior
from .cost_model import (
    DEFAULT_COST_CEIL,
    DEFAULT_COST_FLOOR,
    ModelPricing,
    blended_rate,
    normalize_cost,
    per_request_price,
)
from .pacer import BudgetPacer

SNAPSHOT_VERSION = 1


class UnknownRequestError(KeyError):
    """Feedback for a request id that was never issued or has been evicted."""


class DuplicateFeedbackError(ValueError):
    """Feedback for a request id that was already resolved."""


class SnapshotError(ValueError):
    """Snapshot document is corrupt or from an unsupported version."""


@dataclass
class RouterConfig:
    d: int
    alpha: float = 0.01
    gamma: float = 0.997
    v_max: float = 200.0
    lambda0: float = 1.0
    burn_in_pulls: int = 20
    seed: int = 0
    # Token count used to turn blended rates into per-request prices for the
    # hard ceiling when the registry carries no explicit hint.
    expected_tokens: float = 1000.0
    cost_floor: float = DEFAULT_COST_FLOOR
    cost_ceil: float = DEFAULT_COST_CEIL
    # Unresolved decisions older than this many steps are evicted
    # (default 10x the usual adaptation horizon of 500).
    decision_ttl: int = 5000
    clamp_rewards: bool = False

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError(f"context dimension must be >= 2, got {self.d}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.v_max < 1.0:
            raise ValueError(f"v_max must be >= 1, got {self.v_max}")
        if self.burn_in_pulls < 0:
            raise ValueError(f"burn_in_pulls must be >= 0, got {self.burn_in_pulls}")


@dataclass(frozen=True)
class RouteDecision:
    request_id: str
    arm_id: str
    exploit: float
    explore: float
    penalty: float
    score: float
    lambda_at_decision: float
    step_index: int
    eligible_count: int
    forced: bool = False
    fallback: bool = False


@dataclass(frozen=True)
class FeedbackRecord:
    request_id: str
    reward: float
    realized_cost: float


@dataclass(frozen=True)
class FeedbackAck:
    request_id: str
    status: str  # "absorbed" or "discarded"
    arm_id: str | None = None


@dataclass
class ArmEntry:
    model_id: str
    state: ArmState
    pricing: ModelPricing
    c_tilde: float
    price: float


@dataclass
class _PendingDecision:
    arm_id: str
    x: np.ndarray
    step: int


def argmax_with_ties(scores: np.ndarray, rng: np.random.Generator, atol: float = 1e-12) -> int:
    """Index of the max score; ties within atol broken uniformly at random."""
    best = scores.max()
    ties = np.flatnonzero(scores >= best - atol)
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[rng.integers(len(ties))])


class BanditRouter:
    """Hot-swap arm registry plus the scoring/update loop.

    route() and feedback() are serialized by a single lock; callers observe a
    total order over mutations.
    """

    def __init__(self, config: RouterConfig, pacer: BudgetPacer | None = None) -> None:
        self.config = config
        self.pacer = pacer if pacer is not None else BudgetPacer(budget_per_request=None)
        self.t = 0
        self.rng = np.random.default_rng(config.seed)
        self._arms: dict[str, ArmEntry] = {}
        self._arm_order: list[str] = []
        self._burn_in_queue: deque[str] = deque()
        self._burn_in_remaining: dict[str, int] = {}
        self._pending: OrderedDict[str, _PendingDecision] = OrderedDict()
        self._resolved: OrderedDict[str, int] = OrderedDict()
        self._discarded: OrderedDict[str, int] = OrderedDict()
        self._lock = threading.Lock()
        self.burn_in_ceiling_overrides = 0
        self.discarded_feedback_count = 0

    # -- registry ---------------------------------------------------------

    def add_arm(
        self,
        model_id: str,
        pricing: ModelPricing,
        prior: WarmupPrior | HeuristicPrior | None = None,
        n_eff: float = 0.0,
        burn_in_pulls: int | None = None,
    ) -> str:
        """Register a model. New arms get ``burn_in_pulls`` forced routes
        (config default unless overridden) before UCB competition resumes."""
        with self._lock:
            if model_id in self._arms:
                raise ValueError(f"duplicate arm id: {model_id}")
            cfg = self.config
            if prior is None:
                state = arm_stats.init_cold(cfg.d, cfg.lambda0)
            elif isinstance(prior, HeuristicPrior):
                state = arm_stats.init_heuristic(cfg.d, n_eff, prior.bias_reward, cfg.lambda0)
            elif isinstance(prior, WarmupPrior):
                state = arm_stats.init_from_prior(prior, n_eff, cfg.lambda0)
            else:
                raise TypeError(f"unsupported prior type: {type(prior).__name__}")
            state.last_update = self.t
            state.last_played = self.t
            self._arms[model_id] = ArmEntry(
                model_id=model_id,
                state=state,
                pricing=pricing,
                c_tilde=self._c_tilde(pricing),
                price=per_request_price(pricing, cfg.expected_tokens),
            )
            self._arm_order.append(model_id)
            pulls = cfg.burn_in_pulls if burn_in_pulls is None else burn_in_pulls
            if pulls > 0:
                self._burn_in_queue.append(model_id)
                self._burn_in_remaining[model_id] = pulls
            return model_id

    def delete_arm(self, model_id: str) -> int:
        """Remove an arm. Pending feedback for its requests is discarded
        (later arrivals become defined no-ops). Returns the discard count."""
        with self._lock:
            if model_id not in self._arms:
                raise KeyError(f"unknown arm id: {model_id}")
            if len(self._arms) <= 1:
                raise ValueError("cannot remove the last arm")
            del self._arms[model_id]
            self._arm_order.remove(model_id)
            self._burn_in_remaining.pop(model_id, None)
            if model_id in self._burn_in_queue:
                self._burn_in_queue.remove(model_id)
            dropped = [rid for rid, p in self._pending.items() if p.arm_id == model_id]
            for rid in dropped:
                step = self._pending.pop(rid).step
                self._discarded[rid] = step
            self.discarded_feedback_count += len(dropped)
            return len(dropped)

    def update_pricing(self, model_id: str, pricing: ModelPricing) -> None:
        """Swap an arm's pricing; the normalized cost and ceiling price are
        re-derived immediately."""
        with self._lock:
            entry = self._arms[model_id]
            entry.pricing = pricing
            entry.c_tilde = self._c_tilde(pricing)
            entry.price = per_request_price(pricing, self.config.expected_tokens)

    def arm(self, model_id: str) -> ArmEntry:
        return self._arms[model_id]

    def arm_ids(self) -> list[str]:
        return list(self._arm_order)

    def _c_tilde(self, pricing: ModelPricing) -> float:
        cfg = self.config
        if pricing.input_rate is not None and pricing.output_rate is not None:
            rate = blended_rate(pricing)
        else:
            # Hint-only registry entry: back out an equivalent blended rate.
            rate = pricing.per_request_cost_hint * 1000.0 / cfg.expected_tokens
        return normalize_cost(rate, cfg.cost_floor, cfg.cost_ceil)

    # -- serving ----------------------------------------------------------

    def route(self, x: np.ndarray) -> RouteDecision:
        with self._lock:
            if not self._arms:
                raise ValueError("no arms registered")
            x = np.asarray(x, dtype=float)
            if x.shape != (self.config.d,):
                raise ValueError(f"context dimension mismatch: expected {self.config.d}, got {x.shape}")
            if abs(x[-1] - 1.0) > 1e-9:
                raise ValueError("context must carry a trailing unit bias component")
            self._evict_stale()

            forced = False
            fallback = False
            if self._burn_in_queue:
                arm_id = self._burn_in_queue[0]
                forced = True
                eligible_count = 1
                self._burn_in_remaining[arm_id] -= 1
                if self._burn_in_remaining[arm_id] <= 0:
                    self._burn_in_queue.popleft()
                    del self._burn_in_remaining[arm_id]
                prices = [(mid, self._arms[mid].price) for mid in self._arm_order]
                ceiling = self.pacer.price_ceiling(prices)
                if ceiling is not None and self._arms[arm_id].price > ceiling:
                    # Burn-in wins over the hard ceiling, but the event is
                    # auditable. Operators wanting strict ceilings set
                    # burn_in_pulls=0.
                    self.burn_in_ceiling_overrides += 1
                exploit, explore, pen = self._score_parts(self._arms[arm_id], x)
            else:
                prices = [(mid, self._arms[mid].price) for mid in self._arm_order]
                eligible = self.pacer.eligible_arms(prices)
                eligible_count = len(eligible)
                ceiling = self.pacer.price_ceiling(prices)
                parts = [self._score_parts(self._arms[mid], x) for mid in eligible]
                scores = np.array([e + b - p for e, b, p in parts])
                idx = argmax_with_ties(scores, self.rng)
                arm_id = eligible[idx]
                exploit, explore, pen = parts[idx]
                fallback = ceiling is not None and self._arms[arm_id].price > ceiling

            self.t += 1
            entry = self._arms[arm_id]
            entry.state.last_played = self.t
            request_id = f"req-{self.t}"
            self._pending[request_id] = _PendingDecision(arm_id=arm_id, x=x.copy(), step=self.t)
            return RouteDecision(
                request_id=request_id,
                arm_id=arm_id,
                exploit=exploit,
                explore=explore,
                penalty=pen,
                score=exploit + explore - pen,
                lambda_at_decision=self.pacer.lambda_t,
                step_index=self.t,
                eligible_count=eligible_count,
                forced=forced,
                fallback=fallback,
            )

    def _score_parts(self, entry: ArmEntry, x: np.ndarray) -> tuple[float, float, float]:
        cfg = self.config
        state = entry.state
        dt = self.t - max(state.last_update, state.last_played)
        inflation = max(cfg.gamma**dt, 1.0 / cfg.v_max)
        v = state.variance(x) / inflation
        exploit = state.predict(x)
        explore = cfg.alpha * float(np.sqrt(max(v, 0.0)))
        return exploit, explore, self.pacer.penalty(entry.c_tilde)

    def feedback(self, record: FeedbackRecord) -> FeedbackAck:
        with self._lock:
            rid = record.request_id
            if rid in self._discarded:
                return FeedbackAck(request_id=rid, status="discarded")
            if rid in self._resolved:
                raise DuplicateFeedbackError(f"feedback already absorbed for {rid}")
            if rid not in self._pending:
                raise UnknownRequestError(rid)
            if record.realized_cost < 0:
                raise ValueError(f"realized_cost must be >= 0, got {record.realized_cost}")
            if not self.config.clamp_rewards and not 0.0 <= record.reward <= 1.0:
                raise ValueError(f"reward must be in [0, 1], got {record.reward}")
            pending = self._pending.pop(rid)
            entry = self._arms[pending.arm_id]
            dt = self.t - entry.state.last_update
            arm_stats.apply_forgetting(entry.state, self.config.gamma, dt)
            arm_stats.absorb(entry.state, pending.x, record.reward, self.t, clamp_reward=self.config.clamp_rewards)
            self.pacer.observe_cost(record.realized_cost)
            self._resolved[rid] = self.t
            return FeedbackAck(request_id=rid, status="absorbed", arm_id=pending.arm_id)

    def _evict_stale(self) -> None:
        horizon = self.t - self.config.decision_ttl
        for cache in (self._pending, self._resolved, self._discarded):
            while cache:
                rid = next(iter(cache))
                item = cache[rid]
                step = item.step if isinstance(item, _PendingDecision) else item
                if step >= horizon:
                    break
                del cache[rid]

    # -- persistence ------------------------------------------------------

    def snapshot(self) -> dict:
        """Full state document. Cached inverses are refreshed so that the
        load-time recomputation reproduces them bit-exactly, which makes
        restore-and-replay decisions identical to continuing in place."""
        with self._lock:
            return {
                "format_version": SNAPSHOT_VERSION,
                "kind": "paceroute.router",
                "config": asdict(self.config),
                "t": self.t,
                "pacer": self.pacer.to_snapshot(),
                "arm_order": list(self._arm_order),
                "arms": {
                    mid: {
                        "state": entry.state.to_snapshot(),
                        "pricing": {
                            "model_id": entry.pricing.model_id,
                            "input_rate": entry.pricing.input_rate,
                            "output_rate": entry.pricing.output_rate,
                            "per_request_cost_hint": entry.pricing.per_request_cost_hint,
                        },
                        "c_tilde": entry.c_tilde,
                        "price": entry.price,
                    }
                    for mid, entry in self._arms.items()
                },
                "burn_in_queue": list(self._burn_in_queue),
                "burn_in_remaining": dict(self._burn_in_remaining),
                "pending": [
                    [rid, {"arm_id": p.arm_id, "x": p.x.tolist(), "step": p.step}]
                    for rid, p in self._pending.items()
                ],
                "resolved": list(self._resolved.items()),
                "discarded": list(self._discarded.items()),
                "rng_state": self.rng.bit_generator.state,
                "counters": {
                    "burn_in_ceiling_overrides": self.burn_in_ceiling_overrides,
                    "discarded_feedback_count": self.discarded_feedback_count,
                },
            }

    @classmethod
    def restore(cls, doc: dict) -> "BanditRouter":
        """Rebuild a router from a snapshot. Raises SnapshotError on corrupt
        or version-mismatched documents without constructing partial state."""
        try:
            if doc.get("kind") != "paceroute.router":
                raise SnapshotError(f"not a router snapshot: kind={doc.get('kind')!r}")
            if doc.get("format_version") != SNAPSHOT_VERSION:
                raise SnapshotError(f"unsupported snapshot version: {doc.get('format_version')!r}")
            config = RouterConfig(**doc["config"])
            router = cls(config, BudgetPacer.from_snapshot(doc["pacer"]))
            router.t = int(doc["t"])
            for mid in doc["arm_order"]:
                arm_doc = doc["arms"][mid]
                pricing = ModelPricing(**arm_doc["pricing"])
                router._arms[mid] = ArmEntry(
                    model_id=mid,
                    state=ArmState.from_snapshot(arm_doc["state"]),
                    pricing=pricing,
                    c_tilde=float(arm_doc["c_tilde"]),
                    price=float(arm_doc["price"]),
                )
                router._arm_order.append(mid)
            router._burn_in_queue = deque(doc["burn_in_queue"])
            router._burn_in_remaining = {k: int(v) for k, v in doc["burn_in_remaining"].items()}
            for rid, p in doc["pending"]:
                router._pending[rid] = _PendingDecision(
                    arm_id=p["arm_id"], x=np.array(p["x"], dtype=float), step=int(p["step"])
                )
            router._resolved = OrderedDict((rid, int(step)) for rid, step in doc["resolved"])
            router._discarded = OrderedDict((rid, int(step)) for rid, step in doc["discarded"])
            router.rng.bit_generator.state = doc["rng_state"]
            router.burn_in_ceiling_overrides = int(doc["counters"]["burn_in_ceiling_overrides"])
            router.discarded_feedback_count = int(doc["counters"]["discarded_feedback_count"])
            return router
        except SnapshotError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"corrupt router snapshot: {exc}") from exc
