"""Closed-loop budget enforcement.

The pacer tracks realized spend with an EMA and runs projected dual ascent on
the multiplier ``lambda_t``: the multiplier rises while smoothed spend exceeds
the per-request budget and falls while it is below, always projected onto
[0, lambda_cap]. Two mechanisms act on selection simultaneously: a soft score
penalty ``(lambda_c + lambda_t) * c_tilde`` and a hard price ceiling
``c_max / (1 + lambda_t)`` that excludes expensive arms outright while
lambda_t > 0.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from .cost_model import ConfigurationError


@dataclass(frozen=True)
class PacerConfig:
    """Pacer constants, separate from the budget itself so one config can be
    reused across budget regimes."""

    eta: float = 0.05
    alpha_ema: float = 0.05
    lambda_cap: float = 5.0
    lambda_c: float = 0.3

    def build(self, budget_per_request: float | None) -> "BudgetPacer":
        return BudgetPacer(
            budget_per_request,
            eta=self.eta,
            alpha_ema=self.alpha_ema,
            lambda_cap=self.lambda_cap,
            lambda_c=self.lambda_c,
        )


class BudgetPacer:
    """EMA cost tracking plus projected dual ascent on the cost multiplier.

    Pass ``budget_per_request=None`` to disable pacing: lambda_t stays pinned
    at 0, the hard ceiling never activates, and the penalty reduces to the
    static ``lambda_c * c_tilde``.
    """

    def __init__(
        self,
        budget_per_request: float | None,
        eta: float = 0.05,
        alpha_ema: float = 0.05,
        lambda_cap: float = 5.0,
        lambda_c: float = 0.3,
    ) -> None:
        if budget_per_request is not None and budget_per_request <= 0:
            raise ConfigurationError(f"budget_per_request must be positive, got {budget_per_request}")
        if not 0.0 < alpha_ema <= 1.0:
            raise ConfigurationError(f"alpha_ema must be in (0, 1], got {alpha_ema}")
        if eta < 0 or lambda_cap < 0 or lambda_c < 0:
            raise ConfigurationError("eta, lambda_cap and lambda_c must be >= 0")
        self.budget = budget_per_request
        self.eta = eta
        self.alpha_ema = alpha_ema
        self.lambda_cap = lambda_cap
        self.lambda_c = lambda_c
        self.lambda_t = 0.0
        # Seeding the EMA at the budget itself avoids a spurious start-up
        # transient in the dual variable.
        self.c_bar = budget_per_request if budget_per_request is not None else 0.0
        self.fallback_events = 0

    @property
    def enabled(self) -> bool:
        return self.budget is not None

    def observe_cost(self, c: float) -> None:
        """Fold one realized request cost into the EMA, then take a dual step
        using the updated signal."""
        if c < 0:
            raise ValueError(f"cost must be >= 0, got {c}")
        self.c_bar = (1.0 - self.alpha_ema) * self.c_bar + self.alpha_ema * c
        if not self.enabled:
            return
        step = self.eta * (self.c_bar / self.budget - 1.0)
        self.lambda_t = min(self.lambda_cap, max(0.0, self.lambda_t + step))

    def price_ceiling(self, prices: Sequence[tuple[str, float]]) -> float | None:
        """Current dynamic ceiling, or None when inactive (lambda_t = 0)."""
        if self.lambda_t <= 0.0:
            return None
        c_max = max(p for _, p in prices)
        return c_max / (1.0 + self.lambda_t)

    def eligible_arms(self, prices: Sequence[tuple[str, float]]) -> list[str]:
        """Arm ids whose per-request price passes the hard ceiling.

        Never returns an empty set: if the ceiling would exclude every arm,
        the cheapest is retained (and the event counted) so serving always
        has a model to return.
        """
        if not prices:
            raise ValueError("empty portfolio")
        ceiling = self.price_ceiling(prices)
        if ceiling is None:
            return [arm for arm, _ in prices]
        survivors = [arm for arm, p in prices if p <= ceiling]
        if not survivors:
            self.fallback_events += 1
            cheapest = min(prices, key=lambda ap: ap[1])
            return [cheapest[0]]
        return survivors

    def penalty(self, c_tilde: float) -> float:
        """Score deduction for a normalized unit cost."""
        return (self.lambda_c + self.lambda_t) * c_tilde

    def to_snapshot(self) -> dict:
        return {
            "budget": self.budget,
            "eta": self.eta,
            "alpha_ema": self.alpha_ema,
            "lambda_cap": self.lambda_cap,
            "lambda_c": self.lambda_c,
            "lambda_t": self.lambda_t,
            "c_bar": self.c_bar,
            "fallback_events": self.fallback_events,
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> "BudgetPacer":
        pacer = cls(
            budget_per_request=doc["budget"],
            eta=doc["eta"],
            alpha_ema=doc["alpha_ema"],
            lambda_cap=doc["lambda_cap"],
            lambda_c=doc["lambda_c"],
        )
        pacer.lambda_t = doc["lambda_t"]
        pacer.c_bar = doc["c_bar"]
        pacer.fallback_events = doc["fallback_events"]
        return pacer
