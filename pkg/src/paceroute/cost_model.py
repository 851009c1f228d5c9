"""Per-token pricing and the log-normalized unit cost used in the selection penalty.

Unit convention: all rates are dollars per 1k tokens; per-request costs and
budgets are plain dollars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

# Market bounds for the log normalization. Exposed as defaults because
# provider pricing moves; every caller can override.
DEFAULT_COST_FLOOR = 0.0001
DEFAULT_COST_CEIL = 0.10


class ConfigurationError(ValueError):
    """Raised when pricing or pacer configuration is inconsistent."""


@dataclass(frozen=True)
class ModelPricing:
    """Published pricing for one model.

    ``input_rate`` / ``output_rate`` are dollars per 1k tokens.
    ``per_request_cost_hint`` is an optional expected dollar cost per request,
    used by simulators and by the pacer's hard ceiling when present.
    """

    model_id: str
    input_rate: float | None = None
    output_rate: float | None = None
    per_request_cost_hint: float | None = None

    def __post_init__(self) -> None:
        for name in ("input_rate", "output_rate", "per_request_cost_hint"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigurationError(f"{self.model_id}: {name} must be >= 0, got {v}")
        if self.input_rate is None and self.output_rate is None and self.per_request_cost_hint is None:
            raise ConfigurationError(f"{self.model_id}: needs token rates or a per-request cost hint")


def blended_rate(pricing: ModelPricing) -> float:
    """Average of input and output rates, i.e. a 1:1 token-ratio blend."""
    if pricing.input_rate is None or pricing.output_rate is None:
        raise ConfigurationError(f"{pricing.model_id}: both token rates required for blending")
    return (pricing.input_rate + pricing.output_rate) / 2.0


def normalize_cost(rate: float, floor: float = DEFAULT_COST_FLOOR, ceil: float = DEFAULT_COST_CEIL) -> float:
    """Map a blended rate to the unit cost in [0, 1] on a log scale.

    Rates at or below the market floor are treated as zero-cost; rates at or
    above the ceiling clamp to 1 so the penalty stays commensurate with the
    [0, 1] reward scale.
    """
    if floor <= 0:
        raise ConfigurationError(f"cost floor must be positive, got {floor}")
    if ceil <= floor:
        raise ConfigurationError(f"cost ceiling must exceed floor, got {ceil} <= {floor}")
    if rate <= 0:
        raise ConfigurationError(f"rate must be positive, got {rate}")
    if rate <= floor:
        return 0.0
    if rate >= ceil:
        return 1.0
    return (math.log(rate) - math.log(floor)) / (math.log(ceil) - math.log(floor))


def per_request_price(pricing: ModelPricing, expected_tokens: float = 1000.0) -> float:
    """Expected dollars per request, for ceiling checks and simulators.

    Prefers the registry's explicit hint; otherwise scales the blended rate
    by the configured expected token count so the ceiling compares like
    units with realized cost.
    """
    if pricing.per_request_cost_hint is not None:
        return pricing.per_request_cost_hint
    return blended_rate(pricing) * expected_tokens / 1000.0


def load_registry(path: str | Path) -> list[ModelPricing]:
    """Read a pricing registry file.

    Format: JSON list of objects with ``model_id``, ``input_rate_per_1k``,
    ``output_rate_per_1k`` and optional ``per_request_cost_hint`` (dollars).
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ConfigurationError(f"{path}: registry must be a JSON list")
    out = []
    for entry in raw:
        out.append(
            ModelPricing(
                model_id=entry["model_id"],
                input_rate=entry.get("input_rate_per_1k"),
                output_rate=entry.get("output_rate_per_1k"),
                per_request_cost_hint=entry.get("per_request_cost_hint"),
            )
        )
    return out


def dump_registry(pricings: list[ModelPricing], path: str | Path) -> None:
    rows = []
    for p in pricings:
        row: dict = {"model_id": p.model_id}
        if p.input_rate is not None:
            row["input_rate_per_1k"] = p.input_rate
        if p.output_rate is not None:
            row["output_rate_per_1k"] = p.output_rate
        if p.per_request_cost_hint is not None:
            row["per_request_cost_hint"] = p.per_request_cost_hint
        rows.append(row)
    Path(path).write_text(json.dumps(rows, indent=2) + "\n")
