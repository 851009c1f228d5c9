"""Per-arm ridge sufficient statistics with geometric forgetting.

Each arm keeps the running design matrix ``A``, the reward accumulator ``b``,
a cached inverse, and the ridge estimate ``theta_hat = A^-1 b``. Updates are
rank-1 Sherman-Morrison corrections in O(d^2); forgetting is a scalar rescale
of A and b that leaves theta_hat unchanged.

Two guard rails keep the cached inverse trustworthy over long runs:

* a decay floor tops A back up with ridge mass when sustained forgetting
  would drive its smallest eigenvalue below ``lambda0 * DECAY_FLOOR_FRACTION``
  (unbounded decay sends A -> 0 and A^-1 -> infinity);
* a periodic full re-inversion every ``INVERSE_REFRESH_EVERY`` updates purges
  accumulated rank-1 drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Smallest-eigenvalue floor, as a fraction of lambda0. Exploration inflation
# is already capped upstream; this only guards numerical blow-up.
DECAY_FLOOR_FRACTION = 1e-3

# Full re-inversion cadence (updates per arm).
INVERSE_REFRESH_EVERY = 1000


@dataclass
class WarmupPrior:
    """Offline sufficient statistics used to warm-start an arm.

    ``A_off[d-1, d-1]`` (the bias-direction mass) equals the offline sample
    count when contexts carry a unit bias term, and anchors the
    pseudo-observation scaling.
    """

    A_off: np.ndarray
    b_off: np.ndarray
    theta_off: np.ndarray
    provenance: str = ""

    def __post_init__(self) -> None:
        self.A_off = np.asarray(self.A_off, dtype=float)
        self.b_off = np.asarray(self.b_off, dtype=float)
        self.theta_off = np.asarray(self.theta_off, dtype=float)
        d = self.A_off.shape[0]
        if self.A_off.shape != (d, d):
            raise ValueError(f"A_off must be square, got {self.A_off.shape}")
        if self.b_off.shape != (d,) or self.theta_off.shape != (d,):
            raise ValueError("b_off/theta_off dimension mismatch with A_off")
        if not np.allclose(self.A_off, self.A_off.T, rtol=1e-9, atol=1e-12):
            raise ValueError("A_off must be symmetric")

    @property
    def bias_mass(self) -> float:
        return float(self.A_off[-1, -1])


@dataclass(frozen=True)
class HeuristicPrior:
    """Isotropic prior for arms with no offline data: predicts ``bias_reward``
    for any unit-bias context, at n_eff pseudo-observations of uncertainty."""

    bias_reward: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.bias_reward <= 1.0:
            raise ValueError(f"bias_reward must be in [0, 1], got {self.bias_reward}")


@dataclass
class ArmState:
    """Mutable ridge statistics for one arm. Single-writer; not thread-safe."""

    d: int
    lambda0: float
    A: np.ndarray
    b: np.ndarray
    A_inv: np.ndarray = field(init=False)
    theta_hat: np.ndarray = field(init=False)
    last_update: int = 0
    last_played: int = 0
    n_updates: int = 0
    # Conservative lower bound on lambda_min(A); decays with A, untouched by
    # rank-1 adds. Drives the lazy decay-floor check.
    floor_bound: float | None = None
    updates_since_refresh: int = 0

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.floor_bound is None:
            self.floor_bound = self.lambda0
        self.refresh_inverse()

    def refresh_inverse(self) -> None:
        """Recompute A_inv and theta_hat from A directly."""
        inv = np.linalg.inv(self.A)
        self.A_inv = (inv + inv.T) / 2.0
        self.theta_hat = self.A_inv @ self.b
        self.updates_since_refresh = 0

    def predict(self, x: np.ndarray) -> float:
        return float(self.theta_hat @ x)

    def variance(self, x: np.ndarray) -> float:
        """Quadratic form x^T A^-1 x (uninflated UCB variance)."""
        return float(x @ (self.A_inv @ x))

    def to_snapshot(self) -> dict:
        """Versioned per-arm document. The inverse and theta_hat are
        recomputed on load, so the cached inverse is refreshed first to make
        the round-trip bit-exact."""
        self.refresh_inverse()
        return {
            "format_version": 1,
            "d": self.d,
            "lambda0": self.lambda0,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "last_update": self.last_update,
            "last_played": self.last_played,
            "n_updates": self.n_updates,
            "floor_bound": self.floor_bound,
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> "ArmState":
        if doc.get("format_version") != 1:
            raise ValueError(f"unsupported arm snapshot version: {doc.get('format_version')!r}")
        state = cls(
            d=int(doc["d"]),
            lambda0=float(doc["lambda0"]),
            A=np.array(doc["A"], dtype=float),
            b=np.array(doc["b"], dtype=float),
            last_update=int(doc["last_update"]),
            last_played=int(doc["last_played"]),
            n_updates=int(doc["n_updates"]),
            floor_bound=float(doc["floor_bound"]),
        )
        return state


def init_cold(d: int, lambda0: float = 1.0) -> ArmState:
    """Uninformative start: A = lambda0*I, b = 0."""
    if d < 2:
        raise ValueError(f"context dimension must be >= 2, got {d}")
    if lambda0 <= 0:
        raise ValueError(f"lambda0 must be positive, got {lambda0}")
    return ArmState(d=d, lambda0=lambda0, A=lambda0 * np.eye(d), b=np.zeros(d))


def init_from_prior(prior: WarmupPrior, n_eff: float, lambda0: float = 1.0) -> ArmState:
    """Load offline statistics at n_eff pseudo-observations of strength.

    The prior is rescaled so its bias-direction mass equals n_eff, then
    ridge-regularized with a mean-preserving correction: the lambda0*theta_off
    term in b stops the lambda0*I ridge from shrinking the posterior mean
    toward zero, so theta_hat ~= theta_off at the requested confidence.
    """
    if lambda0 <= 0:
        raise ValueError(f"lambda0 must be positive, got {lambda0}")
    if n_eff < 0:
        raise ValueError(f"n_eff must be >= 0, got {n_eff}")
    if prior.bias_mass <= 0:
        raise ValueError("prior has zero bias-direction mass")
    d = prior.A_off.shape[0]
    s = n_eff / prior.bias_mass
    A = s * prior.A_off + lambda0 * np.eye(d)
    b = s * prior.b_off + lambda0 * prior.theta_off
    return ArmState(d=d, lambda0=lambda0, A=A, b=b)


def init_heuristic(d: int, n_eff: float, bias_reward: float, lambda0: float = 1.0) -> ArmState:
    """Isotropic prior for arms absent from offline data.

    Spreads n_eff pseudo-observations evenly across the d directions
    (n_eff/d mass each, bias direction included) with a bias-only reward
    estimate, so any unit-bias context predicts ``bias_reward`` and the
    bias-direction variance is 1 / (lambda0 + n_eff/d).
    """
    if d < 2:
        raise ValueError(f"context dimension must be >= 2, got {d}")
    if lambda0 <= 0:
        raise ValueError(f"lambda0 must be positive, got {lambda0}")
    if n_eff < 0:
        raise ValueError(f"n_eff must be >= 0, got {n_eff}")
    if not 0.0 <= bias_reward <= 1.0:
        raise ValueError(f"bias_reward must be in [0, 1], got {bias_reward}")
    theta_off = np.zeros(d)
    theta_off[-1] = bias_reward
    mass = n_eff / d
    A = (mass + lambda0) * np.eye(d)
    b = (mass + lambda0) * theta_off
    return ArmState(d=d, lambda0=lambda0, A=A, b=b)


def apply_forgetting(state: ArmState, gamma: float, dt: int) -> ArmState:
    """Discount A and b by gamma^dt in place.

    theta_hat is unchanged (the scalar scaling cancels in A^-1 b) except when
    the decay floor trips, which adds ridge mass back to keep
    lambda_min(A) >= lambda0 * DECAY_FLOOR_FRACTION.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if gamma == 1.0 or dt == 0:
        return state
    scale = gamma**dt
    state.A *= scale
    state.b *= scale
    state.A_inv /= scale
    state.floor_bound *= scale
    floor = state.lambda0 * DECAY_FLOOR_FRACTION
    if state.floor_bound < floor:
        state.A += (floor - state.floor_bound) * np.eye(state.d)
        state.floor_bound = floor
        state.refresh_inverse()
    else:
        state.theta_hat = state.A_inv @ state.b
    return state


def absorb(state: ArmState, x: np.ndarray, r: float, step: int, clamp_reward: bool = False) -> ArmState:
    """Fold one observation (x, r) into the statistics in place.

    A gets the rank-1 add x x^T, the cached inverse the matching
    Sherman-Morrison correction, and b the increment r*x. ``step`` becomes the
    arm's last_update.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (state.d,):
        raise ValueError(f"context dimension mismatch: expected {state.d}, got {x.shape}")
    if clamp_reward:
        r = min(1.0, max(0.0, r))
    elif not 0.0 <= r <= 1.0:
        raise ValueError(f"reward must be in [0, 1], got {r}")
    state.A += np.outer(x, x)
    Ax = state.A_inv @ x
    state.A_inv -= np.outer(Ax, Ax) / (1.0 + float(x @ Ax))
    state.b += r * x
    state.n_updates += 1
    state.last_update = step
    state.updates_since_refresh += 1
    if state.updates_since_refresh >= INVERSE_REFRESH_EVERY:
        state.refresh_inverse()
    else:
        state.theta_hat = state.A_inv @ state.b
    return state
