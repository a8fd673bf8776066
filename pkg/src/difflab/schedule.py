"""Step-size schedule construction, validation, and the clip operator.

The schedule is defined backward from the horizon: the cumulative rate at
the final step is pinned to T**(-c0), and each earlier value is obtained by

    abar[t-1] = abar[t] + c1 * (log T / T) * abar[t] * (1 - abar[t])

for t = T, ..., 2 (natural log).  Per-step rates follow as the ratio of
consecutive cumulative rates, the step-noise variance is

    sigma_t^2 = alpha_t - 1 / (3 - 2 * alpha_t)

and the clip radius for step t is

    r_t = c_clip * (1 - alpha_t) * (d * log T / (1 - abar_t)) ** 1.5.

All arithmetic is 64-bit; the recursion is evaluated exactly as written,
with no closed-form substitute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidParams,
    ScheduleDegenerate,
)

# Per-step rates at or below this are rejected: the step-noise variance
# sigma_t^2 = alpha_t - 1/(3 - 2 alpha_t) would be nonpositive.
_ALPHA_FLOOR = 0.5 + 1e-9

DEFAULT_C0 = 4.0
DEFAULT_C1 = 4.0
DEFAULT_C_CLIP = 2.0


@dataclass(frozen=True)
class ScheduleParams:
    """Horizon, recursion constants, clip constant, and dimension.

    T >= 2, d >= 1, and all three constants must be positive.
    """

    T: int
    c0: float = DEFAULT_C0
    c1: float = DEFAULT_C1
    c_clip: float = DEFAULT_C_CLIP
    d: int = 1

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise InvalidParams(f"horizon T must be an integer >= 2, got {self.T}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParams(f"dimension d must be an integer >= 1, got {self.d}")
        for name in ("c0", "c1", "c_clip"):
            value = getattr(self, name)
            if not (value > 0) or not math.isfinite(value):
                raise InvalidParams(f"{name} must be a positive finite real, got {value}")

    @property
    def step_rate(self) -> float:
        """The recursion gain c1 * log(T) / T."""
        return self.c1 * math.log(self.T) / self.T


@dataclass(frozen=True)
class Schedule:
    """Immutable per-step coefficient arrays for a fixed horizon.

    Arrays are stored 0-based; use the ``*_at`` accessors with 1-based step
    indices.  ``sigma`` and ``clip_radius`` exist only for t = 2..T.
    """

    params: ScheduleParams
    alpha_bar: np.ndarray  # shape (T,), t = 1..T
    alpha: np.ndarray      # shape (T,), t = 1..T
    sigma: np.ndarray      # shape (T-1,), t = 2..T
    clip_radius: np.ndarray  # shape (T-1,), t = 2..T

    def __post_init__(self):
        for name in ("alpha_bar", "alpha", "sigma", "clip_radius"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def T(self) -> int:
        return self.params.T

    @property
    def d(self) -> int:
        return self.params.d

    def alpha_at(self, t: int) -> float:
        self._check_t(t, lo=1)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        self._check_t(t, lo=1)
        return float(self.alpha_bar[t - 1])

    def sigma_at(self, t: int) -> float:
        self._check_t(t, lo=2)
        return float(self.sigma[t - 2])

    def clip_radius_at(self, t: int) -> float:
        self._check_t(t, lo=2)
        return float(self.clip_radius[t - 2])

    def _check_t(self, t: int, lo: int) -> None:
        if not (lo <= t <= self.T):
            raise IndexOutOfRange(f"step index {t} outside [{lo}, {self.T}]")


def build_schedule(params: ScheduleParams) -> Schedule:
    """Construct the full schedule for ``params``.

    Deterministic; raises ScheduleDegenerate if any per-step rate falls to
    1/2 or below, or if the cumulative rate saturates to 1.0 in floating
    point (both signal c1 * log(T) / T too large for this horizon).
    """
    T = params.T
    rate = params.step_rate
    abar = np.empty(T)
    abar[T - 1] = float(T) ** (-params.c0)
    for t in range(T, 1, -1):
        a = abar[t - 1]
        abar[t - 2] = a + rate * a * (1.0 - a)

    if abar[0] >= 1.0:
        raise ScheduleDegenerate(
            "cumulative rate saturated at 1.0; reduce c1 or increase T"
        )
    alpha = np.empty(T)
    alpha[0] = abar[0]
    alpha[1:] = abar[1:] / abar[:-1]
    bad = alpha[1:] <= _ALPHA_FLOOR
    if np.any(bad):
        t_bad = int(np.argmax(bad)) + 2
        raise ScheduleDegenerate(
            f"alpha_{t_bad} = {alpha[t_bad - 1]:.6f} <= 1/2: "
            f"c1*log(T)/T = {rate:.4f} is too large for T = {T}"
        )

    a = alpha[1:]
    sigma2 = a - 1.0 / (3.0 - 2.0 * a)
    sigma = np.sqrt(sigma2)
    log_t = math.log(T)
    clip_radius = params.c_clip * (1.0 - a) * (params.d * log_t / (1.0 - abar[1:])) ** 1.5
    return Schedule(params=params, alpha_bar=abar, alpha=alpha,
                    sigma=sigma, clip_radius=clip_radius)


@dataclass(frozen=True)
class LemmaCheck:
    """One named inequality check with its worst-case margin.

    ``margin`` is the maximum over steps of (lhs - rhs); the check passes
    iff the margin is <= 0.  ``per_step`` holds the per-step margins for
    t = 2..T (empty for the single-value rate-at-step-one check).
    """

    name: str
    passed: bool
    margin: float
    per_step: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class CheckReport:
    checks: tuple[LemmaCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> LemmaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def schedule_lemma_checks(s: Schedule) -> CheckReport:
    """Evaluate the four schedule inequalities and report margins.

    For all t = 2..T, with c = c1 * log(T) / T:

      (a) 1 - alpha_t                    <= c
      (b) (1 - alpha_t) / (1 - abar_t)   <= c
      (c) (1 - abar_t) / (1 - abar_{t-1}) <= 1 + 2c

    and, for the first step,

      (d) 1 - alpha_1 <= T ** (-c1 / 4).
    """
    rate = s.params.step_rate
    abar = s.alpha_bar
    alpha = s.alpha
    one_minus_alpha = 1.0 - alpha[1:]

    m_a = one_minus_alpha - rate
    m_b = one_minus_alpha / (1.0 - abar[1:]) - rate
    m_c = (1.0 - abar[1:]) / (1.0 - abar[:-1]) - (1.0 + 2.0 * rate)
    m_d = (1.0 - alpha[0]) - float(s.T) ** (-s.params.c1 / 4.0)

    def check(name, per_step=None, single=None):
        if per_step is not None:
            margin = float(np.max(per_step))
            return LemmaCheck(name, margin <= 0.0, margin, per_step)
        return LemmaCheck(name, bool(single <= 0.0), float(single))

    return CheckReport(checks=(
        check("one_minus_alpha_le_rate", per_step=m_a),
        check("relative_step_le_rate", per_step=m_b),
        check("tail_ratio_le_one_plus_2rate", per_step=m_c),
        check("first_step_rate_bound", single=m_d),
    ))


def clip(s: Schedule, t: int, x: np.ndarray) -> np.ndarray:
    """Threshold ``x`` by norm: unchanged inside radius r_t, zero outside.

    Indicator semantics, not a projection: any vector with 2-norm beyond
    the radius maps to the zero vector.
    """
    if not (2 <= t <= s.T):
        raise IndexOutOfRange(f"clip step index {t} outside [2, {s.T}]")
    x = np.asarray(x, dtype=float)
    if x.shape != (s.d,):
        raise DimensionMismatch(f"expected vector of dimension {s.d}, got shape {x.shape}")
    if np.linalg.norm(x) <= s.clip_radius_at(t):
        return x.copy()
    return np.zeros_like(x)
