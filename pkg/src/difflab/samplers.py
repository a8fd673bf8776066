"""Reverse-process samplers: two-evaluation accelerated step, plain
stochastic baseline, and a deterministic exponential-Euler step.

All step operations take their Gaussian draws as arguments so that single
steps can be hand-checked; ``run_batch`` owns stream management.  Batches
use one counter-based Philox stream per seed, with trajectory i consuming
a fixed, disjoint slice of the counter sequence, so results are identical
bit for bit regardless of chunking or worker count.

Trajectories start at Y_T ~ N(0, I), apply the chosen step for t = T..2,
and stop at t = 1 (no step is defined at t = 1, where the step-noise level
and clip radius do not exist).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DimensionMismatch, IndexOutOfRange, UnsupportedKind
from .schedule import Schedule
from .score_oracle import ScoreModel

KINDS = ("accelerated", "accelerated_noclip", "ddpm", "ode")

# Trajectories per work unit; fixed so that chunk boundaries (and therefore
# all random draws) never depend on n or on the worker count.
_CHUNK = 32768

# Philox.advance(k) skips k counter blocks of 4 uint64 outputs; one uniform
# double consumes one output word, so per-row layouts are padded to a
# multiple of 4 words to keep rows advance-aligned.
_WORDS_PER_BLOCK = 4


@dataclass(frozen=True)
class TrajectoryBatch:
    """Final-step outputs of n reverse trajectories plus clip accounting."""

    n: int
    d: int
    y1: np.ndarray            # (n, d)
    clip_activations: int     # steps where clip zeroed a nonzero input
    rng_seed: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.y1)):
            raise ValueError("trajectory outputs contain non-finite values")
        self.y1.setflags(write=False)


def _check_step(s: Schedule, t: int) -> None:
    if not (2 <= t <= s.T):
        raise IndexOutOfRange(f"sampler step index {t} outside [2, {s.T}]")


def _as_rows(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise DimensionMismatch(f"expected vectors of dimension {d}, got shape {x.shape}")
    return x, single


def accelerated_step(s: Schedule, model: ScoreModel, t: int, y, z_mid, z,
                     use_clip: bool = True):
    """One two-evaluation stochastic step from t to t-1.

    The intermediate point reuses a single z_mid draw both in its own
    update and inside the second score argument of the correction term.
    Returns (y_prev, clipped) where ``clipped`` flags rows whose
    correction was zeroed by the norm threshold.
    """
    _check_step(s, t)
    y, single = _as_rows(y, s.d)
    z_mid, _ = _as_rows(z_mid, s.d)
    z, _ = _as_rows(z, s.d)
    a = s.alpha_at(t)
    om = 1.0 - a
    sqrt_a = np.sqrt(a)

    s_t_y = model.evaluate(t, y)
    y_mid = (y + (om / (2.0 * a)) * s_t_y) / sqrt_a + om * z_mid
    g = a**1.5 * model.evaluate(t - 1, y_mid) - model.evaluate(t, y + om * z_mid)

    if use_clip:
        norms = np.linalg.norm(g, axis=1)
        over = norms > s.clip_radius_at(t)
        clipped = over & (norms > 0.0)
        g = np.where(over[:, None], 0.0, g)
    else:
        clipped = np.zeros(y.shape[0], dtype=bool)

    y_prev = (y + om * (s_t_y + a * g) + s.sigma_at(t) * z) / sqrt_a
    if single:
        return y_prev[0], bool(clipped[0])
    return y_prev, clipped


def ddpm_step(s: Schedule, model: ScoreModel, t: int, y, z):
    """One plain stochastic step: single score evaluation, noise level
    sqrt(1 - alpha_t) injected inside the 1/sqrt(alpha_t) rescaling."""
    _check_step(s, t)
    y, single = _as_rows(y, s.d)
    z, _ = _as_rows(z, s.d)
    a = s.alpha_at(t)
    om = 1.0 - a
    y_prev = (y + om * model.evaluate(t, y) + np.sqrt(om) * z) / np.sqrt(a)
    return y_prev[0] if single else y_prev


def ode_step(s: Schedule, model: ScoreModel, t: int, y):
    """One deterministic step (exponential-Euler discretization of the
    deterministic reverse dynamics): half the score coefficient, no noise."""
    _check_step(s, t)
    y, single = _as_rows(y, s.d)
    a = s.alpha_at(t)
    y_prev = (y + 0.5 * (1.0 - a) * model.evaluate(t, y)) / np.sqrt(a)
    return y_prev[0] if single else y_prev


def _row_words(T: int, d: int) -> tuple[int, int]:
    """(used, padded) uniform words per trajectory row."""
    used = d * (1 + 2 * (T - 1))
    padded = -(-used // _WORDS_PER_BLOCK) * _WORDS_PER_BLOCK
    return used, padded


def _noise_rows(seed: int, lo: int, hi: int, T: int, d: int) -> np.ndarray:
    """Standard-normal noise for trajectories lo..hi-1 of a batch.

    Row i is the inverse-CDF transform of uniform words at counter
    positions [i * padded, i * padded + used); the slice depends only on
    (seed, i), never on chunking.
    """
    used, padded = _row_words(T, d)
    bitgen = np.random.Philox(key=seed)
    bitgen.advance(lo * padded // _WORDS_PER_BLOCK)
    u = np.random.Generator(bitgen).random((hi - lo, padded))
    return ndtri(np.maximum(u[:, :used], 2.0**-54))


def _simulate_chunk(kind: str, s: Schedule, model: ScoreModel, seed: int,
                    lo: int, hi: int) -> tuple[np.ndarray, int]:
    d = s.d
    noise = _noise_rows(seed, lo, hi, s.T, d)
    y = noise[:, :d]
    clip_count = 0
    col = d
    for t in range(s.T, 1, -1):
        z_mid = noise[:, col:col + d]
        z = noise[:, col + d:col + 2 * d]
        col += 2 * d
        if kind == "ddpm":
            y = ddpm_step(s, model, t, y, z)
        elif kind == "ode":
            y = ode_step(s, model, t, y)
        else:
            y, clipped = accelerated_step(s, model, t, y, z_mid, z,
                                          use_clip=(kind == "accelerated"))
            clip_count += int(np.count_nonzero(clipped))
    return y, clip_count


def run_batch(kind: str, s: Schedule, model: ScoreModel, n: int, seed: int,
              jobs: int = 1) -> TrajectoryBatch:
    """Run n reverse trajectories and return their outputs at t = 1.

    Output is bit-identical for any ``jobs`` value: every trajectory's
    draws come from its own counter slice, chunks are fixed-size, and
    results are assembled in trajectory order.
    """
    if kind not in KINDS:
        raise UnsupportedKind(f"unknown sampler kind {kind!r}")
    if n < 1:
        raise ValueError("trajectory count must be >= 1")
    spans = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    if jobs > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(
                _simulate_chunk,
                *zip(*[(kind, s, model, seed, lo, hi) for lo, hi in spans]),
            ))
    else:
        parts = [_simulate_chunk(kind, s, model, seed, lo, hi) for lo, hi in spans]
    y1 = np.vstack([p[0] for p in parts])
    clip_total = sum(p[1] for p in parts)
    return TrajectoryBatch(n=n, d=s.d, y1=y1, clip_activations=clip_total,
                           rng_seed=seed)
