"""Empirical distance estimators between sampler output and analytic laws.

Exact high-dimensional total variation is intractable, so the primary
surrogate is sliced: project onto random unit directions and take the
Kolmogorov sup-distance between the empirical CDF of the projections and
the analytic projected CDF.  Each 1-D distance lower-bounds the total
variation of the projected pair, so the surrogate can only under-report.

The secondary metric fits a Gaussian to the batch by moment matching and
takes the closed-form divergence against the (moment-matched) analytic
law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import targets
from .analytic import GaussianLaw, gaussian_kl
from .errors import DegenerateCovariance, TooFewSamples
from .targets import MarginalLaw

_MIN_SAMPLES = 1000


@dataclass(frozen=True)
class MetricReport:
    sliced_tv: float
    moment_kl: float
    per_direction: tuple[tuple[np.ndarray, float], ...]
    n: int
    n_dirs: int


def _batch_array(batch) -> np.ndarray:
    return batch.y1 if hasattr(batch, "y1") else np.asarray(batch, dtype=float)


def random_directions(d: int, n_dirs: int, stream: np.random.Generator) -> np.ndarray:
    """Uniform unit vectors via normalized Gaussian draws."""
    raw = stream.standard_normal((n_dirs, d))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def sliced_tv(batch, law: MarginalLaw, n_dirs: int = 32,
              stream: np.random.Generator | None = None,
              directions: np.ndarray | None = None):
    """Mean 1-D Kolmogorov distance over random projections.

    For each direction u, computes the sup over sorted sample points of the
    gap between the empirical CDF of u'Y and the analytic projected CDF.
    Returns (mean, per_direction list of (direction, distance)).
    """
    y = _batch_array(batch)
    n = y.shape[0]
    if n < _MIN_SAMPLES:
        raise TooFewSamples(f"sliced distance needs >= {_MIN_SAMPLES} samples, got {n}")
    if directions is None:
        if stream is None:
            raise ValueError("provide either a stream or explicit directions")
        directions = random_directions(y.shape[1], n_dirs, stream)
    grid_lo = np.arange(n) / n
    grid_hi = np.arange(1, n + 1) / n
    per_direction = []
    for u in directions:
        proj = np.sort(y @ u)
        cdf = targets.projected_cdf(law, u, proj)
        dist = float(np.max(np.maximum(cdf - grid_lo, grid_hi - cdf)))
        per_direction.append((u, dist))
    mean = float(np.mean([d for _, d in per_direction]))
    return mean, per_direction


def fit_gaussian(batch) -> GaussianLaw:
    """Moment-matched Gaussian of a batch (sample mean, sample covariance)."""
    y = _batch_array(batch)
    n, d = y.shape
    if n <= d + 1:
        raise TooFewSamples(f"need more than d + 1 = {d + 1} samples, got {n}")
    mean = y.mean(axis=0)
    cov = np.cov(y, rowvar=False, ddof=1).reshape(d, d)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance(f"sample covariance not positive-definite: {exc}") from exc
    return GaussianLaw(mean=mean, cov=0.5 * (cov + cov.T))


def law_moments(law) -> GaussianLaw:
    """Moment-matched Gaussian of an analytic law (mixture or Gaussian)."""
    if isinstance(law, GaussianLaw):
        return law
    mix = law.mixture if isinstance(law, MarginalLaw) else law
    mean, cov = mix.moments()
    return GaussianLaw(mean=mean, cov=cov)


def moment_kl(batch, law) -> float:
    """Divergence from the analytic law to the batch's fitted Gaussian.

    For a Gaussian law this is exact up to the moment estimation error;
    for a mixture law both sides are moment-matched Gaussians first.
    """
    fitted = fit_gaussian(batch)
    return gaussian_kl(law_moments(law), fitted)


def full_report(batch, law: MarginalLaw, n_dirs: int,
                stream: np.random.Generator) -> MetricReport:
    mean_tv, per_direction = sliced_tv(batch, law, n_dirs, stream)
    y = _batch_array(batch)
    return MetricReport(
        sliced_tv=mean_tv,
        moment_kl=moment_kl(batch, law),
        per_direction=tuple(per_direction),
        n=y.shape[0],
        n_dirs=len(per_direction),
    )
