"""Gaussian-mixture targets, their noised marginals, densities, and scores.

A mixture target is the one family for which every noised marginal stays in
closed form: scaling the data by sqrt(abar_t) and adding (1 - abar_t) units
of isotropic noise maps component (w, mu, Sigma) to

    (w, sqrt(abar_t) * mu, abar_t * Sigma + (1 - abar_t) * I).

That gives exact log-densities, exact scores (the gradient of the log
density), and exact 1-D projected CDFs, which is what makes oracle-grade
verification of the samplers possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp, ndtr

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidParams,
    NotUnitVector,
    TargetLoadFailed,
)
from .schedule import Schedule

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixture:
    """Weights, means, and covariances of a finite Gaussian mixture.

    Weights must be positive and sum to 1 within 1e-12; every covariance
    must admit a Cholesky factorization.  Factors are cached on
    construction so score evaluation is O(K * d^2) per point.
    """

    weights: np.ndarray   # (K,)
    means: np.ndarray     # (K, d)
    covariances: np.ndarray  # (K, d, d)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covariances, dtype=float)
        if c.ndim == 2:
            c = c[None, :, :]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariances", c)

        k, d = m.shape
        if w.shape != (k,) or c.shape != (k, d, d):
            raise InvalidParams(
                f"inconsistent mixture shapes: weights {w.shape}, means {m.shape}, covs {c.shape}"
            )
        if np.any(w <= 0):
            raise InvalidParams("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParams(f"mixture weights sum to {w.sum()!r}, not 1")
        if np.max(np.abs(c - np.transpose(c, (0, 2, 1)))) > 1e-12:
            raise InvalidParams("covariances must be symmetric")
        try:
            chols = np.stack([cholesky(c[i], lower=True) for i in range(k)])
        except np.linalg.LinAlgError as exc:
            raise InvalidParams(f"covariance not positive-definite: {exc}") from exc
        object.__setattr__(self, "_chols", chols)
        # log N(x; m, C) normalizer per component
        log_dets = 2.0 * np.log(np.abs(np.diagonal(chols, axis1=1, axis2=2))).sum(axis=1)
        object.__setattr__(self, "_log_norms", -0.5 * (d * _LOG_2PI + log_dets))
        arrs = (w, m, c, chols)
        for a in arrs:
            a.setflags(write=False)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def K(self) -> int:
        return self.means.shape[0]

    def second_moment(self) -> float:
        """E||X||^2 = sum_i w_i (tr Sigma_i + ||mu_i||^2)."""
        traces = np.trace(self.covariances, axis1=1, axis2=2)
        return float(np.sum(self.weights * (traces + np.sum(self.means**2, axis=1))))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Overall mean vector and covariance matrix of the mixture."""
        mean = self.weights @ self.means
        centered = self.means - mean
        cov = np.einsum("k,kij->ij", self.weights, self.covariances)
        cov = cov + np.einsum("k,ki,kj->ij", self.weights, centered, centered)
        return mean, cov


@dataclass(frozen=True)
class MarginalLaw:
    """The noised-data law at step t: a mixture with transformed components."""

    t: int
    mixture: GaussianMixture

    @property
    def d(self) -> int:
        return self.mixture.d


def gaussian_target(mean, cov) -> GaussianMixture:
    """Single-component mixture N(mean, cov)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(mean.size)
    return GaussianMixture(np.array([1.0]), mean[None, :], cov[None, :, :])


def standard_normal_target(d: int) -> GaussianMixture:
    return gaussian_target(np.zeros(d), np.eye(d))


def check_second_moment(target: GaussianMixture, T: int, c_r: float = 10.0) -> bool:
    """Sanity bound on the target's second moment against the horizon."""
    return target.second_moment() < float(T) ** c_r


def forward_marginal(target: GaussianMixture, s: Schedule, t: int) -> MarginalLaw:
    """Law of the noised data at step t (t = 0 returns the target itself)."""
    if not (0 <= t <= s.T):
        raise IndexOutOfRange(f"marginal step {t} outside [0, {s.T}]")
    if t == 0:
        return MarginalLaw(t=0, mixture=target)
    abar = s.alpha_bar_at(t)
    eye = np.eye(target.d)
    mixture = GaussianMixture(
        weights=target.weights.copy(),
        means=np.sqrt(abar) * target.means,
        covariances=abar * target.covariances + (1.0 - abar) * eye,
    )
    return MarginalLaw(t=t, mixture=mixture)


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise DimensionMismatch(f"expected vectors of dimension {d}, got shape {x.shape}")
    return x, single


def _component_log_pdfs(mix: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """log w_i + log N(x; m_i, C_i), shape (n, K)."""
    n = x.shape[0]
    out = np.empty((n, mix.K))
    for i in range(mix.K):
        diff = x - mix.means[i]
        sol = solve_triangular(mix._chols[i], diff.T, lower=True)
        maha = np.sum(sol**2, axis=0)
        out[:, i] = np.log(mix.weights[i]) + mix._log_norms[i] - 0.5 * maha
    return out


def log_density(law: MarginalLaw | GaussianMixture, x):
    """Mixture log-density via log-sum-exp; finite for all finite x."""
    mix = law.mixture if isinstance(law, MarginalLaw) else law
    xb, single = _as_batch(x, mix.d)
    values = logsumexp(_component_log_pdfs(mix, xb), axis=1)
    return float(values[0]) if single else values


def score(law: MarginalLaw | GaussianMixture, x):
    """Gradient of the mixture log-density at x.

    Posterior responsibilities are formed in log-space; components that
    underflow contribute exactly zero weight.
    """
    mix = law.mixture if isinstance(law, MarginalLaw) else law
    xb, single = _as_batch(x, mix.d)
    log_pdfs = _component_log_pdfs(mix, xb)
    log_total = logsumexp(log_pdfs, axis=1, keepdims=True)
    resp = np.exp(log_pdfs - log_total)  # (n, K)
    out = np.zeros_like(xb)
    for i in range(mix.K):
        diff = xb - mix.means[i]
        grad_i = -cho_solve((mix._chols[i], True), diff.T).T
        out += resp[:, i:i + 1] * grad_i
    return out[0] if single else out


def sample(law: MarginalLaw | GaussianMixture, n: int, stream: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from the mixture; reproducible given the stream."""
    mix = law.mixture if isinstance(law, MarginalLaw) else law
    comp = stream.choice(mix.K, size=n, p=mix.weights)
    z = stream.standard_normal((n, mix.d))
    out = mix.means[comp] + np.einsum("nij,nj->ni", mix._chols[comp], z)
    return out


def sample_target(target: GaussianMixture, n: int, stream: np.random.Generator) -> np.ndarray:
    return sample(target, n, stream)


def sample_forward(target: GaussianMixture, s: Schedule, t: int, n: int,
                   stream: np.random.Generator) -> np.ndarray:
    """Draws from the step-t marginal via the one-shot noising identity."""
    return sample(forward_marginal(target, s, t), n, stream)


def projected_cdf(law: MarginalLaw | GaussianMixture, direction: np.ndarray, q):
    """CDF at q of the 1-D law of <direction, X> for X from the mixture.

    The projection of a mixture is the 1-D mixture of N(u'm_i, u'C_i u);
    its CDF is a weighted sum of Gaussian error functions.
    """
    mix = law.mixture if isinstance(law, MarginalLaw) else law
    u = np.asarray(direction, dtype=float)
    if u.shape != (mix.d,):
        raise DimensionMismatch(f"direction must have dimension {mix.d}, got shape {u.shape}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise NotUnitVector(f"direction norm {np.linalg.norm(u)!r} != 1")
    proj_means = mix.means @ u
    proj_sds = np.sqrt(np.einsum("i,kij,j->k", u, mix.covariances, u))
    q_arr = np.asarray(q, dtype=float)
    scalar = q_arr.ndim == 0
    z = (np.atleast_1d(q_arr)[:, None] - proj_means) / proj_sds
    values = ndtr(z) @ mix.weights
    return values.item() if scalar else values


def load_target(path: str) -> GaussianMixture:
    """Load a mixture from a JSON target file.

    Schema: {"d": int, "components": [{"weight": f, "mean": [f...],
    "cov": [[f...]...]}]}; "cov_scale": f is shorthand for scale * I.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise TargetLoadFailed(f"cannot read target file {path!r}: {exc}") from exc
    try:
        d = int(raw["d"])
        comps = raw["components"]
        weights = np.array([c["weight"] for c in comps], dtype=float)
        means = np.array([c["mean"] for c in comps], dtype=float).reshape(len(comps), d)
        covs = []
        for c in comps:
            if "cov_scale" in c:
                covs.append(float(c["cov_scale"]) * np.eye(d))
            else:
                covs.append(np.asarray(c["cov"], dtype=float).reshape(d, d))
        return GaussianMixture(weights, means, np.stack(covs))
    except (KeyError, TypeError, ValueError, InvalidParams) as exc:
        raise TargetLoadFailed(f"malformed target file {path!r}: {exc}") from exc
