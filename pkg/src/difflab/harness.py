"""Experiment orchestration: sweeps, CSV persistence, and rate fitting.

A sweep iterates the grid (sampler, horizon, score-error level) in a fixed
order.  Gaussian targets get exact distribution propagation (and its
closed-form divergences); mixture targets and error-injected cells get
Monte Carlo batches plus empirical metrics.  Rows are appended to the CSV
as soon as all earlier rows are written (crash-safe, deterministic order
even with parallel cells), and log-log slopes are fitted per sampler over
zero-error cells at the end.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from . import analytic, metrics, targets
from .errors import (
    ConfigInvalid,
    InsufficientPoints,
    NonpositiveValue,
    ScheduleDegenerate,
)
from .samplers import KINDS, run_batch
from .schedule import (
    DEFAULT_C0,
    DEFAULT_C1,
    DEFAULT_C_CLIP,
    ScheduleParams,
    build_schedule,
)
from .score_oracle import ScoreModel
from .targets import GaussianMixture

CSV_HEADER = ("sampler,T,d,eps_score,kl_analytic,tv_bound,"
              "sliced_tv,moment_kl,clip_rate,seed,wallclock_ms")

_RELATIVE_MC_SAMPLES = 4096


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    r2: float


def fit_slope(points) -> SlopeFit:
    """Ordinary least squares of log(value) on log(T).

    Needs at least three points with positive values.  Constant values fit
    slope 0 with R^2 defined as 0 (never NaN).
    """
    points = list(points)
    if len(points) < 3:
        raise InsufficientPoints(f"slope fit needs >= 3 points, got {len(points)}")
    t_vals = np.array([float(t) for t, _ in points])
    values = np.array([float(v) for _, v in points])
    if np.any(values <= 0):
        raise NonpositiveValue("all values must be positive for a log-log fit")
    x = np.log(t_vals)
    y = np.log(values)
    x_c = x - x.mean()
    sxx = float(np.sum(x_c**2))
    slope = float(np.sum(x_c * y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - y.mean()) ** 2))
    dof = len(points) - 2
    stderr = math.sqrt(ssr / dof / sxx) if dof > 0 else 0.0
    r2 = 0.0 if sst == 0.0 else 1.0 - ssr / sst
    return SlopeFit(slope=slope, stderr=stderr, r2=r2)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated sweep description; see README for the JSON schema."""

    target_path: str
    T_grid: tuple[int, ...]
    samplers: tuple[str, ...]
    n: int
    out: str
    c0: float = DEFAULT_C0
    c1: float = DEFAULT_C1
    c_clip: float = DEFAULT_C_CLIP
    score: dict = field(default_factory=lambda: {"mode": "exact"})
    n_dirs: int = 32
    seed: int = 0
    mc: bool | None = None  # None = auto: mixtures and error-injected cells

    def __post_init__(self):
        grid = tuple(int(t) for t in self.T_grid)
        object.__setattr__(self, "T_grid", grid)
        object.__setattr__(self, "samplers", tuple(self.samplers))
        if len(grid) < 1 or any(t < 4 for t in grid):
            raise ConfigInvalid("T_grid entries must be >= 4")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigInvalid("T_grid must be strictly increasing")
        if self.n < 1:
            raise ConfigInvalid("n must be >= 1")
        for kind in self.samplers:
            if kind not in KINDS:
                raise ConfigInvalid(f"unknown sampler {kind!r}")
        if self.score.get("mode", "exact") not in ("exact", "offset", "relative"):
            raise ConfigInvalid(f"unknown score mode {self.score.get('mode')!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            sched = raw.get("schedule", {})
            return cls(
                target_path=raw["target"],
                T_grid=tuple(raw["T_grid"]),
                samplers=tuple(raw["samplers"]),
                n=int(raw["n"]),
                out=raw["out"],
                c0=float(sched.get("c0", DEFAULT_C0)),
                c1=float(sched.get("c1", DEFAULT_C1)),
                c_clip=float(sched.get("cclip", DEFAULT_C_CLIP)),
                score=raw.get("score", {"mode": "exact"}),
                n_dirs=int(raw.get("n_dirs", 32)),
                seed=int(raw.get("seed", 0)),
                mc=raw.get("mc"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad sweep config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path!r}: {exc}") from exc
        return cls.from_dict(raw)


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[dict, ...]
    slopes: dict
    out: str


def _score_cells(score_cfg: dict) -> list[dict]:
    """Expand the score config into per-cell fragments (a list means a grid)."""
    mode = score_cfg.get("mode", "exact")
    if mode == "exact":
        return [{"mode": "exact"}]
    key = "delta" if mode == "offset" else "rho"
    value = score_cfg[key]
    levels = value if isinstance(value, (list, tuple)) else [value]
    return [{"mode": mode, key: float(v)} for v in levels]


def _cell_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _run_cell(target: GaussianMixture, cfg: ExperimentConfig, index: int,
              kind: str, T: int, score_cfg: dict) -> dict:
    start = time.perf_counter()
    seed = _cell_seed(cfg.seed, index)
    row = {"sampler": kind, "T": T, "d": target.d, "eps_score": None,
           "kl_analytic": None, "tv_bound": None, "sliced_tv": None,
           "moment_kl": None, "clip_rate": None, "seed": seed,
           "wallclock_ms": None, "error": None}
    try:
        params = ScheduleParams(T=T, c0=cfg.c0, c1=cfg.c1, c_clip=cfg.c_clip,
                                d=target.d)
        schedule = build_schedule(params)
    except ScheduleDegenerate as exc:
        row["error"] = str(exc)
        row["wallclock_ms"] = (time.perf_counter() - start) * 1e3
        return row

    model = ScoreModel.from_config(target, schedule, score_cfg)
    if model.mode == "relative":
        eps_stream = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        eps = model.eps_score(_RELATIVE_MC_SAMPLES, eps_stream).eps_score
    else:
        eps = model.eps_score().eps_score
    row["eps_score"] = eps

    is_gaussian = target.K == 1
    if is_gaussian and model.mode == "exact":
        law_target = analytic.target_law(target)
        analytic_kind = "accelerated_noclip" if kind == "accelerated" else kind
        p_x1 = analytic.forward_law(law_target, schedule, 1)
        p_y1 = analytic.propagate(schedule, law_target, analytic_kind)
        row["kl_analytic"] = analytic.gaussian_kl(p_x1, p_y1)
        row["tv_bound"] = analytic.gaussian_tv_bound(p_x1, p_y1)

    want_mc = cfg.mc if cfg.mc is not None else (not is_gaussian or model.mode != "exact")
    if want_mc:
        batch = run_batch(kind, schedule, model, cfg.n, seed)
        law_1 = targets.forward_marginal(target, schedule, 1)
        dir_stream = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        mean_tv, _ = metrics.sliced_tv(batch, law_1, cfg.n_dirs, dir_stream)
        row["sliced_tv"] = mean_tv
        row["moment_kl"] = metrics.moment_kl(batch, law_1)
        row["clip_rate"] = batch.clip_activations / (cfg.n * (T - 1))
    row["wallclock_ms"] = (time.perf_counter() - start) * 1e3
    return row


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _row_line(row: dict) -> str:
    fields = ["sampler", "T", "d", "eps_score", "kl_analytic", "tv_bound",
              "sliced_tv", "moment_kl", "clip_rate", "seed", "wallclock_ms"]
    return ",".join(_format_value(row[f]) for f in fields)


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepReport:
    """Execute the full grid, stream rows to the CSV, and fit slopes.

    A degenerate schedule fails its cell (empty metric fields plus a
    comment line), not the sweep.  Rows are written in grid order no
    matter which cells finish first.
    """
    target = targets.load_target(cfg.target_path)
    for T in cfg.T_grid:
        if not targets.check_second_moment(target, T):
            raise ConfigInvalid("target second moment exceeds the horizon bound")

    cells = [(kind, T, sc) for kind in cfg.samplers for T in cfg.T_grid
             for sc in _score_cells(cfg.score)]
    rows: list[dict | None] = [None] * len(cells)

    with open(cfg.out, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.flush()
        written = 0

        def flush_ready():
            nonlocal written
            while written < len(cells) and rows[written] is not None:
                row = rows[written]
                fh.write(_row_line(row) + "\n")
                if row["error"] is not None:
                    fh.write(f"# cell_failed,{row['sampler']},{row['T']},{row['error']}\n")
                fh.flush()
                written += 1

        if jobs > 1 and len(cells) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                pending = {
                    pool.submit(_run_cell, target, cfg, i, *cell): i
                    for i, cell in enumerate(cells)
                }
                while pending:
                    done, _ = wait(pending, return_when=FIRST_COMPLETED)
                    for fut in done:
                        rows[pending.pop(fut)] = fut.result()
                    flush_ready()
        else:
            for i, cell in enumerate(cells):
                rows[i] = _run_cell(target, cfg, i, *cell)
                flush_ready()

        slopes = {}
        for kind in cfg.samplers:
            points = []
            for row in rows:
                if row["sampler"] != kind or row["error"] is not None:
                    continue
                if row["eps_score"] is None or row["eps_score"] != 0.0:
                    continue
                value = next((row[k] for k in ("kl_analytic", "moment_kl", "sliced_tv")
                              if row[k] is not None), None)
                if value is not None and value > 0:
                    points.append((row["T"], value))
            if len(points) >= 3:
                fit = fit_slope(points)
                slopes[kind] = fit
                fh.write(f"# slope,{kind},{_format_value(fit.slope)},"
                         f"{_format_value(fit.stderr)},{_format_value(fit.r2)}\n")
        fh.flush()

    return SweepReport(rows=tuple(rows), slopes=slopes, out=cfg.out)


def default_jobs() -> int:
    """Worker count fallback from the DIFFLAB_JOBS environment variable."""
    raw = os.environ.get("DIFFLAB_JOBS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
