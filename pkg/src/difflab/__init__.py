"""difflab: a desk-scale laboratory for score-based diffusion samplers.

Builds step-size schedules, Gaussian-mixture score oracles, three reverse
samplers (a two-evaluation accelerated stochastic step, a plain stochastic
baseline, and a deterministic flow step), exact Gaussian law propagation,
and empirical distance metrics, plus a sweep harness that fits log-log
convergence slopes.
"""

from .analytic import (
    GaussianLaw,
    affine_step_coefficients,
    forward_law,
    gaussian_kl,
    gaussian_tv_bound,
    propagate,
    scalar_propagate,
    target_law,
)
from .harness import ExperimentConfig, SlopeFit, SweepReport, fit_slope, run_sweep
from .metrics import MetricReport, full_report, moment_kl, sliced_tv
from .samplers import (
    KINDS,
    TrajectoryBatch,
    accelerated_step,
    ddpm_step,
    ode_step,
    run_batch,
)
from .schedule import (
    CheckReport,
    Schedule,
    ScheduleParams,
    build_schedule,
    clip,
    schedule_lemma_checks,
)
from .score_oracle import EpsReport, ScoreModel
from .targets import (
    GaussianMixture,
    MarginalLaw,
    forward_marginal,
    gaussian_target,
    load_target,
    log_density,
    projected_cdf,
    sample_forward,
    sample_target,
    score,
    standard_normal_target,
)

__version__ = "0.1.0"

__all__ = [
    "CheckReport", "EpsReport", "ExperimentConfig", "GaussianLaw",
    "GaussianMixture", "KINDS", "MarginalLaw", "MetricReport", "Schedule",
    "ScheduleParams", "ScoreModel", "SlopeFit", "SweepReport",
    "TrajectoryBatch", "accelerated_step", "affine_step_coefficients",
    "build_schedule", "clip", "ddpm_step", "fit_slope", "forward_law",
    "forward_marginal", "full_report", "gaussian_kl", "gaussian_target",
    "gaussian_tv_bound", "load_target", "log_density", "moment_kl",
    "ode_step", "projected_cdf", "propagate", "run_batch", "run_sweep",
    "sample_forward", "sample_target", "scalar_propagate",
    "schedule_lemma_checks", "score", "sliced_tv", "standard_normal_target",
    "target_law",
]
