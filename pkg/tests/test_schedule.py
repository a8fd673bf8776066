import math

import numpy as np
import pytest

from difflab import ScheduleParams, build_schedule, clip, schedule_lemma_checks
from difflab.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidParams,
    ScheduleDegenerate,
)
from difflab.schedule import LemmaCheck, Schedule


def test_terminal_value_pinned():
    s = build_schedule(ScheduleParams(T=10, c0=2.0, c1=1.0, c_clip=1.0, d=1))
    assert s.alpha_bar_at(10) == 10.0 ** -2.0


def test_one_recursion_step_by_hand():
    s = build_schedule(ScheduleParams(T=10, c0=2.0, c1=1.0, c_clip=1.0, d=1))
    expected = 0.01 + (math.log(10.0) / 10.0) * 0.01 * 0.99
    assert abs(s.alpha_bar_at(9) - expected) < 1e-16
    assert abs(expected - 0.01227956) < 5e-9


def test_sigma_closed_forms_agree():
    # alpha = 0.99: (1-a)(2a-1)/(3-2a) = 0.01*0.98/1.02
    direct = 0.99 - 1.0 / (3.0 - 2.0 * 0.99)
    factored = 0.01 * 0.98 / 1.02
    assert abs(direct - factored) / factored < 1e-12
    assert abs(direct - 0.0096078) < 5e-8

    s = build_schedule(ScheduleParams(T=64, c0=4.0, c1=4.0, c_clip=2.0, d=2))
    a = s.alpha[1:]
    factored = (1.0 - a) * (2.0 * a - 1.0) / (3.0 - 2.0 * a)
    assert np.max(np.abs(s.sigma**2 - factored) / factored) < 1e-12


@pytest.mark.parametrize("T", [2, 16, 64, 256])
def test_monotone_and_consistent(T):
    s = build_schedule(ScheduleParams(T=T, c0=2.0, c1=1.0, c_clip=2.0, d=3))
    abar = s.alpha_bar
    assert np.all(abar > 0) and np.all(abar < 1)
    assert np.all(np.diff(abar) < 0)  # strictly decreasing in t
    assert np.all(s.alpha[1:] > 0.5) and np.all(s.alpha[1:] < 1)
    # product of per-step rates reproduces the cumulative rate
    prod = np.cumprod(s.alpha)
    assert np.max(np.abs(prod - abar) / abar) < 1e-10
    assert np.all(s.sigma > 0)
    assert np.all(s.clip_radius > 0)


def test_invalid_params_rejected():
    with pytest.raises(InvalidParams):
        ScheduleParams(T=1, c0=1.0, c1=1.0, c_clip=1.0, d=1)
    with pytest.raises(InvalidParams):
        ScheduleParams(T=8, c0=0.0, c1=1.0, c_clip=1.0, d=1)
    with pytest.raises(InvalidParams):
        ScheduleParams(T=8, c0=1.0, c1=-2.0, c_clip=1.0, d=1)
    with pytest.raises(InvalidParams):
        ScheduleParams(T=8, c0=1.0, c1=1.0, c_clip=1.0, d=0)


def test_degenerate_schedule_rejected():
    # c1 * log(8) / 8 > 1 drives per-step rates to 1/2 or below
    with pytest.raises(ScheduleDegenerate):
        build_schedule(ScheduleParams(T=8, c0=4.0, c1=4.0, c_clip=2.0, d=1))


def test_lemma_checks_pass_at_large_ratio():
    # all four inequalities hold when c1/c0 is comfortably large
    for T in [16, 64, 256, 512]:
        s = build_schedule(ScheduleParams(T=T, c0=1.0, c1=2.0, c_clip=2.0, d=1))
        rep = schedule_lemma_checks(s)
        assert rep.all_passed, [(c.name, c.margin) for c in rep.checks]


def test_lemma_check_detects_violation():
    s = build_schedule(ScheduleParams(T=32, c0=1.0, c1=2.0, c_clip=2.0, d=1))
    rate = s.params.step_rate
    alpha = s.alpha.copy()
    alpha[1] = 1.0 - 2.0 * rate  # overwrite the t=2 rate
    broken = Schedule(params=s.params, alpha_bar=s.alpha_bar.copy(), alpha=alpha,
                      sigma=s.sigma.copy(), clip_radius=s.clip_radius.copy())
    rep = schedule_lemma_checks(broken)
    check = rep["one_minus_alpha_le_rate"]
    assert not check.passed
    assert abs(check.margin - rate) < 1e-12


def test_lemma_report_minimal_horizon():
    s = build_schedule(ScheduleParams(T=2, c0=1.0, c1=0.5, c_clip=1.0, d=1))
    rep = schedule_lemma_checks(s)
    for name in ("one_minus_alpha_le_rate", "relative_step_le_rate",
                 "tail_ratio_le_one_plus_2rate"):
        assert rep[name].per_step.shape == (1,)  # single t-indexed row (t=2)
    assert rep["first_step_rate_bound"].per_step.shape == (0,)
    assert isinstance(rep["first_step_rate_bound"], LemmaCheck)


def test_clip_semantics():
    s = build_schedule(ScheduleParams(T=16, c0=2.0, c1=1.0, c_clip=1.0, d=3))
    t = 5
    r = s.clip_radius_at(t)
    zero = np.zeros(3)
    assert np.array_equal(clip(s, t, zero), zero)

    x = np.array([1.0, 1.0, 1.0])
    over = x * (2.0 * r / np.linalg.norm(x))
    assert np.array_equal(clip(s, t, over), zero)

    under = x * (0.5 * r / np.linalg.norm(x))
    assert np.array_equal(clip(s, t, under), under)


def test_clip_idempotent_on_random_vectors():
    s = build_schedule(ScheduleParams(T=16, c0=2.0, c1=1.0, c_clip=0.05, d=4))
    rng = np.random.default_rng(20240817)
    for _ in range(200):
        t = int(rng.integers(2, 17))
        x = rng.standard_normal(4) * rng.uniform(0.0, 5.0)
        once = clip(s, t, x)
        assert np.array_equal(clip(s, t, once), once)


def test_clip_errors():
    s = build_schedule(ScheduleParams(T=16, c0=2.0, c1=1.0, c_clip=1.0, d=2))
    with pytest.raises(IndexOutOfRange):
        clip(s, 1, np.zeros(2))
    with pytest.raises(IndexOutOfRange):
        clip(s, 17, np.zeros(2))
    with pytest.raises(DimensionMismatch):
        clip(s, 2, np.zeros(3))


def test_accessors_guard_range():
    s = build_schedule(ScheduleParams(T=4, c0=1.0, c1=0.5, c_clip=1.0, d=1))
    with pytest.raises(IndexOutOfRange):
        s.sigma_at(1)
    with pytest.raises(IndexOutOfRange):
        s.alpha_at(0)
    with pytest.raises(IndexOutOfRange):
        s.alpha_bar_at(5)
