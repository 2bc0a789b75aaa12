import math

import numpy as np
import pytest

from kinkscope.core.analysis import (
    decay_rate,
    fit_power_law,
    fringe_spacing,
    ghz_metrics,
    mean_position,
    metrics_from_trace,
    outer_fringe_mass,
    peak_ratio,
    variance,
    variance_series,
    variance_slope,
    visibility_half_life,
)
from kinkscope.core.bound_states import inverse_decay_length
from kinkscope.core.open_dynamics import diffusion_oracle
from kinkscope.core.trace_buffer import ProbabilityTrace
from kinkscope.core.unitary import analytic_fringes, fringe_spacing_theory, second_peak_ratio

GAMMA0 = inverse_decay_length(0.15, 1.0)


def fringes(L, t=1000.0, m=4001):
    n0 = (m - 1) // 2 - L // 2
    return analytic_fringes(n0, L, GAMMA0, 1.0, t, m)


def test_moments():
    p = np.array([0.25, 0.5, 0.25])
    assert mean_position(p) == pytest.approx(1.0)
    assert variance(p) == pytest.approx(0.5)


def test_fringe_measures_on_analytic_pattern():
    p = fringes(100)
    assert fringe_spacing(p) == pytest.approx(fringe_spacing_theory(1.0, 1000.0, 100), rel=0.01)
    assert peak_ratio(p) == pytest.approx(second_peak_ratio(100, GAMMA0), rel=0.05)


def test_shorter_separation_has_less_outer_fringe_mass():
    assert outer_fringe_mass(fringes(50)) < outer_fringe_mass(fringes(100))


def test_diffusive_variance_slope():
    m, D = 801, 2.0
    p0 = np.zeros(m)
    p0[400] = 1.0
    times = np.linspace(10.0, 100.0, 10)
    trace = ProbabilityTrace(times, np.array([diffusion_oracle(p0, D, t) for t in times]))
    assert variance_slope(trace.times, variance_series(trace)) == pytest.approx(2.0 * D, rel=0.01)
    assert math.isnan(variance_slope([1.0], [3.0]))


def test_visibility_half_life_interpolates():
    assert visibility_half_life([0.0, 1.0, 2.0], [1.0, 0.6, 0.2]) == pytest.approx(1.25)
    assert visibility_half_life([0.0, 1.0], [0.4, 0.3]) == 0.0
    with pytest.raises(ValueError, match="never"):
        visibility_half_life([0.0, 1.0], [1.0, 0.9])


def test_power_law_fit():
    x = np.array([25.0, 50.0, 100.0])
    k, a = fit_power_law(x, 3.0 / x)
    assert k == pytest.approx(-1.0)
    assert a == pytest.approx(3.0)


def test_metrics_for_fringe_trace():
    p = fringes(100)
    trace = ProbabilityTrace([1000.0], [p])
    metrics = metrics_from_trace(trace)
    assert "l1_to_oracle" not in metrics
    assert metrics["t_final"] == 1000.0
    assert metrics["n_links"] == 4001.0
    assert metrics["visibility"] == pytest.approx(1.0, abs=1e-4)
    assert metrics["fringe_spacing"] == pytest.approx(125.66, rel=0.01)
    assert metrics["mirror_residual"] <= 1e-12
    assert metrics_from_trace(trace, trace)["l1_to_oracle"] == 0.0


def test_metrics_without_fringes_are_nan():
    n = np.arange(201)
    p = np.exp(-((n - 100.0) ** 2) / 200.0)
    metrics = metrics_from_trace(ProbabilityTrace([0.0], [p / p.sum()]))
    assert metrics["visibility"] == 0.0
    assert math.isnan(metrics["fringe_spacing"])
    assert math.isnan(metrics["peak_ratio"])
    assert math.isnan(metrics["variance_slope"])


def test_metrics_reject_mismatched_oracle():
    a = ProbabilityTrace([0.0], [[0.5, 0.5]])
    b = ProbabilityTrace([0.0], [[1.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="oracle"):
        metrics_from_trace(a, b)


def test_metrics_track_worst_time_against_oracle():
    a = ProbabilityTrace([0.0, 1.0], [[1.0, 0.0], [0.5, 0.5]])
    b = ProbabilityTrace([0.0, 1.0], [[0.0, 1.0], [0.5, 0.5]])
    metrics = metrics_from_trace(a, b)
    assert metrics["l1_to_oracle"] == 0.0
    assert metrics["max_l1_to_oracle"] == 2.0
    assert "max_l1_to_oracle" not in metrics_from_trace(a, ProbabilityTrace([0.0, 2.0], b.distributions))


def test_decay_rate_fit():
    t = np.linspace(0.0, 2.0, 9)
    assert decay_rate(t, 0.7 * np.exp(-1.5 * t)) == pytest.approx(1.5, rel=1e-12)
    assert decay_rate(t, np.ones_like(t)) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        decay_rate([0.0], [1.0])
    with pytest.raises(ValueError):
        decay_rate(t, np.exp(-t) - 0.5)


def test_ghz_metrics_compare_fitted_and_expected_rates():
    t = np.linspace(0.0, 1.0, 11)
    metrics = ghz_metrics(t, np.exp(-3.3 * t), np.exp(-3.0 * t))
    assert metrics["ghz_fitted_rate"] == pytest.approx(3.3)
    assert metrics["ghz_expected_rate"] == pytest.approx(3.0)
    assert metrics["ghz_relative_error"] == pytest.approx(0.1)
    flat = ghz_metrics(t, np.ones_like(t), np.ones_like(t))
    assert flat["ghz_relative_error"] == pytest.approx(0.0, abs=1e-14)
