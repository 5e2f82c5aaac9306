from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sinn import fft as sfft
from sinn import stats
from sinn.ensemble import Ensemble
from sinn.errors import DegenerateError, InsufficientDataError, ParameterError, ShapeError
from sinn.sde import OU, DoubleWell, simulate


# ---------------------------------------------------------------- fft


@pytest.mark.parametrize("n", [1, 2, 8, 64, 1024])
def test_fft_matches_numpy(n, rng):
    x = rng.normal(size=(3, n)) + 1j * rng.normal(size=(3, n))
    assert np.allclose(sfft.fft(x), np.fft.fft(x, axis=-1), atol=1e-10)
    assert np.allclose(sfft.ifft(sfft.fft(x)), x, atol=1e-12)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ParameterError):
        sfft.fft(np.zeros(6))


def test_next_pow_two():
    assert [sfft.next_pow_two(n) for n in (1, 2, 3, 5, 1024, 1025)] == [1, 2, 4, 8, 1024, 2048]


# ---------------------------------------------------------------- acf


def test_alternating_sequence():
    c = stats.acf_brute(Ensemble(np.array([[1.0, -1.0, 1.0, -1.0]]), 1.0), 2)
    assert c.values[0] == 1.0
    assert c.values[1] == pytest.approx(-1.0)
    assert c.values[2] == pytest.approx(1.0)


@pytest.mark.parametrize("method", ["brute", "fft"])
def test_constant_signal_is_degenerate(method):
    with pytest.raises(DegenerateError):
        stats.acf(Ensemble(np.full((1, 4), 3.0), 1.0), 2, method)


@pytest.mark.parametrize("method", ["brute", "fft"])
def test_too_short_series(method):
    with pytest.raises(InsufficientDataError):
        stats.acf(Ensemble(np.array([[1.0]]), 1.0), 0, method)


def test_max_lag_must_fit():
    with pytest.raises(ParameterError):
        stats.acf_brute(Ensemble(np.arange(5.0)[None], 1.0), 5)


def test_cosine_period_sixteen():
    t = np.arange(128)
    c = stats.acf_fft(Ensemble(np.cos(2 * np.pi * t / 16)[None], 1.0), 64)
    assert c.values[16] == pytest.approx(1.0, abs=1e-6)


def test_fft_matches_brute_random_ensemble(rng):
    e = Ensemble(rng.normal(size=(5, 128, 1)), 0.1)
    a, b = stats.acf_brute(e, 64), stats.acf_fft(e, 64)
    assert np.allclose(a.values, b.values, rtol=1e-10, atol=0)


@given(
    st.integers(1, 4),
    st.integers(2, 300),
    st.integers(0, 2**32 - 1),
    st.booleans(),
)
@settings(max_examples=60, deadline=None)
def test_fft_equals_brute_property(batch, n, seed, squared):
    x = np.random.default_rng(seed).standard_t(3, size=(batch, n, 1))
    e = Ensemble(x, 1.0)
    lag = n - 1
    a = stats.acf_brute(e, lag, squared=squared)
    b = stats.acf_fft(e, lag, squared=squared)
    assert np.allclose(a.values, b.values, rtol=1e-10, atol=1e-12)


@given(arrays(np.float64, (3, 64), elements=st.integers(-1000, 1000).map(lambda k: k / 10)))
@settings(max_examples=40, deadline=None)
def test_acf_bounded_for_short_lags(x):
    if np.ptp(x) == 0:
        return
    c = stats.acf_brute(Ensemble(x, 1.0), 32)
    assert c.values[0] == pytest.approx(1.0)
    assert np.all(np.abs(c.values) <= 1 + 1e-9)


def test_ou_acf_at_unit_time():
    e = simulate(OU(1.0, 0.5), 1e-2, 201, 5000, seed=1, burn_in=0, stride=10)
    c = stats.acf_fft(e, 10)
    assert abs(c.values[10] - np.exp(-1)) < 0.02


def test_squared_acf_uses_squared_series(rng):
    x = rng.normal(size=(2, 50, 1))
    assert stats.acf_brute(Ensemble(x, 1.0), 5, squared=True) == stats.acf_brute(Ensemble(x**2, 1.0), 5)


def test_component_selection(rng):
    x = rng.normal(size=(2, 40, 2))
    assert stats.acf_brute(Ensemble(x, 1.0), 3, component=1) == stats.acf_brute(Ensemble(x[:, :, 1:], 1.0), 3)


def test_acf_csv_round_trip(rng):
    c = stats.acf_fft(Ensemble(rng.normal(size=(2, 64)), 0.2), 20)
    again = stats.AcfCurve.from_csv(c.to_csv())
    assert again == c
    assert c.to_csv().splitlines()[1] == "lag_time,value"


# ---------------------------------------------------------------- kde


def test_single_sample_kernel_value():
    p = stats.kde(np.array([0.0]), np.array([0.0]))
    assert p.bandwidth == 1.0
    assert p.density[0] == pytest.approx(1 / np.sqrt(2 * np.pi))


def test_kde_standard_normal():
    x = np.random.default_rng(0).standard_normal(10**6)
    grid = np.linspace(-5, 5, 201)
    p = stats.kde(x, grid)
    exact = np.exp(-grid**2 / 2) / np.sqrt(2 * np.pi)
    assert np.max(np.abs(p.density - exact)) < 0.01
    assert 0.95 <= p.integral() <= 1.01


def test_kde_symmetry_and_permutation(rng):
    x = rng.normal(size=200)
    x = np.concatenate([x, -x])
    grid = np.linspace(-3, 3, 31)
    p = stats.kde(x, grid).density
    assert np.allclose(p, p[::-1], atol=1e-15)
    q = stats.kde(rng.permutation(x), grid).density
    assert np.allclose(p, q, rtol=1e-13)
    assert np.all(p >= 0)


def test_kde_empty_samples():
    with pytest.raises(ParameterError):
        stats.kde(np.array([]), np.array([0.0]))


def test_kde_grid_spans_three_bandwidths(rng):
    x = rng.normal(size=1000)
    h = stats.kde_bandwidth(x.size)
    g = stats.kde_grid(x, h)
    assert g.size == 100
    assert g[0] == pytest.approx(x.min() - 3 * h) and g[-1] == pytest.approx(x.max() + 3 * h)


def test_kde_chunking_invariant(rng):
    x = rng.normal(size=5000)
    grid = np.linspace(-4, 4, 50)
    h = stats.kde_bandwidth(x.size)
    a = stats.kde_density(x, grid, h, chunk_elems=100)
    b = stats.kde_density(x, grid, h)
    assert np.allclose(a, b, rtol=1e-12)


def test_smoothed_gaussian_matches_kde_of_gaussian():
    x = np.random.default_rng(1).normal(0.0, 0.5, 400_000)
    h = stats.kde_bandwidth(x.size)
    grid = np.linspace(-2, 2, 41)
    emp = stats.kde_density(x, grid, h)
    assert np.max(np.abs(emp - stats.smoothed_gaussian_pdf(grid, 0.0, 0.25, h))) < 0.01


def test_pdf_csv_round_trip(rng):
    x = rng.normal(size=300)
    p = stats.kde(x, stats.kde_grid(x, stats.kde_bandwidth(300)))
    assert stats.PdfEstimate.from_csv(p.to_csv()) == p


# ---------------------------------------------------------------- losses


def test_loss_examples():
    t = np.linspace(0, 1, 7)
    assert stats.loss_acf(t, t) == 0.0
    assert stats.loss_acf(t + 0.1, t) == pytest.approx(0.11)
    assert stats.loss_acf(np.array([0.3]), np.array([0.5])) == pytest.approx(0.24)
    assert stats.loss_pdf(t + 0.05, t) == pytest.approx(0.0525)
    assert stats.loss_pdf(np.array([0.1, -0.1]), np.zeros(2)) == pytest.approx(0.11)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        stats.loss_acf(np.zeros(3), np.zeros(4))
    with pytest.raises(ShapeError):
        stats.loss_pdf(np.zeros(3), np.zeros(2))


@given(arrays(np.float64, 10, elements=st.floats(-5, 5)), arrays(np.float64, 10, elements=st.floats(-5, 5)))
@settings(max_examples=50, deadline=None)
def test_losses_nonnegative_zero_iff_equal(a, b):
    la = stats.loss_acf(a, b)
    assert la >= 0
    assert (la == 0) == np.array_equal(a, b)


def test_pdf_l1_distance():
    g = np.linspace(0, 1, 11)
    assert stats.pdf_l1_distance(g, np.ones(11), np.zeros(11)) == pytest.approx(1.0)


# ---------------------------------------------------------------- transitions


def test_transition_correlation_examples():
    c = stats.transition_correlation(Ensemble(np.array([[-1.0, 1.0]]), 1.0), 1)
    assert c.values[0] == 0.0
    assert c.values[1] == 1.0


def test_transition_requires_a_visits():
    with pytest.raises(DegenerateError):
        stats.transition_correlation(Ensemble(np.ones((3, 10)), 1.0), 5)


def test_transition_values_are_probabilities(rng):
    x = np.cumsum(rng.normal(size=(10, 300)), axis=1)
    c = stats.transition_correlation(Ensemble(x - x.mean(), 1.0), 100)
    assert np.all((c.values >= 0) & (c.values <= 1))
    assert c.values[0] == 0.0


def test_transition_symmetric_long_time_limit():
    e = simulate(DoubleWell(2.0, 1.0), 1e-2, 600, 300, seed=5, burn_in=500, stride=20)
    c = stats.transition_correlation(e, 500)
    assert abs(c.values[-50:].mean() - 0.5) < 0.05


def test_transition_csv_round_trip(rng):
    x = rng.normal(size=(4, 50))
    c = stats.transition_correlation(Ensemble(x, 0.2), 20)
    again = stats.TransitionCurve.from_csv(c.to_csv())
    assert np.array_equal(again.values, c.values) and np.array_equal(again.lags, c.lags)


def test_rate_exact_line():
    t = np.arange(0, 61) * 0.5
    fit = stats.transition_rate(0.003 * t, dt=0.5, window=(25, 50))
    assert fit.k_ab == pytest.approx(0.003)
    assert fit.r2 == pytest.approx(1.0)
    assert not fit.degenerate


def test_rate_constant_curve_is_degenerate():
    fit = stats.transition_rate(np.full(100, 0.2), dt=1.0, window=(25, 50))
    assert fit.k_ab == 0.0 and fit.r2 == 0.0 and fit.degenerate


def test_rate_window_needs_two_points():
    with pytest.raises(ParameterError):
        stats.transition_rate(np.zeros(10), dt=1.0, window=(25, 50))
