from __future__ import annotations

import numpy as np
import pytest

from sinn import autodiff as ad
from sinn import stats
from sinn.ensemble import Ensemble
from sinn.errors import ParameterError, ShapeError
from sinn.objective import (
    ACF,
    ACF_SQUARED,
    PDF,
    GaussianPdfTarget,
    LossSpec,
    Target,
    evaluate_loss,
    ou_targets,
    taped_acf,
    taped_loss,
    targets_from_ensemble,
)


def test_taped_acf_matches_brute_estimator(rng):
    x = rng.normal(size=(6, 40))
    lags = np.array([0, 1, 5, 17, 39])
    ref = stats.acf_brute(Ensemble(x[:, :, None], 1.0), 39)
    np.testing.assert_allclose(ad.value_of(taped_acf(x, lags)), ref.values[lags], atol=1e-14)


def test_taped_loss_matches_plain_loss(rng):
    e = Ensemble(rng.normal(size=(20, 30, 1)), 0.1)
    spec = targets_from_ensemble(e, 10, grid_points=40)
    out = rng.normal(size=(20, 30, 1))
    full = float(ad.value_of(taped_loss(out, spec)))
    assert full == pytest.approx(evaluate_loss(out, spec)[0], rel=1e-12)


def test_loss_of_target_ensemble_is_zero(rng):
    e = Ensemble(rng.normal(size=(10, 25, 2)), 1.0)
    spec = targets_from_ensemble(e, 8)
    assert len(spec.targets) == 6
    total, parts = evaluate_loss(e, spec)
    assert total == pytest.approx(0.0, abs=1e-12)
    assert len(parts) == 6


def test_weights_scale_terms(rng):
    e = Ensemble(rng.normal(size=(10, 25, 1)), 1.0)
    other = rng.normal(size=(10, 25, 1)) * 2
    one = evaluate_loss(other, targets_from_ensemble(e, 8, (ACF,)))[0]
    three = evaluate_loss(other, targets_from_ensemble(e, 8, (ACF,), weights={ACF: 3.0}))[0]
    assert three == pytest.approx(3 * one)


def test_ou_targets_are_analytic():
    spec = ou_targets(1.0, 0.5, 0.1, 50)
    acf_t, pdf_t = spec.targets
    np.testing.assert_allclose(acf_t.curve.values, np.exp(-0.1 * np.arange(51)))
    assert isinstance(pdf_t.curve, GaussianPdfTarget)
    assert pdf_t.curve.var == pytest.approx(0.125)
    g = pdf_t.grid
    assert np.trapezoid(pdf_t.pdf_values(0.0), g) == pytest.approx(1.0, abs=1e-5)


def test_target_validation():
    curve = stats.AcfCurve(np.arange(1, 4), np.ones(3), 1.0)
    with pytest.raises(ParameterError):
        Target(ACF, curve)
    with pytest.raises(ParameterError):
        Target("mean", curve)
    with pytest.raises(ParameterError):
        LossSpec([])


def test_taped_loss_lag_checks(rng):
    spec = ou_targets(1.0, 0.5, 0.1, 5)
    out = rng.normal(size=(3, 10, 1))
    with pytest.raises(ShapeError):
        taped_loss(out, spec, np.array([1, 2]))
    with pytest.raises(ShapeError):
        taped_loss(out, spec, np.array([0, 12]))


def test_squared_target_uses_squared_series(rng):
    e = Ensemble(rng.normal(size=(8, 30, 1)), 1.0)
    spec = targets_from_ensemble(e, 6, (ACF_SQUARED,))
    ref = stats.acf_fft(e, 6, squared=True)
    np.testing.assert_array_equal(spec.targets[0].curve.values, ref.values)
    assert spec.max_lag == 6 and spec.has_acf
    assert not targets_from_ensemble(e, 6, (PDF,)).has_acf
