import numpy as np
import pytest

from sciprod.core import PreferenceParams
from sciprod.errors import ValidationError
from sciprod.typeindex import (
    DeepParams,
    TypeModel,
    _lloyd,
    fit_type_index,
    preference_params_from_type,
)

HOMOG_ROW = DeepParams(
    income_weight=2.7e-4,
    effort_weight=1.0e-14,
    sigma_intercept=np.log(1.736),
    sigma_slope=0.0,
    eta_intercept=np.log(0.1878 / 0.8122),
    eta_slope=0.0,
    xi_intercept=np.log(1.469),
    xi_slope=0.0,
    zeta_intercept=np.log(5.2e-12),
    zeta_slope=0.0,
)


def _blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.normal(-5.0, 0.1, size=(half, 3))
    b = rng.normal(5.0, 0.1, size=(n - half, 3))
    X = np.vstack([a, b])
    labels = np.array([0] * half + [1] * (n - half))
    return X, labels


def test_two_blob_cluster_purity():
    X, labels = _blobs()
    model, T = fit_type_index(X, seed=42)
    Z = model.standardize(X)
    d2 = ((Z[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    assigned = np.argmin(d2, axis=1)
    purity = max(
        (assigned == labels).mean(),
        (assigned == 1 - labels).mean(),
    )
    assert purity == 1.0
    assert T.mean() == pytest.approx(0.0, abs=1e-10)
    assert T.std() == pytest.approx(1.0, rel=1e-10)


def test_identical_rows_degenerate():
    X = np.ones((40, 4)) * 3.14
    model, T = fit_type_index(X, seed=1)
    assert model.degenerate
    assert np.all(T == 0.0)


def test_permutation_invariance():
    X, _ = _blobs(n=101, seed=7)
    model, T = fit_type_index(X, seed=9)
    rng = np.random.default_rng(3)
    perm = rng.permutation(X.shape[0])
    model_p, T_p = fit_type_index(X[perm], seed=9)
    assert np.array_equal(T_p, T[perm])
    assert np.array_equal(model_p.centroids, model.centroids)


def test_affine_rescaling_of_columns_is_absorbed():
    X, _ = _blobs(n=120, seed=11)
    model, T = fit_type_index(X, seed=5)
    Y = X.copy()
    Y[:, 0] = 7.5 * Y[:, 0] - 300.0
    Y[:, 2] = 0.01 * Y[:, 2] + 2.0
    _, T2 = fit_type_index(Y, seed=5)
    assert np.max(np.abs(T2 - T)) <= 1e-10


def test_lloyd_objective_non_increasing_and_terminates():
    X, _ = _blobs(n=150, seed=13)
    Z = (X - X.mean(axis=0)) / X.std(axis=0)
    rng = np.random.default_rng(17)
    init = Z[rng.choice(len(Z), size=2, replace=False)].copy()
    _, _, _, history = _lloyd(Z, init)
    assert len(history) < 300
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_transform_matches_fit_sample():
    X, _ = _blobs(n=80, seed=19)
    model, T = fit_type_index(X, seed=2)
    assert np.allclose(model.transform(X), T, atol=1e-12)


def test_model_dict_roundtrip():
    X, _ = _blobs(n=60, seed=23)
    model, T = fit_type_index(X, seed=4)
    clone = TypeModel.from_dict(model.to_dict())
    assert np.allclose(clone.transform(X), T, atol=1e-12)


def test_logistic_center_and_log_case_rejection():
    d = DeepParams(1.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0)
    for T in (-2.0, 0.0, 3.0):
        p = preference_params_from_type(T, d)
        assert p.output_curvature == pytest.approx(0.5, rel=1e-12)
    # sigma link at zero gives sigma = 1, which the parameter type rejects
    d_log = DeepParams(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0)
    with pytest.raises(ValidationError):
        preference_params_from_type(0.5, d_log)


def test_homogeneous_row_reproduced_at_type_zero():
    p = preference_params_from_type(0.0, HOMOG_ROW)
    assert p.income_curvature == pytest.approx(1.736, rel=1e-12)
    assert p.output_curvature == pytest.approx(0.1878, rel=1e-12)
    assert p.duty_penalty_exponent == pytest.approx(1.469, rel=1e-12)
    assert p.effort_curvature == pytest.approx(5.2e-12, rel=1e-12)
    assert p.income_weight == 2.7e-4
    assert p.effort_weight == 1.0e-14


def test_links_smooth_in_type():
    d = DeepParams(0.5, 0.8, 0.3, 0.2, -0.4, 0.5, 0.1, -0.3, -0.2, 0.15)
    h = 1e-6
    for T in (-1.2, 0.0, 0.7):
        up = preference_params_from_type(T + h, d)
        dn = preference_params_from_type(T - h, d)
        mid = preference_params_from_type(T, d)
        # exponential links: d/dT = slope * value
        fd = (up.income_curvature - dn.income_curvature) / (2 * h)
        assert fd == pytest.approx(d.sigma_slope * mid.income_curvature, rel=1e-6)
        fd = (up.duty_penalty_exponent - dn.duty_penalty_exponent) / (2 * h)
        assert fd == pytest.approx(d.xi_slope * mid.duty_penalty_exponent, rel=1e-6)
        fd = (up.effort_curvature - dn.effort_curvature) / (2 * h)
        assert fd == pytest.approx(d.zeta_slope * mid.effort_curvature, rel=1e-6)
        # logistic link: d/dT = slope * eta * (1 - eta)
        fd = (up.output_curvature - dn.output_curvature) / (2 * h)
        expected = d.eta_slope * mid.output_curvature * (1 - mid.output_curvature)
        assert fd == pytest.approx(expected, rel=1e-6)


def test_input_validation():
    with pytest.raises(ValidationError):
        fit_type_index(np.ones((1, 3)), seed=0)
    with pytest.raises(ValidationError):
        fit_type_index(np.array([[np.nan, 1.0], [0.0, 2.0]]), seed=0)
