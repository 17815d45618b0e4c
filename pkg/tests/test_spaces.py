import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lilab.spaces import (
    CovarianceOperator,
    DimensionMismatchError,
    NormSpec,
    batch_norm,
    dual_ball_sup,
    norm,
    smoothness_defect,
)

EUC3 = NormSpec(dim=3)
WLR = NormSpec(dim=3, kind="weighted_lr", r=1.5, weights=(1.0, 2.0, 0.5))


def test_euclidean_norm_matches_numpy():
    v = np.array([3.0, 4.0, 0.0])
    assert norm(v, EUC3) == pytest.approx(5.0, abs=1e-15)


def test_weighted_lr_norm_closed_form():
    v = np.array([1.0, 1.0, 1.0])
    expected = (1.0 + 2.0 + 0.5) ** (1 / 1.5)
    assert norm(v, WLR) == pytest.approx(expected, rel=1e-14)


def test_batch_norm_agrees_with_scalar_norm():
    rng = np.random.default_rng(0)
    vs = rng.standard_normal((8, 5, 3))
    bn = batch_norm(vs, WLR)
    for i in range(8):
        for j in range(5):
            assert bn[i, j] == pytest.approx(norm(vs[i, j], WLR), rel=1e-13)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionMismatchError):
        norm(np.ones(4), EUC3)


def test_smoothness_defect_zero_in_euclidean():
    # parallelogram law: equality at r=2, D=1
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    assert abs(smoothness_defect(x, y, EUC3, r=2.0, D=1.0)) < 1e-12


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_smoothness_defect_nonpositive_weighted(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    assert smoothness_defect(x, y, WLR, r=1.5, D=2.0) <= 1e-12


def test_covariance_operator_rejects_asymmetric():
    with pytest.raises(ValueError):
        CovarianceOperator(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_covariance_operator_rejects_indefinite():
    with pytest.raises(ValueError):
        CovarianceOperator(np.array([[1.0, 0.0], [0.0, -0.5]]))


def test_dual_ball_sup_is_sqrt_top_eigenvalue():
    K = CovarianceOperator(np.diag([4.0, 1.0, 0.25]))
    assert dual_ball_sup(K) == pytest.approx(2.0, abs=1e-14)


def test_dual_ball_sup_identity():
    K = CovarianceOperator(np.eye(5))
    assert dual_ball_sup(K) == pytest.approx(1.0, abs=1e-14)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_dual_ball_sup_dominates_directions(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    K = CovarianceOperator(A @ A.T)
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    assert np.sqrt(u @ K.matrix @ u) <= dual_ball_sup(K) + 1e-12
