import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lilab import limits
from lilab.filtration import approximating_md, projection_norms
from lilab.processes import (
    InnovationSpec,
    LinearProcess,
    MarkovChainFn,
    MartingaleDifference,
    PathStream,
)

RAD = MartingaleDifference(InnovationSpec("rademacher"))
CHAIN = MarkovChainFn(np.array([[0.75, 0.25], [0.25, 0.75]]),
                      np.array([0.5, 0.5]), np.array([1.0, -1.0]))


# ---------------------------------------------------------------------------
# scalar helpers


def test_log_plus_values():
    assert limits.log_plus(0.0) == 1.0
    assert limits.log_plus(1.0) == 1.0
    assert limits.log_plus(math.e ** 2) == pytest.approx(2.0, abs=1e-15)


def test_bennett_h_one():
    assert limits.bennett_h(1.0) == pytest.approx(2 * math.log(2) - 1,
                                                  abs=1e-12)


def test_bennett_h_zero_and_convexity():
    assert limits.bennett_h(0.0) == 0.0
    u = np.linspace(0.0, 5.0, 50)
    h = limits.bennett_h(u)
    assert np.all(np.diff(h, 2) > -1e-12)   # convex


# ---------------------------------------------------------------------------
# weak norms


def test_weak_norm_four_point_oracle():
    # brute force over thresholds: sup_t t P(|Z| > t) -> t just below 2
    # gives 2 * 3/4 = 1.5, and no other segment beats it
    est, _ = limits.weak_norm(np.array([1.0, 2.0, 3.0, 4.0]), 1.0)
    assert est == pytest.approx(1.5, abs=1e-14)


def test_weak_norm_constant_sample():
    est, _ = limits.weak_norm(np.full(100, 3.0), 2.0)
    assert est == pytest.approx(3.0, abs=1e-14)


@given(st.integers(0, 10 ** 6), st.floats(1.0, 3.0))
@settings(max_examples=30, deadline=None)
def test_weak_norm_matches_brute_force(seed, p):
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=200)
    est, _ = limits.weak_norm(x, p)
    brute = max(float(v * ((x >= v).mean()) ** (1.0 / p)) for v in x)
    assert est == pytest.approx(brute, rel=1e-12)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_weak_norm_dominated_by_lp_norm(seed):
    # Chebyshev: the weak norm never exceeds the strong L^p norm
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(500)
    p = 1.5
    est, _ = limits.weak_norm(x, p)
    strong = float(np.mean(np.abs(x) ** p) ** (1 / p))
    assert est <= strong + 1e-12


def test_profile_variation_flat_profile_is_zero():
    prof = np.column_stack([np.geomspace(1, 10, 20), np.full(20, 2.0)])
    assert limits.profile_last_decade_variation(prof) == 0.0


# ---------------------------------------------------------------------------
# maximal statistics


def test_maximal_stats_running_sup_small_case():
    src = PathStream(RAD, 64, 16, 5)
    ms = limits.maximal_stats(src, 1.0, 64)
    # brute force the same paths
    vals = next(PathStream(RAD, 64, 16, 5).blocks()).values[:, :, 0]
    s = np.cumsum(vals, axis=1)
    n = np.arange(1, 65)
    brute = (np.abs(s) / n[None, :]).max(axis=1)
    assert np.allclose(ms.values, brute, atol=1e-14)


def test_maximal_stats_dyadic_m_star():
    src = PathStream(RAD, 64, 8, 6)
    ms = limits.maximal_stats(src, 2.0, 64)
    vals = next(PathStream(RAD, 64, 8, 6).blocks()).values[:, :, 0]
    s = np.cumsum(vals, axis=1)
    brute = np.zeros(8)
    for p in range(8):
        best = 0.0
        for stage in range(0, 7):       # 2^stage <= 64
            k = np.arange(1, 2 ** stage + 1)
            ell = max(1.0, math.log(max(stage, 1)))
            best = max(best, (np.abs(s[p, k - 1])
                              / math.sqrt(2 ** stage * ell)).max())
        brute[p] = best
    assert np.allclose(ms.m_star, brute, atol=1e-12)


def test_hopf_bound_uniform_innovations():
    model = MartingaleDifference(InnovationSpec("uniform"))
    src = PathStream(model, 2 ** 12, 2000, 7)
    rep = limits.hopf_check(src, 2 ** 12)
    ratio = rep.estimate / rep.extras["mean_abs"]
    assert ratio <= 1.0 + 3 * rep.extras["rel_se"]
    assert rep.passed


# ---------------------------------------------------------------------------
# covariance series


def test_covariance_series_iid_is_marginal_variance():
    src = PathStream(RAD, 2 ** 12, 256, 8)
    K = limits.covariance_series(src, 32)
    assert K.matrix[0, 0] == pytest.approx(1.0, rel=0.05)


def test_covariance_series_linear_long_run():
    model = LinearProcess.scalar(0.5 ** np.arange(21),
                                 InnovationSpec("rademacher"))
    src = PathStream(model, 2 ** 14, 256, 9)
    K = limits.covariance_series(src, 64)
    target = float(np.sum(0.5 ** np.arange(21)) ** 2)
    assert K.matrix[0, 0] == pytest.approx(target, rel=0.05)


def test_covariance_series_chain_long_run():
    src = PathStream(CHAIN, 2 ** 14, 256, 10)
    K = limits.covariance_series(src, 64)
    # exact value equals ||d||^2 of the approximating difference = 3
    assert K.matrix[0, 0] == pytest.approx(3.0, rel=0.05)


def test_covariance_series_rejects_long_lag():
    src = PathStream(RAD, 64, 4, 0)
    with pytest.raises(ValueError):
        limits.covariance_series(src, 64)


# ---------------------------------------------------------------------------
# decay curves


def test_mz_decay_iid_matches_root_n_rate():
    src = PathStream(RAD, 2 ** 14, 256, 11)
    rep = limits.mz_decay(src, 1.5, n_grid=(2 ** 10, 2 ** 14))
    # medians scale like n^(1/2 - 2/3) = n^(-1/6)
    assert rep.extras["decay_ratio"] == pytest.approx(2 ** (-4 / 6), rel=0.25)


def test_approx_error_curve_chain_rate():
    rep_p = projection_norms(CHAIN, 2.0, horizon=64)
    ap = approximating_md(CHAIN, rep_p)
    src = PathStream(CHAIN, 2 ** 12, 64, 12)
    rep = limits.approx_error_curve(CHAIN, ap, src, n_grid=(2 ** 8, 2 ** 12))
    # bounded coboundary: the windowed sup is ~4/sqrt(n L(L(n)))
    oracle = math.sqrt((2 ** 8 * limits.log_plus(limits.log_plus(2 ** 8)))
                       / (2 ** 12 * limits.log_plus(limits.log_plus(2 ** 12))))
    assert rep.extras["decay_ratio"] == pytest.approx(oracle, rel=0.2)


# ---------------------------------------------------------------------------
# exponential inequality


def test_freedman_pinelis_grid():
    src = PathStream(RAD, 256, 4000, 13)
    xs = [8.0, 16.0, 24.0, 32.0, 48.0]
    ys = [256.0, 512.0]
    grid = [(x, y) for x in xs for y in ys]
    rep = limits.freedman_pinelis_check(src, [g[0] for g in grid],
                                        [g[1] for g in grid], 256)
    assert np.all(rep["empirical"] <= rep["bound"] + 3 * rep["se"])
    assert np.all(rep["passed"])


def test_freedman_pinelis_requires_bounded_model():
    model = MartingaleDifference(InnovationSpec("gaussian"))
    src = PathStream(model, 64, 16, 0)
    with pytest.raises(ValueError):
        limits.freedman_pinelis_check(src, [1.0], [64.0], 64)


# ---------------------------------------------------------------------------
# CLT diagnostics


def test_clt_diagnostics_iid_passes():
    src = PathStream(RAD, 2 ** 12, 512, 14)
    rep = limits.clt_diagnostics(src, 2 ** 12, directions=4)
    assert rep.passed


def test_clt_diagnostics_directional_variance():
    model = LinearProcess.scalar([1.0, 0.5], InnovationSpec("rademacher"))
    src = PathStream(model, 2 ** 13, 1024, 15)
    rep = limits.clt_diagnostics(src, 2 ** 13, directions=1)
    assert rep.curves["directional_variance"][0] == pytest.approx(2.25,
                                                                  rel=0.15)


def test_lil_limsup_reduced_scale_sanity():
    src = PathStream(RAD, 2 ** 16, 64, 16)
    rep = limits.lil_limsup(src)
    assert 0.6 <= rep.estimate <= 1.5
    assert rep.extras["window_start"] == int(2 ** (0.75 * 16))
