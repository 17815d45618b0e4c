import math

import numpy as np
import pytest
import scipy.stats as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from lilab.operators import FourierObservable
from lilab.processes import (
    DoublingMap,
    FunctionOfLinear,
    InnovationSpec,
    LinearProcess,
    MarkovChainFn,
    MartingaleDifference,
    MemoryBudgetError,
    ModulusSpec,
    TorusAutomorphism,
    exact_variance,
    model_from_config,
    model_to_config,
    path_rng,
    simulate,
    simulate_blocks,
)

RADEMACHER = InnovationSpec("rademacher")
CHAIN = MarkovChainFn(np.array([[0.75, 0.25], [0.25, 0.75]]),
                      np.array([0.5, 0.5]), np.array([1.0, -1.0]))


def _sidak(alpha, k):
    return 1.0 - (1.0 - alpha) ** (1.0 / k)


# ---------------------------------------------------------------------------
# RNG streams


def test_path_rng_reproducible():
    a = path_rng(123, 7).standard_normal(16)
    b = path_rng(123, 7).standard_normal(16)
    assert np.array_equal(a, b)


def test_path_rng_streams_differ():
    a = path_rng(123, 7).standard_normal(16)
    b = path_rng(123, 8).standard_normal(16)
    c = path_rng(124, 7).standard_normal(16)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_block_streaming_is_bit_identical_to_batch():
    model = LinearProcess.scalar([1.0, 0.5], RADEMACHER)
    whole = simulate(model, 300, 4, master_seed=9).values
    parts = [b.values for b in simulate_blocks(model, 300, 4, 9, step_block=77)]
    assert np.array_equal(whole, np.concatenate(parts, axis=1))


def test_path_offset_gives_same_paths():
    model = MartingaleDifference(RADEMACHER)
    full = simulate(model, 64, 6, master_seed=5).values
    tail = [b.values for b in simulate_blocks(model, 64, 3, 5, path_offset=3)]
    assert np.array_equal(full[3:], np.concatenate(tail, axis=1))


def test_memory_budget_error():
    model = MartingaleDifference(InnovationSpec("gaussian", dim=4))
    with pytest.raises(MemoryBudgetError):
        simulate(model, 2 ** 22, 10 ** 4, master_seed=0)


# ---------------------------------------------------------------------------
# innovations


@pytest.mark.parametrize("law,kw,var", [
    ("rademacher", {}, 1.0),
    ("gaussian", {"sigma": 2.0}, 4.0),
    ("uniform", {"a": -3.0, "b": 3.0}, 3.0),
    ("centered_pareto", {"alpha": 4.0}, None),
])
def test_innovation_mean_zero_and_variance(law, kw, var):
    spec = InnovationSpec(law, **kw)
    x = spec.sample(path_rng(0, 0), 200_000)[:, 0]
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean()) < 5 * se
    if var is not None:
        assert spec.variance() == pytest.approx(var, rel=1e-12)
        assert np.var(x) == pytest.approx(var, rel=0.05)


def test_uniform_must_be_centered():
    with pytest.raises(ValueError):
        InnovationSpec("uniform", a=0.0, b=1.0)


def test_pareto_needs_finite_variance():
    with pytest.raises(ValueError):
        InnovationSpec("centered_pareto", alpha=1.5)


# ---------------------------------------------------------------------------
# model construction guards


def test_mds_rejects_uncentered_g():
    # |xi| has positive mean under every shipped law
    with pytest.raises(ValueError):
        MartingaleDifference(RADEMACHER, g="abs")


def test_chain_rejects_nonstationary_law():
    with pytest.raises(ValueError):
        MarkovChainFn(np.array([[0.9, 0.1], [0.5, 0.5]]),
                      np.array([0.5, 0.5]), np.array([1.0, -1.0]))


def test_torus_rejects_non_unimodular():
    obs = FourierObservable.from_table({(1, 0): 1.0}, torus_dim=2)
    with pytest.raises(ValueError):
        TorusAutomorphism(np.array([[2, 0], [0, 1]]), obs)


def test_torus_rejects_non_hyperbolic():
    obs = FourierObservable.from_table({(1, 0): 1.0}, torus_dim=2)
    with pytest.raises(ValueError):
        TorusAutomorphism(np.array([[0, -1], [1, 0]]), obs)  # rotation


# ---------------------------------------------------------------------------
# distributional checks


def test_mds_outputs_are_martingale_differences():
    # regression of d_n on the previous window must vanish
    model = MartingaleDifference(RADEMACHER, g="identity", h="cos_sum", q=2)
    batch = simulate(model, 2000, 64, master_seed=3)
    d = batch.values[:, 2:, 0].ravel()
    prev = batch.values[:, 1:-1, 0].ravel()
    corr = np.corrcoef(d, prev)[0, 1]
    assert abs(corr) < 4 / math.sqrt(len(d))
    se = d.std() / math.sqrt(len(d))
    assert abs(d.mean()) < 4 * se


def test_chain_marginals_are_stationary():
    batch = simulate(CHAIN, 4096, 32, master_seed=11)
    states = batch.aux["states"]
    # fraction of time in state 0 should match m(0) = 1/2
    frac = (states == 0).mean()
    assert abs(frac - 0.5) < 0.02


def test_chain_transition_frequencies_match_kernel():
    batch = simulate(CHAIN, 8192, 16, master_seed=12)
    s = batch.aux["states"]
    stay = ((s[:, 1:] == s[:, :-1])).mean()
    assert abs(stay - 0.75) < 0.02


def test_doubling_map_orbit_is_exact_dyadic_doubling():
    obs = FourierObservable.from_table({(1,): 1.0}, torus_dim=1)
    model = DoublingMap(obs)
    batch = simulate(model, 50, 4, master_seed=2)
    pts = batch.aux["points"]          # uint64 fractions
    nxt = batch.aux["point_next"]
    full = np.concatenate([pts, nxt[:, None]], axis=1)
    assert np.array_equal(full[:, 1:], full[:, :-1] << np.uint64(1))


def test_torus_points_equidistribute():
    M = np.array([[2, 1], [1, 1]])
    obs = FourierObservable.from_table({(1, 0): 1.0}, torus_dim=2)
    model = TorusAutomorphism(M, obs)
    batch = simulate(model, 64, 2048, master_seed=4)
    # the invariant measure is Lebesgue: at any fixed time the points are
    # uniform, and across paths they are independent, so chi-square applies
    pts = batch.aux["points"][:, -1, :]
    u = pts / 2.0 ** 64
    cells = (np.floor(u[:, 0] * 8).astype(int) * 8
             + np.floor(u[:, 1] * 8).astype(int))
    counts = np.bincount(cells, minlength=64)
    stat, p = sps.chisquare(counts)
    assert p > _sidak(0.001, 1)


def test_linear_process_matches_direct_convolution():
    model = LinearProcess.scalar([1.0, 0.5, 0.25], RADEMACHER)
    batch = simulate(model, 100, 5, master_seed=6)
    xi = batch.aux["innov"][:, :, 0]
    init = batch.aux["innov_init"][:, :, 0]
    ext = np.concatenate([init, xi], axis=1)
    k = init.shape[1]
    direct = (ext[:, k:] + 0.5 * ext[:, k - 1:-1] + 0.25 * ext[:, k - 2:-2])
    assert np.allclose(batch.values[:, :, 0], direct, atol=1e-12)


def test_function_of_linear_is_centered():
    model = FunctionOfLinear(RADEMACHER, a=np.array([1.0, 0.5]), f="tanh",
                             modulus=ModulusSpec("power", alpha=1.0))
    batch = simulate(model, 4000, 64, master_seed=7)
    x = batch.values.ravel()
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean()) < 5 * se


# ---------------------------------------------------------------------------
# exact second moments


def test_exact_variance_linear():
    model = LinearProcess.scalar([1.0, 0.5], RADEMACHER)
    v = exact_variance(model).matrix
    assert v[0, 0] == pytest.approx(1.25, abs=1e-14)
    batch = simulate(model, 5000, 64, master_seed=8)
    emp = batch.values.var()
    assert emp == pytest.approx(1.25, rel=0.03)


def test_exact_variance_chain():
    v = exact_variance(CHAIN).matrix
    assert v[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_exact_variance_mds_gaussian():
    model = MartingaleDifference(InnovationSpec("gaussian", sigma=1.5))
    v = exact_variance(model).matrix
    assert v[0, 0] == pytest.approx(2.25, rel=1e-12)


# ---------------------------------------------------------------------------
# config round trips


@pytest.mark.parametrize("model", [
    MartingaleDifference(RADEMACHER, g="cube", h="cos_sum", q=2),
    LinearProcess.scalar([1.0, 0.5], InnovationSpec("uniform")),
    FunctionOfLinear(RADEMACHER, a=np.array([1.0, 0.25]), f="abs",
                     modulus=ModulusSpec("concave_sqrt")),
    CHAIN,
    DoublingMap(FourierObservable.from_table({(1,): 1.0, (2,): 0.5},
                                             torus_dim=1)),
    TorusAutomorphism(np.array([[2, 1], [1, 1]]),
                      FourierObservable.from_table({(1, 0): 1.0}, torus_dim=2)),
])
def test_model_config_round_trip(model):
    cfg = model_to_config(model)
    again = model_to_config(model_from_config(cfg))
    assert cfg == again
    # round-tripped model simulates identically
    a = simulate(model, 40, 3, master_seed=1).values
    b = simulate(model_from_config(cfg), 40, 3, master_seed=1).values
    assert np.array_equal(a, b)


@given(st.integers(1, 40), st.integers(1, 5), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_streaming_invariant_under_block_size(n_steps, n_paths, seed):
    model = MartingaleDifference(RADEMACHER)
    whole = simulate(model, n_steps, n_paths, master_seed=seed).values
    parts = [b.values for b in
             simulate_blocks(model, n_steps, n_paths, seed, step_block=7)]
    assert np.array_equal(whole, np.concatenate(parts, axis=1))
