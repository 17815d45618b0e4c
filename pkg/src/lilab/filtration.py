"""Projection norms, Hannan sums, and the approximating martingale difference.

Closed or semi-closed forms per family: linear processes project onto single
innovations, finite-state chains reduce to kernel algebra, martingale
differences are their own projections.  A nested Monte-Carlo fallback
estimates conditional-expectation norms for anything innovation- or
state-driven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lilab.operators import kernel_contraction_factor, kernel_l2m_norm
from lilab.processes import (
    F_FUNCS,
    G_FUNCS,
    H_FUNCS,
    STREAM_ORACLE,
    FunctionOfLinear,
    LinearProcess,
    MarkovChainFn,
    MartingaleDifference,
    PathBatch,
    model_to_config,
    path_rng,
    phi_modulus_eval,
)

MC_MOMENT_SAMPLES = 10 ** 6
ORACLE_SEED = 0x0DDBA11


@dataclass
class ProjectionReport:
    """The sequence ||P_n X||_p with its tail bound and Hannan verdict."""

    p: float
    norms: list                      # [(n, ||P_n X||_p)]
    tail_bound: float
    hannan_value: float
    verdict: str                     # finite | divergent | inconclusive
    detail: dict = field(default_factory=dict)


@dataclass
class McNormResult:
    """Nested-MC estimate of ||E_0(X_n)||_2 (unbiased on the squared scale)."""

    estimate: float
    se: float
    est_sq: float
    se_sq: float
    n_outer: int
    n_inner: int


@dataclass
class HanbisReport:
    """Partial sums of sum ||E_{-n} X||_2 / sqrt(n) and sum ||X - E_n X||_2 / sqrt(n)."""

    verdict: str
    past_terms: np.ndarray
    future_terms: np.ndarray
    past_tail: float
    future_tail: float
    detail: dict = field(default_factory=dict)

    @property
    def past_sum(self) -> float:
        return float(self.past_terms.sum() + self.past_tail)

    @property
    def future_sum(self) -> float:
        return float(self.future_terms.sum() + self.future_tail)


@dataclass
class MartingaleApproximant:
    """d = sum_n P_1(X o theta^n) in the closed form of each family.

    ``d_block(block)`` evaluates the coupled differences on the same sample
    points as a simulated block, so S_n - M_n is meaningful pathwise.
    """

    kind: str                       # linear | mds | markov_chain
    model: object
    l2_norm: float
    coeff_sum: np.ndarray | None = None     # linear: d = coeff_sum @ xi
    poisson_g: np.ndarray | None = None     # chain: d = g(W_1) - (Pg)(W_0)
    poisson_pg: np.ndarray | None = None
    _carry: np.ndarray | None = field(default=None, repr=False, compare=False)

    def d_block(self, block) -> np.ndarray:
        if self.kind == "mds":
            return block.values
        if self.kind == "linear":
            fresh = block.aux["innov"]
            lag = self.model.min_lag
            if lag >= 0:
                # adapted: fresh innovations are step-aligned
                if lag == 0:
                    xi = fresh
                else:
                    if block.start == 0:
                        self._carry = block.aux["innov_init"][:, -lag:, :]
                    xi = np.concatenate([self._carry, fresh], axis=1)[:, :fresh.shape[1]]
                    self._carry = np.concatenate([self._carry, fresh], axis=1)[:, fresh.shape[1]:]
            else:
                # anticipating: fresh starts at index start - min_lag, the
                # first |min_lag| step innovations came with earlier blocks
                if block.start == 0:
                    self._carry = np.zeros((fresh.shape[0], 0, fresh.shape[2]))
                xi = np.concatenate([self._carry, fresh], axis=1)[:, :fresh.shape[1]]
                self._carry = np.concatenate([self._carry, fresh], axis=1)[:, fresh.shape[1]:]
            return xi @ self.coeff_sum.T
        if self.kind == "markov_chain":
            states = block.aux["states"]
            nxt = np.concatenate([states[:, 1:], block.aux["state_next"][:, None]], axis=1)
            return self.poisson_g[nxt] - self.poisson_pg[states]
        raise ValueError(f"unknown approximant kind {self.kind!r}")


# ---------------------------------------------------------------------------
# moment oracles


def _mc_pth_norm(sampler, p: float, n: int = MC_MOMENT_SAMPLES) -> float:
    """(E |Z|^p)^(1/p) by fixed-seed MC; sampler(rng, n) -> (n, dim)."""
    rng = path_rng(ORACLE_SEED, 0, STREAM_ORACLE)
    z = sampler(rng, n)
    return float(np.mean(np.linalg.norm(z, axis=1) ** p) ** (1.0 / p))


def _innovation_image_norm(A: np.ndarray, innovation, p: float) -> float:
    """||A xi||_p; exact at p = 2, MC otherwise."""
    if p == 2.0:
        return float(math.sqrt(innovation.variance() * np.trace(A.T @ A)))
    return _mc_pth_norm(lambda rng, n: innovation.sample(rng, n) @ A.T, p)


def _mds_norm(model: MartingaleDifference, p: float) -> float:
    def sampler(rng, n):
        window = model.innovation.sample(rng, n * model.q).reshape(n, model.q, -1) \
            if model.q else np.zeros((n, 0, model.innovation.dim))
        xi = model.innovation.sample(rng, n)
        h = H_FUNCS[model.h](window) if model.h != "one" else np.ones(n)
        return G_FUNCS[model.g](xi) * h[:, None]
    if p == 2.0 and model.h == "one" and model.g in ("identity", "sign"):
        return math.sqrt(model.md_second_moment())
    return _mc_pth_norm(sampler, p)


# ---------------------------------------------------------------------------
# projection norms


def projection_norms(model, p: float, horizon: int = 64,
                     eps: float = 1e-9) -> ProjectionReport:
    """||P_n X||_p over the support (linear, MDS) or horizon (chains).

    Unsupported families get an explicit pointer to mc_conditional_norm.
    """
    if not 1.0 < p <= 2.0:
        raise ValueError("p must lie in (1, 2]")
    if isinstance(model, LinearProcess):
        norms = []
        for j in range(model.coeffs.shape[0]):
            lag = model.min_lag + j
            val = _innovation_image_norm(model.coeffs[j], model.innovation, p)
            norms.append((-lag, val))
        norms.sort(key=lambda t: -t[0])
        total = sum(v for _, v in norms)
        return ProjectionReport(p, norms, 0.0, total, "finite")
    if isinstance(model, MartingaleDifference):
        val = _mds_norm(model, p)
        return ProjectionReport(p, [(0, val)], 0.0, val, "finite")
    if isinstance(model, MarkovChainFn):
        if p != 2.0:
            raise ValueError("chain projections are exact in L^2 only; use p = 2")
        P, m = model.kernel, model.stationary
        fc = model.f_centered
        norms = []
        g = fc.copy()
        nrm_sq = kernel_l2m_norm(g, m) ** 2
        for n in range(horizon + 1):
            g = P @ g
            nxt_sq = kernel_l2m_norm(g, m) ** 2
            # clamp float cancellation: a telescoping difference below the
            # relative rounding floor of the squared norms is an exact zero
            diff = nrm_sq - nxt_sq
            if diff < 64 * np.finfo(float).eps * max(nrm_sq, nxt_sq):
                diff = 0.0
            norms.append((-n, math.sqrt(diff)))
            nrm_sq = nxt_sq
        rho = kernel_contraction_factor(P, m)
        last = math.sqrt(nrm_sq)
        if rho < 1.0 - 1e-12:
            # geometric majorant: the projection series converges
            tail = last / (1.0 - rho)
            verdict = "finite"
        elif last < eps:
            tail, verdict = 0.0, "finite"
        else:
            # ||P^n f|| does not vanish: X is not regular and the projection
            # series says nothing (e.g. deterministic cyclic dynamics)
            tail, verdict = math.inf, "inconclusive"
        total = sum(v for _, v in norms) + (tail if math.isfinite(tail) else 0.0)
        return ProjectionReport(p, norms, tail, total, verdict,
                                detail={"rho": rho})
    raise ValueError(
        f"{type(model).__name__} has no closed-form projections; use mc_conditional_norm")


# ---------------------------------------------------------------------------
# nested-MC conditional norms


def _conditional_sampler(model, n: int, rng: np.random.Generator):
    """Freeze a draw of the time-0 past, return an inner sampler of X_n given it."""
    if isinstance(model, LinearProcess):
        lags = np.arange(model.min_lag, model.max_lag + 1)
        past_idx = [j for j, lag in enumerate(lags) if n - lag <= 0]
        futr_idx = [j for j, lag in enumerate(lags) if n - lag > 0]
        past = model.innovation.sample(rng, len(past_idx))

        def inner(rng_i, k):
            out = np.tile((sum(past[i][None, :] @ model.coeffs[j].T
                               for i, j in enumerate(past_idx))
                           if past_idx else np.zeros((1, model.dim))), (k, 1))
            for j in futr_idx:
                out += model.innovation.sample(rng_i, k) @ model.coeffs[j].T
            return out
        return inner
    if isinstance(model, MartingaleDifference):
        q = model.q
        n_past = max(q - n + 1, 0)           # window entries at indices <= 0

        def inner(rng_i, k):
            if q:
                win = np.empty((k, q, model.innovation.dim))
                if n_past:
                    frozen = model.innovation.sample(rng, n_past)
                    win[:, :n_past] = frozen[None, :, :]
                if q - n_past:
                    win[:, n_past:] = model.innovation.sample(
                        rng_i, k * (q - n_past)).reshape(k, q - n_past, -1)
                h = H_FUNCS[model.h](win) if model.h != "one" else np.ones(k)
            else:
                h = np.ones(k)
            xi = model.innovation.sample(rng_i, k)
            return G_FUNCS[model.g](xi) * h[:, None]
        return inner
    if isinstance(model, FunctionOfLinear):
        K = model.max_lag
        n_past = max(K - n + 1, 0)
        frozen = model.innovation.sample(rng, n_past)[:, 0] if n_past else np.zeros(0)
        center = model.centering()

        def inner(rng_i, k):
            y = np.zeros(k)
            for j, a in enumerate(model.a):    # Y_n = sum_j a_j xi_{n-j}
                idx = n - j
                if idx <= 0:
                    y += a * frozen[-idx] if n_past else 0.0
                else:
                    y += a * model.innovation.sample(rng_i, k)[:, 0]
            return (F_FUNCS[model.f](y) - center)[:, None]
        return inner
    if isinstance(model, MarkovChainFn):
        w0 = int(np.searchsorted(np.cumsum(model.stationary), rng.random(),
                                 side="right"))
        w0 = min(w0, model.n_states - 1)
        cum = np.cumsum(model.kernel, axis=1)
        fc = model.f_centered

        def inner(rng_i, k):
            cur = np.full(k, w0, dtype=np.int64)
            for _ in range(n):
                u = rng_i.random(k)
                cur = np.sum(u[:, None] >= cum[cur, :], axis=1)
            return fc[cur]
        return inner
    raise ValueError(f"{type(model).__name__} is not driven by iid innovations "
                     "or a Markov state")


def mc_conditional_norm(model, n: int, p: float, n_samples: int, seed: int,
                        n_inner: int = 128) -> McNormResult:
    """Nested-MC estimate of ||E_0(X_n)||_p with SE from outer variation.

    For p = 2 the squared norm is estimated without inner bias by splitting
    the inner redraws into two independent halves and averaging their dot
    product.  Other p use the plain plug-in inner mean (slightly biased
    upward by inner noise).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n_samples < 2:
        raise ValueError("need at least 2 outer samples for an SE")
    if n_inner < 2:
        raise ValueError("need at least 2 inner samples")
    vals = np.empty(n_samples)
    half = n_inner // 2
    for i in range(n_samples):
        rng_o = path_rng(seed, i, STREAM_ORACLE)
        inner = _conditional_sampler(model, n, rng_o)
        if p == 2.0:
            ma = inner(rng_o, half).mean(axis=0)
            mb = inner(rng_o, half).mean(axis=0)
            vals[i] = float(ma @ mb)
        else:
            m = inner(rng_o, n_inner).mean(axis=0)
            vals[i] = float(np.linalg.norm(m) ** p)
    mean = float(vals.mean())
    se_stat = float(vals.std(ddof=1) / math.sqrt(n_samples))
    if p == 2.0:
        est = math.sqrt(max(mean, 0.0))
        se = se_stat / (2.0 * est) if est > 1e-9 else math.sqrt(max(se_stat, 0.0))
        return McNormResult(est, se, mean, se_stat, n_samples, n_inner)
    est = mean ** (1.0 / p)
    se = se_stat / (p * max(est, 1e-12) ** (p - 1.0))
    return McNormResult(est, se, mean, se_stat, n_samples, n_inner)


# ---------------------------------------------------------------------------
# Hannan sufficient condition on Hilbert stand-ins


def hanbis_check(model, horizon: int, eps: float = 1e-9) -> HanbisReport:
    """Partial sums of sum_n ||E_{-n} X||_2 / sqrt(n) (past) and
    sum_n ||X - E_n X||_2 / sqrt(n) (future); adapted models report the
    second as identically zero.

    Linear processes and chains use exact term values; functions of linear
    processes use the modulus-of-continuity upper bound phi(sum_{k>=n}|a_k|),
    which is exact zero beyond the finite support.
    """
    ns = np.arange(1, horizon + 1)
    if isinstance(model, MartingaleDifference):
        z = np.zeros(horizon)
        return HanbisReport("finite", z, z.copy(), 0.0, 0.0)
    if isinstance(model, LinearProcess):
        v = model.innovation.variance()
        lags = np.arange(model.min_lag, model.max_lag + 1)
        contrib = np.array([v * np.trace(A.T @ A) for A in model.coeffs])
        past = np.array([math.sqrt(contrib[lags >= n].sum()) for n in ns]) / np.sqrt(ns)
        futr = np.array([math.sqrt(contrib[lags <= -n].sum()) for n in ns]) / np.sqrt(ns)
        # finite support: both series vanish exactly beyond max |lag|
        if horizon <= max(abs(model.min_lag), abs(model.max_lag)):
            return HanbisReport("inconclusive", past, futr, math.inf, math.inf)
        return HanbisReport("finite", past, futr, 0.0, 0.0)
    if isinstance(model, MarkovChainFn):
        P, m = model.kernel, model.stationary
        g = model.f_centered.copy()
        terms = []
        for n in ns:
            g = P @ g
            terms.append(kernel_l2m_norm(g, m) / math.sqrt(n))
        past = np.array(terms)
        futr = np.zeros(horizon)
        rho = kernel_contraction_factor(P, m)
        last = kernel_l2m_norm(g, m)
        if rho < 1.0 - 1e-12:
            # geometric majorant: the series converges
            tail = last * rho / ((1.0 - rho) * math.sqrt(horizon))
            verdict = "finite"
        elif last < eps:
            tail, verdict = 0.0, "finite"
        else:
            tail, verdict = math.inf, "inconclusive"
        return HanbisReport(verdict, past, futr, tail, 0.0, detail={"rho": rho})
    if isinstance(model, FunctionOfLinear):
        tails = np.array([np.abs(model.a[min(n, len(model.a)):]).sum() for n in ns])
        past = phi_modulus_eval(model.modulus, tails) / np.sqrt(ns)
        futr = np.zeros(horizon)
        verdict = "finite" if horizon > model.max_lag else "inconclusive"
        tail = 0.0 if verdict == "finite" else math.inf
        return HanbisReport(verdict, past, futr, tail, 0.0,
                            detail={"terms_are_upper_bounds": True})
    raise ValueError(f"hanbis_check does not support {type(model).__name__}")


# ---------------------------------------------------------------------------
# approximating martingale difference


def approximating_md(model, report: ProjectionReport,
                     tol: float = 1e-10) -> MartingaleApproximant:
    """The approximating difference d, in closed form per family.

    Requires a finite-verdict projection report.  The chain series is summed
    until the remaining geometric tail falls below tol * ||d||_2.
    """
    if report.verdict != "finite":
        raise ValueError("approximating_md needs a finite Hannan verdict")
    if isinstance(model, LinearProcess):
        B = model.coeff_sum
        l2 = _innovation_image_norm(B, model.innovation, 2.0)
        return MartingaleApproximant("linear", model, l2, coeff_sum=B)
    if isinstance(model, MartingaleDifference):
        l2 = _mds_norm(model, 2.0)
        return MartingaleApproximant("mds", model, l2)
    if isinstance(model, MarkovChainFn):
        P, m = model.kernel, model.stationary
        fc = model.f_centered
        rho = kernel_contraction_factor(P, m)
        if rho >= 1.0 - 1e-12 and kernel_l2m_norm(P @ fc, m) > tol:
            raise ValueError("kernel has no spectral gap; the series does not converge")
        g = np.zeros_like(fc)
        term = fc.copy()
        scale = max(kernel_l2m_norm(fc, m), tol)
        for _ in range(10 ** 6):
            g += term
            term = P @ term
            if kernel_l2m_norm(term, m) < tol * scale:
                break
        else:
            raise ValueError("Poisson series failed to converge")
        pg = P @ g
        # ||d||_2^2 = sum_{w0, w1} m(w0) P(w0, w1) |g(w1) - (Pg)(w0)|^2
        diff_sq = np.zeros((model.n_states, model.n_states))
        for w0 in range(model.n_states):
            diff_sq[w0] = np.sum((g[None, :, :] - pg[w0][None, None, :]) ** 2,
                                 axis=2)[0]
        l2 = math.sqrt(float(np.sum(m[:, None] * P * diff_sq)))
        return MartingaleApproximant("markov_chain", model, l2,
                                     poisson_g=g, poisson_pg=pg)
    raise ValueError(f"approximating_md does not support {type(model).__name__}")


def martingale_partial_sums(approx: MartingaleApproximant,
                            batch: PathBatch) -> np.ndarray:
    """M_n = sum_{k<n} d_k on the batch's own sample points.

    Returned array aligns with batch.values: entry t holds M_{t+1}.
    """
    if model_to_config(approx.model) != model_to_config(batch.model):
        raise ValueError("approximant and batch come from different models")
    parts = []
    for block in batch.blocks():
        parts.append(approx.d_block(block))
    d = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
    return np.cumsum(d, axis=1)
