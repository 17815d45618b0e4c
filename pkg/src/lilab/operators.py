"""Transfer/Markov operator machinery.

Perron-Frobenius action for the doubling map, Koopman action for torus
automorphisms (both exact on finite Fourier supports), operator-norm
condition sums with certified verdicts, phi-mixing coefficients of
finite-state chains, and the logarithmic Fourier-tail check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lilab.limits import log_plus

KERNEL_ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10
NORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class FourierObservable:
    """Observable on the torus T^d given by finitely many Fourier coefficients.

    ``freqs`` is an (n_freq, d) integer array, ``coeffs`` an (n_freq, dim)
    complex array.  Hermitian symmetry c_{-k} = conj(c_k) is required so the
    observable is real-valued; the zero frequency must be absent (zero mean).
    """

    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.freqs, dtype=np.int64))
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        if f.shape[0] != c.shape[0]:
            raise ValueError("freqs and coeffs must have matching length")
        if f.shape[0]:
            if np.any(np.all(f == 0, axis=1)):
                raise ValueError("zero frequency not allowed (observable must be centered)")
            table = {tuple(k): c[i] for i, k in enumerate(f)}
            if len(table) != f.shape[0]:
                raise ValueError("duplicate frequencies")
            for k, ck in table.items():
                neg = tuple(-np.asarray(k))
                if neg not in table or not np.allclose(table[neg], np.conj(ck), atol=1e-12):
                    raise ValueError("coefficients must satisfy c_{-k} = conj(c_k)")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    @property
    def torus_dim(self) -> int:
        return self.freqs.shape[1]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n_freq(self) -> int:
        return self.freqs.shape[0]

    def l2_norm_sq(self) -> float:
        """||f||_2^2 = sum_k |c_k|^2 (Parseval, Lebesgue measure)."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points in [0,1)^d, shape (..., d) -> (..., dim)."""
        pts = np.asarray(points, dtype=float)
        if self.n_freq == 0:
            return np.zeros(pts.shape[:-1] + (self.dim,))
        phases = np.exp(2j * np.pi * (pts @ self.freqs.T.astype(float)))
        return np.real(phases @ self.coeffs)

    @classmethod
    def from_table(cls, table: dict, torus_dim: int, dim: int = 1) -> "FourierObservable":
        """Build from {freq tuple: coeff (scalar or length-dim)} entries.

        Missing conjugate frequencies are filled in automatically.
        """
        full: dict = {}
        for k, v in table.items():
            k = tuple(int(x) for x in np.atleast_1d(k))
            v = np.broadcast_to(np.asarray(v, dtype=complex), (dim,)).copy()
            full[k] = v
            neg = tuple(-x for x in k)
            if neg not in table and neg not in full:
                full[neg] = np.conj(v)
        if not full:
            return cls(np.zeros((0, torus_dim), dtype=np.int64),
                       np.zeros((0, dim), dtype=complex))
        freqs = np.array(sorted(full), dtype=np.int64)
        coeffs = np.array([full[tuple(k)] for k in freqs])
        return cls(freqs, coeffs)


def zero_observable(torus_dim: int, dim: int = 1) -> FourierObservable:
    return FourierObservable(np.zeros((0, torus_dim), dtype=np.int64),
                             np.zeros((0, dim), dtype=complex))


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one summability/tail condition check.

    ``verdict`` is "holds" only with a finite certified tail bound below the
    requested epsilon, "fails" only with a divergence certificate, otherwise
    "inconclusive".
    """

    condition: str
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_bound: float | None
    verdict: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("holds", "fails", "inconclusive"):
            raise ValueError(f"bad verdict {self.verdict!r}")

    @property
    def total(self) -> float:
        s = float(self.partial_sums[-1]) if len(self.partial_sums) else 0.0
        return s + (self.tail_bound or 0.0)

    def rows(self):
        """(condition, n, term, partial_sum, tail_bound, verdict) rows for export."""
        out = []
        for n, (t, ps) in enumerate(zip(self.terms, self.partial_sums)):
            out.append((self.condition, n, float(t), float(ps),
                        self.tail_bound, self.verdict))
        return out


# ---------------------------------------------------------------------------
# operator actions on Fourier observables


def pf_doubling_apply(obs: FourierObservable) -> FourierObservable:
    """One step of the transfer operator of x -> 2x mod 1: c'_k = c_{2k}.

    Frequencies not divisible by 2 are annihilated; the support shrinks.
    """
    if obs.torus_dim != 1:
        raise ValueError("doubling-map observables live on the 1-torus")
    keep = obs.freqs[:, 0] % 2 == 0
    return FourierObservable(obs.freqs[keep] // 2, obs.coeffs[keep])


def koopman_torus_apply(obs: FourierObservable, M: np.ndarray) -> FourierObservable:
    """Composition with the torus automorphism x -> Mx: frequency k -> M^T k."""
    M = np.asarray(M, dtype=np.int64)
    if M.shape != (obs.torus_dim, obs.torus_dim):
        raise ValueError("matrix dimension mismatch")
    if abs(round(float(np.linalg.det(M.astype(float))))) != 1:
        raise ValueError("matrix must be unimodular (|det| = 1)")
    return FourierObservable(obs.freqs @ M, obs.coeffs)


def cond_dynsys(obs: FourierObservable, horizon: int, eps: float = 1e-12) -> ConditionReport:
    """sum_{n>=0} ||K^n f||_2 / sqrt(n) for the doubling map (1/sqrt(0) -> 1).

    Exact on finite supports: ||K^n f||_2^2 = sum over k divisible by 2^n of
    |c_k|^2, which vanishes once 2^n exceeds the largest frequency, so the
    tail bound is exactly zero and the condition always holds for valid input.
    """
    terms = []
    cur = obs
    vanished_at = None
    for n in range(horizon + 1):
        nrm = np.sqrt(cur.l2_norm_sq())
        terms.append(nrm / (np.sqrt(n) if n >= 1 else 1.0))
        if cur.n_freq == 0 and vanished_at is None:
            vanished_at = n
        cur = pf_doubling_apply(cur)
    terms = np.array(terms)
    partial = np.cumsum(terms)
    if cur.n_freq == 0:
        tail = 0.0
        verdict = "holds" if tail < eps else "inconclusive"
    else:
        tail = None
        verdict = "inconclusive"
    return ConditionReport("conddynsys", terms, partial, tail, verdict,
                           detail={"vanished_at": vanished_at})


# ---------------------------------------------------------------------------
# finite-state Markov kernels


def _check_kernel(P: np.ndarray, m: np.ndarray):
    P = np.asarray(P, dtype=float)
    m = np.asarray(m, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("kernel must be square")
    if np.any(P < -KERNEL_ROW_TOL):
        raise ValueError("kernel has negative entries")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > KERNEL_ROW_TOL:
        raise ValueError("kernel rows must sum to 1")
    if m.shape != (P.shape[0],) or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-10:
        raise ValueError("m must be a probability vector over the states")
    if np.max(np.abs(m @ P - m)) > STATIONARY_TOL:
        raise ValueError("m is not stationary for the kernel")
    return P, m


def kernel_l2m_norm(g: np.ndarray, m: np.ndarray) -> float:
    """L^2(m) norm of a state observable g (shape (S,) or (S, dim))."""
    g = np.asarray(g, dtype=float)
    sq = g ** 2 if g.ndim == 1 else np.sum(g ** 2, axis=1)
    return float(np.sqrt(np.sum(m * sq)))


def kernel_adjoint(P: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Adjoint of P in the m-weighted inner product: P*(i,j) = m_j P(j,i) / m_i."""
    return (m[None, :] * P.T) / m[:, None]


def is_normal_kernel(P: np.ndarray, m: np.ndarray, tol: float = NORMALITY_TOL) -> bool:
    Ps = kernel_adjoint(P, m)
    return bool(np.max(np.abs(P @ Ps - Ps @ P)) <= tol)


def kernel_contraction_factor(P: np.ndarray, m: np.ndarray) -> float:
    """Operator norm of P on the mean-zero subspace of L^2(m).

    Second-largest singular value of D^{1/2} P D^{-1/2} with D = diag(m);
    the leading singular vector sqrt(m) carries the constants.
    """
    d = np.sqrt(m)
    B = d[:, None] * P / d[None, :]
    sv = np.linalg.svd(B, compute_uv=False)
    return float(sv[1]) if len(sv) > 1 else 0.0


def markov_condition(P: np.ndarray, m: np.ndarray, f: np.ndarray,
                     kind: str, horizon: int, eps: float = 1e-10) -> ConditionReport:
    """Check sum_n ||P^n f||_2 / sqrt(n) (kind="sqrt_sum") or
    sum_n ||P^n f||_2^2 (kind="normal_sq_sum") for a finite-state kernel.

    ||P^n f||_{2,m} is exact (repeated kernel application).  The tail beyond
    the horizon is bounded by the kernel's contraction factor on the mean-zero
    subspace when that factor is < 1.  When P is an m-isometry the terms never
    decay, which certifies divergence for nonzero f.  Also reports whether P
    is normal in the m-geometry, since the squared-sum condition only applies
    then.
    """
    if kind not in ("sqrt_sum", "normal_sq_sum"):
        raise ValueError(f"unknown kind {kind!r}")
    P, m = _check_kernel(P, m)
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    mean = m @ f
    if np.max(np.abs(mean)) > 1e-8:
        raise ValueError("f must be centered under m")

    norms = []
    g = f.copy()
    for n in range(1, horizon + 1):
        g = P @ g
        norms.append(kernel_l2m_norm(g, m))
    norms = np.array(norms)
    terms = norms / np.sqrt(np.arange(1, horizon + 1)) if kind == "sqrt_sum" else norms ** 2
    partial = np.cumsum(terms)

    rho = kernel_contraction_factor(P, m)
    last = norms[-1] if horizon >= 1 else kernel_l2m_norm(f, m)
    Ps = kernel_adjoint(P, m)
    isometry = np.max(np.abs(Ps @ P - np.eye(len(m)))) <= NORMALITY_TOL

    detail = {"rho": rho, "normal": is_normal_kernel(P, m), "isometry": isometry}
    if rho < 1.0 - 1e-12:
        # ||P^n f|| <= rho^(n-horizon) * ||P^horizon f|| for n > horizon
        if kind == "sqrt_sum":
            tail = last * rho / ((1.0 - rho) * np.sqrt(max(horizon, 1)))
        else:
            tail = last ** 2 * rho ** 2 / (1.0 - rho ** 2)
        # a geometric majorant certifies convergence of the series
        return ConditionReport(f"markov_{kind}", terms, partial, float(tail),
                               "holds", detail)
    if isometry and kernel_l2m_norm(f, m) > 0:
        # isometric kernel: ||P^n f|| = ||f|| for all n, terms bounded below
        detail["divergence_certificate"] = (
            "kernel is an m-isometry; terms are bounded below by a positive constant")
        return ConditionReport(f"markov_{kind}", terms, partial, None, "fails", detail)
    return ConditionReport(f"markov_{kind}", terms, partial, None, "inconclusive", detail)


def phi_mixing_coeffs(P: np.ndarray, m: np.ndarray, f_scalar: np.ndarray,
                      horizon: int, lookahead: int | None = None) -> np.ndarray:
    """phi_Y(n) for Y_i = f(W_i) on a finite-state stationary chain, n = 1..horizon.

    Exact: phi(F_0, Y_i) = max over start states s and thresholds x (only the
    finitely many values of f matter) of |P(Y_i <= x | W_0 = s) - P(Y_i <= x)|,
    then the running sup over i >= n.  The sup over i is evaluated over a
    window [n, lookahead]; with a strict contraction the inner coefficients
    decay monotonically so the window is exact, and lookahead defaults to
    2 * horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    P, m = _check_kernel(P, m)
    f_scalar = np.asarray(f_scalar, dtype=float)
    if lookahead is None:
        lookahead = 2 * horizon
    order = np.argsort(f_scalar)
    # threshold events {Y <= x} are the nested preimages of sorted f values
    inner = []
    Pn = np.eye(len(m))
    for i in range(1, lookahead + 1):
        Pn = Pn @ P
        best = 0.0
        cume_cond = np.cumsum(Pn[:, order], axis=1)     # per start state
        cume_marg = np.cumsum(m[order])
        best = np.max(np.abs(cume_cond - cume_marg[None, :]))
        inner.append(best)
    inner = np.array(inner)
    # running sup over i >= n within the lookahead window
    phi = np.maximum.accumulate(inner[::-1])[::-1][:horizon]
    return phi


def cond_ddm(phi: np.ndarray, p: float, horizon: int | None = None,
             eps: float = 1e-10) -> ConditionReport:
    """sum_{k>=1} phi(k)^((p-1)/p) / sqrt(k) with exponent convention 1 at p = inf.

    ``phi`` must be nonincreasing in [0, 1].  The tail is certified
    geometrically when the data shows a stable ratio rho < 1; an exactly-zero
    tail or a constant positive tail give "holds" / "fails" respectively,
    anything else is inconclusive.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < -1e-15) or np.any(phi > 1 + 1e-12):
        raise ValueError("phi values must lie in [0, 1]")
    if np.any(np.diff(phi) > 1e-12):
        raise ValueError("phi must be nonincreasing")
    if not (1.0 < p):
        raise ValueError("p must be > 1 (p = inf allowed)")
    expo = 1.0 if np.isinf(p) else (p - 1.0) / p
    n = len(phi) if horizon is None else min(horizon, len(phi))
    k = np.arange(1, n + 1)
    terms = phi[:n] ** expo / np.sqrt(k)
    partial = np.cumsum(terms)

    detail: dict = {}
    if phi[n - 1] == 0.0:
        return ConditionReport("condDDM", terms, partial, 0.0, "holds", detail)
    half = max(n // 2, 1)
    tail_vals = phi[half - 1:n]
    ratios = tail_vals[1:] / tail_vals[:-1] if len(tail_vals) > 1 else np.array([])
    if len(ratios) and np.max(ratios) < 1.0 - 1e-9:
        rho = float(np.max(ratios))
        detail["rho"] = rho
        # phi(k) <= phi(n) rho^(k-n) for k > n; the geometric majorant
        # certifies summability, so the condition holds with this tail bound
        r = rho ** expo
        tail = (phi[n - 1] ** expo) * r / ((1.0 - r) * np.sqrt(n))
        return ConditionReport("condDDM", terms, partial, float(tail), "holds", detail)
    if len(ratios) and np.min(tail_vals) >= max(np.max(tail_vals) - 1e-12, 1e-12):
        # constant positive tail: phi nonincreasing with this plateau as its
        # limit gives terms >= c/sqrt(k), a divergent minorant
        detail["divergence_certificate"] = (
            f"phi constant at {float(tail_vals[-1]):.6g} over the observed tail; "
            "terms are minorized by c/sqrt(k)")
        return ConditionReport("condDDM", terms, partial, None, "fails", detail)
    return ConditionReport("condDDM", terms, partial, None, "inconclusive", detail)


def fourier_tail_check(obs: FourierObservable, beta: float, C: float,
                       m_grid) -> ConditionReport:
    """Check sum_{|k| >= m} |c_k|^2 <= C / (L(m) L(L(m))^beta) on the grid.

    |k| is the max-norm of the frequency vector.  Requires beta > 2 (the
    hypothesis of the torus-automorphism corollary); exact on finite supports.
    """
    if beta <= 2:
        raise ValueError("beta must be > 2 for the tail condition to apply")
    m_grid = np.asarray(m_grid, dtype=int)
    if np.any(m_grid < 1):
        raise ValueError("grid values must be >= 1")
    kmax = np.max(np.abs(obs.freqs), axis=1) if obs.n_freq else np.zeros(0)
    weights = np.sum(np.abs(obs.coeffs) ** 2, axis=1) if obs.n_freq else np.zeros(0)
    tails = np.array([np.sum(weights[kmax >= mm]) for mm in m_grid])
    bounds = np.array([C / (log_plus(mm) * log_plus(log_plus(mm)) ** beta)
                       for mm in m_grid])
    ok = bool(np.all(tails <= bounds + 1e-15))
    terms = tails
    partial = np.cumsum(terms)
    verdict = "holds" if ok else "fails"
    detail = {"bounds": bounds, "m_grid": m_grid}
    if not ok:
        bad = int(m_grid[np.argmax(tails > bounds)])
        detail["divergence_certificate"] = f"tail exceeds the bound at m = {bad}"
    return ConditionReport("fourier_tail", terms, partial,
                           0.0 if ok else None, verdict, detail)
