"""Limit-theorem statistics at LIL / Marcinkiewicz-Zygmund / CLT scales.

All statistics consume a "path source": anything with ``n_steps``,
``n_paths``, ``dim`` and a ``blocks()`` method yielding step blocks (a
materialized PathBatch or a lazy PathStream).  Scans are per-path maps
followed by order-independent reductions, so partial results merge exactly
for counts and maxima.

``L`` is the natural log clipped below at 1, so every normalizer is
well-defined from n = 1 (L(L(1)) = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from lilab.spaces import CovarianceOperator, NormSpec, batch_norm

LAMBDA_GRID_SIZE = 64


def log_plus(x) -> float | np.ndarray:
    """L(x) = max(1, ln x), extended by L(x) = 1 on [0, e]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("log_plus needs nonnegative arguments")
    out = np.maximum(1.0, np.log(np.maximum(x, 1.0)))
    return float(out) if out.ndim == 0 else out


def bennett_h(u) -> float | np.ndarray:
    """h(u) = (1+u) log(1+u) - u, the exponent shape of the exponential bound."""
    u = np.asarray(u, dtype=float)
    out = (1.0 + u) * np.log1p(u) - u
    return float(out) if out.ndim == 0 else out


@dataclass
class MaximalStats:
    """Per-path maximal-function samples plus the dyadic-block statistic."""

    p: float | str
    n_max: int
    values: np.ndarray        # sup_{n <= n_max} |S_n| / normalizer, per path
    m_star: np.ndarray        # sup_s max_{k <= 2^s} |S_k| / (2^(s/2) L(s)^(1/2))


@dataclass
class LimitReport:
    statistic: str
    estimate: float
    se: float
    n_paths: int
    n_grid: np.ndarray | None = None
    curves: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    passed: bool | None = None


def _path_norms(values: np.ndarray, space: NormSpec | None) -> np.ndarray:
    if space is None:
        return np.linalg.norm(values, axis=-1)
    return batch_norm(values, space)


def _normalizer(n: np.ndarray, p) -> np.ndarray:
    n = n.astype(float)
    if p == "lil":
        return np.sqrt(n * log_plus(log_plus(n)))
    return n ** (1.0 / float(p))


def _dyadic_l(s: int) -> float:
    # L(s) with the s = 0 convention L(0) := 1
    return 1.0 if s == 0 else max(1.0, math.log(s))


# ---------------------------------------------------------------------------
# maximal functions and weak norms


def maximal_stats(source, p, n_max: int | None = None,
                  space: NormSpec | None = None) -> MaximalStats:
    """Running sup of |S_n|/normalizer for n <= n_max, per path.

    ``p`` is a real in [1, 2) (normalizer n^(1/p)) or "lil" (normalizer
    sqrt(n L(L(n)))).  Also computes the dyadic blockwise statistic
    sup_s max_{k <= 2^s} |S_k| / (2^(s/2) L(s)^(1/2)) for 2^s <= n_max.
    """
    n_max = n_max or source.n_steps
    if n_max < 1 or n_max > source.n_steps:
        raise ValueError("n_max must lie in [1, source.n_steps]")
    n_paths = source.n_paths
    s_max = int(math.floor(math.log2(n_max)))
    carry = np.zeros((n_paths, source.dim))
    run_max = np.zeros(n_paths)
    pref_max = np.zeros(n_paths)
    m_star = np.zeros(n_paths)
    for block in source.blocks():
        if block.start >= n_max:
            break
        vals = block.values[:, :n_max - block.start]
        length = vals.shape[1]
        cs = carry[:, None, :] + np.cumsum(vals, axis=1)
        norms = _path_norms(cs, space)
        absn = np.arange(block.start + 1, block.start + length + 1)
        ratio = norms / _normalizer(absn, p)[None, :]
        run_max = np.maximum(run_max, ratio.max(axis=1))
        pm = np.maximum.accumulate(np.maximum(norms, pref_max[:, None] * 0
                                              + pref_max[:, None]), axis=1)
        for s in range(s_max + 1):
            k = 1 << s
            if block.start < k <= block.start + length:
                col = pm[:, k - 1 - block.start]
                m_star = np.maximum(m_star, col / (2.0 ** (s / 2.0)
                                                   * math.sqrt(_dyadic_l(s))))
        pref_max = pm[:, -1]
        carry = cs[:, -1, :]
    return MaximalStats(p, n_max, run_max, m_star)


def weak_norm(samples: np.ndarray, p: float):
    """(estimate, profile) for the weak-L^p functional sup_t t P(|Z| > t)^(1/p).

    On a finite sample, t P(|Z| > t)^(1/p) is increasing between order
    statistics, so the supremum is attained as t approaches an order
    statistic v from below, where the open tail equals the closed tail
    P(|Z| >= v); the estimate maxes v (#{x >= v}/n)^(1/p) over the sample
    values and is exact.  A 64-point log-spaced profile
    (lambda, lambda * closed-tail^(1/p)) is returned so the shape of the sup
    is auditable.
    """
    samples = np.abs(np.asarray(samples, dtype=float).ravel())
    if len(samples) == 0:
        raise ValueError("empty sample set")
    if p < 1:
        raise ValueError("p must be >= 1")
    smax = samples.max()
    if smax == 0.0:
        return 0.0, np.zeros((0, 2))
    srt = np.sort(samples)
    n = len(srt)
    closed_tail = 1.0 - np.searchsorted(srt, srt, side="left") / n
    exact = float(np.max(srt * closed_tail ** (1.0 / p)))
    lo = max(np.percentile(samples, 1.0), smax * 1e-12)
    grid = np.geomspace(lo, smax, LAMBDA_GRID_SIZE)
    tail = 1.0 - np.searchsorted(srt, grid, side="left") / n
    prof = grid * tail ** (1.0 / p)
    return exact, np.column_stack([grid, prof])


def profile_last_decade_variation(profile: np.ndarray) -> float:
    """Relative variation of the running sup over the last decade of lambda.

    Small values certify that the weak-norm sup is not being driven by the
    grid boundary.
    """
    if len(profile) == 0:
        return 0.0
    lam, val = profile[:, 0], profile[:, 1]
    run = np.maximum.accumulate(val)
    sel = lam >= lam[-1] / 10.0
    window = run[sel]
    if window[-1] == 0:
        return 0.0
    return float((window.max() - window.min()) / window[-1])


def hopf_check(source, n_max: int | None = None,
               space: NormSpec | None = None) -> LimitReport:
    """Weak-(1,infty) norm of the ergodic maximal function against E|X|."""
    n_max = n_max or source.n_steps
    ms = maximal_stats(source, 1.0, n_max, space)
    # E|X| from the same sweep scales: one pass over values
    tot, cnt = 0.0, 0
    path_means = np.zeros(source.n_paths)
    for block in source.blocks():
        if block.start >= n_max:
            break
        vals = block.values[:, :n_max - block.start]
        nrm = _path_norms(vals, space)
        path_means += nrm.sum(axis=1)
        cnt += nrm.shape[1]
    path_means /= cnt
    mean_abs = float(path_means.mean())
    se_mean = float(path_means.std(ddof=1) / np.sqrt(len(path_means)))
    est, prof = weak_norm(ms.values, 1.0)
    idx = int(np.argmax(prof[:, 1]))
    tail_at_max = (prof[idx, 1] / prof[idx, 0])
    se_tail = math.sqrt(max(tail_at_max * (1 - tail_at_max), 1e-12) / len(ms.values))
    rel_se = math.hypot(se_tail / max(tail_at_max, 1e-12), se_mean / max(mean_abs, 1e-12))
    passed = est <= mean_abs * (1.0 + 3.0 * rel_se) + 1e-12
    return LimitReport("hopf", est, est * rel_se, source.n_paths,
                       extras={"mean_abs": mean_abs, "rel_se": rel_se,
                               "profile": prof},
                       passed=bool(passed))


# ---------------------------------------------------------------------------
# LIL limsup


def lil_limsup(source, window_fraction: float = 0.75,
               space: NormSpec | None = None) -> LimitReport:
    """Windowed estimate of limsup |S_n| / sqrt(2 n L(L(n))).

    The limit being estimated is a supremum over the dual unit ball, so the
    estimator scans a fixed set of dual directions (coordinate axes plus
    seeded random unit vectors; a single direction when dim = 1): per
    direction, each path's max of |<x*, S_n>| / sqrt(2 n L(L(n))) over the
    window n >= n_max^window_fraction (early transients, where the
    normalization has not settled, are discarded), then the 90th percentile
    across paths; the estimate is the max over directions.  Per-path
    directional maxima approach the common a.s. limit from below at desk
    scales and a pilot calibration showed the upper quantile tracking the
    limit closest.  The max of the plain norm ratio is also reported; it
    overshoots in higher dimension until L(L(n)) dominates the dimension.
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    n_max = source.n_steps
    dim = source.dim
    s_top = math.log2(n_max)
    n_lo = int(2 ** (window_fraction * s_top))
    if dim == 1:
        dirs = np.ones((1, 1))
    else:
        rng = np.random.Generator(np.random.Philox(key=[0xD1A7, 0]))
        rand = rng.standard_normal((8, dim))
        rand /= np.linalg.norm(rand, axis=1, keepdims=True)
        dirs = np.concatenate([np.eye(dim), rand])
    carry = np.zeros((source.n_paths, dim))
    win_max = np.zeros((source.n_paths, len(dirs)))
    full_max = np.zeros(source.n_paths)
    for block in source.blocks():
        vals = block.values
        cs = carry[:, None, :] + np.cumsum(vals, axis=1)
        norms = _path_norms(cs, space)
        absn = np.arange(block.start + 1, block.start + vals.shape[1] + 1)
        scale = np.sqrt(2.0 * absn * log_plus(log_plus(absn)))
        full_max = np.maximum(full_max, (norms / scale[None, :]).max(axis=1))
        inwin = absn >= n_lo
        if inwin.any():
            proj = np.abs(cs[:, inwin] @ dirs.T) / scale[inwin][None, :, None]
            win_max = np.maximum(win_max, proj.max(axis=1))
        carry = cs[:, -1, :]
    per_dir = np.percentile(win_max, 90, axis=0)
    est = float(per_dir.max())
    best = int(np.argmax(per_dir))
    qs = {q: float(np.percentile(win_max[:, best], q)) for q in (50, 90, 95, 99)}
    se = float(win_max[:, best].std(ddof=1) / np.sqrt(len(win_max)))
    return LimitReport("lil_limsup", est, se, source.n_paths,
                       extras={"window_start": n_lo, "quantiles": qs,
                               "per_direction": per_dir,
                               "cross_path_max": float(win_max[:, best].max()),
                               "full_range_max": float(full_max.max()),
                               "per_path": win_max[:, best]})


# ---------------------------------------------------------------------------
# covariance series


def covariance_series(source, max_lag: int) -> CovarianceOperator:
    """Lag-windowed long-run covariance sum_{|m| <= max_lag} Cov(X_0, X_m).

    All shipped models are centered by construction, so no empirical
    centering is applied.  Tiny negative eigenvalues from lag truncation are
    clipped to zero.
    """
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if max_lag >= source.n_steps:
        raise ValueError("max_lag must be smaller than the path length")
    dim = source.dim
    acc = np.zeros((max_lag + 1, dim, dim))
    cnt = np.zeros(max_lag + 1)
    tail = None  # last max_lag values of the previous block
    for block in source.blocks():
        vals = block.values
        ext = vals if tail is None else np.concatenate([tail, vals], axis=1)
        off = 0 if tail is None else tail.shape[1]
        for m in range(max_lag + 1):
            lo = max(off - m, 0)
            x = ext[:, lo:-m if m else ext.shape[1], :]
            y = ext[:, lo + m:, :]
            acc[m] += np.einsum("pti,ptj->ij", x, y)
            cnt[m] += x.shape[0] * x.shape[1]
        tail = ext[:, -max_lag:, :] if max_lag else None
    covs = acc / cnt[:, None, None]
    K = covs[0].copy()
    for m in range(1, max_lag + 1):
        K += covs[m] + covs[m].T
    K = 0.5 * (K + K.T)
    w, v = np.linalg.eigh(K)
    if w.min() < -0.05 * max(w.max(), 1e-300):
        raise ValueError("lag-truncated covariance is far from PSD; increase data or lag")
    K = (v * np.maximum(w, 0.0)) @ v.T
    return CovarianceOperator(0.5 * (K + K.T))


# ---------------------------------------------------------------------------
# martingale approximation error and MZ decay


def _grid_scan(source, n_grid, per_path_value):
    """Record per-path |S_n|-derived values at each grid point.

    ``per_path_value(norms, absn)`` maps block-wise |S_n| to the recorded
    quantity; returns array (n_paths, len(n_grid)).
    """
    n_grid = np.asarray(n_grid, dtype=int)
    if np.any(np.diff(n_grid) <= 0) or n_grid[0] < 1 or n_grid[-1] > source.n_steps:
        raise ValueError("n_grid must be strictly increasing within the path length")
    out = np.zeros((source.n_paths, len(n_grid)))
    carry = np.zeros((source.n_paths, source.dim))
    for block in source.blocks():
        vals = block.values
        cs = carry[:, None, :] + np.cumsum(vals, axis=1)
        absn = np.arange(block.start + 1, block.start + vals.shape[1] + 1)
        sel = np.isin(absn, n_grid)
        if sel.any():
            ratios = per_path_value(np.linalg.norm(cs[:, sel, :], axis=2), absn[sel])
            idx = np.searchsorted(n_grid, absn[sel])
            out[:, idx] = ratios
        carry = cs[:, -1, :]
    return n_grid, out


def mz_decay(source, p: float, n_grid) -> LimitReport:
    """Quantile curves of |S_n| / n^(1/p) on the grid, with a decay diagnostic."""
    if not 1.0 < p < 2.0:
        raise ValueError("p must lie in (1, 2)")
    n_grid, samples = _grid_scan(
        source, n_grid, lambda nrm, n: nrm / n.astype(float) ** (1.0 / p))
    med = np.median(samples, axis=0)
    q90 = np.percentile(samples, 90, axis=0)
    decayed = bool(med[-1] < med[0])
    return LimitReport("mz_decay", float(med[-1]), float(samples[:, -1].std(ddof=1)
                                                         / np.sqrt(len(samples))),
                       source.n_paths, n_grid,
                       curves={"median": med, "q90": q90},
                       extras={"decay_ratio": float(med[-1] / med[0]) if med[0] else 0.0},
                       passed=decayed)


def approx_error_curve(model, approx, source, n_grid) -> LimitReport:
    """Median and 95th-percentile curves of the approximation error at scale n.

    Per path and grid point n, the value is sup over t in (n/2, n] of
    |S_t - M_t| / sqrt(t L(L(t))): for residuals with an atom at zero (e.g.
    coboundaries of coarse chains) the pointwise value flips between 0 and
    its typical size, while the dyadic-window sup has the same exact decay
    rate and is stable.  ``approx`` must expose ``d_block(block)`` returning
    the coupled martingale differences for the same sample points (see
    filtration).
    """
    n_grid = np.asarray(n_grid, dtype=int)
    if np.any(np.diff(n_grid) <= 0) or n_grid[0] < 1 or n_grid[-1] > source.n_steps:
        raise ValueError("n_grid must be strictly increasing within the path length")
    out = np.zeros((source.n_paths, len(n_grid)))
    carry = np.zeros((source.n_paths, source.dim))
    for block in source.blocks():
        diff = block.values - approx.d_block(block)
        cs = carry[:, None, :] + np.cumsum(diff, axis=1)
        absn = np.arange(block.start + 1, block.start + diff.shape[1] + 1)
        nrm = None
        for gi, g in enumerate(n_grid):
            sel = (absn > g // 2) & (absn <= g)
            if not sel.any():
                continue
            if nrm is None:
                nrm = np.linalg.norm(cs, axis=2)
            nn = absn[sel].astype(float)
            scaled = nrm[:, sel] / np.sqrt(nn * log_plus(log_plus(nn)))[None, :]
            out[:, gi] = np.maximum(out[:, gi], scaled.max(axis=1))
        carry = cs[:, -1, :]
    med = np.median(out, axis=0)
    p95 = np.percentile(out, 95, axis=0)
    decreasing = bool(med[-1] < med[0]) if med[0] > 0 else True
    return LimitReport("approx_error", float(med[-1]),
                       float(out[:, -1].std(ddof=1) / np.sqrt(len(out))),
                       source.n_paths, n_grid,
                       curves={"median": med, "p95": p95},
                       extras={"decay_ratio": float(med[-1] / med[0]) if med[0] else 0.0},
                       passed=decreasing)


# ---------------------------------------------------------------------------
# exponential inequality


def freedman_pinelis_check(source, xs, ys, n: int, D: float = 1.0):
    """Empirical joint-tail probabilities against 2 exp(-(y/c^2) h(xc/y)).

    The source must stream a bounded martingale-difference model (bound c and
    the conditional second moment come from the model).  Returns a dict with
    empirical probabilities, bounds, standard errors and pass flags for every
    (x, y) pair.
    """
    model = source.model
    c = model.md_bound()
    if c is None:
        raise ValueError("exponential inequality needs a bounded difference model")
    base = model.md_second_moment()
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have the same shape")
    run_max = np.zeros(source.n_paths)
    condvar = np.zeros(source.n_paths)
    carry = np.zeros((source.n_paths, source.dim))
    for block in source.blocks():
        if block.start >= n:
            break
        vals = block.values[:, :n - block.start]
        cs = carry[:, None, :] + np.cumsum(vals, axis=1)
        run_max = np.maximum(run_max, np.linalg.norm(cs, axis=2).max(axis=1))
        condvar += base * block.aux["hsq"][:, :vals.shape[1]].sum(axis=1)
        carry = cs[:, -1, :]
    emp = np.empty(xs.shape)
    bound = np.empty(xs.shape)
    se = np.empty(xs.shape)
    for i, (x, y) in enumerate(zip(xs.ravel(), ys.ravel())):
        hit = (run_max > x) & (condvar <= y / D ** 2)
        p = hit.mean()
        emp.ravel()[i] = p
        bound.ravel()[i] = 2.0 * math.exp(-(y / c ** 2) * bennett_h(x * c / y))
        se.ravel()[i] = math.sqrt(p * (1 - p) / len(hit)) if 0 < p < 1 \
            else math.sqrt(1.0 / len(hit) ** 2)
    passed = emp <= bound + 3.0 * se
    return {"empirical": emp, "bound": bound, "se": se, "passed": passed,
            "c": c, "cond_second_moment": base}


# ---------------------------------------------------------------------------
# CLT diagnostics


def clt_diagnostics(source, n: int, directions: np.ndarray,
                    kappa: CovarianceOperator | None = None,
                    significance: float = 0.001) -> LimitReport:
    """One-sample KS of <u, S_n/sqrt(n)> / sqrt(u' K u) against N(0,1).

    ``directions`` is either an explicit (k, dim) array or a count, in which
    case that many seeded random unit directions are drawn (a single constant
    direction when dim = 1).  ``kappa`` defaults to the cross-path covariance
    of S_n/sqrt(n) (a consistent long-run covariance estimate at CLT scale).
    Joint pass at the stated significance with a Sidak correction across
    directions; near-degenerate directions are skipped with a notice.
    """
    if np.isscalar(directions):
        k = int(directions)
        if source.dim == 1:
            directions = np.ones((min(k, 1) or 1, 1))
        else:
            rng = np.random.Generator(np.random.Philox(key=[0xD1A8, 0]))
            directions = rng.standard_normal((k, source.dim))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    carry = np.zeros((source.n_paths, source.dim))
    for block in source.blocks():
        if block.start >= n:
            break
        vals = block.values[:, :n - block.start]
        carry += vals.sum(axis=1)
    Z = carry / math.sqrt(n)                       # (paths, dim)
    if kappa is None:
        Khat = (Z.T @ Z) / len(Z)
    else:
        Khat = kappa.matrix
    alpha = 1.0 - (1.0 - significance) ** (1.0 / len(directions))
    pvals, variances, skipped = [], [], []
    for i, u in enumerate(directions):
        u = u / np.linalg.norm(u)
        v = float(u @ Khat @ u)
        variances.append(float(np.var(Z @ u)))
        if v < 1e-12:
            skipped.append(i)
            pvals.append(np.nan)
            continue
        stat = sps.kstest((Z @ u) / math.sqrt(v), "norm")
        pvals.append(float(stat.pvalue))
    pvals = np.array(pvals)
    ok = bool(np.all(pvals[~np.isnan(pvals)] > alpha)) and len(skipped) < len(directions)
    return LimitReport("clt", float(np.nanmin(pvals)), 0.0, source.n_paths,
                       curves={"pvalues": pvals,
                               "directional_variance": np.array(variances)},
                       extras={"alpha_per_direction": alpha, "skipped": skipped,
                               "kappa": Khat},
                       passed=ok)
