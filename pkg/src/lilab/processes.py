"""Declarative stationary process families with reproducible simulation.

Every family is a dataclass that can be serialized to the experiment config
format.  Simulation is a pure function of (model, n_steps, n_paths,
master_seed): path p draws from a counter-based Philox stream keyed by
(master_seed, stream, p), so paths are mutually independent and identical
inputs give bit-identical output regardless of chunking or scheduling.

Torus and doubling-map orbits use 64-bit fixed-point fractions so that
x -> 2x mod 1 and the integer-matrix action are exact bit operations
(floating point would collapse doubling-map orbits onto 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from lilab.operators import FourierObservable
from lilab.spaces import CovarianceOperator

DEFAULT_MEMORY_BUDGET = 2 ** 31  # bytes of materialized path values

STREAM_MAIN = 0
STREAM_INIT = 1
STREAM_ORACLE = 7  # reserved for fixed-seed moment oracles, never for paths


class MemoryBudgetError(MemoryError):
    """Materializing the batch would exceed the budget; stream blocks instead."""


def path_rng(master_seed: int, path: int, stream: int = STREAM_MAIN) -> np.random.Generator:
    """Philox generator for one path: key = (master_seed, stream:8 | path:56)."""
    if not 0 <= path < 2 ** 56:
        raise ValueError("path index out of range")
    key = np.array([master_seed % 2 ** 64,
                    (np.uint64(stream) << np.uint64(56)) + np.uint64(path)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# innovations


@dataclass(frozen=True)
class InnovationSpec:
    """I.i.d. mean-zero innovations; coordinates are i.i.d. copies of the law."""

    law: str
    dim: int = 1
    sigma: float = 1.0          # gaussian
    a: float = -1.0             # uniform support [a, b], must be centered
    b: float = 1.0
    alpha: float = 3.0          # centered_pareto shape, > 2 for finite variance

    def __post_init__(self):
        if self.law not in ("rademacher", "gaussian", "uniform", "centered_pareto"):
            raise ValueError(f"unknown innovation law {self.law!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.law == "gaussian" and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.law == "uniform":
            if self.b <= self.a:
                raise ValueError("need a < b")
            if abs(self.a + self.b) > 1e-12:
                raise ValueError("uniform law must be centered (a = -b)")
        if self.law == "centered_pareto" and self.alpha <= 2:
            raise ValueError("alpha must exceed 2 (finite variance)")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(n, dim) array of innovations."""
        shape = (n, self.dim)
        if self.law == "rademacher":
            return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
        if self.law == "gaussian":
            return rng.normal(0.0, self.sigma, size=shape)
        if self.law == "uniform":
            return rng.uniform(self.a, self.b, size=shape)
        # centered Pareto: (Lomax + 1) has density alpha / x^(alpha+1) on [1, inf)
        return rng.pareto(self.alpha, size=shape) + 1.0 - self.alpha / (self.alpha - 1.0)

    def variance(self) -> float:
        """Per-coordinate variance."""
        if self.law == "rademacher":
            return 1.0
        if self.law == "gaussian":
            return self.sigma ** 2
        if self.law == "uniform":
            return (self.b - self.a) ** 2 / 12.0
        a = self.alpha
        return a / ((a - 1.0) ** 2 * (a - 2.0))

    def bound(self) -> float | None:
        """Sup of |coordinate|, when the law is bounded."""
        if self.law == "rademacher":
            return 1.0
        if self.law == "uniform":
            return max(abs(self.a), abs(self.b))
        return None

    def to_config(self) -> dict:
        cfg = {"law": self.law, "dim": self.dim}
        if self.law == "gaussian":
            cfg["sigma"] = self.sigma
        elif self.law == "uniform":
            cfg["a"], cfg["b"] = self.a, self.b
        elif self.law == "centered_pareto":
            cfg["alpha"] = self.alpha
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "InnovationSpec":
        return cls(**cfg)


# ---------------------------------------------------------------------------
# modulus of continuity class


@dataclass(frozen=True)
class ModulusSpec:
    """Modulus phi: nondecreasing, continuous, phi(0) = 0, bounded by 1."""

    kind: str = "power"
    alpha: float = 1.0
    table: tuple[tuple[float, float], ...] | None = None  # concave_custom: (x, phi(x))

    def __post_init__(self):
        if self.kind not in ("concave_sqrt", "power", "concave_custom"):
            raise ValueError(f"unknown modulus kind {self.kind!r}")
        if self.kind == "power" and not 0 < self.alpha <= 1:
            raise ValueError("power modulus needs alpha in (0, 1]")
        if self.kind == "concave_custom":
            if not self.table:
                raise ValueError("concave_custom needs a table")
            xs = [x for x, _ in self.table]
            ys = [y for _, y in self.table]
            if xs != sorted(xs) or ys != sorted(ys) or ys[0] < 0 or ys[-1] > 1:
                raise ValueError("table must be nondecreasing into [0, 1]")

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        if self.kind == "power":
            cfg["alpha"] = self.alpha
        if self.kind == "concave_custom":
            cfg["table"] = [list(p) for p in self.table]
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "ModulusSpec":
        cfg = dict(cfg)
        if "table" in cfg:
            cfg["table"] = tuple(tuple(p) for p in cfg["table"])
        return cls(**cfg)


def phi_modulus_eval(phi: ModulusSpec, x) -> float | np.ndarray:
    """phi(x) for x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("modulus argument must be nonnegative")
    if phi.kind == "concave_sqrt":
        out = np.minimum(1.0, np.sqrt(x))
    elif phi.kind == "power":
        out = np.minimum(1.0, x ** phi.alpha)
    else:
        xs = np.array([p[0] for p in phi.table])
        ys = np.array([p[1] for p in phi.table])
        out = np.interp(x, xs, ys, left=0.0, right=float(ys[-1]))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# pointwise map registries (names keep models serializable)

G_FUNCS = {
    "identity": lambda x: x,
    "sign": np.sign,
    "cube": lambda x: x ** 3,
}

# bounded maps of the q previous innovations, |h| <= 1; input (..., q, dim)
H_FUNCS = {
    "one": lambda w: np.ones(w.shape[:-2]),
    "cos_sum": lambda w: np.cos(np.sum(w, axis=(-2, -1))),
    "sign_first": lambda w: np.sign(w[..., 0, 0]) + (w[..., 0, 0] == 0),
}

F_FUNCS = {
    "abs": np.abs,
    "sqrt_abs": lambda y: np.sqrt(np.abs(y)),
    "tanh": np.tanh,
}


def g_second_moment(g: str, innovation: InnovationSpec) -> float:
    """E|g(xi)|^2 over all coordinates (analytic where known, MC oracle else)."""
    v = innovation.variance()
    if g == "identity":
        return innovation.dim * v
    if g == "sign":
        return float(innovation.dim)
    rng = path_rng(0xC0FFEE, 0, STREAM_ORACLE)
    xi = innovation.sample(rng, 10 ** 6)
    return float(np.mean(np.sum(G_FUNCS[g](xi) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# process model dataclasses


@dataclass(frozen=True)
class MartingaleDifference:
    """d_n = g(xi_n) * h(xi_{n-1}, ..., xi_{n-q}) with E g(xi) = 0, |h| <= 1."""

    innovation: InnovationSpec
    g: str = "identity"
    h: str = "one"
    q: int = 0

    def __post_init__(self):
        if self.g not in G_FUNCS:
            raise ValueError(f"unknown g {self.g!r}")
        if self.h not in H_FUNCS:
            raise ValueError(f"unknown h {self.h!r}")
        if self.q < 0 or (self.h != "one" and self.q < 1):
            raise ValueError("h of previous innovations needs q >= 1")
        rng = path_rng(0xC0FFEE, 1, STREAM_ORACLE)
        xi = self.innovation.sample(rng, 10 ** 5)
        gx = G_FUNCS[self.g](xi)
        se = np.std(gx, axis=0) / np.sqrt(len(gx))
        if np.any(np.abs(np.mean(gx, axis=0)) > 5 * se + 1e-12):
            raise ValueError(f"g = {self.g!r} is not centered under the innovation law")

    @property
    def dim(self) -> int:
        return self.innovation.dim

    def md_bound(self) -> float | None:
        """Uniform bound on |d_n|_2 when available (h is bounded by 1)."""
        b = self.innovation.bound()
        if b is None:
            return None
        if self.g == "identity":
            gb = b
        elif self.g == "sign":
            gb = 1.0
        elif self.g == "cube":
            gb = b ** 3
        return float(np.sqrt(self.dim) * gb)

    def md_second_moment(self) -> float:
        """E(|d_n|^2 | past) / h(past)^2 = E|g(xi)|^2."""
        return g_second_moment(self.g, self.innovation)


@dataclass(frozen=True)
class LinearProcess:
    """X_n = sum_j A_j xi_{n - lag_j} over a contiguous finite lag range.

    ``coeffs`` has shape (n_lags, out_dim, in_dim); lag j is min_lag + j.
    Positive lags look into the past, negative ones into the future.
    """

    innovation: InnovationSpec
    coeffs: np.ndarray
    min_lag: int = 0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None, None]
        if c.ndim != 3 or c.shape[2] != self.innovation.dim:
            raise ValueError("coeffs must have shape (n_lags, out_dim, innovation.dim)")
        if c.shape[0] < 1:
            raise ValueError("need at least one coefficient")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def scalar(cls, a, innovation: InnovationSpec, min_lag: int = 0) -> "LinearProcess":
        a = np.asarray(a, dtype=float)
        return cls(innovation=innovation, coeffs=a[:, None, None], min_lag=min_lag)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def max_lag(self) -> int:
        return self.min_lag + self.coeffs.shape[0] - 1

    @property
    def coeff_sum(self) -> np.ndarray:
        return self.coeffs.sum(axis=0)


@dataclass
class FunctionOfLinear:
    """X_n = f(Y_n) - E f(Y_n) for Y_n = sum_{k=0}^{K} a_k xi_{n-k} (scalar).

    The centering constant has no closed form; it is estimated once with a
    10^7-sample fixed-seed Monte Carlo and frozen into the model.
    """

    innovation: InnovationSpec
    a: np.ndarray
    f: str
    modulus: ModulusSpec
    growth_r: float = 1.0
    _center: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.innovation.dim != 1:
            raise ValueError("FunctionOfLinear takes scalar innovations")
        if self.f not in F_FUNCS:
            raise ValueError(f"unknown f {self.f!r}")
        if self.growth_r < 1:
            raise ValueError("growth exponent must be >= 1")
        self.a = np.asarray(self.a, dtype=float)
        if self.a.ndim != 1 or len(self.a) < 1:
            raise ValueError("a must be a nonempty coefficient vector")

    @property
    def dim(self) -> int:
        return 1

    @property
    def max_lag(self) -> int:
        return len(self.a) - 1

    def centering(self) -> float:
        if self._center is None:
            rng = path_rng(0xC0FFEE, 2, STREAM_ORACLE)
            n = 10 ** 7
            y = np.zeros(n)
            for k, ak in enumerate(self.a):
                if ak != 0.0:
                    # fresh i.i.d. draws per lag: Y's marginal law only needs
                    # the a_k-weighted sum of independent innovations
                    y += ak * self.innovation.sample(rng, n)[:, 0]
            self._center = float(np.mean(F_FUNCS[self.f](y)))
        return self._center


@dataclass(frozen=True)
class MarkovChainFn:
    """Stationary finite-state chain with state observable f: S -> R^dim.

    f is centered under m at construction (the simulated process is
    f(W_n) - m.f).
    """

    kernel: np.ndarray
    stationary: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.kernel, dtype=float)
        m = np.asarray(self.stationary, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if f.ndim == 1:
            f = f[:, None]
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("kernel must be square")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12 or np.any(P < -1e-12):
            raise ValueError("kernel rows must sum to 1")
        if m.shape != (P.shape[0],) or abs(m.sum() - 1.0) > 1e-10 or np.any(m < 0):
            raise ValueError("stationary law must be a probability vector")
        if np.max(np.abs(m @ P - m)) > 1e-10:
            raise ValueError("law is not stationary for the kernel")
        if f.shape[0] != P.shape[0]:
            raise ValueError("observable must assign a value to every state")
        object.__setattr__(self, "kernel", P)
        object.__setattr__(self, "stationary", m)
        object.__setattr__(self, "f", f)

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def dim(self) -> int:
        return self.f.shape[1]

    @property
    def f_centered(self) -> np.ndarray:
        return self.f - (self.stationary @ self.f)[None, :]


@dataclass(frozen=True)
class DoublingMap:
    """Observable with finite Fourier support under x -> 2x mod 1."""

    observable: FourierObservable

    def __post_init__(self):
        if self.observable.torus_dim != 1:
            raise ValueError("doubling map lives on the 1-torus")

    @property
    def dim(self) -> int:
        return self.observable.dim


@dataclass(frozen=True)
class TorusAutomorphism:
    """Observable with finite Fourier support under x -> Mx mod 1 on T^d."""

    matrix: np.ndarray
    observable: FourierObservable

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=np.int64)
        d = self.observable.torus_dim
        if M.shape != (d, d):
            raise ValueError("matrix dimension must match the observable's torus")
        if abs(round(float(np.linalg.det(M.astype(float))))) != 1:
            raise ValueError("matrix must have |det| = 1")
        lam = np.linalg.eigvals(M.astype(float))
        if np.any(np.abs(np.abs(lam) - 1.0) < 1e-9):
            # rejects roots of unity (and, conservatively, any unit-modulus
            # eigenvalue): ergodicity is the standing assumption
            raise ValueError("matrix has a unit-modulus eigenvalue; automorphism not ergodic")
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self) -> int:
        return self.observable.dim


ProcessModel = (MartingaleDifference | LinearProcess | FunctionOfLinear
                | MarkovChainFn | DoublingMap | TorusAutomorphism)


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class Block:
    """One streamed chunk of steps: values[p, t - start] = X_t for path p."""

    start: int
    values: np.ndarray          # (n_paths, block_len, dim)
    aux: dict


@dataclass
class PathBatch:
    """Fully materialized batch of paths, immutable after construction.

    ``aux`` keeps whatever coupling data the family produces (innovations,
    chain states, torus points) so martingale approximants can be evaluated
    on the same sample points.
    """

    model: ProcessModel
    n_steps: int
    n_paths: int
    master_seed: int
    values: np.ndarray          # (n_paths, n_steps, dim)
    aux: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def blocks(self, step_block: int | None = None) -> Iterator[Block]:
        yield Block(0, self.values, self.aux)


@dataclass(frozen=True)
class PathStream:
    """Lazy path source: regenerates identical blocks on every iteration."""

    model: ProcessModel
    n_steps: int
    n_paths: int
    master_seed: int
    step_block: int | None = None
    path_offset: int = 0

    @property
    def dim(self) -> int:
        return self.model.dim

    def blocks(self, step_block: int | None = None) -> Iterator[Block]:
        return simulate_blocks(self.model, self.n_steps, self.n_paths,
                               self.master_seed,
                               step_block=step_block or self.step_block,
                               path_offset=self.path_offset)


def default_step_block(n_paths: int, dim: int, n_steps: int,
                       budget_elems: int = 2 ** 25) -> int:
    return max(256, min(n_steps, budget_elems // max(n_paths * dim, 1)))


def _elems_per_step(model) -> int:
    """Scratch elements allocated per (path, step) when stepping the model.

    Fourier-observable models additionally hold the uint64 grid point and a
    complex phase per stored frequency, so their blocks must be shorter for
    the same memory footprint.
    """
    obs = getattr(model, "observable", None)
    if obs is None:
        return model.dim
    return model.dim + 4 * max(obs.n_freq, 1) + 2 * obs.torus_dim


def simulate_blocks(model: ProcessModel, n_steps: int, n_paths: int,
                    master_seed: int, step_block: int | None = None,
                    path_offset: int = 0) -> Iterator[Block]:
    """Stream blocks of steps for all paths; pure in all arguments."""
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be >= 1")
    if step_block is None:
        step_block = default_step_block(n_paths, _elems_per_step(model),
                                        n_steps)
    stepper = _make_stepper(model, n_paths, master_seed, path_offset)
    start = 0
    while start < n_steps:
        length = min(step_block, n_steps - start)
        values, aux = stepper.step(length, first=(start == 0))
        yield Block(start, values, aux)
        start += length


def simulate(model: ProcessModel, n_steps: int, n_paths: int, master_seed: int,
             memory_budget: int = DEFAULT_MEMORY_BUDGET) -> PathBatch:
    """Materialize a batch; raises MemoryBudgetError when it would not fit."""
    need = n_steps * n_paths * model.dim * 8
    if need > memory_budget:
        raise MemoryBudgetError(
            f"batch needs {need} bytes > budget {memory_budget}; "
            "use simulate_blocks for a streaming view")
    chunks, aux_chunks = [], []
    for block in simulate_blocks(model, n_steps, n_paths, master_seed):
        chunks.append(block.values)
        aux_chunks.append(block.aux)
    values = np.concatenate(chunks, axis=1) if len(chunks) > 1 else chunks[0]
    aux: dict = {}
    keys = set().union(*aux_chunks)
    for key in keys:
        if key in ("innov_init",):
            aux[key] = aux_chunks[0][key]
        elif key in ("state_next", "point_next"):
            aux[key] = aux_chunks[-1][key]
        else:
            parts = [c[key] for c in aux_chunks if key in c]
            aux[key] = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
    return PathBatch(model, n_steps, n_paths, master_seed, values, aux)


# --- steppers ---------------------------------------------------------------


def _make_stepper(model, n_paths, master_seed, path_offset):
    if isinstance(model, MartingaleDifference):
        return _MdsStepper(model, n_paths, master_seed, path_offset)
    if isinstance(model, LinearProcess):
        return _LinearStepper(model, n_paths, master_seed, path_offset)
    if isinstance(model, FunctionOfLinear):
        return _FolStepper(model, n_paths, master_seed, path_offset)
    if isinstance(model, MarkovChainFn):
        return _ChainStepper(model, n_paths, master_seed, path_offset)
    if isinstance(model, DoublingMap):
        return _DoublingStepper(model, n_paths, master_seed, path_offset)
    if isinstance(model, TorusAutomorphism):
        return _TorusStepper(model, n_paths, master_seed, path_offset)
    raise TypeError(f"unsupported model {type(model).__name__}")


class _InnovationStepper:
    """Shared plumbing: one Philox stream per path, innovations drawn in blocks."""

    def __init__(self, model, n_paths, master_seed, path_offset):
        self.model = model
        self.n_paths = n_paths
        self.rngs = [path_rng(master_seed, path_offset + p) for p in range(n_paths)]
        self.master_seed = master_seed
        self.path_offset = path_offset

    def draw(self, n: int) -> np.ndarray:
        """(n_paths, n, xi_dim) innovations, one independent stream per path."""
        xi_dim = self.model.innovation.dim
        out = np.empty((self.n_paths, n, xi_dim))
        for p, rng in enumerate(self.rngs):
            out[p] = self.model.innovation.sample(rng, n)
        return out


class _MdsStepper(_InnovationStepper):
    def __init__(self, model, n_paths, master_seed, path_offset):
        super().__init__(model, n_paths, master_seed, path_offset)
        self.window = None  # last q innovations, (paths, q, dim)

    def step(self, length, first):
        m = self.model
        if first and m.q > 0:
            self.window = self.draw(m.q)
        xi = self.draw(length)
        gx = G_FUNCS[m.g](xi)
        if m.h == "one":
            hval = np.ones((self.n_paths, length))
        else:
            ext = np.concatenate([self.window, xi], axis=1)
            # window for step t is the q innovations preceding xi_t
            hval = np.empty((self.n_paths, length))
            for t in range(length):
                hval[:, t] = H_FUNCS[m.h](ext[:, t:t + m.q, :])
            self.window = ext[:, length:, :]
        values = gx * hval[:, :, None]
        aux = {"innov": xi, "hsq": hval ** 2}
        return values, aux


class _LinearStepper(_InnovationStepper):
    def __init__(self, model, n_paths, master_seed, path_offset):
        super().__init__(model, n_paths, master_seed, path_offset)
        self.hist = None  # innovations for the span - 1 indices before the next block

    def step(self, length, first):
        m = self.model
        span = m.coeffs.shape[0]
        init = None
        if first:
            # burn-in covers indices [-max_lag, -min_lag) when those are needed
            n_init = span - 1
            self.hist = self.draw(n_init) if n_init else self.draw(0)
            init = self.hist
        fresh = self.draw(length)
        win = np.concatenate([self.hist, fresh], axis=1) if self.hist.shape[1] else fresh
        # win index 0 holds xi_{t0 - max_lag}; X_t = sum_j A_j xi_{t - lag_j}
        values = np.zeros((self.n_paths, length, m.dim))
        for j in range(span):
            off = span - 1 - j  # lag = min_lag + j
            values += win[:, off:off + length, :] @ m.coeffs[j].T
        self.hist = win[:, length:, :]
        aux = {"innov": fresh}
        if first:
            aux["innov_init"] = init
        # fresh[:, t] is xi_{t0 - min_lag + t}: shift so aux["innov"] aligns with
        # the block's step indices when min_lag = 0 (the adapted case)
        return values, aux


class _FolStepper(_InnovationStepper):
    def __init__(self, model, n_paths, master_seed, path_offset):
        super().__init__(model, n_paths, master_seed, path_offset)
        self.hist = None
        self.center = model.centering()

    def step(self, length, first):
        m = self.model
        K = m.max_lag
        if first:
            self.hist = self.draw(K)
        fresh = self.draw(length)
        win = np.concatenate([self.hist, fresh], axis=1) if K else fresh
        y = np.zeros((self.n_paths, length))
        for k, ak in enumerate(m.a):
            if ak != 0.0:
                y += ak * win[:, K - k:K - k + length, 0]
        values = (F_FUNCS[m.f](y) - self.center)[:, :, None]
        self.hist = win[:, length:, :]
        return values, {"innov": fresh}


class _ChainStepper:
    def __init__(self, model, n_paths, master_seed, path_offset):
        self.model = model
        self.n_paths = n_paths
        self.rngs = [path_rng(master_seed, path_offset + p) for p in range(n_paths)]
        self.cum = np.cumsum(model.kernel, axis=1)
        init = np.empty(n_paths, dtype=np.int64)
        for p in range(n_paths):
            r = path_rng(master_seed, path_offset + p, STREAM_INIT)
            init[p] = np.searchsorted(np.cumsum(model.stationary), r.random(),
                                      side="right")
        self.state = np.minimum(init, model.n_states - 1)
        self.fc = model.f_centered

    def step(self, length, first):
        u = np.empty((self.n_paths, length))
        for p, rng in enumerate(self.rngs):
            u[p] = rng.random(length)
        states = np.empty((self.n_paths, length), dtype=np.int64)
        cur = self.state
        for t in range(length):
            states[:, t] = cur
            cur = np.sum(u[:, t, None] >= self.cum[cur, :], axis=1)
        self.state = cur
        values = self.fc[states]
        return values, {"states": states, "state_next": cur.copy()}


class _DoublingStepper:
    def __init__(self, model, n_paths, master_seed, path_offset):
        self.model = model
        self.n_paths = n_paths
        u = np.empty(n_paths, dtype=np.uint64)
        for p in range(n_paths):
            r = path_rng(master_seed, path_offset + p, STREAM_INIT)
            u[p] = r.integers(0, 2 ** 63, dtype=np.uint64) * np.uint64(2) \
                + r.integers(0, 2, dtype=np.uint64)
        self.u = u

    def step(self, length, first):
        pts = np.empty((self.n_paths, length), dtype=np.uint64)
        u = self.u
        one = np.uint64(1)
        for t in range(length):
            pts[:, t] = u
            u = u << one
        self.u = u
        x = pts.astype(float) * 2.0 ** -64
        values = self.model.observable.evaluate(x[:, :, None])
        return values, {"points": pts, "point_next": u.copy()}


class _TorusStepper:
    def __init__(self, model, n_paths, master_seed, path_offset):
        self.model = model
        self.n_paths = n_paths
        d = model.observable.torus_dim
        u = np.empty((n_paths, d), dtype=np.uint64)
        for p in range(n_paths):
            r = path_rng(master_seed, path_offset + p, STREAM_INIT)
            u[p] = r.integers(0, 2 ** 63, size=d, dtype=np.uint64) * np.uint64(2) \
                + r.integers(0, 2, size=d, dtype=np.uint64)
        self.u = u
        # wrapping uint64 arithmetic is exact mod 2^64 (two's complement cast)
        self.Mu = model.matrix.astype(np.int64).astype(np.uint64)

    def step(self, length, first):
        d = self.model.observable.torus_dim
        pts = np.empty((self.n_paths, length, d), dtype=np.uint64)
        u = self.u
        for t in range(length):
            pts[:, :][:, t] = u
            u = u @ self.Mu.T
        self.u = u
        x = pts.astype(float) * 2.0 ** -64
        values = self.model.observable.evaluate(x)
        return values, {"points": pts, "point_next": u.copy()}


# ---------------------------------------------------------------------------
# closed-form variance oracle


def exact_variance(model: ProcessModel) -> CovarianceOperator | None:
    """Var(X_0) in closed form; None when no closed form exists."""
    if isinstance(model, LinearProcess):
        v = model.innovation.variance()
        mat = sum(v * (A @ A.T) for A in model.coeffs)
        return CovarianceOperator(np.atleast_2d(mat))
    if isinstance(model, MartingaleDifference):
        if model.h != "one" or model.g not in ("identity", "sign"):
            return None
        per = model.innovation.variance() if model.g == "identity" else 1.0
        return CovarianceOperator(per * np.eye(model.dim))
    if isinstance(model, MarkovChainFn):
        fc = model.f_centered
        mat = fc.T @ (model.stationary[:, None] * fc)
        return CovarianceOperator(mat)
    if isinstance(model, (DoublingMap, TorusAutomorphism)):
        c = model.observable.coeffs
        mat = np.real(c.T @ np.conj(c))
        return CovarianceOperator(0.5 * (mat + mat.T))
    return None


# ---------------------------------------------------------------------------
# config (de)serialization


def model_to_config(model: ProcessModel) -> dict:
    if isinstance(model, MartingaleDifference):
        return {"family": "martingale_difference",
                "innovation": model.innovation.to_config(),
                "g": model.g, "h": model.h, "q": model.q}
    if isinstance(model, LinearProcess):
        return {"family": "linear",
                "innovation": model.innovation.to_config(),
                "coeffs": model.coeffs.tolist(), "min_lag": model.min_lag}
    if isinstance(model, FunctionOfLinear):
        return {"family": "function_of_linear",
                "innovation": model.innovation.to_config(),
                "a": model.a.tolist(), "f": model.f,
                "modulus": model.modulus.to_config(), "growth_r": model.growth_r}
    if isinstance(model, MarkovChainFn):
        return {"family": "markov_chain",
                "kernel": model.kernel.tolist(),
                "stationary": model.stationary.tolist(),
                "f": model.f.tolist()}
    if isinstance(model, DoublingMap):
        return {"family": "doubling_map",
                "observable": observable_to_config(model.observable)}
    if isinstance(model, TorusAutomorphism):
        return {"family": "torus_automorphism",
                "matrix": model.matrix.tolist(),
                "observable": observable_to_config(model.observable)}
    raise TypeError(f"unsupported model {type(model).__name__}")


def model_from_config(cfg: dict) -> ProcessModel:
    fam = cfg["family"]
    if fam == "martingale_difference":
        return MartingaleDifference(InnovationSpec.from_config(cfg["innovation"]),
                                    g=cfg.get("g", "identity"),
                                    h=cfg.get("h", "one"), q=cfg.get("q", 0))
    if fam == "linear":
        return LinearProcess(InnovationSpec.from_config(cfg["innovation"]),
                             coeffs=np.asarray(cfg["coeffs"], dtype=float),
                             min_lag=cfg.get("min_lag", 0))
    if fam == "function_of_linear":
        return FunctionOfLinear(InnovationSpec.from_config(cfg["innovation"]),
                                a=np.asarray(cfg["a"], dtype=float), f=cfg["f"],
                                modulus=ModulusSpec.from_config(cfg["modulus"]),
                                growth_r=cfg.get("growth_r", 1.0))
    if fam == "markov_chain":
        return MarkovChainFn(np.asarray(cfg["kernel"], dtype=float),
                             np.asarray(cfg["stationary"], dtype=float),
                             np.asarray(cfg["f"], dtype=float))
    if fam == "doubling_map":
        return DoublingMap(observable_from_config(cfg["observable"]))
    if fam == "torus_automorphism":
        return TorusAutomorphism(np.asarray(cfg["matrix"], dtype=np.int64),
                                 observable_from_config(cfg["observable"]))
    raise ValueError(f"unknown model family {fam!r}")


def observable_to_config(obs: FourierObservable) -> dict:
    return {"torus_dim": obs.torus_dim, "dim": obs.dim,
            "terms": [{"k": k.tolist(), "re": np.real(c).tolist(),
                       "im": np.imag(c).tolist()}
                      for k, c in zip(obs.freqs, obs.coeffs)]}


def observable_from_config(cfg: dict) -> FourierObservable:
    terms = cfg["terms"]
    if not terms:
        from lilab.operators import zero_observable
        return zero_observable(cfg["torus_dim"], cfg.get("dim", 1))
    freqs = np.array([t["k"] for t in terms], dtype=np.int64)
    coeffs = np.array([np.asarray(t["re"], dtype=float)
                       + 1j * np.asarray(t["im"], dtype=float) for t in terms])
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    return FourierObservable(freqs, coeffs)
