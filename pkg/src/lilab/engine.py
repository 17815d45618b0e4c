"""Reproducible parallel Monte-Carlo orchestration.

Paths are partitioned into fixed chunks whose boundaries depend only on the
plan (never on the worker count); each chunk is scanned streaming-block-wise
with its own counter-based RNG streams, and worker-local accumulators are
merged in ascending chunk order.  Counts, maxima, histograms, and reservoirs
are therefore bit-identical for any number of workers, and floating sums are
too because the reduction order is fixed.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from lilab.limits import log_plus
from lilab.processes import MemoryBudgetError, PathStream
from lilab.spaces import NormSpec, batch_norm

logger = logging.getLogger("lilab.engine")

HIST_BINS = 64
HIST_LO, HIST_HI = 1e-9, 1e9      # fixed log-uniform edges keep merges exact
RESERVOIR_SIZE = 4096
DEFAULT_MEMORY_BUDGET = 2 ** 28   # bytes of path values per block scan


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything engine.run needs; identical plans give identical bundles."""

    model: object
    statistics: tuple               # (name, params-dict) pairs
    n_grid: tuple
    n_paths: int
    master_seed: int
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    workers: int = 1
    space: NormSpec | None = None
    strict_sums: bool = True

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly increasing")
        if grid[0] < 1:
            raise ValueError("n_grid entries must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "statistics",
                           tuple((name, dict(params)) for name, params in self.statistics))

    @property
    def n_max(self) -> int:
        return self.n_grid[-1]


def _hist_bin(x: np.ndarray) -> np.ndarray:
    """Index of each value in the fixed 64-bin log grid (clipped at the ends)."""
    safe = np.clip(x, HIST_LO, HIST_HI)
    idx = np.floor((np.log10(safe) - math.log10(HIST_LO))
                   / (math.log10(HIST_HI) - math.log10(HIST_LO)) * HIST_BINS)
    return np.clip(idx, 0, HIST_BINS - 1).astype(np.int64)


@dataclass
class StatState:
    """Mergeable partial state of one statistic."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    maximum: float = -math.inf
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(HIST_BINS, dtype=np.int64))
    reservoir: list = field(default_factory=list)   # (path_index, value-vector)

    def add(self, path_indices: np.ndarray, scalars: np.ndarray,
            vectors: np.ndarray) -> None:
        self.count += len(scalars)
        self.total += float(scalars.sum())
        self.total_sq += float((scalars ** 2).sum())
        if len(scalars):
            self.maximum = max(self.maximum, float(scalars.max()))
        np.add.at(self.histogram, _hist_bin(scalars), 1)
        self.reservoir.extend(zip(path_indices.tolist(),
                                  (np.asarray(v) for v in vectors)))
        self._trim()

    def _trim(self) -> None:
        # canonical order, keeping the lowest path indices: deterministic
        # under any partitioning
        self.reservoir.sort(key=lambda t: t[0])
        del self.reservoir[RESERVOIR_SIZE:]


@dataclass
class Accumulator:
    """Per-statistic partial states with an associative, commutative merge."""

    schema: tuple
    states: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, schema: tuple) -> "Accumulator":
        return cls(schema, {name: StatState() for name, _ in schema})


def merge(a: Accumulator, b: Accumulator) -> Accumulator:
    if a.schema != b.schema:
        raise ValueError("accumulator schemas do not match")
    out = Accumulator.empty(a.schema)
    for name in out.states:
        sa, sb = a.states[name], b.states[name]
        s = out.states[name]
        s.count = sa.count + sb.count
        s.total = sa.total + sb.total
        s.total_sq = sa.total_sq + sb.total_sq
        s.maximum = max(sa.maximum, sb.maximum)
        s.histogram = sa.histogram + sb.histogram
        s.reservoir = sorted(sa.reservoir + sb.reservoir, key=lambda t: t[0])
        del s.reservoir[RESERVOIR_SIZE:]
    return out


# ---------------------------------------------------------------------------
# per-path statistics (evaluated during one streaming scan of a path chunk)


class _PathScalar:
    """Base: reduce each path to one scalar (and optionally a vector)."""

    vector_width = 1

    def __init__(self, n_max: int, space: NormSpec | None):
        self.n_max = n_max
        self.space = space

    def init(self, n_paths: int) -> None:
        self.best = np.zeros(n_paths)

    def norms(self, csum: np.ndarray) -> np.ndarray:
        if self.space is not None:
            return batch_norm(csum, self.space)
        return np.linalg.norm(csum, axis=-1)

    def update(self, start: int, csum: np.ndarray) -> None:
        raise NotImplementedError

    def finish(self):
        return self.best, self.best[:, None]


class _MaximalStat(_PathScalar):
    """sup_n |S_n| / scale(n) for n <= n_max (scale set by subclass params)."""

    def __init__(self, n_max, space, p=2.0, lil=False, min_n=1):
        super().__init__(n_max, space)
        self.p, self.lil, self.min_n = p, lil, min_n

    def scale(self, ns: np.ndarray) -> np.ndarray:
        if self.lil:
            return np.sqrt(2.0 * ns * log_plus(log_plus(ns)))
        if self.p == 2.0:
            return np.sqrt(ns * log_plus(log_plus(ns)))
        return ns ** (1.0 / self.p)

    def update(self, start, csum):
        ns = np.arange(start + 1, start + 1 + csum.shape[1])
        live = ns >= self.min_n
        if not live.any():
            return
        scaled = self.norms(csum[:, live]) / self.scale(ns[live])[None, :]
        self.best = np.maximum(self.best, scaled.max(axis=1))


class _FinalStat(_PathScalar):
    """S_{n_max} / sqrt(n_max): scalar = its norm, vector = the point itself."""

    def __init__(self, n_max, space, dim=1):
        super().__init__(n_max, space)
        self.vector_width = dim

    def init(self, n_paths):
        self.best = np.zeros(n_paths)
        self.point = np.zeros((n_paths, self.vector_width))

    def update(self, start, csum):
        t = self.n_max - 1 - start
        if 0 <= t < csum.shape[1]:
            self.point = csum[:, t] / math.sqrt(self.n_max)
            self.best = self.norms(self.point[:, None, :])[:, 0]

    def finish(self):
        return self.best, self.point


class _AbsMeanStat(_PathScalar):
    """Per-path mean of |X_t|; the engine mean estimates E|X|."""

    def init(self, n_paths):
        self.best = np.zeros(n_paths)
        self._prev = None

    def update(self, start, csum):
        prev = self._prev if self._prev is not None else np.zeros_like(csum[:, 0])
        diffs = np.diff(np.concatenate([prev[:, None], csum], axis=1), axis=1)
        self.best += self.norms(diffs).sum(axis=1) / self.n_max
        self._prev = csum[:, -1].copy()


def _make_stat(name: str, params: dict, plan: ExperimentPlan) -> _PathScalar:
    n_max, space = plan.n_max, plan.space
    if name == "m1":
        return _MaximalStat(n_max, space, p=1.0)
    if name == "mp":
        return _MaximalStat(n_max, space, p=float(params["p"]))
    if name == "m2":
        return _MaximalStat(n_max, space)
    if name == "lil":
        wf = float(params.get("window_fraction", 0.75))
        min_n = max(1, int(2 ** (wf * math.log2(n_max))))
        return _MaximalStat(n_max, space, lil=True, min_n=min_n)
    if name == "final_scaled":
        return _FinalStat(n_max, space, dim=plan.model.dim)
    if name == "abs_mean":
        return _AbsMeanStat(n_max, space)
    raise ValueError(f"unknown statistic {name!r}")


# ---------------------------------------------------------------------------
# execution


def _chunk_bounds(plan: ExperimentPlan) -> list:
    """Path-chunk boundaries: a function of the plan only, never the workers."""
    per_path = plan.n_max * plan.model.dim * 8
    chunk = max(1, min(plan.n_paths, plan.memory_budget // max(per_path, 1)))
    if plan.memory_budget < plan.model.dim * 8 * 1024:
        raise MemoryBudgetError("memory budget cannot hold a single path block")
    if chunk < 1:
        chunk = 1
    # cap the chunk so one chunk's values fit the budget even when streaming
    chunk = max(1, min(chunk, 256))
    return [(off, min(off + chunk, plan.n_paths) - off)
            for off in range(0, plan.n_paths, chunk)]


def _scan_chunk(plan: ExperimentPlan, offset: int, n_chunk: int) -> Accumulator:
    stats = {name: _make_stat(name, params, plan)
             for name, params in plan.statistics}
    for s in stats.values():
        s.init(n_chunk)
    step_block = max(1, plan.memory_budget // max(n_chunk * plan.model.dim * 8, 1))
    step_block = min(step_block, plan.n_max)
    stream = PathStream(plan.model, plan.n_max, n_chunk, plan.master_seed,
                        step_block=step_block, path_offset=offset)
    carry = None
    for block in stream.blocks():
        csum = np.cumsum(block.values, axis=1)
        if carry is not None:
            csum += carry[:, None, :]
        carry = csum[:, -1].copy()
        for s in stats.values():
            s.update(block.start, csum)
    acc = Accumulator.empty(plan.statistics)
    idx = np.arange(offset, offset + n_chunk)
    for name, s in stats.items():
        scalars, vectors = s.finish()
        acc.states[name].add(idx, scalars, vectors)
    return acc


def run(plan: ExperimentPlan) -> dict:
    """Execute the plan; the bundle is identical for any worker count."""
    t0 = time.monotonic()
    chunks = _chunk_bounds(plan)
    if plan.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            accs = list(pool.map(lambda c: _scan_chunk(plan, *c), chunks))
    else:
        accs = [_scan_chunk(plan, *c) for c in chunks]
    total = accs[0]
    done = chunks[0][1]
    for (off, k), acc in zip(chunks[1:], accs[1:]):
        total = merge(total, acc)           # ascending-offset order is fixed
        done += k
        logger.info("statistic=all paths_done=%d elapsed=%.2fs",
                    done, time.monotonic() - t0)
    bundle = {"n_paths": plan.n_paths, "n_max": plan.n_max,
              "master_seed": plan.master_seed, "elapsed_s": time.monotonic() - t0,
              "statistics": {}}
    for name, _ in plan.statistics:
        s = total.states[name]
        mean = s.total / s.count
        var = max(s.total_sq / s.count - mean ** 2, 0.0)
        res_vals = np.array([v for _, v in s.reservoir])
        bundle["statistics"][name] = {
            "count": s.count,
            "mean": mean,
            "se": math.sqrt(var / s.count),
            "max": s.maximum,
            "histogram": s.histogram,
            "reservoir": res_vals,
        }
        logger.info("statistic=%s paths_done=%d elapsed=%.2fs",
                    name, s.count, time.monotonic() - t0)
    return bundle
