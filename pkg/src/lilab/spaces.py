"""Finite-dimensional norm spaces: norms, smoothness diagnostics, dual-ball suprema.

A vector sample is a plain 1-d ``numpy`` array of length ``spec.dim``.
Everything here is pure and freely shareable across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-10
PSD_TOL = -1e-10


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class NormSpec:
    """A concrete stand-in norm on R^dim.

    ``kind`` is ``"euclidean"`` or ``"weighted_lr"``; the latter uses the norm
    ``(sum_i w_i |v_i|^r)^(1/r)`` with ``r`` in (1, 2] and positive weights.
    """

    dim: int
    kind: str = "euclidean"
    r: float = 2.0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind not in ("euclidean", "weighted_lr"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "weighted_lr":
            if not 1.0 < self.r <= 2.0:
                raise ValueError(f"r must lie in (1, 2], got {self.r}")
            if self.weights is None or len(self.weights) != self.dim:
                raise ValueError("weighted_lr needs weights of length dim")
            if any(w <= 0 for w in self.weights):
                raise ValueError("weights must be positive")

    def to_config(self) -> dict:
        cfg = {"dim": self.dim, "kind": self.kind}
        if self.kind == "weighted_lr":
            cfg["r"] = self.r
            cfg["weights"] = list(self.weights)
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "NormSpec":
        kind = cfg.get("kind", "euclidean")
        if kind == "weighted_lr":
            return cls(dim=cfg["dim"], kind=kind, r=cfg["r"],
                       weights=tuple(cfg["weights"]))
        return cls(dim=cfg["dim"], kind=kind)


def norm(v: np.ndarray, s: NormSpec) -> float:
    """Norm of ``v`` in the space described by ``s``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != s.dim:
        raise DimensionMismatchError(f"vector has dim {v.shape[-1]}, spec has {s.dim}")
    if s.kind == "euclidean":
        return float(np.linalg.norm(v))
    w = np.asarray(s.weights)
    return float(np.sum(w * np.abs(v) ** s.r) ** (1.0 / s.r))


def batch_norm(values: np.ndarray, s: NormSpec) -> np.ndarray:
    """Norms along the last axis of ``values`` (shape ``(..., dim)``)."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != s.dim:
        raise DimensionMismatchError(f"values have dim {values.shape[-1]}, spec has {s.dim}")
    if s.kind == "euclidean":
        return np.linalg.norm(values, axis=-1)
    w = np.asarray(s.weights)
    return np.sum(w * np.abs(values) ** s.r, axis=-1) ** (1.0 / s.r)


def smoothness_defect(x: np.ndarray, y: np.ndarray, s: NormSpec,
                      r: float, D: float) -> float:
    """|x+y|^r + |x-y|^r - 2(|x|^r + D^r |y|^r).

    A nonpositive value certifies that the pair (x, y) satisfies the r-smooth
    two-point inequality with constant D.  For the Euclidean norm with r=2,
    D=1 this is identically zero (parallelogram law).
    """
    if not 1.0 < r <= 2.0:
        raise ValueError(f"r must lie in (1, 2], got {r}")
    if D < 1.0:
        raise ValueError(f"D must be >= 1, got {D}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (norm(x + y, s) ** r + norm(x - y, s) ** r
            - 2.0 * (norm(x, s) ** r + D ** r * norm(y, s) ** r))


@dataclass(frozen=True)
class CovarianceOperator:
    """Symmetric PSD dim x dim matrix standing in for a covariance operator."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
            raise ValueError("matrix not symmetric to tolerance 1e-10")
        sym = 0.5 * (m + m.T)
        if np.min(np.linalg.eigvalsh(sym)) < PSD_TOL:
            raise ValueError("matrix not positive semidefinite")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def dual_ball_sup(K: CovarianceOperator) -> float:
    """sqrt of the largest eigenvalue of K.

    Equals sup over unit dual vectors u of ||u . d||_2 when K is the
    covariance of d in the Euclidean stand-in.  Symmetrizes first so that
    numerical noise in K cannot break the eigensolver.
    """
    sym = 0.5 * (K.matrix + K.matrix.T)
    lam = np.linalg.eigvalsh(sym)[-1]
    return float(np.sqrt(max(lam, 0.0)))
