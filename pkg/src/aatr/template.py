"""Rectangle templates and the Gram quantities that give their heights in closed form.

A template is ``gamma(t) = sum_j A_j * g(t; t0_j, T_j)`` where ``g`` is the
indicator of ``|t - t0| <= T/2``. Supports are always clipped to the grid
interval. Functions taking ``t0``/``T`` accept arrays with arbitrary leading
batch dimensions, so a whole DE population can be processed at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FunctionalDataset, Grid


@dataclass(frozen=True)
class Rectangle:
    A: float
    t0: float
    T: float

    def __post_init__(self):
        if not (np.isfinite(self.A) and np.isfinite(self.t0) and np.isfinite(self.T)):
            raise ValueError(f"non-finite rectangle parameters {self}")
        if self.T <= 0:
            raise ValueError(f"rectangle width must be positive, got T={self.T}")
        for name in ("A", "t0", "T"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def check_domain(self, grid: Grid) -> None:
        tol = 1e-12 * grid.length
        if not (grid.a - tol <= self.t0 <= grid.b + tol):
            raise ValueError(f"rectangle center {self.t0} outside [{grid.a}, {grid.b}]")
        if self.T > grid.length + tol:
            raise ValueError(f"rectangle width {self.T} exceeds domain length {grid.length}")
        if support_length(self.t0, self.T, grid) <= 0:
            raise ValueError(f"rectangle {self} has empty support inside the domain")


@dataclass(frozen=True)
class Template:
    rects: tuple[Rectangle, ...]

    def __post_init__(self):
        rects = tuple(self.rects)
        if len(rects) < 1:
            raise ValueError("a template needs at least one rectangle")
        object.__setattr__(self, "rects", rects)

    @property
    def q(self) -> int:
        return len(self.rects)

    @property
    def A(self) -> np.ndarray:
        return np.array([r.A for r in self.rects])

    @property
    def t0(self) -> np.ndarray:
        return np.array([r.t0 for r in self.rects])

    @property
    def T(self) -> np.ndarray:
        return np.array([r.T for r in self.rects])

    @classmethod
    def from_arrays(cls, A, t0, T) -> "Template":
        A, t0, T = (np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in (A, t0, T))
        if not (A.shape == t0.shape == T.shape) or A.ndim != 1:
            raise ValueError("A, t0 and T must be 1-D arrays of equal length")
        return cls(tuple(Rectangle(a, c, w) for a, c, w in zip(A, t0, T)))

    def to_dict(self) -> dict:
        return {"rects": [{"A": r.A, "t0": r.t0, "T": r.T} for r in self.rects]}

    @classmethod
    def from_dict(cls, d: dict) -> "Template":
        return cls(tuple(Rectangle(r["A"], r["t0"], r["T"]) for r in d["rects"]))


def rect_eval(t, t0, T):
    """Rectangle indicator, 1 where ``|t - t0| <= T/2`` (boundary included)."""
    if np.any(np.asarray(T) <= 0):
        raise ValueError("rectangle width must be positive")
    out = (np.abs(np.asarray(t, dtype=np.float64) - t0) <= 0.5 * np.asarray(T)).astype(int)
    return int(out) if out.ndim == 0 else out


def clipped_support(t0, T, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    t0 = np.asarray(t0, dtype=np.float64)
    half = 0.5 * np.asarray(T, dtype=np.float64)
    return np.maximum(t0 - half, grid.a), np.minimum(t0 + half, grid.b)


def support_length(t0, T, grid: Grid):
    lo, hi = clipped_support(t0, T, grid)
    out = np.maximum(hi - lo, 0.0)
    return float(out) if out.ndim == 0 else out


def indicators(t0, T, grid: Grid) -> np.ndarray:
    """Indicator values of each rectangle on the grid, shape ``(..., q, p)``."""
    t0 = np.asarray(t0, dtype=np.float64)[..., None]
    half = 0.5 * np.asarray(T, dtype=np.float64)[..., None]
    return (np.abs(grid.points - t0) <= half).astype(np.float64)


def template_eval(tpl: Template, grid: Grid) -> np.ndarray:
    for r in tpl.rects:
        r.check_domain(grid)
    return tpl.A @ indicators(tpl.t0, tpl.T, grid)


def _check_params(t0, T):
    t0 = np.asarray(t0, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if t0.shape != T.shape:
        raise ValueError(f"t0 and T shapes differ: {t0.shape} vs {T.shape}")
    return t0, T


def s_vectors(ds: FunctionalDataset, t0, T) -> np.ndarray:
    """Integrals of each curve over each rectangle: ``S[..., i, j] = <x_i, g_j>``.

    For 1-D ``t0``/``T`` this is the N x q matrix; batched inputs of shape
    ``(n, q)`` give ``(n, N, q)``.
    """
    t0, T = _check_params(t0, T)
    G = indicators(t0, T, ds.grid)
    return ds.grid.dt * np.einsum("ij,...kj->...ik", ds.x, G)


def overlap_gram(t0, T, grid: Grid) -> np.ndarray:
    """Exact integrals of ``g_j * g_k`` over the domain (clipped interval overlaps)."""
    t0, T = _check_params(t0, T)
    lo, hi = clipped_support(t0, T, grid)
    left = np.maximum(lo[..., :, None], lo[..., None, :])
    right = np.minimum(hi[..., :, None], hi[..., None, :])
    return np.maximum(right - left, 0.0)


def beta_gram(beta, t0, T, grid: Grid) -> np.ndarray:
    """Quadrature of ``beta * g_j`` for each rectangle."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (grid.p,):
        raise ValueError(f"beta must have length {grid.p}, got shape {beta.shape}")
    t0, T = _check_params(t0, T)
    return grid.dt * (indicators(t0, T, grid) @ beta)
