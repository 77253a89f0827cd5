"""Equispaced cell grids, quadrature inner products and regressor standardization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Grid:
    """Partition of ``[a, b]`` into ``p`` equal cells, represented by the cell midpoints."""

    p: int
    a: float
    b: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"grid needs at least 2 points, got p={self.p}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.a >= self.b:
            raise ValueError(f"grid interval must satisfy a < b, got [{self.a}, {self.b}]")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dt(self) -> float:
        return (self.b - self.a) / self.p

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def points(self) -> np.ndarray:
        return self.a + (np.arange(self.p) + 0.5) * self.dt


def make_grid(p: int, a: float = -1.0, b: float = 1.0) -> Grid:
    return Grid(p, a, b)


def inner_product(f, g, grid: Grid) -> float:
    """Midpoint-rule approximation of the integral of ``f * g`` over the grid interval."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != (grid.p,) or g.shape != (grid.p,):
        raise ValueError(
            f"expected vectors of length {grid.p}, got shapes {f.shape} and {g.shape}"
        )
    return float(grid.dt * np.dot(f, g))


@dataclass(frozen=True)
class FunctionalDataset:
    """N curves sampled on a shared grid together with N scalar responses.

    ``x`` holds one curve per row. When ``standardized`` is set, ``col_means``
    and ``col_scales`` record the per-grid-point statistics that were removed,
    so that new curves can be mapped into the same coordinates.
    """

    grid: Grid
    x: np.ndarray
    y: np.ndarray
    standardized: bool = False
    col_means: np.ndarray | None = field(default=None, repr=False)
    col_scales: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y).ravel()
        if x.ndim != 2 or x.shape[1] != self.grid.p:
            raise ValueError(f"x must be N x {self.grid.p}, got shape {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.standardized:
            if self.col_means is None or self.col_scales is None:
                raise ValueError("standardized dataset requires col_means and col_scales")
            object.__setattr__(self, "col_means", _frozen(self.col_means))
            object.__setattr__(self, "col_scales", _frozen(self.col_scales))
        elif self.col_means is not None or self.col_scales is not None:
            raise ValueError("column statistics given for a non-standardized dataset")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def y_mean(self) -> float:
        return float(np.mean(self.y))

    def subset(self, idx) -> "FunctionalDataset":
        """Rows ``idx`` of the dataset; only valid before standardization."""
        if self.standardized:
            raise ValueError("subset a raw dataset, then standardize each part")
        idx = np.asarray(idx, dtype=np.intp)
        return FunctionalDataset(self.grid, self.x[idx], self.y[idx])


def column_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column means, sample standard deviations (N-1) and a constant-column mask.

    Constant columns get scale 1.
    """
    means = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    # spread at rounding level of the column magnitude counts as constant
    constant = sd <= 1e-13 * np.maximum(1.0, np.abs(means))
    scales = np.where(constant, 1.0, sd)
    return means, scales, constant


def apply_standardization(x, col_means, col_scales) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - col_means) / col_scales


def standardize(ds: FunctionalDataset) -> FunctionalDataset:
    if ds.standardized:
        raise ValueError("dataset is already standardized")
    if ds.n < 2:
        raise ValueError(f"standardization needs N >= 2 rows, got {ds.n}")
    means, scales, constant = column_stats(ds.x)
    xs = apply_standardization(ds.x, means, scales)
    xs[:, constant] = 0.0
    return replace(ds, x=xs, standardized=True, col_means=means, col_scales=scales)


def destandardize(ds: FunctionalDataset) -> np.ndarray:
    if not ds.standardized:
        raise ValueError("dataset is not standardized")
    return ds.x * ds.col_scales + ds.col_means
