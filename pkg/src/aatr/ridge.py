"""Closed-form penalized least squares on the grid basis.

All solvers work on a standardized dataset and the design ``Z = dt * x``, so
that ``Z @ beta`` is the quadrature of the functional term. Penalties carry
the same quadrature weight, which keeps ``lambda`` independent of ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .grid import FunctionalDataset, Grid, apply_standardization


@dataclass(frozen=True)
class RidgeFit:
    beta0: float
    beta: np.ndarray
    lam: float
    gamma: np.ndarray
    grid: Grid
    col_means: np.ndarray = field(repr=False)
    col_scales: np.ndarray = field(repr=False)
    method: str = "aatr"

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape != (self.grid.p,):
            raise ValueError(f"beta must have length {self.grid.p}, got {beta.shape}")
        if not np.all(np.isfinite(beta)) or not np.isfinite(self.beta0):
            raise ValueError("non-finite coefficients")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64))

    def fitted(self, ds: FunctionalDataset) -> np.ndarray:
        """Predictions for an already standardized dataset."""
        return self.beta0 + ds.grid.dt * (ds.x @ self.beta)


class DesignSVD(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def _require_standardized(ds: FunctionalDataset):
    if not ds.standardized:
        raise ValueError("solver requires a standardized dataset")


def design_svd(ds: FunctionalDataset) -> DesignSVD:
    """Thin SVD of ``dt * x`` with numerically null directions dropped.

    The cutoff is ``max(N, p) * eps * s_max``. Reuse the result across
    solves on the same data via the ``svd`` argument of the solvers.
    """
    z = ds.grid.dt * ds.x
    u, s, vt = np.linalg.svd(z, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return DesignSVD(u[:, :0], s[:0], vt[:0])
    keep = s > max(z.shape) * np.finfo(np.float64).eps * s[0]
    return DesignSVD(u[:, keep], s[keep], vt[keep])


def _fit(ds, beta, lam, gamma, method):
    return RidgeFit(
        beta0=ds.y_mean,
        beta=beta,
        lam=lam,
        gamma=gamma,
        grid=ds.grid,
        col_means=ds.col_means,
        col_scales=ds.col_scales,
        method=method,
    )


def solve_centered_ridge(
    ds: FunctionalDataset, gamma, lam: float, svd: DesignSVD | None = None
) -> RidgeFit:
    """Ridge regression with the coefficient function shrunk towards ``gamma``.

    Minimizes ``sum_i (y_i - b0 - <x_i, beta>)^2 + lam * ||beta - gamma||^2``
    with both integrals discretized by the midpoint rule. Writing
    ``beta = gamma + delta`` turns it into a standard ridge problem in
    ``delta`` with residual target ``y - ybar - Z gamma``, which is solved
    through the SVD of ``Z``; this stays accurate for tiny ``lam`` where the
    normal equations are numerically singular.
    """
    _require_standardized(ds)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (ds.grid.p,):
        raise ValueError(f"gamma must have length {ds.grid.p}, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise ValueError("gamma contains non-finite values")
    if svd is None:
        svd = design_svd(ds)
    dt = ds.grid.dt
    mu = lam * dt
    resid = ds.y - ds.y_mean - dt * (ds.x @ gamma)
    coef = svd.s / (svd.s**2 + mu) * (svd.u.T @ resid)
    beta = gamma + svd.vt.T @ coef
    return _fit(ds, beta, float(lam), gamma, "aatr")


def solve_ridge(ds: FunctionalDataset, lam: float, svd: DesignSVD | None = None) -> RidgeFit:
    """Standard ridge, i.e. shrinkage towards zero."""
    fit = solve_centered_ridge(ds, np.zeros(ds.grid.p), lam, svd=svd)
    return _fit(ds, fit.beta, fit.lam, fit.gamma, "ridge")


def solve_min_norm_ls(ds: FunctionalDataset, svd: DesignSVD | None = None) -> RidgeFit:
    _require_standardized(ds)
    if svd is None:
        svd = design_svd(ds)
    resid = ds.y - ds.y_mean
    beta = svd.vt.T @ ((svd.u.T @ resid) / svd.s)
    return _fit(ds, beta, 0.0, np.zeros(ds.grid.p), "mnlstsq")


def second_difference(p: int) -> np.ndarray:
    """The ``(p-2) x p`` operator with rows ``(1, -2, 1)``."""
    if p < 3:
        raise ValueError(f"second differences need p >= 3, got {p}")
    d = np.zeros((p - 2, p))
    i = np.arange(p - 2)
    d[i, i] = 1.0
    d[i, i + 1] = -2.0
    d[i, i + 2] = 1.0
    return d


ROUGHNESS_JITTER = 1e-10


def solve_roughness_ridge(ds: FunctionalDataset, lam: float) -> RidgeFit:
    """Least squares with a squared second-derivative penalty on ``beta``.

    The penalty ``lam * dt**-3 * ||D2 beta||^2`` approximates
    ``lam * int beta''(t)^2 dt``. The problem is solved as a stacked least
    squares system rather than through the normal equations, which would
    square an already huge condition number for large ``lam``.
    """
    _require_standardized(ds)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    p = ds.grid.p
    dt = ds.grid.dt
    d2 = second_difference(p)
    a = np.vstack(
        [
            dt * ds.x,
            np.sqrt(lam * dt**-3) * d2,
            np.sqrt(ROUGHNESS_JITTER) * np.eye(p),
        ]
    )
    rhs = np.concatenate([ds.y - ds.y_mean, np.zeros(2 * p - 2)])
    beta = np.linalg.lstsq(a, rhs, rcond=None)[0]
    return _fit(ds, beta, float(lam), np.zeros(p), "roughness")


def predict(fit: RidgeFit, x_new) -> np.ndarray:
    x_new = np.asarray(x_new, dtype=np.float64)
    if x_new.ndim == 1 and x_new.size == 0:
        x_new = x_new.reshape(0, fit.grid.p)
    if x_new.ndim != 2 or x_new.shape[1] != fit.grid.p:
        raise ValueError(
            f"model expects {fit.grid.p} grid values per curve, got data of shape {x_new.shape}"
        )
    if not np.all(np.isfinite(x_new)):
        raise ValueError("prediction input contains non-finite values")
    xs = apply_standardization(x_new, fit.col_means, fit.col_scales)
    return fit.beta0 + fit.grid.dt * (xs @ fit.beta)


def mse(y_hat, y) -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.size} vs {y.size}")
    if y.size == 0:
        raise ValueError("mse of empty vectors is undefined")
    return float(np.mean((y_hat - y) ** 2))


def train_mse(fit: RidgeFit, ds: FunctionalDataset) -> float:
    return mse(fit.fitted(ds), ds.y)
