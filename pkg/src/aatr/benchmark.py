"""Outer cross-validation comparison of the template ridge against baselines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fitter import FitConfig, derive_seed, fit_aatr, kfold_split
from .grid import FunctionalDataset, standardize
from .ridge import (
    RidgeFit,
    design_svd,
    mse,
    predict,
    solve_min_norm_ls,
    solve_ridge,
    solve_roughness_ridge,
)

log = logging.getLogger(__name__)

METHODS = ("aatr", "ridge", "roughness", "mnlstsq")

_OUTER, _INNER = 10, 11


def _penalized_solver(method: str):
    if method == "ridge":
        return lambda ds, lam, svd: solve_ridge(ds, lam, svd=svd)
    if method == "roughness":
        return lambda ds, lam, svd: solve_roughness_ridge(ds, lam)
    raise ValueError(f"unknown penalized method {method!r}")


def cv_lambda(method: str, raw: FunctionalDataset, lambdas, folds: int, seed: int):
    """Mean validation MSE per lambda for a closed-form baseline."""
    solve = _penalized_solver(method)
    errs = np.zeros(len(lambdas))
    for val_idx in kfold_split(raw.n, folds, seed):
        train = standardize(raw.subset(np.setdiff1d(np.arange(raw.n), val_idx)))
        svd = design_svd(train) if method == "ridge" else None
        for m, lam in enumerate(lambdas):
            fit = solve(train, lam, svd)
            errs[m] += mse(predict(fit, raw.x[val_idx]), raw.y[val_idx])
    return errs / folds


def fit_baseline(method: str, raw: FunctionalDataset, cfg: FitConfig) -> RidgeFit:
    """Fit a baseline on raw data, choosing lambda by inner CV where it has one."""
    full = standardize(raw)
    if method == "mnlstsq":
        return solve_min_norm_ls(full)
    errs = cv_lambda(
        method, raw, cfg.lambdas, cfg.folds, derive_seed(cfg.master_seed, _INNER)
    )
    # ties go to the larger lambda, matching the template-ridge selection rule
    m = len(errs) - 1 - int(np.argmin(errs[::-1]))
    return _penalized_solver(method)(full, cfg.lambdas[m], None)


@dataclass
class MethodScore:
    method: str
    fold_mse: list[float] = field(default_factory=list)
    details: list = field(default_factory=list, repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_mse))

    @property
    def sd(self) -> float:
        return float(np.std(self.fold_mse, ddof=1)) if len(self.fold_mse) > 1 else 0.0


def run_benchmark(
    raw: FunctionalDataset,
    methods=METHODS,
    cfg: FitConfig | None = None,
    outer_folds: int = 3,
    jobs: int = 1,
) -> dict[str, MethodScore]:
    """Outer K-fold test MSE per method, with nested CV for hyperparameters.

    ``details`` of the ``aatr`` score holds the per-split ``FitResult``.
    """
    cfg = cfg or FitConfig()
    for mth in methods:
        if mth not in METHODS:
            raise ValueError(f"unknown method {mth!r}, expected one of {METHODS}")
    scores = {mth: MethodScore(mth) for mth in methods}
    splits = kfold_split(raw.n, outer_folds, derive_seed(cfg.master_seed, _OUTER))
    for k, test_idx in enumerate(splits):
        train = raw.subset(np.setdiff1d(np.arange(raw.n), test_idx))
        x_test, y_test = raw.x[test_idx], raw.y[test_idx]
        inner_cfg = replace(cfg, master_seed=derive_seed(cfg.master_seed, _OUTER, k))
        for mth in methods:
            if mth == "aatr":
                res = fit_aatr(train.x, train.y, raw.grid, inner_cfg, jobs=jobs)
                fit = res.fit
                scores[mth].details.append(res)
            else:
                fit = fit_baseline(mth, train, inner_cfg)
                scores[mth].details.append(fit)
            err = mse(predict(fit, x_test), y_test)
            scores[mth].fold_mse.append(err)
            log.info("outer fold %d %s test mse %.6g", k, mth, err)
    return scores
