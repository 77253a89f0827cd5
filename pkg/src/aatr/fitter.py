"""End-to-end fitting: template initialization, cross-validated (q, lambda) selection,
alternating reshape/ridge refinement and the final refit.

Every stochastic step draws its seed from ``master_seed`` and a fixed key
(stage, fold, q, lambda index, iteration), so results do not depend on the
order or the process in which grid cells are evaluated.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import FunctionalDataset, Grid, standardize
from .optimizer import DeConfig, solve_init, solve_reshape
from .ridge import RidgeFit, design_svd, mse, predict, solve_centered_ridge, train_mse
from .template import Template, template_eval

log = logging.getLogger(__name__)

_INIT, _SPLIT, _CELL, _FINAL = 0, 1, 2, 3


def default_lambdas(count: int = 20, lo: float = 1e-4, hi: float = 1e4) -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), count))


@dataclass(frozen=True)
class FitConfig:
    Q: int = 3
    lambdas: tuple[float, ...] = field(default_factory=default_lambdas)
    folds: int = 3
    de_init: DeConfig = field(default_factory=lambda: DeConfig(eval_budget=5000))
    de_reshape: DeConfig = field(default_factory=lambda: DeConfig(eval_budget=1000))
    max_alt_iters: int = 10
    rel_improve_tol: float = 1e-3
    master_seed: int = 0
    init_scope: str = "fold"

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError(f"Q must be at least 1, got {self.Q}")
        lams = tuple(float(v) for v in self.lambdas)
        if not lams or any(not v > 0 for v in lams):
            raise ValueError("lambda grid must be non-empty and strictly positive")
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("lambda grid must be sorted ascending without duplicates")
        object.__setattr__(self, "lambdas", lams)
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")
        if self.init_scope not in ("fold", "full"):
            raise ValueError(f"init_scope must be 'fold' or 'full', got {self.init_scope!r}")
        if self.max_alt_iters < 1 or not self.rel_improve_tol > 0:
            raise ValueError("max_alt_iters must be >= 1 and rel_improve_tol > 0")


@dataclass
class RefineTrace:
    """Training losses and templates of the accepted alternating iterations.

    Entry 0 is the ridge fit with the starting template; ``rejected_loss``
    is the loss of the first candidate that failed the improvement test.
    """

    losses: list[float]
    templates: list[Template]
    rejected_loss: float | None = None

    @property
    def n_accepted(self) -> int:
        return len(self.losses) - 1


@dataclass
class FitResult:
    fit: RidgeFit
    gamma_star: Template
    q_star: int
    lambda_star: float
    cv_table: np.ndarray
    trace: RefineTrace
    init_templates: list[Template]
    cell_traces: dict = field(default_factory=dict, repr=False)


def derive_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def kfold_split(n: int, k: int, seed) -> list[np.ndarray]:
    if not 2 <= k <= n:
        raise ValueError(f"number of folds must satisfy 2 <= K <= N, got K={k}, N={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def init_templates(ds: FunctionalDataset, cfg: FitConfig, fold: int = -1) -> list[Template]:
    """One hard-constrained template per q = 1..Q, fitted on ``ds``.

    ``fold`` only enters the seed; -1 marks the full dataset.
    """
    if not ds.standardized:
        raise ValueError("template initialization expects a standardized dataset")
    out = []
    for q in range(1, cfg.Q + 1):
        de = replace(cfg.de_init, seed=derive_seed(cfg.master_seed, _INIT, fold + 1, q), bounds=())
        sol = solve_init(ds, q, de)
        log.debug("init q=%d objective=%.6g t0=%s T=%s", q, sol.objective, sol.t0, sol.T)
        out.append(sol.template)
    return out


def alternate_refine(
    ds: FunctionalDataset,
    gamma: Template,
    lam: float,
    cfg: FitConfig,
    seed_key: tuple[int, ...] = (_FINAL,),
    svd=None,
) -> tuple[RidgeFit, Template, RefineTrace]:
    """Alternate ridge solves and template reshapes while the training loss drops.

    A reshaped template is accepted only if the ridge fit it induces lowers
    the training MSE by a relative margin above ``cfg.rel_improve_tol``;
    the last accepted state is returned.
    """
    if svd is None:
        svd = design_svd(ds)
    grid = ds.grid
    fit = solve_centered_ridge(ds, template_eval(gamma, grid), lam, svd=svd)
    loss = train_mse(fit, ds)
    trace = RefineTrace([loss], [gamma])
    for it in range(cfg.max_alt_iters):
        de = replace(
            cfg.de_reshape, seed=derive_seed(cfg.master_seed, *seed_key, it), bounds=()
        )
        sol = solve_reshape(ds, fit.beta, lam, gamma.q, de, warm=gamma)
        cand_gamma = sol.template
        cand = solve_centered_ridge(ds, template_eval(cand_gamma, grid), lam, svd=svd)
        cand_loss = train_mse(cand, ds)
        if not cand_loss < loss * (1.0 - cfg.rel_improve_tol):
            trace.rejected_loss = cand_loss
            break
        fit, gamma, loss = cand, cand_gamma, cand_loss
        trace.losses.append(loss)
        trace.templates.append(gamma)
    return fit, gamma, trace


# ---------------------------------------------------------------------------
# Cross-validation grid
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _set_state(state):
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def _run_cell(cell):
    k, qi, m = cell
    st = _WORKER_STATE
    cfg: FitConfig = st["cfg"]
    train, svd, x_val, y_val, templates = st["folds"][k]
    gamma = templates[qi]
    fit, _, trace = alternate_refine(
        train, gamma, cfg.lambdas[m], cfg, seed_key=(_CELL, k, qi + 1, m), svd=svd
    )
    return mse(predict(fit, x_val), y_val), trace.losses


def _run_cells(state, cells, jobs):
    if jobs <= 1:
        _set_state(state)
        try:
            return [_run_cell(c) for c in cells]
        finally:
            _WORKER_STATE.clear()
    chunk = max(1, len(cells) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_set_state, initargs=(state,)) as ex:
        return list(ex.map(_run_cell, cells, chunksize=chunk))


def select_cell(cv_table: np.ndarray) -> tuple[int, int]:
    """Argmin of the CV table; ties go to smaller q, then to larger lambda."""
    best = None
    for qi in range(cv_table.shape[0]):
        for m in range(cv_table.shape[1] - 1, -1, -1):
            if best is None or cv_table[qi, m] < cv_table[best]:
                best = (qi, m)
    return best


def fit_aatr(x, y, grid: Grid, cfg: FitConfig | None = None, jobs: int = 1) -> FitResult:
    """Fit the template-ridge model to raw curves ``x`` (N x p) and responses ``y``."""
    cfg = cfg or FitConfig()
    raw = FunctionalDataset(grid, x, y)
    if raw.n < cfg.folds:
        raise ValueError(f"need at least {cfg.folds} samples for {cfg.folds}-fold CV, got {raw.n}")
    if jobs is None or jobs < 1:
        jobs = os.cpu_count() or 1
    full = standardize(raw)
    templates = init_templates(full, cfg)

    folds = kfold_split(raw.n, cfg.folds, derive_seed(cfg.master_seed, _SPLIT))
    fold_data = []
    for k, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(raw.n), val_idx)
        train = standardize(raw.subset(train_idx))
        fold_templates = templates if cfg.init_scope == "full" else init_templates(train, cfg, k)
        fold_data.append(
            (train, design_svd(train), raw.x[val_idx], raw.y[val_idx], fold_templates)
        )

    M = len(cfg.lambdas)
    cells = [(k, qi, m) for k in range(cfg.folds) for qi in range(cfg.Q) for m in range(M)]
    state = {"cfg": cfg, "folds": fold_data}
    results = _run_cells(state, cells, jobs)

    errors = np.zeros((cfg.folds, cfg.Q, M))
    cell_traces = {}
    for (k, qi, m), (err, losses) in zip(cells, results):
        errors[k, qi, m] = err
        cell_traces[(k, qi + 1, m)] = losses
    cv_table = errors.mean(axis=0)
    qi, m = select_cell(cv_table)
    lam = cfg.lambdas[m]
    log.info("selected q=%d lambda=%.4g (cv mse %.6g)", qi + 1, lam, cv_table[qi, m])

    fit, gamma, trace = alternate_refine(full, templates[qi], lam, cfg, seed_key=(_FINAL,))
    return FitResult(
        fit=fit,
        gamma_star=gamma,
        q_star=qi + 1,
        lambda_star=lam,
        cv_table=cv_table,
        trace=trace,
        init_templates=templates,
        cell_traces=cell_traces,
    )
