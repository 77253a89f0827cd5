"""Template search: differential evolution over rectangle positions and widths.

Only the ``2q`` positional variables ``(t0, T)`` are searched. For any fixed
positions both template objectives are quadratic in the heights ``A``, so
the heights are recovered exactly by a pseudoinverse solve.

Candidate vectors are laid out as ``[t0_1..t0_q, T_1..T_q]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import FunctionalDataset, Grid
from .template import Template, beta_gram, overlap_gram, s_vectors

EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class DeConfig:
    population_size: int | None = None
    mutation_factor_range: tuple[float, float] = (0.5, 1.0)
    crossover_rate: float = 0.9
    eval_budget: int = 5000
    seed: int = 0
    bounds: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.population_size is not None and self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        lo, hi = self.mutation_factor_range
        if not (0 < lo <= hi < 2):
            raise ValueError(f"mutation_factor_range must lie in (0, 2), got {(lo, hi)}")
        if not (0 <= self.crossover_rate <= 1):
            raise ValueError(f"crossover_rate must lie in [0, 1], got {self.crossover_rate}")
        if self.eval_budget < (self.population_size or 4):
            raise ValueError("eval_budget must be at least population_size")
        for lo_b, hi_b in self.bounds:
            if not lo_b < hi_b:
                raise ValueError(f"infeasible bounds ({lo_b}, {hi_b})")
        object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))


@dataclass(frozen=True)
class TemplateSolution:
    t0: np.ndarray
    T: np.ndarray
    A: np.ndarray
    objective: float

    @property
    def template(self) -> Template:
        return Template.from_arrays(self.A, self.t0, self.T)


@dataclass
class DeResult:
    x: np.ndarray
    fun: float
    nfev: int
    best_history: list[float] = field(default_factory=list)


def default_population(dim: int) -> int:
    """Population used when the config leaves it unset: ``max(20, 10 * dim)``."""
    return max(20, 10 * dim)


def template_bounds(q: int, grid: Grid) -> tuple[tuple[float, float], ...]:
    """Box for ``[t0, T]``: centers in the domain, widths at least two cells."""
    return ((grid.a, grid.b),) * q + ((2 * grid.dt, grid.length),) * q


# ---------------------------------------------------------------------------
# Closed-form heights
# ---------------------------------------------------------------------------


def _psd_solve(M, v):
    """Pseudoinverse solve of symmetric ``M a = v``, batched over leading axes."""
    q = M.shape[-1]
    pinv = np.linalg.pinv(M, rcond=q * EPS, hermitian=True)
    return np.einsum("...ij,...j->...i", pinv, v)


def closed_form_A_init(S, y_centered) -> np.ndarray:
    """Heights minimizing ``sum_i (y_i - ybar - S_i . A)^2`` for fixed supports."""
    S = np.asarray(S, dtype=np.float64)
    y_centered = np.asarray(y_centered, dtype=np.float64)
    if S.shape[-2] != y_centered.shape[-1]:
        raise ValueError(f"S has {S.shape[-2]} rows but y has {y_centered.shape[-1]}")
    Sss = np.einsum("...ij,...ik->...jk", S, S)
    Sys = np.einsum("...ij,...i->...j", S, y_centered)
    return _psd_solve(Sss, Sys)


def closed_form_A_reshape(S, y_centered, Sgg, Sbg, lam: float) -> np.ndarray:
    """Heights minimizing the reshape objective ``SS(A) + lam * ||beta - gamma_A||^2``."""
    S = np.asarray(S, dtype=np.float64)
    y_centered = np.asarray(y_centered, dtype=np.float64)
    Sgg = np.asarray(Sgg, dtype=np.float64)
    Sbg = np.asarray(Sbg, dtype=np.float64)
    q = S.shape[-1]
    if S.shape[-2] != y_centered.shape[-1]:
        raise ValueError(f"S has {S.shape[-2]} rows but y has {y_centered.shape[-1]}")
    if Sgg.shape[-2:] != (q, q) or Sbg.shape[-1] != q:
        raise ValueError(f"Gram shapes {Sgg.shape}, {Sbg.shape} do not match q={q}")
    if not np.allclose(Sgg, np.swapaxes(Sgg, -1, -2), rtol=0, atol=1e-12):
        raise ValueError("Sgg must be symmetric")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    Sss = np.einsum("...ij,...ik->...jk", S, S)
    Sys = np.einsum("...ij,...i->...j", S, y_centered)
    return _psd_solve(Sss + lam * Sgg, Sys + lam * Sbg)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def _split(v, q):
    v = np.asarray(v, dtype=np.float64)
    return v[..., :q], v[..., q:]


def objective_init(t0, T, ds: FunctionalDataset):
    """Hard-constrained least squares with heights profiled out.

    Returns ``(objective, A)``; batched ``t0``/``T`` of shape ``(n, q)``
    give arrays of shape ``(n,)`` and ``(n, q)``.
    """
    yc = ds.y - ds.y_mean
    S = s_vectors(ds, t0, T)
    A = closed_form_A_init(S, yc)
    r = yc - np.einsum("...ij,...j->...i", S, A)
    return np.sum(r * r, axis=-1), A


def objective_reshape(t0, T, ds: FunctionalDataset, beta_tilde, lam: float):
    """Reshape objective: residual SS plus ``lam`` times the squared L2 gap to ``beta_tilde``.

    The gap expands as ``int beta^2 - 2 A.Sbg + A' Sgg A`` with ``Sgg`` exact and
    the ``beta_tilde`` terms by quadrature.
    """
    beta_tilde = np.asarray(beta_tilde, dtype=np.float64)
    grid = ds.grid
    yc = ds.y - ds.y_mean
    S = s_vectors(ds, t0, T)
    Sgg = overlap_gram(t0, T, grid)
    Sbg = beta_gram(beta_tilde, t0, T, grid)
    A = closed_form_A_reshape(S, yc, Sgg, Sbg, lam)
    r = yc - np.einsum("...ij,...j->...i", S, A)
    bb = grid.dt * float(beta_tilde @ beta_tilde)
    gap = bb - 2 * np.einsum("...j,...j->...", A, Sbg) + np.einsum("...i,...ij,...j->...", A, Sgg, A)
    return np.sum(r * r, axis=-1) + lam * gap, A


# ---------------------------------------------------------------------------
# Differential evolution
# ---------------------------------------------------------------------------


def reflect(x, lo, hi):
    """Mirror coordinates back into ``[lo, hi]`` (repeatedly, for far excursions)."""
    w = hi - lo
    y = np.mod(x - lo, 2 * w)
    y = np.where(y > w, 2 * w - y, y)
    return lo + y


def de_minimize(
    f: Callable[[np.ndarray], np.ndarray],
    cfg: DeConfig,
    init: np.ndarray | None = None,
    vectorized: bool = False,
) -> DeResult:
    """DE/rand/1/bin with dithered mutation factor and greedy one-to-one selection.

    Each generation builds all trial vectors from the current population,
    evaluates them, then applies selection in index order, so the result
    depends only on ``cfg.seed`` even when ``f`` evaluates a batch at once.

    Parameters
    ----------
    f : callable
        Objective. With ``vectorized=True`` it maps an ``(n, d)`` array to
        ``n`` values, otherwise one ``d``-vector to a scalar. Non-finite
        values are treated as ``+inf``.
    cfg : DeConfig
        Population size, mutation/crossover constants, evaluation budget,
        seed and box bounds.
    init : array, optional
        Points placed at the start of the initial population (warm start).
    """
    bounds = np.array(cfg.bounds, dtype=np.float64)
    if bounds.ndim != 2 or bounds.shape[0] == 0:
        raise ValueError("DE needs at least one bounded variable")
    lo, hi = bounds[:, 0], bounds[:, 1]
    d = lo.size
    npop = cfg.population_size or default_population(d)
    if npop > cfg.eval_budget:
        raise ValueError(f"eval_budget {cfg.eval_budget} is below the population size {npop}")
    rng = np.random.default_rng(cfg.seed)

    def evaluate(P):
        if vectorized:
            vals = np.asarray(f(P), dtype=np.float64).reshape(len(P))
        else:
            vals = np.array([f(p) for p in P], dtype=np.float64)
        return np.where(np.isfinite(vals), vals, np.inf)

    pop = lo + rng.random((npop, d)) * (hi - lo)
    if init is not None:
        init = np.atleast_2d(np.asarray(init, dtype=np.float64))
        if init.shape[1] != d:
            raise ValueError(f"warm-start points must have {d} coordinates")
        k = min(len(init), npop)
        pop[:k] = np.clip(init[:k], lo, hi)
    fit = evaluate(pop)
    nfev = npop
    best = int(np.argmin(fit))
    best_x, best_f = pop[best].copy(), float(fit[best])
    history = [best_f]

    idx = np.arange(npop)
    fmin, fmax = cfg.mutation_factor_range
    while nfev + npop <= cfg.eval_budget:
        # three distinct donors, all different from the target
        donors = np.argsort(rng.random((npop, npop - 1)), axis=1)[:, :3]
        donors += donors >= idx[:, None]
        F = rng.uniform(fmin, fmax, size=(npop, 1))
        base, r1, r2 = pop[donors[:, 0]], pop[donors[:, 1]], pop[donors[:, 2]]
        mutant = reflect(base + F * (r1 - r2), lo, hi)
        cross = rng.random((npop, d)) < cfg.crossover_rate
        cross[idx, rng.integers(0, d, size=npop)] = True
        trial = np.where(cross, mutant, pop)
        trial_f = evaluate(trial)
        nfev += npop
        better = trial_f <= fit
        pop[better] = trial[better]
        fit[better] = trial_f[better]
        gen_best = int(np.argmin(fit))
        if fit[gen_best] < best_f:
            best_f = float(fit[gen_best])
            best_x = pop[gen_best].copy()
        history.append(best_f)
    return DeResult(best_x, best_f, nfev, history)


def _template_de(objective, q: int, grid: Grid, cfg: DeConfig, init=None) -> TemplateSolution:
    if not cfg.bounds:
        cfg = replace(cfg, bounds=template_bounds(q, grid))

    def batch(P):
        t0, T = _split(P, q)
        return objective(t0, T)[0]

    res = de_minimize(batch, cfg, init=init, vectorized=True)
    t0, T = _split(res.x, q)
    value, A = objective(t0, T)
    return TemplateSolution(t0.copy(), T.copy(), np.asarray(A), float(value))


def solve_init(ds: FunctionalDataset, q: int, cfg: DeConfig) -> TemplateSolution:
    """Search rectangle supports for the hard-constrained initialization problem."""
    return _template_de(lambda t0, T: objective_init(t0, T, ds), q, ds.grid, cfg)


def solve_reshape(
    ds: FunctionalDataset,
    beta_tilde,
    lam: float,
    q: int,
    cfg: DeConfig,
    warm: Template | None = None,
) -> TemplateSolution:
    init = None
    if warm is not None:
        if warm.q != q:
            raise ValueError(f"warm-start template has q={warm.q}, expected {q}")
        init = np.concatenate([warm.t0, warm.T])
    return _template_de(
        lambda t0, T: objective_reshape(t0, T, ds, beta_tilde, lam), q, ds.grid, cfg, init=init
    )
