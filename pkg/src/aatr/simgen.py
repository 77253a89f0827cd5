"""Simulated functional regression data.

Curves are random cubic B-splines with 40 equispaced inner knots on
``[-2, 2]``, observed on the grid midpoints of ``[-1, 1]``. Spline
coefficients are either independent standard normals or AR(1)-correlated.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import BSpline

from .grid import FunctionalDataset, Grid, make_grid
from .template import Template

SHAPES = ("rect1", "rect2", "rect3", "smooth")
DEPENDENCE = ("independent", "dependent")

N_INNER_KNOTS = 40
KNOT_RANGE = (-2.0, 2.0)
DEGREE = 3

_RECTS = [(1.0, 0.0, 0.8), (-1.0, -0.55, 0.5), (0.5, 0.6, 0.4)]
SMOOTH_WIDTH = 0.3


@dataclass(frozen=True)
class SimScenario:
    n: int = 100
    p: int = 200
    dependence: str = "independent"
    beta_shape: str = "rect1"
    noise_sd: float = 1.0
    seed: int = 0
    rho: float = 0.9

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got {self.n}")
        if self.p < 10:
            raise ValueError(f"need p >= 10, got {self.p}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if self.dependence not in DEPENDENCE:
            raise ValueError(f"dependence must be one of {DEPENDENCE}, got {self.dependence!r}")
        if self.beta_shape not in SHAPES:
            raise ValueError(f"beta_shape must be one of {SHAPES}, got {self.beta_shape!r}")
        if not -1 < self.rho < 1:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")

    @property
    def grid(self) -> Grid:
        return make_grid(self.p, -1.0, 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


def knot_vector() -> np.ndarray:
    """Clamped cubic knot vector: 40 inner knots plus 4-fold boundary knots."""
    lo, hi = KNOT_RANGE
    inner = np.linspace(lo, hi, N_INNER_KNOTS + 2)[1:-1]
    return np.concatenate([[lo] * (DEGREE + 1), inner, [hi] * (DEGREE + 1)])


def n_basis() -> int:
    return N_INNER_KNOTS + DEGREE + 1


def basis_matrix(t) -> np.ndarray:
    """B-spline basis functions evaluated at ``t``, shape ``(len(t), 44)``."""
    t = np.asarray(t, dtype=np.float64)
    return BSpline.design_matrix(t, knot_vector(), DEGREE).toarray()


def coefficient_cov(dependence: str, rho: float = 0.9) -> np.ndarray:
    k = np.arange(n_basis())
    if dependence == "independent":
        return np.eye(k.size)
    return rho ** np.abs(k[:, None] - k[None, :])


def gen_coefficients(scn: SimScenario, rng: np.random.Generator) -> np.ndarray:
    chol = np.linalg.cholesky(coefficient_cov(scn.dependence, scn.rho))
    return rng.standard_normal((scn.n, n_basis())) @ chol.T


def _streams(seed: int):
    # separate streams for curves and noise so changing one never shifts the other
    curves, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(curves), np.random.default_rng(noise)


def gen_curves(scn: SimScenario) -> np.ndarray:
    rng, _ = _streams(scn.seed)
    coef = gen_coefficients(scn, rng)
    return coef @ basis_matrix(scn.grid.points).T


def true_template(shape: str) -> Template:
    if shape not in SHAPES or shape == "smooth":
        raise ValueError(f"no rectangle template for shape {shape!r}")
    k = int(shape[-1])
    return Template.from_arrays(*zip(*_RECTS[:k]))


def true_beta(shape: str, grid: Grid) -> np.ndarray:
    if shape == "smooth":
        t = grid.points
        return np.exp(-(t**2) / (2 * SMOOTH_WIDTH**2))
    if shape not in SHAPES:
        raise ValueError(f"unknown beta shape {shape!r}, expected one of {SHAPES}")
    tpl = true_template(shape)
    # evaluated without domain clipping checks: all default rectangles lie inside [-1, 1]
    t = grid.points
    return sum(r.A * (np.abs(t - r.t0) <= r.T / 2) for r in tpl.rects).astype(np.float64)


def gen_responses(x, beta, beta0: float, sigma: float, grid: Grid, seed=None, rng=None):
    """``y_i = beta0 + <x_i, beta> + sigma * z_i`` with standard normal ``z_i``."""
    x = np.asarray(x, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != grid.p or beta.shape != (grid.p,):
        raise ValueError(f"expected x of shape (N, {grid.p}) and beta of length {grid.p}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if rng is None:
        rng = np.random.default_rng(seed)
    signal = beta0 + grid.dt * (x @ beta)
    return signal + sigma * rng.standard_normal(x.shape[0])


def simulate(scn: SimScenario) -> tuple[FunctionalDataset, np.ndarray]:
    """Raw dataset and the true coefficient function for a scenario."""
    grid = scn.grid
    x = gen_curves(scn)
    beta = true_beta(scn.beta_shape, grid)
    _, noise_rng = _streams(scn.seed)
    y = gen_responses(x, beta, 0.0, scn.noise_sd, grid, rng=noise_rng)
    return FunctionalDataset(grid, x, y), beta
