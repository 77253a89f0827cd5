"""Scalar-on-function ridge regression shrunk towards adaptive rectangle templates."""

__version__ = "0.1.0"

from .fitter import FitConfig, FitResult, fit_aatr
from .grid import FunctionalDataset, Grid, make_grid, standardize
from .ridge import RidgeFit, predict
from .template import Rectangle, Template

__all__ = [
    "FitConfig",
    "FitResult",
    "FunctionalDataset",
    "Grid",
    "Rectangle",
    "RidgeFit",
    "Template",
    "fit_aatr",
    "make_grid",
    "predict",
    "standardize",
]
