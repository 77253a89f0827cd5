import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aatr.grid import (
    FunctionalDataset,
    destandardize,
    inner_product,
    make_grid,
    standardize,
)


def test_make_grid_two_cells():
    g = make_grid(2, -1, 1)
    np.testing.assert_allclose(g.points, [-0.5, 0.5])
    assert g.dt == 1.0


def test_make_grid_default_resolution():
    assert make_grid(200, -1, 1).dt == pytest.approx(0.01, abs=1e-15)


def test_make_grid_unit_interval():
    np.testing.assert_allclose(make_grid(4, 0, 1).points, [0.125, 0.375, 0.625, 0.875])


@pytest.mark.parametrize("p,a,b", [(1, 0, 1), (0, 0, 1), (5, 1, 1), (5, 2, 1)])
def test_make_grid_rejects(p, a, b):
    with pytest.raises(ValueError):
        make_grid(p, a, b)


@given(st.integers(2, 500), st.floats(-10, 10), st.floats(0.01, 20))
def test_grid_invariants(p, a, width):
    g = make_grid(p, a, a + width)
    pts = g.points
    assert np.all(np.diff(pts) > 0)
    np.testing.assert_allclose(np.diff(pts), g.dt, rtol=1e-9)
    assert pts[0] > g.a and pts[-1] < g.b


@pytest.mark.parametrize("p", [2, 7, 200])
def test_inner_product_constant(p):
    g = make_grid(p, -1, 1)
    assert inner_product(np.ones(p), np.ones(p), g) == pytest.approx(2.0, abs=1e-14)


def test_inner_product_odd_symmetry():
    g = make_grid(200, -1, 1)
    assert abs(inner_product(g.points, np.ones(200), g)) < 1e-12


def test_inner_product_quadratic():
    g = make_grid(200, -1, 1)
    # midpoint rule error for t^2 on [-1, 1] is -(b-a) dt^2 / 12 * 2 = -dt^2/3
    val = inner_product(g.points, g.points, g)
    assert abs(val - 2 / 3) < 1e-4
    assert val == pytest.approx(2 / 3 - g.dt**2 / 6, abs=1e-13)


def test_inner_product_length_mismatch():
    with pytest.raises(ValueError):
        inner_product(np.ones(3), np.ones(4), make_grid(4))


@given(arrays(np.float64, 9, elements=st.floats(-5, 5)))
def test_inner_product_exact_for_cellwise_constant(cells):
    # a function constant on each cell integrates to dt * sum exactly
    g = make_grid(9, 0, 3)
    exact = sum(c * 1 / 3 for c in cells)
    assert inner_product(cells, np.ones(9), g) == pytest.approx(exact, abs=1e-12)


@given(
    arrays(np.float64, 12, elements=st.floats(-3, 3)),
    arrays(np.float64, 12, elements=st.floats(-3, 3)),
    arrays(np.float64, 12, elements=st.floats(-3, 3)),
    st.floats(-2, 2),
)
def test_inner_product_bilinear_symmetric(f, g_, h, c):
    g = make_grid(12)
    assert inner_product(f, g_, g) == pytest.approx(inner_product(g_, f, g), abs=1e-12)
    lhs = inner_product(c * f + h, g_, g)
    rhs = c * inner_product(f, g_, g) + inner_product(h, g_, g)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def _ds(x, y=None):
    x = np.asarray(x, dtype=float)
    if y is None:
        y = np.zeros(x.shape[0])
    return FunctionalDataset(make_grid(x.shape[1]), x, y)


def test_standardize_two_rows():
    ds = standardize(_ds([[1.0, 0.0], [3.0, 1.0]]))
    np.testing.assert_allclose(ds.x[:, 0], [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert ds.col_means[0] == 2.0
    assert ds.col_scales[0] == pytest.approx(np.sqrt(2))


def test_standardize_constant_column():
    ds = standardize(_ds([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
    np.testing.assert_array_equal(ds.x[:, 0], 0.0)
    assert ds.col_scales[0] == 1.0


def test_standardize_twice_rejected():
    ds = standardize(_ds([[1.0, 0.0], [3.0, 1.0]]))
    with pytest.raises(ValueError):
        standardize(ds)


def test_standardize_needs_two_rows():
    with pytest.raises(ValueError):
        standardize(_ds([[1.0, 2.0]]))


def test_dataset_validation():
    g = make_grid(3)
    with pytest.raises(ValueError):
        FunctionalDataset(g, np.ones((2, 4)), np.ones(2))
    with pytest.raises(ValueError):
        FunctionalDataset(g, np.ones((2, 3)), np.ones(3))
    with pytest.raises(ValueError):
        FunctionalDataset(g, np.array([[1, np.nan, 1], [1, 1, 1]]), np.ones(2))


@settings(max_examples=50)
@given(arrays(np.float64, (6, 5), elements=st.floats(-1e3, 1e3)))
def test_standardize_statistics_and_round_trip(x):
    ds = standardize(_ds(x))
    assert np.all(np.abs(ds.x.mean(axis=0)) < 1e-10)
    sd = ds.x.std(axis=0, ddof=1)
    for j in range(x.shape[1]):
        if ds.col_scales[j] == 1.0 and np.ptp(x[:, j]) == 0:
            assert np.all(ds.x[:, j] == 0)
        elif np.ptp(x[:, j]) > 1e-6:
            assert abs(sd[j] - 1) < 1e-8
    back = destandardize(ds)
    scale = np.maximum(np.abs(x), 1.0)
    assert np.all(np.abs(back - x) / scale < 1e-12)
