import numpy as np
import pytest

from carleman import MatrixField, build_grid


def smooth_bump(s, lo=0.12, hi=0.88):
    """C-infinity bump in one variable, exactly zero outside (lo, hi)."""
    z = (np.asarray(s, dtype=float) - lo) / (hi - lo)
    out = np.zeros_like(z)
    inside = (z > 0.0) & (z < 1.0)
    zz = 2.0 * z[inside] - 1.0
    out[inside] = np.exp(-1.0 / (1.0 - zz**2))
    return out


def interior_bump_spacetime(grid):
    """Product bump vanishing on a 2-node margin around dQ."""
    u = np.ones(grid.space_shape)
    for ax in range(grid.n):
        c = grid.domain.axis_coords(ax)
        s = (c - c[0]) / (c[-1] - c[0])
        u = u * smooth_bump(s).reshape([-1 if i == ax else 1 for i in range(grid.n)])
    t = (grid.times - grid.t1) / (grid.t2 - grid.t1)
    return u[..., None] * smooth_bump(t)


def interior_bump_space(grid):
    u = np.ones(grid.space_shape)
    for ax in range(grid.n):
        c = grid.domain.axis_coords(ax)
        s = (c - c[0]) / (c[-1] - c[0])
        u = u * smooth_bump(s).reshape([-1 if i == ax else 1 for i in range(grid.n)])
    return u


def sine_mode(grid, wavenumbers):
    u = np.ones(grid.space_shape)
    for ax, k in enumerate(wavenumbers):
        c = grid.domain.axis_coords(ax)
        s = (c - c[0]) / (c[-1] - c[0])
        u = u * np.sin(k * np.pi * s).reshape(
            [-1 if i == ax else 1 for i in range(grid.n)]
        )
    return u


@pytest.fixture
def unit_square_grid():
    return build_grid([0.0, 0.0], [1.0, 1.0], [17, 17], -1.0, 1.0, 33)


@pytest.fixture
def identity_2d(unit_square_grid):
    return MatrixField.identity(2, domain=unit_square_grid.domain)
