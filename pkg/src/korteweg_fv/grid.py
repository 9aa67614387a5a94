"""Periodic Cartesian grid and the discrete difference operators.

Fields are plain numpy arrays. A scalar field on a grid with ``M`` cells in x
and ``N`` cells in y has shape ``(M, N)`` and is indexed ``f[i, j]``; a vector
field has shape ``(2, M, N)`` with the x-component first. All operators act on
the last two axes, so they apply unchanged to vector fields and to stacks of
fields.

Periodicity is realized with ``np.roll`` (no ghost layers): index
``(i + kM, j + lN)`` aliases ``(i, j)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridError",
    "GridSpec",
    "shift",
    "diff",
    "laplacian_h",
    "integrate",
    "dg_seminorm_sq",
]


class GridError(ValueError):
    """Invalid grid geometry or a field that does not live on the grid."""


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the periodic domain ``(0, Lx) x (0, Ly)`` split into ``M x N`` cells.

    ``M``, ``N`` and the lengths are stored; the mesh sizes are derived so
    that ``hx * M == Lx`` holds by construction.
    """

    Lx: float
    Ly: float
    M: int
    N: int

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise GridError(f"domain lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        for name in ("M", "N"):
            n = getattr(self, name)
            if int(n) != n:
                raise GridError(f"{name} must be an integer, got {n!r}")
            # with 2 cells the central stencil collapses (f[i+1] == f[i-1])
            if n < 3:
                raise GridError(f"{name} must be >= 3, got {n}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "Ly", float(self.Ly))

    @property
    def hx(self) -> float:
        return self.Lx / self.M

    @property
    def hy(self) -> float:
        return self.Ly / self.N

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def theta_x(self) -> float:
        return self.hx / self.h

    @property
    def theta_y(self) -> float:
        return self.hy / self.h

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M, self.N)

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates ``x_i = i*hx``, ``y_j = j*hy`` as ``(M, N)`` arrays."""
        x = np.arange(self.M) * self.hx
        y = np.arange(self.N) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.Lx, self.Ly, self.M * factor, self.N * factor)

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise GridError(f"field of shape {f.shape} does not match grid {self.shape}")
        return f

    # one-sided and central differences; the names follow x/y, p(lus)/m(inus)/c(entral)

    def dxp(self, f):
        return (shift(f, 1, 0) - f) / self.hx

    def dxm(self, f):
        return (f - shift(f, -1, 0)) / self.hx

    def dxc(self, f):
        return (shift(f, 1, 0) - shift(f, -1, 0)) / (2.0 * self.hx)

    def dyp(self, f):
        return (shift(f, 0, 1) - f) / self.hy

    def dym(self, f):
        return (f - shift(f, 0, -1)) / self.hy

    def dyc(self, f):
        return (shift(f, 0, 1) - shift(f, 0, -1)) / (2.0 * self.hy)

    def lap(self, f):
        return laplacian_h(f, self)

    def integrate(self, f):
        return integrate(f, self)


def shift(f: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Return ``g`` with ``g[i, j] = f[i + dx, j + dy]`` (periodic wrap); ``f`` is not modified."""
    if dx == 0 and dy == 0:
        return np.array(f, copy=True)
    return np.roll(f, (-dx, -dy), axis=(-2, -1))


_KINDS = ("forward", "backward", "central")


def diff(f: np.ndarray, grid: GridSpec, axis: str, kind: str) -> np.ndarray:
    """Forward, backward or central difference quotient along ``axis`` ('x' or 'y')."""
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    if axis == "x":
        ops = (grid.dxp, grid.dxm, grid.dxc)
    elif axis == "y":
        ops = (grid.dyp, grid.dym, grid.dyc)
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    return ops[_KINDS.index(kind)](grid.check(f))


def laplacian_h(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Five-point Laplacian; equals backward(forward(f)) in each axis up to roundoff."""
    fx = (shift(f, 1, 0) - 2.0 * f + shift(f, -1, 0)) / grid.hx**2
    fy = (shift(f, 0, 1) - 2.0 * f + shift(f, 0, -1)) / grid.hy**2
    return fx + fy


def integrate(f: np.ndarray, grid: GridSpec):
    """Midpoint-rule integral ``hx*hy*sum(f)`` over the torus.

    The reduction is numpy's pairwise summation over the last two axes of a
    C-contiguous copy, so it is reproducible bit-for-bit for a given build.
    Vector fields return one value per component.
    """
    f = np.ascontiguousarray(f, dtype=float)
    total = f.sum(axis=(-2, -1))
    return grid.cell_area * (float(total) if total.ndim == 0 else total)


def dg_seminorm_sq(f: np.ndarray) -> float:
    """Squared broken-H1 seminorm: sum of squared jumps to the left and lower neighbours.

    For a vector field (leading axis of length 2) the component contributions add.
    """
    f = np.asarray(f, dtype=float)
    jx = f - shift(f, -1, 0)
    jy = f - shift(f, 0, -1)
    return float(np.sum(jx * jx) + np.sum(jy * jy))
