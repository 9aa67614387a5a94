import numpy as np

from korteweg_fv import FluidState


def smooth_state(grid, rng, amp=0.3, vel=0.5, modes=3):
    """Random positive trigonometric density and momentum on ``grid``."""
    x, y = grid.cell_centers()
    kx, ky = 2 * np.pi / grid.Lx, 2 * np.pi / grid.Ly

    def field():
        f = np.zeros(grid.shape)
        for _ in range(modes):
            p, q = rng.integers(0, 3, size=2)
            a, b = rng.uniform(0, 2 * np.pi, size=2)
            f += rng.uniform(-1, 1) * np.cos(p * kx * x + a) * np.cos(q * ky * y + b)
        return f / modes

    rho = 1.0 + amp * field()
    u = vel * np.stack([field(), field()])
    return FluidState(grid, rho, rho * u)


def rough_state(grid, rng, amp=0.3, vel=0.5):
    """Random positive i.i.d. cell values."""
    rho = 1.0 + amp * rng.random(grid.shape)
    m = vel * rng.standard_normal((2,) + grid.shape)
    return FluidState(grid, rho, m)
