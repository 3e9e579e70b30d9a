"""Smooth compactly supported test sections."""
from __future__ import annotations

import numpy as np

from .spacetime import SpacetimeLattice

__all__ = ["bump", "bump_profile", "random_bump", "random_bumps"]


def bump_profile(t, x, t_center: float, x_center: float, t_radius: float,
                 x_radius: float, period: float) -> np.ndarray:
    """Smooth bump ``exp(1 - 1/(1 - r^2))`` for ``r < 1`` and 0 outside.

    ``t`` and ``x`` broadcast against each other; x distances are taken
    modulo ``period``.
    """
    dt = (np.asarray(t, dtype=float) - t_center) / t_radius
    dx = np.asarray(x, dtype=float) - x_center
    dx = (dx + period / 2) % period - period / 2
    r2 = dt ** 2 + (dx / x_radius) ** 2
    out = np.zeros(np.broadcast(dt, dx).shape)
    inside = r2 < 1
    out[inside] = np.exp(1 - 1 / (1 - r2[inside]))
    return out


def bump(lat: SpacetimeLattice, t_center: float, x_center: float,
         t_radius: float, x_radius: float) -> np.ndarray:
    """:func:`bump_profile` sampled at the lattice nodes, shape ``(n_t, n_x)``."""
    return bump_profile(lat.t[:, None], lat.x[None, :], t_center, x_center,
                        t_radius, x_radius, lat.length_x)


def random_bump(lat: SpacetimeLattice, rng: np.random.Generator, fiber_dim: int = 1,
                complex_values: bool = False, t_range: tuple[float, float] = (0.4, 0.6),
                radius_cells: tuple[int, int] = (4, 8)) -> np.ndarray:
    """Bump with random centre, radius and fiber direction.

    ``t_range`` is the admissible window of the centre as fractions of the
    time window; ``radius_cells`` bounds the radius in lattice cells.

    Returns
    -------
    ndarray, shape (n_t, n_x, fiber_dim)
    """
    lo, hi = t_range
    tc = lat.t[0] + (lo + (hi - lo) * rng.random()) * (lat.t[-1] - lat.t[0])
    xc = rng.random() * lat.length_x
    rc = rng.integers(radius_cells[0], radius_cells[1] + 1)
    shape = bump(lat, tc, xc, rc * lat.delta_t, rc * lat.delta_x)
    vec = rng.standard_normal(fiber_dim)
    if complex_values:
        vec = vec + 1j * rng.standard_normal(fiber_dim)
    return shape[..., None] * vec


def random_bumps(lat: SpacetimeLattice, rng: np.random.Generator, count: int,
                 **kwargs) -> np.ndarray:
    """Stack of ``count`` random bumps along a trailing batch axis."""
    return np.stack([random_bump(lat, rng, **kwargs) for _ in range(count)], axis=-1)
