"""Heat semigroup on the half line with a reflecting (Neumann) origin.

Transition masses between grid cells are exact double integrals of the
Gaussian, obtained from the image method and the identity

    int int_{cell x cell'} G_t(x - y) dy dx = second difference of J,
    J(z) = max(z, 0) + L(|z|),   L(x) = s (phi(x/s) - (x/s) Q(x/s)),

with ``s = sqrt(t)`` and ``Q`` the standard normal upper tail. Writing ``J``
this way keeps the linear part out of the finite differences, so there is no
cancellation for far-apart cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, DomainError
from .profile import GridSpec, MassProfile, TOL_F

#: Standard deviations of diffusion kept on the target grid.
TAIL_SIGMAS = 8.0
#: Largest relative mass allowed to be folded back from beyond the target grid.
FOLD_LIMIT = 1e-12

_SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class HeatStepPlan:
    time: float
    source_grid: GridSpec
    target_grid: GridSpec

    def __post_init__(self):
        if not self.time > 0:
            raise DomainError("diffusion time must be positive")
        need = self.source_grid.max_radius + 6 * math.sqrt(self.time)
        if self.target_grid.max_radius < need - 1e-12:
            raise ConfigurationError(
                f"target radius {self.target_grid.max_radius:.6g} cannot hold the "
                f"6*sqrt(t) diffusion tail (needs {need:.6g})")


def plan_heat_step(u: MassProfile, t: float, max_radius: float | None = None,
                   tol: float = TOL_F) -> HeatStepPlan:
    h = u.cell_width
    n_src = max(u.n_cells, 1)
    if max_radius is None:
        n_tgt = n_src + math.ceil(TAIL_SIGMAS * math.sqrt(t) / h) + 1
    else:
        n_tgt = int(round(max_radius / h))
    src = GridSpec(h, n_src * h, tol)
    tgt = GridSpec(h, n_tgt * h, tol)
    return HeatStepPlan(t, src, tgt)


def kernel_value(t: float, r: float, r2: float) -> float:
    """Neumann Green function ``G_t(r, r') + G_t(r, -r')``."""
    if not t > 0:
        raise DomainError("t must be positive")
    return (math.exp(-(r - r2) ** 2 / (2 * t)) + math.exp(-(r + r2) ** 2 / (2 * t))) / math.sqrt(2 * math.pi * t)


def _loss(x, s):
    z = x / s
    return s * (np.exp(-0.5 * z * z) / _SQRT_2PI - z * ndtr(-z))


def _transfer_vectors(t: float, h: float, n_src: int, n_tgt: int):
    """Cell-to-cell transition fractions, split into direct and image parts.

    direct[p] is the fraction for target minus source index ``p - (n_src-1)``;
    image[q] is the fraction for target plus source index ``q``.
    """
    s = math.sqrt(t)
    offsets = np.arange(-(n_src - 1) - 1, n_tgt + 1)
    Lab = _loss(np.abs(offsets) * h, s)
    direct = Lab[2:] - 2 * Lab[1:-1] + Lab[:-2]
    direct[n_src - 1] += h
    sums = np.arange(0, n_src + n_tgt + 1)
    Ls = _loss(sums * h, s)
    image = Ls[2:] - 2 * Ls[1:-1] + Ls[:-2]
    # per unit source mass
    return np.maximum(direct, 0.0) / h, np.maximum(image, 0.0) / h


def _beyond(t: float, h: float, n_src: int, radius: float):
    """Fraction of each source cell's mass diffusing past ``radius``."""
    s = math.sqrt(t)
    a = h * np.arange(n_src)
    b = a + h
    # (1/h) int_a^b Q((R - x)/s) + Q((R + x)/s) dx via the same loss function
    direct = (_loss(radius - b, s) - _loss(radius - a, s)) / h
    image = (_loss(radius + a, s) - _loss(radius + b, s)) / h
    return np.maximum(direct + image, 0.0)


def heat_step(u: MassProfile, t: float, max_radius: float | None = None) -> MassProfile:
    """Evolve ``u`` for time ``t`` and project onto cell averages."""
    plan = plan_heat_step(u, t, max_radius)
    h = u.cell_width
    n_src = max(u.n_cells, 1)
    n_tgt = plan.target_grid.n_cells
    masses = h * u.padded(n_src)
    s = math.sqrt(t)

    direct, image = _transfer_vectors(t, h, n_src, n_tgt)
    out = np.convolve(masses, direct)[n_src - 1: n_src - 1 + n_tgt]
    out = out + np.correlate(image, masses, mode="valid")[:n_tgt]
    radius = n_tgt * h
    folded = float(np.dot(_beyond(t, h, n_src, radius), masses))

    if u.atom > 0:
        edges = h * np.arange(n_tgt + 1) / s
        q = ndtr(-edges)
        out = out + u.atom * 2 * (q[:-1] - q[1:])
        folded += u.atom * 2 * float(q[-1])

    total = u.atom + masses.sum()
    if folded > FOLD_LIMIT * max(total, 1e-300):
        raise ConfigurationError(
            f"diffusion tail mass {folded:.3g} beyond radius {radius:.6g} exceeds the fold limit")
    out[-1] += folded
    return MassProfile(0.0, h, out / h)
