"""Finite measures on the half line: an atom at the origin plus a
piecewise-constant density on a uniform grid.

The tail function ``F(r; u)`` (mass in ``[r, inf)``, the atom counted only at
``r = 0``) is piecewise linear between grid breakpoints, so every order
comparison, cut and quantile below is exact up to floating point.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, GridMismatchError, OrderError

#: Default slack for tail-function comparisons of exactly computed profiles.
TOL_F = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Discretisation of the half line used by a run."""

    cell_width: float
    max_radius: float
    comparison_tolerance: float = TOL_F

    def __post_init__(self):
        if not self.cell_width > 0:
            raise DomainError("cell_width must be positive")
        if not self.max_radius > 0:
            raise DomainError("max_radius must be positive")
        if self.comparison_tolerance < 0:
            raise DomainError("comparison_tolerance must be nonnegative")
        ratio = self.max_radius / self.cell_width
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise DomainError("max_radius must be an integer multiple of cell_width")

    @property
    def n_cells(self) -> int:
        return int(round(self.max_radius / self.cell_width))


@dataclass(frozen=True, eq=False)
class MassProfile:
    """``atom * D_0`` plus a density constant on cells ``[i h, (i+1) h)``."""

    atom: float
    cell_width: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).ravel()
        if not self.cell_width > 0 or not math.isfinite(self.cell_width):
            raise DomainError("cell_width must be positive and finite")
        if not math.isfinite(self.atom) or self.atom < 0:
            raise DomainError(f"atom must be finite and nonnegative, got {self.atom}")
        if vals.size and (not np.all(np.isfinite(vals)) or vals.min() < 0):
            raise DomainError("density values must be finite and nonnegative")
        vals.flags.writeable = False
        object.__setattr__(self, "atom", float(self.atom))
        object.__setattr__(self, "cell_width", float(self.cell_width))
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def support_end(self) -> float:
        return self.cell_width * self.values.size

    @property
    def density_mass(self) -> float:
        return float(self.cell_width * self.values.sum())

    @property
    def breakpoints(self) -> np.ndarray:
        return self.cell_width * np.arange(self.values.size + 1)

    def tails(self) -> np.ndarray:
        """Density tail mass at every breakpoint (atom excluded), length n+1."""
        t = np.zeros(self.values.size + 1)
        t[:-1] = self.cell_width * np.cumsum(self.values[::-1])[::-1]
        return t

    def F(self) -> np.ndarray:
        """``F(r; u)`` at every breakpoint, atom included at ``r = 0``."""
        t = self.tails()
        t[0] += self.atom
        return t

    def padded(self, n: int) -> np.ndarray:
        if n < self.values.size:
            raise ValueError("cannot pad to fewer cells")
        out = np.zeros(n)
        out[: self.values.size] = self.values
        return out

    def trimmed(self) -> "MassProfile":
        """Drop trailing cells whose density is exactly zero."""
        nz = np.flatnonzero(self.values)
        n = int(nz[-1]) + 1 if nz.size else 0
        if n == self.values.size:
            return self
        return MassProfile(self.atom, self.cell_width, self.values[:n])

    def with_values(self, values, atom=None) -> "MassProfile":
        return MassProfile(self.atom if atom is None else atom, self.cell_width, values)

    def __repr__(self):
        return (f"MassProfile(atom={self.atom:.6g}, cell_width={self.cell_width:.6g}, "
                f"n_cells={self.n_cells}, mass={total_mass(self):.6g})")

    # serialisation -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"atom": self.atom, "cell_width": self.cell_width,
                           "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "MassProfile":
        data = json.loads(text)
        return cls(data["atom"], data["cell_width"], data["values"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["atom", repr(self.atom)])
        w.writerow(["cell_index", "density"])
        for i, v in enumerate(self.values):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, cell_width: float) -> "MassProfile":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if len(rows) < 2 or rows[0][0].strip() != "atom" or rows[1][0].strip() != "cell_index":
            raise ValueError("profile CSV must start with 'atom,<value>' then 'cell_index,density'")
        atom = float(rows[0][1])
        body = rows[2:]
        values = np.zeros(len(body))
        for row in body:
            i = int(row[0])
            if not 0 <= i < len(body):
                raise ValueError(f"cell_index {i} out of range")
            values[i] = float(row[1])
        return cls(atom, cell_width, values)


def save_profile(u: MassProfile, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(u.to_json())
    else:
        path.write_text(u.to_csv())


def load_profile(path, cell_width: float | None = None) -> MassProfile:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return MassProfile.from_json(text)
    if cell_width is None:
        raise ValueError("cell_width is required to read a profile CSV")
    return MassProfile.from_csv(text, cell_width)


# constructors ---------------------------------------------------------------

def zero_profile(cell_width: float) -> MassProfile:
    return MassProfile(0.0, cell_width, [])


def _cell_averages(antiderivative, h, n):
    edges = h * np.arange(n + 1)
    return np.diff(antiderivative(edges)) / h


def stationary_profile(a: float, j: float, cell_width: float) -> MassProfile:
    """Linear profile ``a - 2 j r`` on ``[0, a / 2j]`` as exact cell averages."""
    if not (a > 0 and j > 0):
        raise DomainError("a and j must be positive")
    edge = a / (2 * j)
    n = max(1, math.ceil(edge / cell_width - 1e-9))

    def anti(r):
        r = np.minimum(r, edge)
        return a * r - j * r * r

    return MassProfile(0.0, cell_width, np.maximum(_cell_averages(anti, cell_width, n), 0.0))


def stationary_tail(a: float, j: float, r):
    """Closed form ``F(r; rho_a) = (a - 2 j r)_+^2 / 4j``."""
    r = np.asarray(r, dtype=float)
    return np.maximum(a - 2 * j * r, 0.0) ** 2 / (4 * j)


def block_profile(lo: float, hi: float, height: float, cell_width: float,
                  atom: float = 0.0) -> MassProfile:
    """Constant density ``height`` on ``[lo, hi]`` (cell-averaged)."""
    if not 0 <= lo <= hi:
        raise DomainError("need 0 <= lo <= hi")
    n = max(1, math.ceil(hi / cell_width - 1e-9))

    def anti(r):
        return height * (np.clip(r, lo, hi) - lo)

    return MassProfile(atom, cell_width, _cell_averages(anti, cell_width, n))


def triangle_profile(lo: float, peak: float, hi: float, height: float,
                     cell_width: float) -> MassProfile:
    """Hat function rising from ``lo`` to ``height`` at ``peak`` and back to 0 at ``hi``."""
    if not 0 <= lo <= peak <= hi or hi <= lo:
        raise DomainError("need 0 <= lo <= peak <= hi with lo < hi")
    n = max(1, math.ceil(hi / cell_width - 1e-9))

    def anti(r):
        r = np.clip(r, lo, hi)
        left = np.minimum(r, peak) - lo
        out = np.zeros_like(r)
        if peak > lo:
            out = out + 0.5 * height * left ** 2 / (peak - lo)
        if hi > peak:
            right = np.maximum(r - peak, 0.0)
            out = out + height * right - 0.5 * height * right ** 2 / (hi - peak)
        return out

    return MassProfile(0.0, cell_width, np.maximum(_cell_averages(anti, cell_width, n), 0.0))


def _check_grid(u: MassProfile, v: MassProfile) -> float:
    if not math.isclose(u.cell_width, v.cell_width, rel_tol=1e-12):
        raise GridMismatchError(f"cell widths differ: {u.cell_width} vs {v.cell_width}")
    return u.cell_width


def add(u: MassProfile, v: MassProfile) -> MassProfile:
    _check_grid(u, v)
    n = max(u.n_cells, v.n_cells)
    return MassProfile(u.atom + v.atom, u.cell_width, u.padded(n) + v.padded(n))


def scale(u: MassProfile, c: float) -> MassProfile:
    if c < 0:
        raise DomainError("scale factor must be nonnegative")
    return MassProfile(c * u.atom, u.cell_width, c * u.values)


def midpoint(u: MassProfile, v: MassProfile) -> MassProfile:
    return scale(add(u, v), 0.5)


# functionals ----------------------------------------------------------------

def total_mass(u: MassProfile) -> float:
    return float(u.atom + u.cell_width * u.values.sum())


def tail_mass(u: MassProfile, r):
    """``F(r; u)``; vectorised over ``r``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise DomainError("r must be nonnegative")
    h = u.cell_width
    tails = u.tails()
    n = u.n_cells
    idx = np.minimum(np.floor(r_arr / h).astype(int), n)
    inside = idx < n
    safe = np.minimum(idx, max(n - 1, 0))
    vals = u.values[safe] if n else np.zeros_like(r_arr)
    out = np.where(inside, tails[np.minimum(idx + 1, n)] + vals * ((idx + 1) * h - r_arr), 0.0)
    out = np.where(r_arr == 0, out + u.atom, out)
    return float(out) if np.ndim(r) == 0 else out


def _common_F(u: MassProfile, v: MassProfile):
    _check_grid(u, v)
    n = max(u.n_cells, v.n_cells)
    fu = np.zeros(n + 1)
    fv = np.zeros(n + 1)
    fu[: u.n_cells + 1] = u.F()
    fv[: v.n_cells + 1] = v.F()
    return fu, fv


def l1_distance(u: MassProfile, v: MassProfile) -> float:
    _check_grid(u, v)
    n = max(u.n_cells, v.n_cells)
    return float(abs(u.atom - v.atom) + u.cell_width * np.abs(u.padded(n) - v.padded(n)).sum())


def order_excess(u: MassProfile, v: MassProfile) -> float:
    """Smallest ``m >= 0`` with ``F(r;u) <= F(r;v) + m`` for all r.

    Both tails vanish beyond the common support, so the result is never negative.
    """
    fu, fv = _common_F(u, v)
    return float(np.max(fu - fv))


def leq_modulo(u: MassProfile, v: MassProfile, m: float = 0.0, tol: float = TOL_F) -> bool:
    """Mass-transport order ``u <= v`` modulo ``m``.

    Both tails are piecewise linear on the common grid, so checking the
    breakpoints (``r = 0`` included, atoms counted there) is sufficient.
    """
    if m < 0:
        raise DomainError("m must be nonnegative")
    return order_excess(u, v) <= m + tol


def sup_tail_distance(u: MassProfile, v: MassProfile) -> float:
    fu, fv = _common_F(u, v)
    return float(np.max(np.abs(fu - fv)))


def edge(u: MassProfile, tol: float = TOL_F) -> float:
    """Smallest breakpoint where the tail mass drops to ``tol`` or below."""
    F = u.F()
    idx = int(np.argmax(F <= tol)) if np.any(F <= tol) else F.size - 1
    return idx * u.cell_width


def _locate_tail(u: MassProfile, m: float):
    tails = u.tails()
    D = tails[0]
    if m <= 0:
        raise DomainError("m must be positive")
    if m >= D:
        raise DomainError(f"profile density mass {D:.6g} does not exceed m={m:.6g}")
    # first breakpoint at or below m; tails[0] > m so i >= 1
    i = int(np.argmax(tails <= m))
    c = i - 1
    kept = tails[c] - m
    r = c * u.cell_width + kept / u.values[c]
    return c, kept, min(r, (c + 1) * u.cell_width)


def quantile_edge(u: MassProfile, m: float) -> float:
    """``inf{r : F(r; u) = m}`` for ``0 < m <`` density mass."""
    return _locate_tail(u, m)[2]


def right_cut(u: MassProfile, m: float) -> MassProfile:
    """Remove the rightmost density mass ``m``; the atom is kept.

    The partially kept boundary cell is re-averaged over the whole cell, which
    leaves the tail function unchanged at every breakpoint.
    """
    if m < 0:
        raise DomainError("m must be nonnegative")
    if m == 0:
        return u
    c, kept, _ = _locate_tail(u, m)
    vals = np.array(u.values[: c + 1])
    vals[c] = max(kept, 0.0) / u.cell_width
    return MassProfile(u.atom, u.cell_width, vals).trimmed()


def left_cut(v: MassProfile, m: float) -> MassProfile:
    """Remove the leftmost mass ``m``, taking the atom first."""
    M = total_mass(v)
    if m < 0:
        raise DomainError("m must be nonnegative")
    if m > M * (1 + 1e-12) + 1e-15:
        raise DomainError(f"cannot remove {m:.6g} from a profile of mass {M:.6g}")
    if m == 0:
        return v
    if m <= v.atom:
        return MassProfile(v.atom - m, v.cell_width, v.values)
    rest = m - v.atom
    h = v.cell_width
    cum = np.concatenate(([0.0], h * np.cumsum(v.values)))
    if rest >= cum[-1]:
        return MassProfile(0.0, h, np.zeros(v.n_cells)).trimmed()
    c = int(np.searchsorted(cum, rest, side="right")) - 1
    vals = np.array(v.values)
    vals[:c] = 0.0
    vals[c] = max(cum[c + 1] - rest, 0.0) / h
    return MassProfile(0.0, h, vals)


def displacement_map(u: MassProfile, v: MassProfile, r, tol: float = TOL_F):
    """Monotone transport map pushing ``u`` onto ``v``.

    ``f(r) = sup{r' : C_v(r') = C_u(r)}`` with ``C`` the cumulative mass of
    ``[0, r]``. Requires ``u <= v`` and equal masses. Levels at the full mass
    have an unbounded plateau and map to ``inf``.
    """
    if abs(total_mass(u) - total_mass(v)) > tol:
        raise OrderError("displacement map needs equal total masses")
    if not leq_modulo(u, v, 0.0, tol):
        raise OrderError("displacement map needs u <= v")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    h = v.cell_width
    # both cumulatives from the same running sums, so shared prefixes agree exactly
    Cu_b = np.concatenate(([u.atom], u.atom + u.cell_width * np.cumsum(u.values)))
    Cu = np.interp(r_arr, u.breakpoints, Cu_b)
    Cv = np.concatenate(([v.atom], v.atom + h * np.cumsum(v.values)))
    Mv = Cv[-1]
    # values within ``slack`` of a plateau count as on it; sup picks its right end
    slack = 1e-12 * max(Mv, 1.0)
    i = np.searchsorted(Cv, Cu + slack, side="right") - 1
    out = np.full(r_arr.shape, np.inf)
    # levels below v's atom are only reached at the origin
    out[i < 0] = 0.0
    finite = (Cu < Mv - tol) & (i >= 0) & (i < v.n_cells)
    ii = i[finite]
    out[finite] = ii * h + np.maximum(Cu[finite] - Cv[ii], 0.0) / v.values[ii]
    return float(out[0]) if np.ndim(r) == 0 else out
