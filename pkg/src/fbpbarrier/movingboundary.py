"""Heat equation on a moving interval ``[0, X_t]`` with injection at the origin,
velocity shooting and quasi-solution assembly.

The density solves ``rho_t = rho_rr / 2`` with ``rho_r(0, t) = -2 j`` and
``rho(X_t, t) = 0``. On each slice the edge moves linearly, ``X_t = X0 + V t``,
and the problem is mapped to the fixed interval ``[0, 1]`` by ``y = r / X_t``.
In these coordinates ``w(y, t) = rho(X_t y, t)`` satisfies the conservative law

    (X w)_t = d/dy [ w_y / (2 X) + V y w ],

which is discretised by cell-centred finite volumes and implicit Euler. The
scheme is conservative, so the exit mass follows from the balance
``Delta = M(0) + j t - M(t)`` with no boundary quadrature.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .barriers import run_barriers
from .errors import ConfigurationError, DomainError, FbpError, VelocitySearchError
from .profile import MassProfile, edge as profile_edge, order_excess, tail_mass, total_mass


@dataclass(frozen=True)
class EdgePath:
    """Piecewise-linear edge trajectory through ``(time, position)`` breakpoints."""

    times: tuple
    positions: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.shape != x.shape or t.size < 1:
            raise DomainError("edge path needs matching non-empty time/position lists")
        if np.any(np.diff(t) <= 0):
            raise DomainError("edge path times must be strictly increasing")
        if np.any(x <= 0) or not np.all(np.isfinite(x)):
            raise DomainError("edge positions must be positive and finite")
        object.__setattr__(self, "times", tuple(float(v) for v in t))
        object.__setattr__(self, "positions", tuple(float(v) for v in x))

    @classmethod
    def linear(cls, x0: float, v: float, t_end: float) -> "EdgePath":
        return cls((0.0, t_end), (x0, x0 + v * t_end))

    @classmethod
    def constant(cls, x0: float, t_end: float = 1.0) -> "EdgePath":
        return cls.linear(x0, 0.0, t_end)

    def __call__(self, t):
        """Position at time ``t``; held constant outside the breakpoint range."""
        return np.interp(t, self.times, self.positions)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.positions) / np.diff(self.times)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "X_t"])
        for t, x in zip(self.times, self.positions):
            w.writerow([repr(t), repr(x)])
        return buf.getvalue()


@dataclass
class SliceState:
    """Cell averages ``w`` of the density in the ``y = r / X`` frame."""

    w: np.ndarray
    X: float

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def mass(self) -> float:
        return float(self.X * self.w.sum() / self.n)

    def to_profile(self, cell_width: float) -> MassProfile:
        """Exact projection onto cells of width ``cell_width``.

        The cumulative mass is piecewise linear in r, so interpolating it at
        the target cell edges gives exact cell masses.
        """
        faces = self.X * np.linspace(0.0, 1.0, self.n + 1)
        cum = np.concatenate(([0.0], np.cumsum(self.w) * self.X / self.n))
        n_out = max(1, math.ceil(self.X / cell_width - 1e-9))
        edges = cell_width * np.arange(n_out + 1)
        masses = np.diff(np.interp(edges, faces, cum))
        return MassProfile(0.0, cell_width, np.maximum(masses, 0.0) / cell_width)


def project_profile(u: MassProfile, X0: float, n_y: int, tol: float = 1e-12) -> SliceState:
    """Cell averages of ``u`` on ``n_y`` equal cells of ``[0, X0]``."""
    if u.atom > 0:
        raise DomainError("profile has an atom at the origin; diffuse it first")
    if not X0 > 0:
        raise DomainError("X0 must be positive")
    if n_y < 3:
        raise ConfigurationError("need at least 3 cells in the moving frame")
    outside = tail_mass(u, X0) if X0 < u.support_end else 0.0
    if outside > tol * max(1.0, total_mass(u)):
        raise DomainError(f"profile has mass {outside:.3g} beyond X0={X0:.6g}")
    faces = X0 * np.linspace(0.0, 1.0, n_y + 1)
    F = tail_mass(u, faces)
    dy = 1.0 / n_y
    return SliceState(np.maximum(-np.diff(F), 0.0) / (X0 * dy), float(X0))


@dataclass
class SliceResult:
    end_profile: MassProfile
    mass_lost: float
    residuals: tuple
    times: np.ndarray
    losses: np.ndarray
    end_state: SliceState
    velocity: float = 0.0
    #: ``sup_t |Delta_t - j t|`` over the slice steps.
    max_drift: float = 0.0

    def balance_error(self, j: float, start_mass: float) -> float:
        end = self.end_state.mass
        return abs(end - (start_mass + j * self.times[-1] - self.mass_lost))


def _advance(state: SliceState, V: float, tstar: float, nt: int, j: float,
             keep: bool = False):
    """Run ``nt`` implicit Euler steps; return final state, step times and losses."""
    if nt < 1:
        raise ConfigurationError("need at least one time step per slice")
    if not tstar > 0:
        raise DomainError("slice length must be positive")
    x_end = state.X + V * tstar
    if not x_end > 0:
        raise DomainError(f"edge reaches 0 within the slice (X0={state.X:.6g}, V={V:.6g})")
    n = state.n
    dy = 1.0 / n
    dt = tstar / nt
    faces = dy * np.arange(n + 1)
    b = 0.5 * dt * V * faces
    w = state.w.copy()
    X = state.X
    m0 = state.mass
    times = np.empty(nt + 1)
    losses = np.empty(nt + 1)
    times[0], losses[0] = 0.0, 0.0
    states = [w.copy()] if keep else None
    ab = np.zeros((3, n))
    for step in range(1, nt + 1):
        t = step * dt
        Xn = state.X + V * t
        a = dt / (2 * Xn * dy)
        diag = np.full(n, Xn * dy + 2 * a) - b[1:] + b[:-1]
        diag[0] = Xn * dy + a - b[1]
        diag[-1] = Xn * dy + 3 * a + b[n - 1]
        ab[0, 1:] = -a - b[1:n]
        ab[1] = diag
        ab[2, :-1] = -a + b[1:n]
        rhs = X * dy * w
        rhs[0] += dt * j
        w = solve_banded((1, 1), ab, rhs, check_finite=False)
        X = Xn
        times[step] = t
        losses[step] = m0 + j * t - X * dy * w.sum()
        if keep:
            states.append(w.copy())
    return SliceState(w, X), times, losses, states


def _residuals(state: SliceState, j: float) -> tuple:
    w, dy, X = state.w, 1.0 / state.n, state.X
    flux_err = abs((w[1] - w[0]) / (dy * X) + 2 * j)
    dirichlet = abs(w[-1] + 0.5 * (w[-1] - w[-2]))
    return flux_err, dirichlet


def _solve_state(state: SliceState, V: float, tstar: float, nt: int, j: float,
                 cell_width: float, keep: bool = False):
    end, times, losses, states = _advance(state, V, tstar, nt, j, keep)
    drift = float(np.max(np.abs(losses - j * times)))
    res = SliceResult(end.to_profile(cell_width), float(losses[-1]), _residuals(end, j),
                      times, losses, end, V, drift)
    return res, states


def solve_slice(u: MassProfile, X0: float, V: float, tstar: float, nt: int,
                j: float = 1.0, n_y: int | None = None) -> SliceResult:
    """Evolve ``u`` for ``tstar`` on ``[0, X0 + V t]`` and report the exit mass."""
    if n_y is None:
        n_y = max(3, int(round(X0 / u.cell_width)))
    state = project_profile(u, X0, n_y)
    return _solve_state(state, V, tstar, nt, j, u.cell_width)[0]


def _velocity_ladder(X0: float, tstar: float, max_doublings: int = 40):
    vstar = -X0 / tstar
    neg = [vstar * (1 - 2.0 ** -k) for k in range(1, 13)]
    c = X0 / tstar
    pos = (c * 2.0 ** k for k in range(-8, max_doublings))
    return neg, pos


def _find_velocity_state(state: SliceState, tstar: float, j: float, tol: float,
                         nt: int):
    def g(V):
        _, times, losses, _ = _advance(state, V, tstar, nt, j)
        return float(losses[-1] - j * tstar)

    samples = []
    g0 = g(0.0)
    samples.append((0.0, g0 + j * tstar))
    if abs(g0) <= tol:
        return 0.0, samples
    neg, pos = _velocity_ladder(state.X, tstar)
    pts = [(V, g(V)) for V in neg] + [(0.0, g0)]
    for V in pos:
        val = g(V)
        pts.append((V, val))
        if val < 0:
            break
    else:
        samples.extend((v, gv + j * tstar) for v, gv in pts)
        raise VelocitySearchError("mass loss never dropped below j*tstar on the velocity ladder",
                                  samples)
    samples = [(v, gv + j * tstar) for v, gv in pts]
    roots = []
    for (v1, g1), (v2, g2) in zip(pts, pts[1:]):
        if g1 == 0.0:
            roots.append(v1)
        elif g1 * g2 < 0:
            roots.append(brentq(g, v1, v2, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    if not roots:
        raise VelocitySearchError("no sign change of Delta(V) - j*tstar bracketed", samples)
    V = min(roots, key=abs)
    if abs(g(V)) > tol:
        raise VelocitySearchError(f"root polish missed tol {tol:.3g}", samples)
    return V, samples


def find_velocity(u: MassProfile, X0: float, tstar: float, j: float, tol: float,
                  nt: int = 20, n_y: int | None = None) -> float:
    """Edge velocity ``V`` on ``[0, tstar]`` whose exit mass equals ``j * tstar``.

    Several roots may exist; the one with the smallest ``|V|`` is returned.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if n_y is None:
        n_y = max(3, int(round(X0 / u.cell_width)))
    state = project_profile(u, X0, n_y)
    V, _ = _find_velocity_state(state, tstar, j, tol, nt)
    res, _ = _solve_state(state, V, tstar, nt, j, u.cell_width)
    if res.max_drift > j * tstar * (1 + 1e-9):
        raise FbpError(f"intermediate mass drift {res.max_drift:.3g} exceeds j*tstar")
    return V


@dataclass
class QuasiSolution:
    epsilon: float
    j: float
    T: float
    initial_mass: float
    edge: EdgePath
    snapshots: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    @property
    def slice_count(self) -> int:
        return len(self.velocities)

    @property
    def drifts(self) -> np.ndarray:
        return np.array([abs(total_mass(p) - self.initial_mass) for _, p in self.snapshots])

    @property
    def max_drift(self) -> float:
        return float(self.drifts.max())

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def snapshot_at(self, t: float, tol: float = 1e-9) -> MassProfile:
        times = self.times
        if times.size == 0:
            raise DomainError("quasi-solution has no snapshots")
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > tol:
            raise DomainError(f"no snapshot at t={t:.6g} (nearest {times[i]:.6g})")
        return self.snapshots[i][1]

    def manifest(self) -> dict:
        return {"epsilon": self.epsilon, "j": self.j, "T": self.T,
                "slice_count": self.slice_count, "max_drift": self.max_drift}

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2)

    def snapshots_csv(self) -> str:
        """All snapshot tails in long format: columns t, r, F."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "r", "F"])
        for t, p in self.snapshots:
            for r, f in zip(p.breakpoints, p.F()):
                w.writerow([repr(float(t)), repr(float(r)), repr(float(f))])
        return buf.getvalue()


def build_quasi_solution(rho0: MassProfile, T: float, epsilon: float, j: float,
                         steps_per_slice: int = 20, n_y: int | None = None,
                         vel_tol: float = 1e-10) -> QuasiSolution:
    """Slice ``[0, T]`` into pieces of length ``epsilon / j`` with linear edges.

    On each slice the edge velocity is shot so that the slice conserves mass;
    the moving-frame state is carried over between slices, so no regridding
    error accumulates. Snapshots are kept at every time step.
    """
    if not (T > 0 and epsilon > 0 and j > 0):
        raise DomainError("T, epsilon and j must be positive")
    if rho0.atom > 0:
        raise DomainError("initial profile must not carry an atom")
    m0 = total_mass(rho0)
    if not m0 > 0:
        raise DomainError("initial profile needs positive mass")
    X0 = profile_edge(rho0, tol=0.0)
    if not X0 > 0:
        raise DomainError("initial edge must be positive")
    h = rho0.cell_width
    if n_y is None:
        n_y = max(3, int(round(X0 / h)))
    state = project_profile(rho0, X0, n_y)

    slice_len = epsilon / j
    n_slices = max(1, math.ceil(T / slice_len - 1e-9))
    qs = QuasiSolution(epsilon, j, T, m0, EdgePath.constant(X0, T))
    qs.snapshots.append((0.0, rho0.trimmed()))
    times, xs = [0.0], [X0]
    t0 = 0.0
    for s in range(n_slices):
        tstar = min(slice_len, T - t0)
        if tstar <= 1e-12 * T:
            break
        try:
            V, _ = _find_velocity_state(state, tstar, j, vel_tol * max(1.0, m0), steps_per_slice)
        except VelocitySearchError as exc:
            raise VelocitySearchError(f"slice {s} at t={t0:.6g}: {exc}", exc.samples) from exc
        res, states = _solve_state(state, V, tstar, steps_per_slice, j, h, keep=True)
        dt = tstar / steps_per_slice
        for k in range(1, steps_per_slice + 1):
            X = state.X + V * k * dt
            qs.snapshots.append((t0 + k * dt, SliceState(states[k], X).to_profile(h)))
        qs.velocities.append(V)
        qs.residuals.append(res.residuals)
        state = res.end_state
        t0 = t0 + tstar
        times.append(t0)
        xs.append(state.X)
    qs.edge = EdgePath(tuple(times), tuple(xs))
    return qs


@dataclass
class SandwichReport:
    delta: float
    epsilon: float
    c_margin: float
    ks: list
    lower_margins: list
    upper_margins: list

    @property
    def margins(self) -> np.ndarray:
        return np.maximum(self.lower_margins, self.upper_margins)

    @property
    def empirical_c(self) -> float:
        """Smallest ``c`` with every margin at most ``c * k * epsilon``."""
        k = np.asarray(self.ks, dtype=float)
        m = self.margins
        mask = k > 0
        return float(np.max(m[mask] / (k[mask] * self.epsilon))) if mask.any() else 0.0

    @property
    def violations(self) -> list:
        return [k for k, m in zip(self.ks, self.margins)
                if m > self.c_margin * k * self.epsilon]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"delta": self.delta, "epsilon": self.epsilon, "c_margin": self.c_margin,
                "k": list(self.ks), "lower_margin": list(self.lower_margins),
                "upper_margin": list(self.upper_margins), "empirical_c": self.empirical_c,
                "passed": self.passed}


def sandwich_check(qs: QuasiSolution, delta: float, c_margin: float,
                   k_max: int | None = None) -> SandwichReport:
    """Compare quasi-solution snapshots with barriers started from the same profile.

    The margin at step ``k`` is how far the snapshot falls outside the
    ``[S-, S+]`` bracket in the tail order; it is reported, never raised.
    """
    if k_max is None:
        k_max = int(math.floor(qs.T / delta + 1e-9))
    u0 = qs.snapshot_at(0.0)
    run = run_barriers(u0, delta, qs.j, k_max, check=False)
    ks, lo_m, hi_m = [], [], []
    for k in range(1, k_max + 1):
        snap = qs.snapshot_at(k * delta)
        st = run.at(k)
        ks.append(k)
        lo_m.append(max(0.0, order_excess(st.lower, snap)))
        hi_m.append(max(0.0, order_excess(snap, st.upper)))
    return SandwichReport(delta, qs.epsilon, c_margin, ks, lo_m, hi_m)
