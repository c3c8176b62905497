"""Monte Carlo estimates of exit mass and surviving density for reflected
Brownian motion killed at a moving edge.

Particles move as ``|x + sqrt(tau) Z|``, which is the exact transition of
Brownian motion reflected at the origin. Between grid times the edge is
linear and a crossing that happens inside a step is detected with the
Brownian-bridge probability ``exp(-2 (X0 - x0) (X1 - x1) / tau)``.

Mass that starts in the profile and mass injected at the origin are
sampled as two strata. Injected particles are born at uniform times in
``[0, t]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .movingboundary import EdgePath
from .profile import MassProfile, tail_mass, total_mass

#: Paths per independently seeded block; fixed so results do not depend on batching.
CHUNK = 16384


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    dt: float = 1e-4
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 1:
            raise DomainError("paths must be at least 1")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.antithetic and self.paths % 2:
            raise DomainError("antithetic sampling needs an even number of paths")


def _rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), stream, chunk]))


def _simulate(x0, born, edge: EdgePath, t_end: float, dt: float, rng, antithetic: bool):
    """Advance particles with start positions ``x0`` born at times ``born``.

    Returns ``(hit, hit_time, position)``; ``position`` is NaN for killed paths.
    """
    n = x0.size
    x = x0.astype(float).copy()
    alive = np.ones(n, dtype=bool)
    hit_time = np.full(n, np.nan)
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    grid = np.minimum(dt * np.arange(n_steps + 1), t_end)
    grid[-1] = t_end
    half = n // 2
    edge_grid = edge(grid)
    for k in range(n_steps):
        t1 = grid[k + 1]
        if antithetic:
            z = rng.standard_normal(half)
            z = np.concatenate((z, -z))
        else:
            z = rng.standard_normal(n)
        u = rng.random(n)
        idx = np.flatnonzero(alive & (born < t1))
        if idx.size == 0:
            continue
        start = np.maximum(grid[k], born[idx])
        tau = t1 - start
        b0 = np.where(start > grid[k], edge(start), edge_grid[k])
        b1 = edge_grid[k + 1]
        xi = x[idx]
        xn = np.abs(xi + np.sqrt(tau) * z[idx])
        gap0 = np.maximum(b0 - xi, 0.0)
        gap1 = np.maximum(b1 - xn, 0.0)
        crossed = (xn >= b1) | (u[idx] < np.exp(-2.0 * gap0 * gap1 / tau))
        dead = idx[crossed]
        hit_time[dead] = t1
        alive[dead] = False
        x[idx] = xn
    pos = np.where(alive, x, np.nan)
    return ~alive, hit_time, pos


@dataclass
class HittingSample:
    hit: np.ndarray
    hit_time: np.ndarray
    position: np.ndarray

    @property
    def hit_probability(self) -> float:
        return float(self.hit.mean())

    @property
    def std_error(self) -> float:
        p = self.hit_probability
        return math.sqrt(p * (1 - p) / self.hit.size)


def sample_hitting(r0: float, s: float, edge: EdgePath, t_end: float,
                   cfg: McConfig) -> HittingSample:
    """First crossing of ``edge`` by reflected Brownian motion started at ``r0`` at time ``s``."""
    if r0 < 0 or s < 0:
        raise DomainError("r0 and s must be nonnegative")
    if r0 >= float(edge(s)):
        raise DomainError(f"start {r0:.6g} is not left of the edge {float(edge(s)):.6g}")
    if not t_end > s:
        raise DomainError("t_end must exceed s")
    hits, times, pos = [], [], []
    for c, lo in enumerate(range(0, cfg.paths, CHUNK)):
        n = min(CHUNK, cfg.paths - lo)
        rng = _rng(cfg.seed, 0, c)
        h, ht, p = _simulate(np.full(n, float(r0)), np.full(n, float(s)), edge, t_end,
                             cfg.dt, rng, cfg.antithetic and n % 2 == 0)
        hits.append(h), times.append(ht), pos.append(p)
    return HittingSample(np.concatenate(hits), np.concatenate(times), np.concatenate(pos))


def sample_positions(u: MassProfile, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from ``u / total_mass(u)``; the atom sits at 0."""
    M = total_mass(u)
    if not M > 0:
        raise DomainError("cannot sample from a zero profile")
    h = u.cell_width
    cum = np.concatenate(([u.atom], u.atom + h * np.cumsum(u.values))) / M
    v = rng.random(n)
    cell = np.searchsorted(cum, v, side="right") - 1
    out = np.zeros(n)
    dens = cell >= 0
    cell = np.clip(cell, 0, u.n_cells - 1) if u.n_cells else cell
    if u.n_cells:
        out[dens] = h * (cell[dens] + rng.random(int(dens.sum())))
    return out


def _split(total: int, a: float, b: float, even: bool = False):
    """Paths for two strata in proportion to their masses."""
    if a <= 0:
        return 0, total
    if b <= 0:
        return total, 0
    step = 2 if even else 1
    n_a = int(round(total * a / (a + b) / step)) * step
    n_a = min(max(step, n_a), total - step)
    return n_a, total - n_a


@dataclass
class McRun:
    """Raw output of one stratified simulation."""

    initial_mass: float
    injected_mass: float
    init_hit: np.ndarray
    init_pos: np.ndarray
    inj_hit: np.ndarray
    inj_pos: np.ndarray
    cfg: McConfig
    t: float

    def _strata(self):
        return ((self.initial_mass, self.init_hit, self.init_pos),
                (self.injected_mass, self.inj_hit, self.inj_pos))

    def _block_stats(self, values):
        """Mean and squared standard error, with antithetic pairs averaged first."""
        n = values.shape[0]
        if n == 0:
            return np.zeros(values.shape[1:]), np.zeros(values.shape[1:])
        pairs = self._pairs(n) if self.cfg.antithetic and n >= 4 else None
        v = values if pairs is None else 0.5 * (values[pairs[0]] + values[pairs[1]])
        m = v.mean(axis=0)
        var = v.var(axis=0, ddof=1) / v.shape[0] if v.shape[0] > 1 else np.zeros_like(m)
        return m, var

    def mass_loss(self):
        est, var = 0.0, 0.0
        for w, hit, _ in self._strata():
            m, v = self._block_stats(hit.astype(float))
            est += w * float(m)
            var += w * w * float(v)
        return est, math.sqrt(var)

    def _pairs(self, n):
        """Index arrays ``(first, second)`` of antithetic partners, chunk by chunk."""
        first, second = [], []
        for lo in range(0, n, CHUNK):
            m = min(CHUNK, n - lo)
            if m % 2:
                return None
            hlf = m // 2
            first.append(lo + np.arange(hlf))
            second.append(lo + hlf + np.arange(hlf))
        return np.concatenate(first), np.concatenate(second)

    def histogram(self, cell_width: float, n_cells: int):
        """Cell masses of surviving particles and their standard errors."""
        edges = cell_width * np.arange(n_cells + 1)
        masses = np.zeros(n_cells)
        var = np.zeros(n_cells)
        for w, _, pos in self._strata():
            n = pos.size
            if n == 0:
                continue
            idx = np.full(n, -1, dtype=np.int64)
            ok = ~np.isnan(pos)
            idx[ok] = np.floor(pos[ok] / cell_width).astype(np.int64)
            idx[idx >= n_cells] = -1

            def counts(sel):
                k = idx[sel]
                return np.bincount(k[k >= 0], minlength=n_cells)[:n_cells].astype(float)

            pairs = self._pairs(n) if self.cfg.antithetic and n >= 4 else None
            if pairs is None:
                p = counts(slice(None)) / n
                masses += w * p
                var += w * w * p * (1 - p) / max(n - 1, 1)
                continue
            a, b = pairs
            npair = a.size
            ca, cb = counts(a), counts(b)
            same = (idx[a] == idx[b]) & (idx[a] >= 0)
            cs = np.bincount(idx[a][same], minlength=n_cells)[:n_cells].astype(float)
            mean = (ca + cb) / (2 * npair)
            second = (ca + cb + 2 * cs) / (4 * npair)
            masses += w * mean
            var += w * w * np.maximum(second - mean ** 2, 0.0) * npair / max(npair - 1, 1) / npair
        return edges, masses, np.sqrt(var)


def mc_simulate(u: MassProfile, edge: EdgePath, t: float, j: float, cfg: McConfig) -> McRun:
    """Simulate both strata once; estimates are derived from the returned run."""
    if not t > 0:
        raise DomainError("t must be positive")
    if j < 0:
        raise DomainError("j must be nonnegative")
    M = total_mass(u)
    if u.n_cells and M > 0:
        x0 = float(edge(0.0))
        if x0 < u.support_end and tail_mass(u, x0) > 1e-12 * M:
            raise DomainError("profile has mass beyond the initial edge")
    J = j * t
    n_init, n_inj = _split(cfg.paths, M, J, cfg.antithetic)
    out = {}
    for stream, n in ((1, n_init), (2, n_inj)):
        hits, pos = [], []
        for c, lo in enumerate(range(0, n, CHUNK)):
            m = min(CHUNK, n - lo)
            rng = _rng(cfg.seed, stream, c)
            if stream == 1:
                x = sample_positions(u, m, rng)
                born = np.zeros(m)
            else:
                x = np.zeros(m)
                born = t * rng.random(m)
            h, _, p = _simulate(x, born, edge, t, cfg.dt, rng, cfg.antithetic and m % 2 == 0)
            hits.append(h), pos.append(p)
        out[stream] = (np.concatenate(hits) if hits else np.zeros(0, bool),
                       np.concatenate(pos) if pos else np.zeros(0))
    return McRun(M, J, out[1][0], out[1][1], out[2][0], out[2][1], cfg, t)


@dataclass
class McEstimate:
    estimate: float
    std_error: float
    n_paths: int
    dt: float
    seed: int

    def to_json(self) -> str:
        return json.dumps({"estimate": self.estimate, "std_error": self.std_error,
                           "n_paths": self.n_paths, "dt": self.dt, "seed": self.seed})


def mc_mass_loss(u: MassProfile, edge: EdgePath, t: float, j: float,
                 cfg: McConfig) -> McEstimate:
    """Exit mass ``Delta`` over ``[0, t]`` with its standard error."""
    est, se = mc_simulate(u, edge, t, j, cfg).mass_loss()
    return McEstimate(est, se, cfg.paths, cfg.dt, cfg.seed)


@dataclass
class McProfile:
    profile: MassProfile
    cell_std_error: np.ndarray

    @property
    def l1_std_error(self) -> float:
        """Sum of per-cell standard errors; bounds the typical L1 noise."""
        return float(self.cell_std_error.sum())


def mc_profile(u: MassProfile, edge: EdgePath, t: float, j: float, cfg: McConfig,
               cell_width: float | None = None, run: McRun | None = None) -> McProfile:
    """Histogram of surviving mass at time ``t`` on cells of ``cell_width``."""
    h = u.cell_width if cell_width is None else cell_width
    if run is None:
        run = mc_simulate(u, edge, t, j, cfg)
    alive = np.concatenate((run.init_pos, run.inj_pos))
    alive = alive[~np.isnan(alive)]
    reach = min(float(edge(t)), float(alive.max()) + h if alive.size else h)
    n_cells = max(1, math.ceil(reach / h - 1e-9))
    _, masses, se = run.histogram(h, n_cells)
    return McProfile(MassProfile(0.0, h, masses / h), se)
