"""Cut-and-paste operator, lower/upper barrier iterations and the
separating element obtained by dyadic refinement of the time step.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, FbpError
from .heatkernel import heat_step
from .profile import (TOL_F, MassProfile, leq_modulo, l1_distance, midpoint,
                      order_excess, right_cut, total_mass)

#: Slack on mass conservation along a barrier run.
MASS_TOL = 1e-8


def cut_and_paste(u: MassProfile, delta: float, j: float) -> MassProfile:
    """Move the rightmost density mass ``j*delta`` into the atom at the origin."""
    q = j * delta
    if not (delta > 0 and j > 0):
        raise DomainError("delta and j must be positive")
    if u.density_mass <= q:
        raise DomainError(
            f"density mass {u.density_mass:.6g} does not exceed j*delta={q:.6g}")
    kept = right_cut(u, q)
    return MassProfile(u.atom + q, u.cell_width, kept.values)


def lower_step(u: MassProfile, delta: float, j: float) -> MassProfile:
    return cut_and_paste(heat_step(u, delta), delta, j)


def upper_step(u: MassProfile, delta: float, j: float) -> MassProfile:
    return heat_step(cut_and_paste(u, delta, j), delta)


@dataclass
class BarrierStep:
    k: int
    lower: MassProfile
    upper: MassProfile


@dataclass
class BarrierRun:
    delta: float
    j: float
    steps: list[BarrierStep] = field(default_factory=list)
    gap_l1: list[float] = field(default_factory=list)

    @property
    def final(self) -> BarrierStep:
        return self.steps[-1]

    def at(self, k: int) -> BarrierStep:
        return self.steps[k]

    def violations(self, tol: float = TOL_F, grid_tol: float = 0.0) -> list[str]:
        """Invariant violations: order, L1 gap and mass conservation."""
        out = []
        m0 = total_mass(self.steps[0].lower)
        bound = 4 * self.j * self.delta + grid_tol + tol
        for st, gap in zip(self.steps, self.gap_l1):
            if not leq_modulo(st.lower, st.upper, 0.0, tol):
                out.append(f"k={st.k}: lower barrier not below upper "
                           f"(excess {order_excess(st.lower, st.upper):.3g})")
            if gap > bound:
                out.append(f"k={st.k}: L1 gap {gap:.6g} exceeds {bound:.6g}")
            for name, p in (("lower", st.lower), ("upper", st.upper)):
                if abs(total_mass(p) - m0) > MASS_TOL * max(1.0, m0):
                    out.append(f"k={st.k}: {name} mass {total_mass(p):.12g} != {m0:.12g}")
        return out

    def to_csv(self) -> str:
        """Tail curves per step: columns k, r, F_lower, F_upper."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "r", "F_lower", "F_upper"])
        for st in self.steps:
            n = max(st.lower.n_cells, st.upper.n_cells)
            fl = np.zeros(n + 1)
            fu = np.zeros(n + 1)
            fl[: st.lower.n_cells + 1] = st.lower.F()
            fu[: st.upper.n_cells + 1] = st.upper.F()
            h = st.lower.cell_width
            for i in range(n + 1):
                w.writerow([st.k, repr(i * h), repr(float(fl[i])), repr(float(fu[i]))])
        return buf.getvalue()


def run_barriers(u: MassProfile, delta: float, j: float, k: int,
                 check: bool = True) -> BarrierRun:
    """Iterate both barriers ``k`` steps from ``u``."""
    if k < 1:
        raise DomainError("k must be at least 1")
    run = BarrierRun(delta, j)
    lo = hi = u
    run.steps.append(BarrierStep(0, lo, hi))
    run.gap_l1.append(0.0)
    for step in range(1, k + 1):
        try:
            lo = lower_step(lo, delta, j)
            hi = upper_step(hi, delta, j)
        except DomainError as exc:
            raise DomainError(f"barrier step {step}: {exc}") from exc
        run.steps.append(BarrierStep(step, lo, hi))
        run.gap_l1.append(l1_distance(lo, hi))
    if check:
        bad = run.violations()
        if bad:
            raise FbpError("barrier invariants violated: " + "; ".join(bad[:5]))
    return run


@dataclass
class SeparatingElement:
    time: float
    profile: MassProfile
    certified_gap: float
    levels_used: int
    lower: MassProfile
    upper: MassProfile
    gaps: list[float] = field(default_factory=list)
    tol: float | None = None

    def certificate(self) -> dict:
        return {"t": self.time, "tol": self.tol, "certified_gap": self.certified_gap,
                "levels_used": self.levels_used, "gap_history": self.gaps}

    def certificate_json(self) -> str:
        return json.dumps(self.certificate(), indent=2)


def sup_tail_gap(lower: MassProfile, upper: MassProfile) -> float:
    """``sup_r F(r; upper) - F(r; lower)``."""
    return max(order_excess(upper, lower), 0.0)


def first_level(u: MassProfile, t: float, j: float) -> int:
    """Coarsest dyadic level whose step keeps ``u`` inside the cut domain."""
    limit = u.density_mass / (2 * j)
    return max(1, math.floor(math.log2(t / limit)) + 1) if t >= limit else 1


def separating_element(u: MassProfile, t: float, j: float, tol: float,
                       max_levels: int = 10, min_level: int | None = None,
                       order_tol: float = TOL_F) -> SeparatingElement:
    """Bracket ``S_t(u)`` between dyadic barriers until the tail gap is below ``tol``.

    Each refinement is checked against the previous level: the lower barrier
    may only rise and the upper barrier may only fall.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    if u.density_mass <= 0:
        raise DomainError("profile needs positive density mass")
    level = first_level(u, t, j) if min_level is None else min_level
    prev = None
    gaps = []
    best = None
    while level <= max_levels:
        k = 2 ** level
        run = run_barriers(u, t / k, j, k, check=False)
        lo, hi = run.final.lower, run.final.upper
        if not leq_modulo(lo, hi, 0.0, order_tol):
            raise FbpError(f"level {level}: lower barrier above upper barrier")
        if prev is not None:
            plo, phi = prev
            if not (leq_modulo(plo, lo, 0.0, order_tol) and leq_modulo(hi, phi, 0.0, order_tol)):
                raise FbpError(f"level {level}: dyadic sandwich violated")
        gap = sup_tail_gap(lo, hi)
        gaps.append(gap)
        best = SeparatingElement(t, midpoint(lo, hi), gap, level, lo, hi, list(gaps), tol)
        if gap <= tol:
            return best
        prev = (lo, hi)
        level += 1
    raise ConvergenceError(
        f"gap {gaps[-1] if gaps else float('nan'):.3g} above tol {tol:.3g} after level {max_levels}",
        achieved_gap=gaps[-1] if gaps else math.inf, best=best)
