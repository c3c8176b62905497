"""Shared generators for random profiles and ordered pairs.

Ordered pairs are built by moving mass to the right, which can only raise
the tail function, so ``u <= v`` holds by construction rather than by the
comparison routine under test.
"""
import numpy as np
import pytest

from fbpbarrier.profile import MassProfile, block_profile, triangle_profile

H = 1 / 64

ACCEPTANCE_RESULTS = {}


def random_profile(rng, h=H, max_r=2.0, atom_prob=0.3, min_density_mass=0.05):
    """Mixture of an optional atom, blocks and triangles on a grid of width h."""
    while True:
        atom = rng.uniform(0, 0.5) if rng.random() < atom_prob else 0.0
        vals = np.zeros(int(np.ceil(max_r / h)) + 2)
        for _ in range(rng.integers(1, 4)):
            lo, hi = np.sort(rng.uniform(0, max_r, 2))
            if hi - lo < 2 * h:
                hi = lo + 2 * h
            height = rng.uniform(0.1, 2.0)
            if rng.random() < 0.5:
                p = block_profile(lo, hi, height, h)
            else:
                p = triangle_profile(lo, rng.uniform(lo, hi), hi, height, h)
            vals[: p.n_cells] += p.values
        u = MassProfile(atom, h, vals).trimmed()
        if u.density_mass > min_density_mass:
            return u


def push_right(u, rng, moves=None, reach=1.0):
    """Move random fractions of mass from the atom or a cell to cells further right."""
    h = u.cell_width
    extra = int(round(reach / h))
    masses = np.concatenate((h * u.values, np.zeros(extra)))
    atom = u.atom
    occupied = lambda: np.flatnonzero(masses > 0)
    for _ in range(rng.integers(1, 8) if moves is None else moves):
        src = occupied()
        if atom > 0 and (src.size == 0 or rng.random() < 0.3):
            k = rng.integers(0, masses.size)
            q = rng.uniform(0, 1) * atom
            atom -= q
            masses[k] += q
            continue
        if src.size == 0:
            break
        i = rng.choice(src)
        k = rng.integers(i + 1, min(masses.size, i + 1 + extra)) if i + 1 < masses.size else i
        q = rng.uniform(0, 1) * masses[i]
        masses[i] -= q
        masses[k] += q
    return MassProfile(atom, h, np.maximum(masses, 0.0) / h).trimmed()


def with_extra(u, rng, h=H):
    """``u`` plus an independent random profile (so the result dominates u)."""
    w = random_profile(rng, h)
    n = max(u.n_cells, w.n_cells)
    return MassProfile(u.atom + w.atom, h, u.padded(n) + w.padded(n)), w


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    def _record(n, passed, detail):
        ACCEPTANCE_RESULTS[n] = (bool(passed), detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
