import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad
from scipy.stats import norm

from fbpbarrier.errors import ConfigurationError, DomainError
from fbpbarrier.heatkernel import HeatStepPlan, heat_step, kernel_value, plan_heat_step
from fbpbarrier.profile import (GridSpec, MassProfile, block_profile, l1_distance, leq_modulo,
                                tail_mass, total_mass)

from conftest import push_right, random_profile, with_extra

seeds = st.integers(0, 2**32 - 1)


def neumann_kernel(t, r, r2):
    """Reference kernel written out independently of the package."""
    return (norm.pdf(r - r2, scale=math.sqrt(t)) + norm.pdf(r + r2, scale=math.sqrt(t)))


def test_kernel_value_examples():
    assert kernel_value(1.0, 0.0, 0.0) == pytest.approx(2 / math.sqrt(2 * math.pi))
    assert kernel_value(1e6, 0.3, 0.1) == pytest.approx(2 / math.sqrt(2 * math.pi * 1e6), rel=1e-6)
    with pytest.raises(DomainError):
        kernel_value(0.0, 1, 1)


@given(st.floats(1e-3, 5), st.floats(0, 5), st.floats(0, 5))
@settings(max_examples=100, deadline=None)
def test_kernel_symmetric_and_matches_reference(t, a, b):
    assert kernel_value(t, a, b) == pytest.approx(kernel_value(t, b, a), rel=1e-14, abs=1e-300)
    assert kernel_value(t, a, b) == pytest.approx(neumann_kernel(t, a, b), rel=1e-10, abs=1e-300)


def test_kernel_integrates_to_one():
    val, _ = quad(lambda r: kernel_value(0.3, r, 0.7), 0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_atom_example():
    w = heat_step(MassProfile(1.0, 1 / 512, []), 0.5)
    assert w.atom == 0.0
    assert tail_mass(w, 1.0) == pytest.approx(2 * (1 - norm.cdf(math.sqrt(2))), abs=1e-12)
    assert total_mass(w) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("src,tgt", [(0, 0), (0, 3), (2, 1), (4, 9), (7, 2)])
def test_cell_transfer_matches_double_integral(src, tgt):
    h, t = 0.1, 0.05
    u = MassProfile(0, h, np.eye(1, 10, src).ravel() / h)
    w = heat_step(u, t)
    ref, _ = dblquad(lambda y, x: neumann_kernel(t, x, y), tgt * h, (tgt + 1) * h,
                     src * h, (src + 1) * h, epsabs=1e-13)
    assert h * w.values[tgt] == pytest.approx(ref / h, abs=1e-11)


@pytest.mark.parametrize("t", [0.01, 0.1, 0.7])
def test_block_tail_matches_quadrature(t):
    h = 1 / 64
    u = block_profile(0.25, 0.75, 2.0, h)
    w = heat_step(u, t)
    s = math.sqrt(t)
    # cell averaging keeps the tail exact at breakpoints only
    for R in h * np.array([0, 19, 32, 58, 90]):
        ref = 2.0 * quad(lambda x: norm.sf((R - x) / s) + norm.sf((R + x) / s), 0.25, 0.75,
                         epsabs=1e-13)[0]
        assert tail_mass(w, R) == pytest.approx(ref, abs=1e-11)


def test_semigroup_property():
    h = 1 / 256
    u = random_profile(np.random.default_rng(4), h=h)
    two = heat_step(heat_step(u, 0.03), 0.05)
    one = heat_step(u, 0.08)
    # the intermediate cell projection adds variance h^2/12; the effect on the
    # profile is second order in h
    assert l1_distance(two, one) <= 20 * h * h
    assert l1_distance(two, one) >= 0


@given(seeds, st.floats(1e-3, 0.5))
@settings(max_examples=80, deadline=None)
def test_mass_conservation(seed, t):
    u = random_profile(np.random.default_rng(seed))
    w = heat_step(u, t)
    assert abs(total_mass(w) - total_mass(u)) <= 1e-8 * total_mass(u)
    assert w.atom == 0.0
    assert np.all(w.values >= 0)


@given(seeds, st.floats(1e-3, 0.5))
@settings(max_examples=80, deadline=None)
def test_contraction(seed, t):
    rng = np.random.default_rng(seed)
    u, v = random_profile(rng), random_profile(rng)
    assert l1_distance(heat_step(u, t), heat_step(v, t)) <= l1_distance(u, v) + 1e-8


@given(seeds, st.floats(1e-3, 0.5))
@settings(max_examples=80, deadline=None)
def test_order_preservation(seed, t):
    rng = np.random.default_rng(seed)
    u = random_profile(rng)
    v = push_right(u, rng)
    assert leq_modulo(heat_step(u, t), heat_step(v, t))


@given(seeds, st.floats(1e-3, 0.5))
@settings(max_examples=80, deadline=None)
def test_order_preservation_modulo(seed, t):
    rng = np.random.default_rng(seed)
    u0 = random_profile(rng)
    v = push_right(u0, rng)
    u, w = with_extra(u0, rng)
    m = total_mass(w)
    assert leq_modulo(u, v, m)
    assert leq_modulo(heat_step(u, t), heat_step(v, t), m)


def test_plan_checks_tail_room():
    src = GridSpec(0.1, 1.0)
    with pytest.raises(ConfigurationError):
        HeatStepPlan(0.25, src, GridSpec(0.1, 3.0))
    HeatStepPlan(0.25, src, GridSpec(0.1, 4.0))
    with pytest.raises(DomainError):
        HeatStepPlan(0.0, src, GridSpec(0.1, 4.0))
    plan = plan_heat_step(block_profile(0, 1, 1, 0.1), 0.25)
    assert plan.target_grid.max_radius >= 1.0 + 6 * 0.5


def test_explicit_radius_too_small_is_rejected():
    u = block_profile(0, 1, 1.0, 0.1)
    with pytest.raises(ConfigurationError):
        heat_step(u, 0.25, max_radius=2.0)


def test_far_field_is_folded_only_when_negligible():
    u = block_profile(0, 1, 1.0, 0.1)
    # 6 sigma of room passes the plan but leaves ~1e-9 of mass outside
    with pytest.raises(ConfigurationError):
        heat_step(u, 0.25, max_radius=4.0)
    w = heat_step(u, 0.25, max_radius=5.0)
    assert total_mass(w) == pytest.approx(1.0, abs=1e-12)


def test_deterministic_bitwise():
    u = random_profile(np.random.default_rng(9))
    a, b = heat_step(u, 0.1), heat_step(u, 0.1)
    assert np.array_equal(a.values, b.values)

