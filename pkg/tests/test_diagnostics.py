import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radnereq.agent import AgentSpec
from radnereq.diagnostics import (
    growth_constants,
    lipschitz_estimate,
    sequence_bound,
    sequence_root,
    stability_ratios,
    verify_exp_composition,
)
from radnereq.endowments import Endowment, Tanh
from radnereq.grid import GridSpec, SlicedField, field_from_function


def test_growth_constant_examples():
    c = growth_constants(1.0, 0.5, 1.0, (1.0, 3.0), (0.0, 0.0))
    assert c.M0 == 1.5 and c.Malpha == pytest.approx(3.0 + 2 * 0.5)
    z = growth_constants(1.0, 0.0, 1.0, (0.0, 0.0), (0.0, 0.0))
    assert (z.M0, z.Malpha) == (0.0, 0.0)
    assert growth_constants(2.0, 1.0, 0.5, (1.0, 1.0), (1.0, 1.0)).M0 == 2.75
    with pytest.raises(ValueError, match="mu"):
        growth_constants(1.0, -1.0, 1.0, (1.0, 1.0), (1.0, 1.0))


def test_lipschitz_examples():
    assert lipschitz_estimate(1.0, 0.0, 1.0, 0.5, (1.0, 1.0), 1.0).value == 0.0
    # (|g|_{2+a} + (1 + T)(1 + R^2))^{6+4a} contributes 2^10 at these inputs
    est = lipschitz_estimate(0.0, 1.0, 1.0, 0.0, (0.0, 0.0), 1.0, alpha=1.0)
    assert est.value == pytest.approx(math.exp(math.e**2) * 2.0**10, rel=1e-12)
    assert not est.overflow


def test_lipschitz_overflow_flag():
    est = lipschitz_estimate(3.0, 1.0, 2.0, 1.0, (1.0, 5.0), 1.0)
    assert est.overflow and est.value == math.inf
    assert math.isfinite(est.log_log_value) and est.log_log_value > 0
    huge = lipschitz_estimate(100.0, 1.0, 2.0, 1.0, (1.0, 5.0), 1.0)
    assert huge.overflow and huge.log_log_value == pytest.approx(2 + 2 * 2 + 1e4 + 2)


@given(st.floats(0, 1.5), st.floats(0, 1.5), st.floats(0.01, 1.0), st.floats(0.1, 1.0))
def test_lipschitz_monotone_in_R(r1, r2, T, alpha):
    lo, hi = sorted((r1, r2))
    a = lipschitz_estimate(lo, T, 0.5, 0.3, (0.2, 1.0), 1.0, alpha)
    b = lipschitz_estimate(hi, T, 0.5, 0.3, (0.2, 1.0), 1.0, alpha)
    assert b.log_value >= a.log_value


def test_sequence_root_examples():
    assert sequence_root(0.5) == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-10)
    assert sequence_bound(0.0, 0.0, 0.5) == 0.0
    assert sequence_bound(1.0, 0.0, 0.5) == pytest.approx(2.6180339887, abs=1e-9)
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            sequence_root(bad)
    with pytest.raises(ValueError):
        sequence_bound(-1.0, 1.0, 0.5)


@given(st.floats(0.01, 0.99))
def test_sequence_root_solves_equation(alpha):
    g = sequence_root(alpha)
    assert g == pytest.approx(1 + g**alpha, rel=1e-11)


def test_sequence_bound_dominates_extremal_recurrence():
    rng = np.random.default_rng(2010)
    for _ in range(1000):
        A, B, alpha = rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0.05, 0.95)
        x = rng.uniform(0, 100)
        bound = sequence_bound(A, B, alpha)
        worst = 0.0
        for n in range(400):
            x = A + B * x**alpha
            if n >= 200:
                worst = max(worst, x)
        assert worst <= bound * (1 + 1e-12)


def test_exp_composition_examples():
    g = GridSpec(1.0, -3.0, 3.0, 10, 30)
    z = SlicedField.zeros(g)
    rep = verify_exp_composition(z, z, 1.0)
    assert rep.lhs[0] == rep.rhs[0] == 1.0 and rep.holds()
    u = field_from_function(lambda t, x, n: np.tanh(x) * (1 + t), g)
    same = verify_exp_composition(u, u, 2.0)
    assert same.lhs[2] == 0.0 and same.lhs[3] == 0.0 and same.holds()
    half = field_from_function(lambda t, x, n: 0.5 * np.tanh(x), g)
    full = field_from_function(lambda t, x, n: np.tanh(x), g)
    assert verify_exp_composition(full, half, 1.0).holds()
    with pytest.raises(ValueError):
        verify_exp_composition(u, SlicedField.zeros(GridSpec(1.0, -3.0, 3.0, 10, 31)), 1.0)


@given(st.integers(0, 10_000), st.floats(0.1, 3.0))
def test_exp_composition_property(seed, gamma):
    rng = np.random.default_rng(seed)
    g = GridSpec(0.5, -2.0, 2.0, 8, 16)
    c = rng.normal(size=4)
    u1 = field_from_function(lambda t, x, n: c[0] * np.sin(x + t) + c[1] * n, g)
    u2 = field_from_function(lambda t, x, n: c[2] * np.tanh(2 * x) - c[3] * t, g)
    assert verify_exp_composition(u1, u2, gamma).holds()


def test_stability_ratios_bounded():
    g = GridSpec(0.25, -5.0, 5.0, 20, 40)
    agent = AgentSpec(1.0, Endowment.same(Tanh(1.0, 1.0, 0.0)))
    rng = np.random.default_rng(7)
    pairs = []
    for _ in range(4):
        c = rng.uniform(-0.5, 0.5, 4)
        pairs.append((field_from_function(lambda t, x, n, c=c: c[0] * np.sin(x) + c[1] * n, g),
                      field_from_function(lambda t, x, n, c=c: c[2] * np.cos(x) + c[3], g)))
    rep = stability_ratios(agent, 0.5, pairs)
    assert len(rep.ratios) == 4 and all(math.isfinite(r) for r in rep.ratios)
    assert rep.R <= 1.0 and rep.calibrated_C > 0
    with pytest.raises(ValueError):
        z = SlicedField.zeros(g)
        stability_ratios(agent, 0.5, [(z, z)])
