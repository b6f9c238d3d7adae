import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radnereq.grid import (
    GridSpec,
    SlicedField,
    default_half_width,
    derivative_x,
    field_from_csv,
    field_from_function,
    field_to_csv,
    holder_norm,
    holder_seminorm,
    interpolate,
    interpolate_many,
    n_difference,
    second_derivative_x,
    sup_norm,
    weighted_beta_norm,
)


@pytest.mark.parametrize("kwargs", [
    dict(T=0.0), dict(T=-1.0), dict(x_min=1.0, x_max=1.0), dict(nt=0), dict(nx=1),
    dict(alpha=0.0), dict(alpha=1.5),
])
def test_gridspec_rejects_invalid(kwargs):
    base = dict(T=1.0, x_min=-1.0, x_max=1.0, nt=4, nx=4, alpha=0.5)
    base.update(kwargs)
    with pytest.raises(ValueError):
        GridSpec(**base)


def test_grid_nodes_reproducible():
    g = GridSpec(0.5, -2.0, 3.0, 10, 20)
    assert g.t[0] == 0.0 and g.t[-1] == 0.5
    assert g.x[0] == -2.0 and g.x[-1] == 3.0
    assert g.shape == (11, 21, 2)
    np.testing.assert_allclose(np.diff(g.x), g.dx, rtol=1e-12)


def test_with_horizon_keeps_step_density():
    g = GridSpec(0.5, -2.0, 2.0, 50, 20)
    h = g.with_horizon(1.0)
    assert h.T == 1.0 and h.nt == 100 and h.nx == 20


def test_default_half_width():
    assert default_half_width(1.0) == 6.0
    assert default_half_width(0.25, 5.0) == pytest.approx(7.0)


def test_field_from_function_examples():
    g = GridSpec(1.0, -3.0, 3.0, 5, 8)
    assert np.all(field_from_function(lambda t, x, n: 3.0, g).values == 3.0)
    ind = field_from_function(lambda t, x, n: n, g)
    assert np.all(ind.slice(0) == 0.0) and np.all(ind.slice(1) == 1.0)
    c = field_from_function(lambda t, x, n: np.cos(x), g)
    np.testing.assert_array_equal(c.values[2, :, 0], np.cos(g.x))


def test_field_from_function_scalar_only_callable():
    g = GridSpec(1.0, -1.0, 1.0, 3, 4)
    f = field_from_function(lambda t, x, n: math.exp(-t) * x, g)
    assert f.values[3, 4, 0] == pytest.approx(math.exp(-1.0))


def test_nonfinite_sample_names_node():
    g = GridSpec(1.0, -1.0, 1.0, 2, 2)
    with pytest.raises(ValueError, match="j=0, k=1, n=0"):
        field_from_function(lambda t, x, n: np.where(x == 0.0, np.nan, 1.0), g)


def test_field_is_immutable_and_shape_checked():
    g = GridSpec(1.0, -1.0, 1.0, 2, 2)
    f = SlicedField.zeros(g)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 1.0
    with pytest.raises(AttributeError):
        f.values = np.ones(g.shape)
    with pytest.raises(ValueError):
        SlicedField(g, np.zeros((3, 3, 1)))
    with pytest.raises(ValueError):
        SlicedField(g, np.full(g.shape, np.inf))


def test_derivative_examples():
    g = GridSpec(1.0, -2 * math.pi, 2 * math.pi, 3, 400)
    assert sup_norm(derivative_x(SlicedField.constant(g, 2.5))) == 0.0
    lin = derivative_x(field_from_function(lambda t, x, n: x, g))
    np.testing.assert_allclose(lin.values, 1.0, atol=1e-12)
    quad = derivative_x(field_from_function(lambda t, x, n: x**2, g))
    np.testing.assert_allclose(quad.values[0, :, 0], 2 * g.x, atol=1e-9)
    cos = derivative_x(field_from_function(lambda t, x, n: np.cos(x), g))
    assert np.max(np.abs(cos.values[0, :, 0] + np.sin(g.x))) <= 1e-3


def test_second_derivative_exact_on_quadratics():
    g = GridSpec(1.0, -1.0, 2.0, 2, 30)
    d2 = second_derivative_x(field_from_function(lambda t, x, n: 3 * x**2 - x, g))
    np.testing.assert_allclose(d2.values, 6.0, atol=1e-8)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_derivative_is_linear(a, b):
    g = GridSpec(1.0, -2.0, 2.0, 3, 25)
    u = field_from_function(lambda t, x, n: np.sin(x + t + n), g)
    v = field_from_function(lambda t, x, n: x**3 - n, g)
    lhs = derivative_x(u * a + v * b).values
    rhs = a * derivative_x(u).values + b * derivative_x(v).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + abs(a) + abs(b)) * 50)


def test_sup_norm_examples():
    g = GridSpec(1.0, -5.0, 5.0, 4, 10)
    assert sup_norm(SlicedField.constant(g, -3.0)) == 3.0
    assert sup_norm(SlicedField.zeros(g)) == 0.0
    assert sup_norm(field_from_function(lambda t, x, n: np.tanh(x), g)) == np.tanh(5.0)


def test_weighted_beta_norm_examples():
    g = GridSpec(1.0, -1.0, 1.0, 4, 4)
    assert weighted_beta_norm(SlicedField.constant(g, -2.0), 7.0) == 2.0
    spike = field_from_function(lambda t, x, n: np.where(t == 0.0, 1.0, 0.0) + 0 * x, g)
    assert weighted_beta_norm(spike, math.log(2.0)) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(ValueError):
        weighted_beta_norm(spike, -1.0)


@given(st.floats(0, 20), st.integers(0, 2**31))
def test_weighted_norm_equivalence(beta, seed):
    g = GridSpec(1.3, -1.0, 1.0, 6, 5)
    u = SlicedField(g, np.random.default_rng(seed).normal(size=g.shape))
    w = weighted_beta_norm(u, beta)
    s = sup_norm(u)
    assert math.exp(-beta * g.T) * s <= w * (1 + 1e-14) and w <= s
    assert weighted_beta_norm(u, 0.0) == s


def test_holder_examples():
    g = GridSpec(1.0, -1.0, 1.0, 16, 32, alpha=1.0)
    assert holder_seminorm(SlicedField.constant(g, 4.0)) == 0.0
    x = field_from_function(lambda t, x, n: x, g)
    assert holder_seminorm(x) == pytest.approx(1.0, rel=1e-12)
    root = field_from_function(lambda t, x, n: np.sqrt(g.T - t) + 0 * x, g)
    val = holder_seminorm(root)
    assert 0.99 <= val <= 1.0 + 1e-12
    assert holder_norm(x) == pytest.approx(2.0)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_holder_shift_and_scale(c, s):
    g = GridSpec(1.0, -2.0, 2.0, 8, 16)
    u = field_from_function(lambda t, x, n: np.sin(2 * x) * np.exp(-t) + n * x, g)
    base = holder_seminorm(u)
    assert holder_seminorm(u + c) == pytest.approx(base, rel=1e-9, abs=1e-12)
    assert holder_seminorm(u * s) == pytest.approx(abs(s) * base, rel=1e-12, abs=1e-12)


def test_n_difference_examples():
    g = GridSpec(1.0, -1.0, 1.0, 3, 4)
    u = field_from_function(lambda t, x, n: 2.0 + 3.0 * n, g)
    d = n_difference(u)
    assert np.all(d.slice(0) == 3.0) and np.all(d.slice(1) == 0.0)
    assert sup_norm(n_difference(SlicedField.constant(g, 1.0))) == 0.0
    u = field_from_function(lambda t, x, n: n * np.cos(x), g)
    np.testing.assert_array_equal(n_difference(u).slice(0), np.cos(g.x)[None, :].repeat(4, 0))


@given(st.integers(0, 2**31))
def test_n_difference_zero_on_jump_slice(seed):
    g = GridSpec(1.0, -1.0, 1.0, 3, 4)
    u = SlicedField(g, np.random.default_rng(seed).normal(size=g.shape))
    assert np.all(n_difference(u).slice(1) == 0.0)


def test_interpolate_examples():
    g = GridSpec(1.0, -2.0, 2.0, 10, 20)
    f = field_from_function(lambda t, x, n: np.sin(3 * x) + t * n, g)
    for j, k, n in [(0, 0, 0), (3, 7, 1), (10, 20, 1)]:
        assert interpolate(f, g.t[j], g.x[k], n) == f.values[j, k, n]
    lin = field_from_function(lambda t, x, n: x, g)
    assert interpolate(lin, 0.33, 0.123, 0) == pytest.approx(0.123, abs=1e-14)
    assert interpolate(f, 0.5, 100.0, 0) == interpolate(f, 0.5, 2.0, 0)
    with pytest.raises(ValueError):
        interpolate(f, 1.5, 0.0, 0)
    with pytest.raises(ValueError):
        interpolate(f, 0.5, 0.0, 2)


def test_interpolate_many_matches_scalar():
    g = GridSpec(1.0, -2.0, 2.0, 10, 20)
    f = field_from_function(lambda t, x, n: np.cos(x) * (1 + t) - n, g)
    t = np.array([0.0, 0.35, 0.99])
    x = np.array([-3.0, 0.1, 1.7])
    n = np.array([1, 0, 1])
    got = interpolate_many(f, t, x, n)
    assert got.tolist() == [interpolate(f, *q) for q in zip(t, x, n)]


def test_csv_round_trip_is_exact(tmp_path):
    g = GridSpec(0.3, -1.7, 2.9, 5, 7, alpha=0.25)
    u = SlicedField(g, np.random.default_rng(3).normal(size=g.shape) * 1e3)
    path = tmp_path / "u.csv"
    field_to_csv(u, path, {"config_sha256": "abc"})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ") and "config_sha256=abc" in lines[0]
    assert lines[1] == "t,x,n,value"
    assert len(lines) == 2 + 6 * 8 * 2
    back = field_from_csv(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, u.values)
    buf = io.StringIO()
    field_to_csv(u, buf)
    buf.seek(0)
    np.testing.assert_array_equal(field_from_csv(buf).values, u.values)
