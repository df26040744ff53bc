import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_interval
from freshsip.exceptions import DimensionMismatch
from freshsip.model_io import Hyperrectangle, Network
from freshsip.relaxation import forward_pass, introduce_fresh
from freshsip.symbolic import (
    affine_transform,
    concretize,
    concretize_split,
    init_identity,
    interval_arithmetic_pass,
    split_ranges,
    substitute_to_inputs,
)
from freshsip.testkit import GenSpec, gen_network, identity_network


def test_init_identity(unit_square):
    s = init_identity(unit_square)
    np.testing.assert_array_equal(s.lower, np.eye(2))
    np.testing.assert_array_equal(s.upper, np.eye(2))
    assert s.var_count == 0
    b = concretize(s)
    assert b.contains(unit_square.lo) and np.array_equal(b.lo, unit_square.lo)


def test_init_identity_degenerate_box():
    b = concretize(init_identity(Hyperrectangle([3.0], [3.0])))
    assert (b.lo[0], b.hi[0]) == (3.0, 3.0)


def test_affine_identity_is_noop(fig1_pair):
    out = affine_transform(np.eye(2), np.zeros(2), fig1_pair)
    np.testing.assert_array_equal(out.upper, fig1_pair.upper)
    np.testing.assert_array_equal(out.lower_off, fig1_pair.lower_off)


def test_fig1_node_x7(fig1_pair):
    x7 = affine_transform(np.array([[1.0, 1.0]]), np.array([-0.5]), fig1_pair)
    np.testing.assert_allclose(x7.upper, [[1.0, 0.0]], atol=1e-12)
    assert x7.upper_off[0] == pytest.approx(1.5, abs=1e-12)
    np.testing.assert_allclose(x7.lower, [[0.0, 0.0]])
    assert x7.lower_off[0] == pytest.approx(-0.5, abs=1e-12)
    assert concretize(x7).hi[0] == pytest.approx(2.5, abs=1e-12)


def test_fig1_interval_arithmetic_is_looser(fig1_network, unit_square):
    naive = interval_arithmetic_pass(fig1_network, unit_square)[-1]
    assert (naive.lo[0], naive.hi[0]) == pytest.approx((-0.5, 3.5))
    sym = forward_pass(fig1_network, unit_square).output_bounds
    assert sym.hi[0] == pytest.approx(2.5) and sym.hi[0] < naive.hi[0]


def test_interval_identity_network():
    box = Hyperrectangle([-1.0, 0.0], [2.0, 3.0])
    out = interval_arithmetic_pass(identity_network(2), box)[-1]
    np.testing.assert_allclose(out.lo, box.lo)
    np.testing.assert_allclose(out.hi, box.hi)


def test_interval_subtraction_dependency():
    # x - x through two identity channels
    net = Network([np.array([[1.0], [1.0]]), np.array([[1.0, -1.0]])],
                  [np.array([10.0, 10.0]), np.array([0.0])])
    box = Hyperrectangle([0.0], [2.0])
    naive = interval_arithmetic_pass(net, box)[-1]
    assert (naive.lo[0], naive.hi[0]) == (-2.0, 2.0)
    exact = forward_pass(net, box).output_bounds
    assert (exact.lo[0], exact.hi[0]) == (0.0, 0.0)


def test_affine_shape_errors(fig1_pair):
    with pytest.raises(DimensionMismatch):
        affine_transform(np.ones((1, 3)), np.zeros(1), fig1_pair)
    with pytest.raises(DimensionMismatch):
        affine_transform(np.ones((1, 2)), np.zeros(2), fig1_pair)


def _with_x6(unit_square):
    """Row 0 bounded by 2*x6 + 1 (both sides) with x6 in [0, x1/2 - x2/2 + 1]."""
    pair = make_interval([[0, 0], [0, 0]], [0, 0], [[0.5, 0.5], [0.5, -0.5]], [1, 1], unit_square)
    s = introduce_fresh(pair, [1])
    return affine_transform(np.array([[0.0, 2.0], [0.0, -1.0]]), np.array([1.0, 0.0]), s)


def test_substitution_positive_coefficient(unit_square):
    out = substitute_to_inputs(_with_x6(unit_square))
    np.testing.assert_allclose(out.upper[0], [1.0, -1.0])
    assert out.upper_off[0] == pytest.approx(3.0)
    # lower bound 2*x6 + 1 takes x6's lower bound 0
    np.testing.assert_allclose(out.lower[0], [0.0, 0.0])
    assert out.lower_off[0] == pytest.approx(1.0)


def test_substitution_negative_coefficient_in_upper(unit_square):
    out = substitute_to_inputs(_with_x6(unit_square))
    np.testing.assert_allclose(out.upper[1], [0.0, 0.0])
    assert out.upper_off[1] == 0.0


def test_substitute_without_fresh_is_identity(fig1_pair):
    assert substitute_to_inputs(fig1_pair) is fig1_pair


def test_substitute_idempotent(unit_square):
    once = substitute_to_inputs(_with_x6(unit_square))
    twice = substitute_to_inputs(once)
    np.testing.assert_array_equal(once.upper, twice.upper)
    np.testing.assert_array_equal(once.lower_off, twice.lower_off)


def test_constant_bound(unit_square):
    s = make_interval([[0, 0]], [4.0], [[0, 0]], [4.0], unit_square)
    b = concretize(s)
    assert (b.lo[0], b.hi[0]) == (4.0, 4.0)


def test_concretize_split_examples(fig1_pair):
    one = make_interval([[1.0]], [0.0], [[1.0]], [0.0], Hyperrectangle([-1.0], [1.0]))
    r = concretize_split(one, 0, "lower")
    assert (r.lo[0], r.hi[0]) == (-1.0, 1.0)
    r = concretize_split(fig1_pair, 0, "upper")
    assert (r.lo[0], r.hi[0]) == (0.0, 2.0)
    r = concretize_split(fig1_pair, 0, "lower")
    assert (r.lo[0], r.hi[0]) == (0.0, 0.0)
    with pytest.raises(IndexError):
        concretize_split(fig1_pair, 2, "upper")
    with pytest.raises(ValueError):
        concretize_split(fig1_pair, 0, "middle")


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_affine_exact_on_degenerate_interval(n, m, seed):
    rng = np.random.default_rng(seed)
    box = Hyperrectangle(-np.ones(n), np.ones(n))
    A, a = rng.normal(size=(n, n)), rng.normal(size=n)
    s = make_interval(A, a, A, a, box)
    W, b = rng.normal(size=(m, n)), rng.normal(size=m)
    out = affine_transform(W, b, s)
    np.testing.assert_allclose(out.lower, W @ A, atol=1e-12)
    np.testing.assert_allclose(out.upper, W @ A, atol=1e-12)
    np.testing.assert_allclose(out.upper_off, W @ a + b, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_soundness_by_sampling(seed):
    net = gen_network(GenSpec(input_dim=(1, 3), hidden_layers=(1, 4), width=(1, 10), seed=seed))
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-1, 0, net.input_dim)
    box = Hyperrectangle(lo, lo + rng.uniform(0.01, 1, net.input_dim))
    xs = box.sample(rng, 1000)
    ia = interval_arithmetic_pass(net, box)
    fp = forward_pass(net, box)
    for l, z in enumerate(net.pre_activations(xs)):
        for bounds in (ia[l], fp.bounds[l]):
            assert bounds.contains(z, tol=1e-6)
            assert np.all(bounds.lo <= bounds.hi)


def _fresh_shift(shift):
    """One row bounded by f + shift on both sides, f fresh in [x - 1, x + 1]."""
    base = make_interval([[1.0]], [-1.0], [[1.0]], [1.0], Hyperrectangle([-1.0], [1.0]))
    s = introduce_fresh(base, [0])
    return s.with_bounds(s.lower.copy(), s.lower_off + shift, s.upper.copy(), s.upper_off + shift)


def test_split_ranges_cover_every_fresh_value():
    s = _fresh_shift(0.5)
    l_l, l_u, u_l, u_u = split_ranges(s)
    # both bound functions equal f + 0.5, which ranges over [-1.5, 2.5]
    assert (l_l[0], l_u[0], u_l[0], u_u[0]) == (-1.5, 2.5, -1.5, 2.5)
    r = concretize_split(s, 0, "upper")
    assert (r.lo[0], r.hi[0]) == (-1.5, 2.5)
