import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affgauge.connections import (ChristoffelConnection, ExplicitConnection,
                                  GaugeConnection, HolonomicConnection, ZeroConnection, christoffel,
                                  covariant_derivative, covariant_jet, gauge_connection, holonomic_connection, lower_connection,
                                  simple_connection, verify_coordinate_transformation_law,
                                  verify_frame_transformation_law)
from affgauge.curvature import curvature
from affgauge.errors import ContractViolation
from affgauge.fields import LOWER, UPPER, CoordinateMap, ExprField, evaluate_field, partial_derivative
from affgauge.frames import FrameField, MetricField, ReferenceSystemStack, apply_frame_transformation
from affgauge.randomized import (random_connection_field, random_constant_frame, random_coordinate_map,
                                 random_frame, random_stack)
from affgauge.sectors.builders import rotation_block

K = 0.7
seeds = st.integers(0, 2**32 - 1)


def rotation_stack(k=K, inner=None):
    block = rotation_block(5, [(4, 5, f"(* {k!r} x1)")])
    return ReferenceSystemStack(FrameField.from_exprs(block, inverse_rows=block.T), inner, label="rot")


def curved_stack():
    inner = FrameField.from_exprs([[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0],
                                   [0, 0, 0, "(+ 1.2 (* 0.3 (sin x1)))", 0],
                                   [0, 0, 0, 0, "(+ 1 (* 0.2 x2))"]])
    return rotation_stack(inner=inner)


def test_simple_connection_examples(rng):
    p = rng.uniform(-1, 1, 5)
    np.testing.assert_array_equal(simple_connection(FrameField.identity(5), p), 0.0)
    inner = FrameField.from_exprs([[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0],
                                   [0, 0, 0, "(+ 1 x4)", 0], [0, 0, 0, 0, 1]])
    s = simple_connection(inner, np.zeros(5))
    # [DERIVED] central differences of the symmetrized inner-frame formula at the origin
    assert s[3, 3, 3] == pytest.approx(1.0, abs=1e-8)
    s = simple_connection(curved_stack().inner, p)
    np.testing.assert_array_equal(s, s.transpose(0, 2, 1))


def test_gauge_connection_of_rotation_frame(rng):
    p = rng.uniform(-1, 1, 5)
    g = gauge_connection(rotation_stack(), p)
    expected = np.zeros((5, 5, 5))
    expected[3, 4, 0], expected[4, 3, 0] = -K, K
    np.testing.assert_allclose(g, expected, atol=1e-15)
    np.testing.assert_array_equal(gauge_connection(ReferenceSystemStack.identity(5), p), 0.0)


@given(seeds)
def test_gauge_connection_without_inner_layer_is_c_db(seed):
    rng = np.random.default_rng(seed)
    f = random_frame(5, rng)
    p = rng.uniform(-1, 1, (1, 5))
    b, c = f.jets(p, 1)
    expected = np.einsum("ma,anp->mnp", c.value[0], b.coeffs[1][0])
    np.testing.assert_allclose(gauge_connection(ReferenceSystemStack(f), p), expected, atol=1e-13)


def test_christoffel_examples(rng):
    p = rng.uniform(-0.5, 0.5, 5)
    np.testing.assert_array_equal(christoffel(MetricField(ExprField.constant(np.diag([1, 2, 3, 4, 5.0]),
                                                                            (LOWER, LOWER))), p), 0.0)
    rows = np.eye(5).astype(object)
    rows[4, 4] = "(pow (+ 1 x1) 2)"
    gamma = christoffel(MetricField.from_exprs(rows), p)
    assert gamma[4, 4, 0] == pytest.approx(1 / (1 + p[0]), abs=1e-8)
    assert gamma[4, 0, 4] == pytest.approx(1 / (1 + p[0]), abs=1e-8)
    assert gamma[0, 4, 4] == pytest.approx(-(1 + p[0]), abs=1e-8)


@given(seeds)
def test_christoffel_is_torsion_free(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-1, 1, 5)
    gamma = christoffel(random_stack(5, rng).metric(), p)
    np.testing.assert_allclose(gamma, gamma.transpose(0, 2, 1), atol=1e-13)


def test_holonomic_connection_of_rotation_frame(rng):
    p = rng.uniform(-1, 1, 5)
    stack = rotation_stack()
    h = holonomic_connection(stack, p)
    assert h[3, 4, 0] == pytest.approx(-K / 2, abs=1e-15)
    assert h[4, 3, 0] == pytest.approx(K / 2, abs=1e-15)
    assert np.count_nonzero(np.abs(h) > 1e-15) == 2
    low = lower_connection(HolonomicConnection(stack), stack.metric(), p)
    assert low[3, 4, 0] == pytest.approx(-K / 2, abs=1e-15)
    assert low[4, 3, 0] == pytest.approx(K / 2, abs=1e-15)
    np.testing.assert_array_equal(holonomic_connection(ReferenceSystemStack.identity(5), p), 0.0)


@given(seeds)
def test_holonomic_is_the_average(seed):
    rng = np.random.default_rng(seed)
    stack = random_stack(5, rng, inner=True)
    p = rng.uniform(-1, 1, 5)
    avg = 0.5 * (gauge_connection(stack, p) + christoffel(stack.metric(), p))
    np.testing.assert_allclose(holonomic_connection(stack, p), avg, atol=1e-14)


def test_covariant_derivative_examples(rng):
    p = rng.uniform(-1, 1, 5)
    u = ExprField(np.array(["(sin x1)", "(* x2 x3)", 0, "x5", 1], dtype=object), 5, (UPPER,))
    zero = ZeroConnection(5)
    for d in (1, 3):
        np.testing.assert_allclose(covariant_derivative(u, zero, p, d), partial_derivative(u, p, d), atol=1e-15)
    delta = ExprField.constant(np.eye(5), (UPPER, LOWER))
    conn = ExplicitConnection(random_connection_field(5, rng))
    np.testing.assert_allclose(covariant_derivative(delta, conn, p), 0.0, atol=1e-14)
    with pytest.raises(ContractViolation):
        covariant_derivative(u, zero, p, 6)


def test_lower_rank_two_rule(rng):
    rho = ExprField(np.array([[f"(* {i + 1} (sin (+ x{j + 1} {0.1 * i})))" for j in range(5)]
                              for i in range(5)], dtype=object), 5, (LOWER, LOWER))
    conn = HolonomicConnection(curved_stack())
    p = rng.uniform(-1, 1, 5)
    got = covariant_derivative(rho, conn, p)
    g = conn.coeffs(p)
    r = evaluate_field(rho, p)
    dr = np.stack([partial_derivative(rho, p, k + 1) for k in range(5)], axis=-1)
    expected = dr - np.einsum("hmp,hn->mnp", g, r) - np.einsum("hnp,mh->mnp", g, r)
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_metric_compatibility_probe_matches_expansion(rng):
    stack = curved_stack()
    metric = stack.metric()
    conn = HolonomicConnection(stack)
    p = rng.uniform(-1, 1, (1, 5))
    gj = metric.g_jet(p, 1)
    g, dg = gj.value[0], gj.coeffs[1][0]
    gamma = conn.coeffs(p)
    direct = dg - np.einsum("hmp,hn->mnp", gamma, g) - np.einsum("hnp,mh->mnp", gamma, g)
    probe = covariant_jet(gj, (LOWER, LOWER), conn.jet(p, 0)).value[0]
    np.testing.assert_allclose(probe, direct, atol=1e-8)
    # the average connection is not metric compatible in a curved stack
    assert np.abs(probe).max() > 1e-3


@given(seeds)
def test_leibniz_rule(seed):
    rng = np.random.default_rng(seed)
    conn = ExplicitConnection(random_connection_field(3, rng))
    u = ExprField(np.array(["(sin x1)", "(* x2 x3)", "(exp (* 0.3 x1))"], dtype=object), 3, (UPPER,))
    w = ExprField(np.array(["x2", "(cos x3)", "(* x1 x1)"], dtype=object), 3, (LOWER,))
    uw = ExprField(np.array([["(* (sin x1) x2)", "(* (sin x1) (cos x3))", "(* (sin x1) (* x1 x1))"],
                             ["(* (* x2 x3) x2)", "(* (* x2 x3) (cos x3))", "(* (* x2 x3) (* x1 x1))"],
                             ["(* (exp (* 0.3 x1)) x2)", "(* (exp (* 0.3 x1)) (cos x3))",
                              "(* (exp (* 0.3 x1)) (* x1 x1))"]], dtype=object), 3, (UPPER, LOWER))
    p = rng.uniform(-1, 1, 3)
    lhs = covariant_derivative(uw, conn, p)
    du, dw = covariant_derivative(u, conn, p), covariant_derivative(w, conn, p)
    rhs = np.einsum("mp,n->mnp", du, evaluate_field(w, p)) + np.einsum("m,np->mnp", evaluate_field(u, p), dw)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# -- transformation laws -----------------------------------------------------------
def test_coordinate_law_examples(rng):
    pts = rng.uniform(-1, 1, (10, 5))
    stack = rotation_stack()
    conn = HolonomicConnection(stack)
    assert verify_coordinate_transformation_law(conn, CoordinateMap.identity(5), pts) <= 1e-15
    lin = CoordinateMap.linear(np.eye(5) + 0.2 * rng.normal(size=(5, 5)))
    flat = HolonomicConnection(ReferenceSystemStack(FrameField.constant(np.diag([1, 2, 1, 3, 1.0]))))
    assert verify_coordinate_transformation_law(flat, lin, pts) <= 1e-10
    wavy = CoordinateMap([f"(+ x{i} (* 0.1 (sin x{i})))" for i in range(1, 6)])
    assert verify_coordinate_transformation_law(conn, wavy, pts) <= 1e-6


@given(seeds)
def test_coordinate_law_for_every_kind(seed):
    rng = np.random.default_rng(seed)
    stack = random_stack(5, rng, inner=True)
    cmap = random_coordinate_map(5, rng)
    pts = rng.uniform(-1, 1, (5, 5))
    for conn in (GaugeConnection(stack), ChristoffelConnection(stack.metric()), HolonomicConnection(stack)):
        assert verify_coordinate_transformation_law(conn, cmap, pts) <= 1e-10


@given(seeds)
def test_frame_law(seed):
    rng = np.random.default_rng(seed)
    stack = random_stack(5, rng, inner=True)
    pts = rng.uniform(-1, 1, (5, 5))
    assert verify_frame_transformation_law(stack, random_frame(5, rng), pts) <= 1e-10
    assert verify_frame_transformation_law(stack, random_constant_frame(5, rng), pts) <= 1e-10


def test_frame_law_against_independent_evaluation(rng):
    # constant k: primed coefficients are C_k gamma B_k, computed here by hand
    stack = curved_stack()
    k = rng.normal(size=(5, 5)) + 3 * np.eye(5)
    p = rng.uniform(-1, 1, (1, 5))
    primed = gauge_connection(apply_frame_transformation(FrameField.constant(k), stack), p)
    gamma = gauge_connection(stack, p)
    expected = np.einsum("mh,hqp,qn->mnp", np.linalg.inv(k), gamma, k)
    np.testing.assert_allclose(primed, expected, atol=1e-8)


def test_explicit_connection_cannot_change_chart(rng):
    conn = ExplicitConnection(random_connection_field(3, rng))
    with pytest.raises(ContractViolation):
        verify_coordinate_transformation_law(conn, CoordinateMap.identity(3), np.zeros((1, 3)))
    with pytest.raises(ContractViolation):
        ExplicitConnection(ExprField.scalar("x1", 3))


@given(seeds)
def test_pure_gauge_is_flat(seed):
    rng = np.random.default_rng(seed)
    f = random_frame(4, rng)
    p = rng.uniform(-1, 1, 4)
    np.testing.assert_allclose(curvature(GaugeConnection(ReferenceSystemStack(f)), p), 0.0, atol=1e-12)
