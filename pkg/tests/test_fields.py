import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affgauge.errors import ContractViolation, EvaluationError
from affgauge.fields import (AD, FD, LOWER, UPPER, CoordinateMap, ExprField, Point, SpaceSignature, as_points,
                             evaluate_field, lie_bracket, partial_derivative, sample_points)

coords = st.floats(-1.0, 1.0, allow_nan=False)
point5 = st.tuples(*[coords] * 5)


def _vector(rows, dim=5):
    return ExprField(np.array(rows, dtype=object), dim, (UPPER,))


def test_signature_splits_indices():
    sig = SpaceSignature(5)
    assert sig.external == (1, 2, 3)
    assert sig.internal == (4, 5)
    with pytest.raises(ContractViolation):
        SpaceSignature(2, 3)


def test_points_normalize():
    assert as_points(Point((1, 2, 3)), 3).shape == (1, 3)
    assert as_points(np.zeros((4, 3)), 3).shape == (4, 3)
    with pytest.raises(ContractViolation):
        as_points([1.0, 2.0], 3)
    with pytest.raises(ContractViolation):
        Point((1.0, np.nan))


def test_evaluate_field_examples():
    assert evaluate_field(ExprField.scalar(7, 5), np.zeros(5)) == 7
    eye = ExprField.constant(np.eye(5), (UPPER, LOWER))
    np.testing.assert_array_equal(evaluate_field(eye, np.ones(5)), np.eye(5))
    assert evaluate_field(ExprField.scalar("(* x1 x2)", 5), [2, 3, 0, 0, 0]) == 6
    with pytest.raises(ContractViolation):
        evaluate_field(ExprField.scalar("x1", 5), [1.0, 2.0])


def test_partial_derivative_examples():
    assert partial_derivative(ExprField.scalar(3, 5), np.zeros(5), 1) == 0
    assert partial_derivative(ExprField.scalar("(sin x1)", 5), np.zeros(5), 1) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ContractViolation):
        partial_derivative(ExprField.scalar("x1", 5), np.zeros(5), 6)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_derivative_names_the_component():
    f = ExprField(np.array(["x1", "(sqrt x2)"], dtype=object), 2, (UPPER,))
    with pytest.raises(EvaluationError) as err:
        partial_derivative(f, [0.5, 0.0], 2)
    assert err.value.component == (1,)


@given(point5)
def test_ad_matches_central_differences(p):
    f = ExprField.scalar("(exp (* x1 x2))", 5)
    for d in (1, 2):
        assert partial_derivative(f, p, d, AD) == pytest.approx(partial_derivative(f, p, d, FD), abs=1e-6)


@given(point5, st.floats(-3, 3), st.floats(-3, 3))
def test_partial_derivative_is_linear(p, a, b):
    f = ExprField.scalar("(* (sin x1) x3)", 5)
    g = ExprField.scalar("(exp (* 0.5 x2 x1))", 5)
    h = ExprField.scalar(f"(+ (* {a!r} (* (sin x1) x3)) (* {b!r} (exp (* 0.5 x2 x1))))", 5)
    for d in (1, 2, 3):
        lhs = partial_derivative(h, p, d)
        rhs = a * partial_derivative(f, p, d) + b * partial_derivative(g, p, d)
        assert lhs == pytest.approx(rhs, abs=1e-10)


@given(point5)
def test_second_derivatives_commute(p):
    f = ExprField.scalar("(* (cos (* x1 x4)) (exp x2) (pow x5 3))", 5)
    hess = f.jet(np.array([p]), 2).coeffs[2][0]
    np.testing.assert_allclose(hess, hess.T, atol=1e-12)


def test_lie_bracket_examples(rng):
    x = _vector(["x2", 0, "(* x3 x1)", 0, 0])
    p = rng.uniform(-1, 1, 5)
    np.testing.assert_allclose(lie_bracket(x, x, p), 0.0, atol=1e-15)
    c1, c2 = _vector([1, 2, 0, 0, 3]), _vector([0, -1, 4, 0, 0])
    np.testing.assert_array_equal(lie_bracket(c1, c2, p), 0.0)
    y = _vector([0, "x1", 0, 0, 0])
    xx = _vector(["x2", 0, 0, 0, 0])
    # X = x2 e1, Y = x1 e2: [X, Y] = x2 e2 - x1 e1
    expected = np.array([-p[0], p[1], 0, 0, 0])
    np.testing.assert_allclose(lie_bracket(xx, y, p), expected, atol=1e-14)
    np.testing.assert_allclose(lie_bracket(xx, y, p, FD), expected, atol=1e-6)


FIELDS = [
    _vector(["(sin x2)", "(* x1 x3)", 0, "(exp (* 0.3 x5))", 1]),
    _vector([0, "(cos x1)", "(* x4 x4)", "x2", "(* 0.5 x1 x2)"]),
    _vector(["x3", 0, "(sin (* x1 x5))", 0, "(+ x2 x4)"]),
]


@given(point5)
def test_lie_bracket_is_antisymmetric(p):
    x, y, _ = FIELDS
    np.testing.assert_allclose(lie_bracket(x, y, p), -lie_bracket(y, x, p), atol=1e-13)


@given(point5)
def test_lie_bracket_satisfies_jacobi(p):
    from affgauge.fields import LieBracket

    x, y, z = FIELDS
    total = (evaluate_field(LieBracket(x, LieBracket(y, z)), p)
             + evaluate_field(LieBracket(y, LieBracket(z, x)), p)
             + evaluate_field(LieBracket(z, LieBracket(x, y)), p))
    np.testing.assert_allclose(total, 0.0, atol=1e-12)


def test_pullback_of_covector_uses_jacobian(rng):
    # x = phi(y) = (y1 + 0.1 sin y1, 2 y2); a lower index picks up dx/dy
    cmap = CoordinateMap(["(+ x1 (* 0.1 (sin x1)))", "(* 2 x2)"])
    w = ExprField(np.array(["x2", "(* x1 x1)"], dtype=object), 2, (LOWER,))
    y = rng.uniform(-1, 1, 2)
    x = cmap.forward(y)[0]
    jac = np.array([[1 + 0.1 * np.cos(y[0]), 0], [0, 2]])
    expected = jac.T @ np.array([x[1], x[0] ** 2])
    np.testing.assert_allclose(cmap.pullback(w)(y), expected, atol=1e-14)


def test_pullback_of_vector_uses_inverse_jacobian(rng):
    cmap = CoordinateMap(["(+ x1 (* 0.1 (sin x1)))", "(* 2 x2)"])
    v = ExprField(np.array(["x2", 1], dtype=object), 2, (UPPER,))
    y = rng.uniform(-1, 1, 2)
    x = cmap.forward(y)[0]
    jac = np.array([[1 + 0.1 * np.cos(y[0]), 0], [0, 2]])
    np.testing.assert_allclose(cmap.pullback(v)(y), np.linalg.solve(jac, [x[1], 1.0]), atol=1e-14)


def test_identity_map_leaves_fields_alone(rng):
    f = FIELDS[0]
    pts = rng.uniform(-1, 1, (4, 5))
    np.testing.assert_allclose(CoordinateMap.identity(5).pullback(f).values(pts), f.values(pts), atol=1e-15)


def test_sample_points_are_seeded():
    np.testing.assert_array_equal(sample_points(3, 5, 9), sample_points(3, 5, 9))
    assert not np.array_equal(sample_points(3, 5, 9), sample_points(3, 5, 10))
