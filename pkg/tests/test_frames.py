import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affgauge.errors import ContractViolation, SingularityError
from affgauge.fields import CoordinateMap, ExprField, SpaceSignature
from affgauge.frames import (FrameField, InversionSpec, ReferenceSystemStack, ScenarioState, apply_cpt,
                             apply_frame_transformation, classify_transformation, compose_frames, invert_frame,
                             metric_from_frame, time_metric)
from affgauge.sectors.builders import rotation_block

coords = st.floats(-1.0, 1.0, allow_nan=False)
point5 = st.tuples(*[coords] * 5)
SIG = SpaceSignature(5)


def rotation_frame(angle="(* 0.7 x1)", plane=(4, 5)):
    block = rotation_block(5, [(plane[0], plane[1], angle)])
    return FrameField.from_exprs(block, label="rot", inverse_rows=block.T)


def wobbly_frame():
    rows = [["(+ 2 (sin x1))", "(* 0.3 x2)", 0, 0, 0],
            [0, "(+ 1.5 (* 0.2 x3))", "(* 0.1 x4)", 0, 0],
            [0, 0, "(exp (* 0.2 x5))", 0, 0],
            ["(* 0.2 x1 x2)", 0, 0, "(+ 2 (cos x3))", 0],
            [0, 0, 0, "(* 0.4 x1)", "(+ 1.8 (* 0.1 x2))"]]
    return FrameField.from_exprs(rows, label="wobbly")


def test_metric_examples(rng):
    p = rng.uniform(-1, 1, 5)
    m = metric_from_frame(FrameField.identity(5))
    np.testing.assert_array_equal(m.G_at(p), np.eye(5))
    np.testing.assert_array_equal(m.H_at(p), np.eye(5))
    m = metric_from_frame(FrameField.constant(np.diag([1, 1, 1, 2, 3])))
    np.testing.assert_allclose(m.G_at(p), np.diag([1, 1, 1, 4, 9]))
    np.testing.assert_allclose(metric_from_frame(rotation_frame()).G_at(p), np.eye(5), atol=1e-15)


@given(point5)
def test_metric_is_symmetric_positive_definite(p):
    m = metric_from_frame(wobbly_frame())
    for mat in (m.G_at(p), m.G_inv_at(p), m.H_at(p)):
        np.testing.assert_allclose(mat, mat.T, atol=1e-14)
        assert np.linalg.eigvalsh(mat).min() > 0
    np.testing.assert_allclose(m.G_at(p) @ m.G_inv_at(p), np.eye(5), atol=1e-12)


@given(point5, st.floats(-3, 3))
def test_orthogonal_frames_have_unit_metric(p, k):
    f = rotation_frame(f"(* {k!r} (sin x2))")
    np.testing.assert_allclose(metric_from_frame(f).G_at(p), np.eye(5), atol=1e-14)
    assert not classify_transformation(wobbly_frame())["is_orthogonal"]


def test_invert_frame_examples(rng):
    np.testing.assert_array_equal(invert_frame(FrameField.identity(5).B)(np.zeros(5)), np.eye(5))
    half = invert_frame(FrameField.constant(2 * np.eye(5)).B)(np.zeros(5))
    np.testing.assert_allclose(half, 0.5 * np.eye(5))
    a = rng.normal(size=(5, 5)) + 4 * np.eye(5)
    inv = invert_frame(FrameField.constant(a).B)(np.zeros(5))
    np.testing.assert_allclose(inv @ a, np.eye(5), atol=1e-10)


def test_singular_frame_reports_the_point():
    f = FrameField.from_exprs([["x1", 0], [0, 1]])
    with pytest.raises(SingularityError) as err:
        f.c_jet(np.array([[0.5, 0.0], [0.0, 0.3]]), 0)
    np.testing.assert_array_equal(err.value.point, [0.0, 0.3])
    with pytest.raises(SingularityError):
        FrameField.constant(np.zeros((3, 3)))


def test_verify_inverse_rejects_a_wrong_inverse(rng):
    pts = rng.uniform(-1, 1, (5, 5))
    assert rotation_frame().verify_inverse(pts) < 1e-14
    block = rotation_block(5, [(4, 5, "(* 0.7 x1)")])
    bad = FrameField.from_exprs(block, inverse_rows=block)
    with pytest.raises(ContractViolation):
        bad.verify_inverse(pts)


def test_time_metric_examples(rng):
    e1, e5 = np.eye(5)[0], np.eye(5)[4]
    tm = time_metric(FrameField.identity(5), np.zeros(5), e1)
    assert (tm["dxi0_sq"], tm["dx0_sq"], tm["dxi_external_sq"], tm["dxi_internal_sq"]) == (1, 1, 1, 0)
    assert (tm["dx_external_sq"], tm["dx_internal_sq"]) == (1, 0)
    dx = rng.normal(size=5)
    tm = time_metric(FrameField.identity(5), np.zeros(5), dx)
    assert tm["dxi0_sq"] == pytest.approx(dx @ dx)
    assert tm["dx0_sq"] == pytest.approx(dx @ dx)
    tm = time_metric(FrameField.constant(np.diag([1, 1, 1, 2, 3])), np.zeros(5), e5)
    assert (tm["dxi0_sq"], tm["dx0_sq"]) == (pytest.approx(9), 1)
    with pytest.raises(ContractViolation):
        time_metric(FrameField.identity(5), np.zeros(5), np.ones(3))


@given(point5, st.tuples(*[st.floats(-2, 2)] * 5))
def test_time_metric_splits_add_up(p, dx):
    tm = time_metric(wobbly_frame(), p, np.array(dx))
    assert tm["dxi0_sq"] == pytest.approx(tm["dxi_external_sq"] + tm["dxi_internal_sq"], abs=1e-12)
    assert tm["dx0_sq"] == pytest.approx(tm["dx_external_sq"] + tm["dx_internal_sq"], abs=1e-12)
    g = metric_from_frame(wobbly_frame()).G_at(p)
    assert tm["dxi0_sq"] == pytest.approx(np.array(dx) @ g @ np.array(dx), abs=1e-10)


def test_classification_examples():
    assert classify_transformation(FrameField.identity(5)) == {
        "is_identity": True, "is_flat": True, "is_orthogonal": True, "samples": 64}
    c = classify_transformation(rotation_frame("0.4"))
    assert (c["is_identity"], c["is_flat"], c["is_orthogonal"]) == (False, True, True)
    c = classify_transformation(rotation_frame())
    assert (c["is_identity"], c["is_flat"], c["is_orthogonal"]) == (False, False, True)
    # two points differing only in x1 really see different frames
    b = rotation_frame().b_jet(np.array([[0.1, 0, 0, 0, 0], [0.6, 0, 0, 0, 0]]), 0).value
    assert np.abs(b[0] - b[1]).max() > 0.1


def test_identity_transformation_changes_nothing(rng):
    pts = rng.uniform(-1, 1, (6, 5))
    f = wobbly_frame()
    g = apply_frame_transformation(FrameField.identity(5), f)
    np.testing.assert_allclose(g.b_jet(pts, 1).coeffs[1], f.b_jet(pts, 1).coeffs[1], atol=1e-15)
    np.testing.assert_allclose(g.b_jet(pts, 0).value, f.b_jet(pts, 0).value, atol=1e-15)


def test_internal_scaling_scales_the_internal_metric(rng):
    c = 1.7
    k = FrameField.constant(np.diag([1, 1, 1, c, c]))
    p = rng.uniform(-1, 1, 5)
    f = rotation_frame()
    g = apply_frame_transformation(k, f)
    np.testing.assert_allclose(g.b_jet(p, 0).value[0][:, 3:], c * f.b_jet(p, 0).value[0][:, 3:], atol=1e-14)
    G = metric_from_frame(g).G_at(p)
    np.testing.assert_allclose(G[3:, 3:], c * c * np.eye(2), atol=1e-13)
    np.testing.assert_allclose(G[:3, :3], np.eye(3), atol=1e-14)


@given(point5)
def test_frame_transformations_compose(p):
    f, k1 = wobbly_frame(), rotation_frame("(* 0.5 x2)")
    k2 = FrameField.from_exprs([["(+ 1.5 (* 0.2 x3))" if i == j else 0 for j in range(5)] for i in range(5)])
    step = apply_frame_transformation(k2, apply_frame_transformation(k1, f))
    once = apply_frame_transformation(compose_frames(k1, k2), f)
    b1, c1 = step.jets(np.array([p]), 1)
    b2, c2 = once.jets(np.array([p]), 1)
    for x, y in ((b1, b2), (c1, c2)):
        np.testing.assert_allclose(x.value, y.value, atol=1e-13)
        np.testing.assert_allclose(x.coeffs[1], y.coeffs[1], atol=1e-12)


def test_stack_transformation_keeps_the_chart():
    stack = ReferenceSystemStack(wobbly_frame(), rotation_frame(), label="s")
    moved = apply_frame_transformation(rotation_frame("0.3"), stack)
    assert moved.chart_frame is stack.outer
    assert moved.inner is stack.inner


# -- inversions -----------------------------------------------------------------------
def _state():
    stack = ReferenceSystemStack(rotation_frame(), label="s")
    charges = {"x1": ExprField.scalar("x1", 5), "x4": ExprField.scalar("x4", 5)}
    return ScenarioState({"s": stack}, charges)


def test_cpt_is_an_involution():
    st0 = _state()
    cpt = InversionSpec.cpt(SIG)
    twice = apply_cpt(cpt, apply_cpt(cpt, st0))
    assert twice == st0
    once = apply_cpt(cpt, st0)
    assert once.coordinate_signs == (-1,) * 5 and once.metric_signs == frozenset({"total"})


def test_parity_flips_only_external_coordinates(rng):
    st1 = apply_cpt(InversionSpec.parity(SIG), _state())
    p = rng.uniform(-1, 1, 5)
    # same coordinate values, flipped chart
    assert st1.effective_charge("x1")(p) == pytest.approx(-p[0], abs=1e-15)
    assert st1.effective_charge("x4")(p) == pytest.approx(p[3], abs=1e-15)
    # the same physical point carries the same value
    assert st1.effective_charge("x1")(st1.to_chart(p)) == pytest.approx(p[0], abs=1e-15)


def test_named_inversions_induce_dx_signs():
    assert InversionSpec.cpt0(SIG).dx_sign == 1
    assert InversionSpec.metric_inversion_all(SIG).dx_sign == -1
    assert InversionSpec.cpt(SIG).dx_sign == -1
    assert InversionSpec.cpt0(SIG).x0_sign == -1
    assert InversionSpec.cpt(SIG).full_coordinate_inversion
    pc = InversionSpec.parity(SIG).compose(InversionSpec.charge(SIG))
    assert pc.coordinate_flips == InversionSpec.cpt0(SIG).coordinate_flips


def test_inversion_spec_validation():
    with pytest.raises(ContractViolation):
        InversionSpec((1, 2, 1))
    with pytest.raises(ContractViolation):
        apply_cpt(InversionSpec.cpt(SpaceSignature(4)), _state())


def test_effective_stack_is_a_pullback(rng):
    st1 = apply_cpt(InversionSpec.cpt0(SIG), _state())
    p = rng.uniform(-1, 1, 5)
    b = st1.effective_stack("s").outer.b_jet(st1.to_chart(p), 0).value[0]
    b0 = rotation_frame().b_jet(p, 0).value[0]
    # lower coordinate slot picks up the sign of the flip
    np.testing.assert_allclose(b, -b0, atol=1e-15)
    assert isinstance(st1.flip_map, CoordinateMap)
