import math

import numpy as np
import pytest

from qsclab.connection import analyze
from qsclab.errors import ChartError, DomainError, ExprError, SpecError
from qsclab.expr import ScalarExpr, format_number
from qsclab.geometry import (
    christoffel,
    compare_tensors,
    curvature_from_conn,
    orthonormal_frame,
    ricci_scalar_from_curv,
)
from qsclab.jet import Jet2, variables
from qsclab.models import BaseModel, FiberModel, SpaceSpec


def fd_grad_hess(fn, x, h=1e-5):
    x = np.asarray(x, float)
    n = len(x)
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i in range(n):
        e = np.eye(n)[i] * h
        grad[i] = (fn(x + e) - fn(x - e)) / (2 * h)
        for j in range(n):
            f = np.eye(n)[j] * h
            hess[i, j] = (fn(x + e + f) - fn(x + e - f) - fn(x - e + f) + fn(x - e - f)) / (4 * h * h)
    return grad, hess


# ---------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "src",
    ["sin(x*y) + exp(x)/y", "sqrt(1 + x**2*y)", "log(2 + cos(x)) * sinh(y)", "tan(0.3*x) - cosh(x - y)", "x**2.5 / (1 + y)"],
)
def test_jet_matches_finite_differences(src):
    expr = ScalarExpr(src)
    x0 = np.array([0.4, 0.9])

    def fn(p):
        return float(expr(x=p[0], y=p[1]))

    jet = expr.evaluate(dict(zip("xy", variables(x0))))
    grad, hess = fd_grad_hess(fn, x0)
    assert jet.value == pytest.approx(fn(x0), rel=1e-14)
    np.testing.assert_allclose(jet.grad, grad, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(jet.hess, hess, rtol=1e-5, atol=1e-5)


def test_jet_product_rule_exact():
    x, y = variables([2.0, 3.0])
    p = x * x * y
    assert p.value == 12.0
    np.testing.assert_array_equal(p.grad, [12.0, 4.0])
    np.testing.assert_array_equal(p.hess, [[6.0, 4.0], [4.0, 0.0]])


def test_jet_constant_has_no_derivatives():
    c = Jet2.constant(1.5, 3)
    assert c.value == 1.5
    assert not c.grad.any() and not c.hess.any()


def test_jet_domain_errors():
    (x,) = variables([-1.0])
    with pytest.raises(DomainError):
        x.log()
    with pytest.raises(DomainError):
        x.sqrt()


# ---------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------


def test_expr_evaluates_floats_and_caret():
    assert ScalarExpr("2^3 + pi")({}) == pytest.approx(8 + math.pi)
    assert ScalarExpr("exp(t)")(t=0.0) == 1.0


@pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "open('f')", "[1, 2]", "lambda: 1", "x if y else 1"])
def test_expr_rejects_unsafe_syntax(bad):
    with pytest.raises(ExprError):
        ScalarExpr(bad)


def test_expr_unbound_name():
    with pytest.raises(ExprError, match="unbound"):
        ScalarExpr("x + y")(x=1.0)


def test_expr_fractional_power_of_negative():
    with pytest.raises(DomainError):
        ScalarExpr("x**0.5")(x=-1.0)


def test_format_number():
    assert format_number(2.0) == "2"
    assert format_number(-0.5) == "-0.5"
    assert format_number(1 / 3) == "0.333333333333333"


# ---------------------------------------------------------------------
# models and the Levi-Civita oracle
# ---------------------------------------------------------------------


def test_flat_space_is_flat():
    spec = SpaceSpec.build(BaseModel.flat([-1, 1]), [FiberModel.torus(2)], ["1"])
    at = analyze(spec, [0.1, 0.2, 0.3, 0.4])
    assert np.abs(at.curv).max() == 0.0
    assert at.scalar == 0.0


@pytest.mark.parametrize("dim,radius", [(2, 1.0), (2, 2.0), (3, 0.7)])
def test_round_sphere_ricci(dim, radius):
    # Ricci here is minus the usual contraction, so a sphere comes out negative
    spec = SpaceSpec.build(BaseModel.interval(1), [FiberModel.sphere(dim, radius)], ["1"])
    p = spec.sample_point(np.random.default_rng(1))
    at = analyze(spec, p)
    fiber = spec.fiber_slice(0)
    expected = -(dim - 1) / radius**2 * at.metric[fiber, fiber]
    np.testing.assert_allclose(at.ricci[fiber, fiber], expected, atol=1e-10)
    assert at.scalar == pytest.approx(-dim * (dim - 1) / radius**2, rel=1e-10)


def test_hyperbolic_ricci_positive():
    spec = SpaceSpec.build(BaseModel.interval(1), [FiberModel.hyperbolic(2, 1.0)], ["1"])
    at = analyze(spec, spec.sample_point(np.random.default_rng(0)))
    assert at.scalar == pytest.approx(2.0, rel=1e-12)


def test_robertson_walker_scalar():
    # -dt^2 + a^2 (dx^2+dy^2+dz^2), a = exp(t): the usual scalar is 12, ours is -12
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.torus(3)], ["exp(t)"])
    at = analyze(spec, [0.3, 0, 0, 0])
    assert at.scalar == pytest.approx(-12.0, rel=1e-12)


def test_curvature_symmetries():
    spec = SpaceSpec.build(BaseModel.conformal([-1, 1], "exp(0.2*t + 0.1*x)"), [FiberModel.sphere(2)], ["2 + t**2"])
    p = spec.sample_point(np.random.default_rng(5))
    mj = spec.metric_jet(p)
    R = curvature_from_conn(christoffel(mj))
    np.testing.assert_allclose(R, -R.transpose(0, 2, 1, 3), atol=1e-12)
    Rlow = np.einsum("al,lijk->aijk", mj.g, R)
    np.testing.assert_allclose(Rlow, -Rlow.transpose(3, 1, 2, 0), atol=1e-10)
    cyc = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
    np.testing.assert_allclose(cyc, 0, atol=1e-10)


def test_frame_trace_equals_inverse_metric_trace():
    spec = SpaceSpec.build(BaseModel.flat([-1, 1]), [FiberModel.sphere(2, 1.5)], ["exp(0.3*t)*(1 + 0.2*x**2)"])
    p = spec.sample_point(np.random.default_rng(2))
    mj = spec.metric_jet(p)
    R = curvature_from_conn(christoffel(mj))
    ric_a, s_a = ricci_scalar_from_curv(R, mj.g, orthonormal_frame(mj.g))
    ric_b, s_b = ricci_scalar_from_curv(R, mj.g)
    np.testing.assert_allclose(ric_a, ric_b, atol=1e-12)
    assert s_a == pytest.approx(s_b, rel=1e-12)


def test_spec_json_roundtrip():
    spec = SpaceSpec.build(
        BaseModel.conformal([-1, 1], "exp(t)", ("t", "x")),
        [FiberModel.circle(), FiberModel.sphere(2, 1.3)],
        ["1 + t**2", "exp(x)"],
    )
    again = SpaceSpec.from_json(spec.to_json())
    assert again.to_json() == spec.to_json()
    p = spec.sample_point(np.random.default_rng(0))
    np.testing.assert_array_equal(spec.metric_jet(p).g, again.metric_jet(p).g)


def test_twisted_flag_and_foreign_names():
    torus = FiberModel("torus", 2, coords=("u", "v"))
    spec = SpaceSpec.build(BaseModel.interval(-1), [torus], ["exp(t)*(2 + sin(u))"])
    assert spec.twisted == (True,)
    circles = [FiberModel("circle", 1, coords=("u",)), FiberModel("circle", 1, coords=("v",))]
    with pytest.raises(SpecError, match="foreign"):
        SpaceSpec.build(BaseModel.interval(-1), circles, ["1", "2 + sin(u)"])


def test_non_positive_warping_is_a_domain_error():
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.circle()], ["t"])
    with pytest.raises(DomainError):
        spec.metric_jet([-0.5, 0.0])


def test_sphere_chart_guard():
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.sphere(2)], ["1"])
    with pytest.raises(ChartError):
        spec.point([0.0, 0.0, 0.0])


def test_compare_tensors_relative():
    c = compare_tensors(np.array([1.0, 100.0]), np.array([1.0, 101.0]))
    assert c.max_abs == 1.0
    assert c.max_rel == pytest.approx(1 / 101)
