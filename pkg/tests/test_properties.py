import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qsclab import grw
from qsclab.closed_forms import MATCH, compare_catalog
from qsclab.connection import (
    PField,
    QscParams,
    analyze,
    curvature_qsc_coeff,
    curvature_qsc_direct,
    non_metricity_at,
    non_metricity_formula,
    p_field_at,
    torsion_at,
    torsion_formula,
)
from qsclab.expr import ScalarExpr
from qsclab.geometry import compare_tensors
from qsclab.jet import variables
from qsclab.models import BaseModel, FiberModel, SpaceSpec
from qsclab.ode import RESIDUAL_TOL
from qsclab.sampling import random_config

seeds = st.integers(min_value=0, max_value=2**31 - 1)
coeff = st.floats(min_value=0.2, max_value=3.0).flatmap(lambda x: st.sampled_from([x, -x]))
small = st.floats(min_value=-0.8, max_value=0.8)

SLOW = settings(max_examples=25, deadline=None)


@SLOW
@given(seeds)
def test_routes_agree_on_random_products(seed):
    cfg = random_config(seed, twisted=None, n_points=1)
    p = cfg.points[0]
    a = curvature_qsc_coeff(cfg.spec, cfg.params, p)
    b = curvature_qsc_direct(cfg.spec, cfg.params, p)
    assert compare_tensors(a, b).max_rel < 1e-9


@SLOW
@given(seeds)
def test_torsion_and_non_metricity_on_random_products(seed):
    cfg = random_config(seed, twisted=None, n_points=1)
    p = cfg.points[0]
    g = cfg.spec.metric_jet(p).g
    P, _ = p_field_at(cfg.spec, cfg.params.P, p)
    l1, l2 = cfg.params.lambda1, cfg.params.lambda2
    np.testing.assert_allclose(torsion_at(cfg.spec, cfg.params, p), torsion_formula(g, P, l1), atol=1e-10)
    np.testing.assert_allclose(non_metricity_at(cfg.spec, cfg.params, p), non_metricity_formula(g, P, l1, l2), atol=1e-10)


@SLOW
@given(seeds)
def test_catalog_matches_on_random_products(seed):
    cfg = random_config(seed, twisted=None, n_points=1)
    rows = compare_catalog(cfg.spec, cfg.params, cfg.points)
    assert {r.verdict for r in rows} == {MATCH}


@settings(max_examples=50, deadline=None)
@given(small, small, small, small)
def test_jet_chain_rule(a, b, x0, y0):
    expr = ScalarExpr(f"exp({a}*x) * sin({b}*y + x)")
    x, y = variables([x0, y0])
    jet = expr.evaluate({"x": x, "y": y})
    u = a * x0
    v = b * y0 + x0
    value = math.exp(u) * math.sin(v)
    assert jet.value == value or math.isclose(jet.value, value, rel_tol=1e-14, abs_tol=1e-15)
    dx = a * value + math.exp(u) * math.cos(v)
    dy = b * math.exp(u) * math.cos(v)
    np.testing.assert_allclose(jet.grad, [dx, dy], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(jet.hess, jet.hess.T, atol=0)


@settings(max_examples=30, deadline=None)
@given(coeff, st.floats(min_value=0.3, max_value=2.0), small)
def test_equal_coefficients_give_metric_connection(l, a, t):
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.circle()], [f"exp({a}*t)"])
    params = QscParams(l, l, PField.base(["1 + 0.2*t"]))
    assert np.abs(non_metricity_at(spec, params, [t, 0.1])).max() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(coeff, st.integers(min_value=1, max_value=3), small)
def test_ricci_symmetric_on_the_special_ratio(l1, l, t):
    # the skew part of Ricci drops out when lambda2 = (dim M - 1) lambda1
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.torus(l)], ["exp(0.4*t) + t**2"])
    params = QscParams(l1, l * l1, PField.base(["1 + 0.3*t"]))
    ric = analyze(spec, [t] + [0.1] * l, params).ricci
    assert np.abs(ric - ric.T).max() <= 1e-9 * max(1.0, np.abs(ric).max())


def worst_over_draws(fam, seed):
    rng = np.random.default_rng(seed)
    return max([fam.check()] + [fam.check(fam.draw(rng)) for _ in range(5)])


@settings(max_examples=40, deadline=None)
@given(coeff, coeff, st.floats(min_value=-3, max_value=3), seeds)
def test_l1_einstein_family_solves_its_equation(l1, l2, alpha, seed):
    fam = grw.solve_einstein_dimF1(l1, l2, alpha)
    assert worst_over_draws(fam, seed) < RESIDUAL_TOL


@settings(max_examples=40, deadline=None)
@given(coeff, coeff, st.integers(min_value=1, max_value=4), st.floats(min_value=-20, max_value=5), seeds)
def test_flat_fiber_scalar_family_solves_its_equation(l1, l2, l, Sbar, seed):
    fam = grw.solve_scalar_flatfiber(l1, l2, l, Sbar)
    if fam.applicable and fam.status == "valid":
        assert worst_over_draws(fam, seed) < RESIDUAL_TOL
