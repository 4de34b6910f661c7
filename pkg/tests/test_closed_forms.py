import numpy as np
import pytest

from qsclab.closed_forms import (
    MATCH,
    MISMATCH,
    NOT_STATED,
    build_ingredients,
    cf_scalar,
    compare_catalog,
    mixed_ricci_flat_check,
    ricci_matrix,
)
from qsclab.connection import PField, QscParams, analyze
from qsclab.errors import SpecError
from qsclab.models import BaseModel, FiberModel, SpaceSpec
from qsclab.sampling import random_config

TOL = 1e-9


def twisted_torus():
    torus = FiberModel("torus", 2, coords=("u", "v"))
    spec = SpaceSpec.build(BaseModel.interval(-1), [torus], ["exp(t)*(2 + sin(u))"])
    return spec, QscParams(1, 2, PField.base(["1"]))


def verdicts(rows):
    return {r.verdict for r in rows}


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("twisted", [False, True])
def test_catalog_matches_oracle(seed, twisted):
    cfg = random_config(100 + seed, twisted=twisted)
    rows = compare_catalog(cfg.spec, cfg.params, cfg.points, tol=TOL)
    assert rows
    assert verdicts(rows) == {MATCH}, [(r.formula_id, r.fingerprint) for r in rows if r.verdict != MATCH]


@pytest.mark.parametrize("seed", range(6))
def test_singly_catalog_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    base = BaseModel.flat([-1, 1])
    fiber = FiberModel.sphere(2, float(rng.uniform(0.5, 2)))
    spec = SpaceSpec.build(base, [fiber], [f"exp({rng.uniform(-0.5, 0.5):.3f}*t + {rng.uniform(-0.5, 0.5):.3f}*x)"])
    params = QscParams(float(rng.uniform(0.5, 2)), float(rng.uniform(-2, -0.5)), PField.base(["1 + 0.2*x", "0.3*sin(t)"]))
    points = [spec.sample_point(rng) for _ in range(2)]
    rows = compare_catalog(spec, params, points, family="singly", tol=TOL)
    assert {r.formula_id[:2] for r in rows} == {"P3"}
    assert verdicts(rows) == {MATCH}


def test_einstein_witness_closed_form_ricci_vanishes():
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.circle()], ["exp(t)"])
    params = QscParams(1, 1, PField.base(["1"]))
    for t in (0.0, 0.4, 1.0):
        assert np.abs(ricci_matrix(spec, params, [t, 0.0])).max() <= 1e-12


def test_scalar_closed_form_for_sphere_fiber():
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.sphere(2, 1.3)], ["1 + 0.5*t**2"])
    params = QscParams(0.7, -1.2, PField.base(["1"]))
    p = spec.sample_point(np.random.default_rng(4))
    res = cf_scalar(build_ingredients(spec, params, p))
    assert res.value == pytest.approx(analyze(spec, p, params).scalar, rel=1e-10)


def test_vanishing_field_is_not_stated():
    spec = SpaceSpec.build(BaseModel.interval(-1), [FiberModel.circle()], ["exp(t)"])
    params = QscParams(1, 1, PField.zero(), strict=False)
    rows = compare_catalog(spec, params, [[0.1, 0.0]], kinds=("ricci",))
    assert verdicts(rows) == {NOT_STATED}


def test_unknown_reading_rejected():
    spec, params = twisted_torus()
    with pytest.raises(SpecError, match="reading"):
        compare_catalog(spec, params, [[0.2, 0.3, -0.4]], fiber_reading="other")


def test_ledger_row_json_shape():
    spec, params = twisted_torus()
    row = compare_catalog(spec, params, [[0.2, 0.3, -0.4]], kinds=("scalar",))[0]
    assert set(row.to_json()) == {"formula_id", "kind", "point", "maxAbsDiff", "maxRelDiff", "verdict", "slots", "fingerprint"}


# ---------------------------------------------------------------------
# fingerprints of the bare fiber reading on a twisted factor
# ---------------------------------------------------------------------

BARE_FINGERPRINTS = {
    ("P4.3(9)", "F1F1F1:0+0"),
    ("P4.5(3b)", "F1F1:+"),
    ("P4.9", ":+"),
}


@pytest.mark.parametrize("point", [[0.2, 0.3, -0.4], [-0.5, 1.1, 0.2]])
def test_bare_fiber_reading_fingerprint(point):
    spec, params = twisted_torus()
    rows = compare_catalog(spec, params, [point], fiber_reading="bare", tol=TOL)
    bad = {(r.formula_id, r.fingerprint) for r in rows if r.verdict == MISMATCH}
    assert bad == BARE_FINGERPRINTS
    assert all(r.kind != "connection" for r in rows if r.verdict == MISMATCH)


@pytest.mark.parametrize("point", [[0.2, 0.3, -0.4], [-0.5, 1.1, 0.2]])
def test_leaf_reading_clears_the_twisted_fingerprints(point):
    spec, params = twisted_torus()
    rows = compare_catalog(spec, params, [point], tol=TOL)
    assert verdicts(rows) == {MATCH}


def test_readings_agree_for_warped_factors():
    spec = SpaceSpec.build(BaseModel.flat([-1, 1]), [FiberModel.sphere(2, 1.1)], ["exp(0.3*t + 0.2*x)"])
    params = QscParams(1.2, 0.4, PField.base(["1", "0.3"]))
    p = spec.sample_point(np.random.default_rng(0))
    bare = compare_catalog(spec, params, [p], fiber_reading="bare")
    leaf = compare_catalog(spec, params, [p])
    assert verdicts(bare) == verdicts(leaf) == {MATCH}
    np.testing.assert_allclose([r.max_abs_diff for r in bare], [r.max_abs_diff for r in leaf], atol=1e-12)


# ---------------------------------------------------------------------
# mixed Ricci flatness
# ---------------------------------------------------------------------


def test_mixed_ricci_flat_for_warped_base_field():
    cfg = random_config(7, twisted=False, p_where="base")
    v = mixed_ricci_flat_check(cfg.spec, cfg.params, cfg.points)
    assert v.predicted and v.mixed_ricci_flat and v.consistent


def test_mixed_ricci_not_flat_for_twisted():
    torus = FiberModel("torus", 2, coords=("u", "v"))
    spec = SpaceSpec.build(BaseModel.interval(-1), [torus], ["exp(t*(1 + 0.3*sin(u)))"])
    v = mixed_ricci_flat_check(spec, QscParams(1, 2, PField.base(["1"])), [[0.2, 0.3, -0.4]])
    assert not v.predicted and not v.mixed_ricci_flat and v.consistent


def test_mixed_ricci_fiber_field_special_ratio():
    base = BaseModel.interval(-1)
    spec = SpaceSpec.build(base, [FiberModel.circle(), FiberModel.circle().named(1)], ["exp(t)", "1 + t**2"])
    # dim M = 3, so lambda2 = 2 lambda1 is the special ratio
    special = mixed_ricci_flat_check(spec, QscParams(1, 2, PField.fiber(0, ["1"])), [[0.3, 0.1, 0.2]])
    generic = mixed_ricci_flat_check(spec, QscParams(1, 3, PField.fiber(0, ["1"])), [[0.3, 0.1, 0.2]])
    assert special.branch == "(1)" and special.mixed_ricci_flat and special.consistent
    assert generic.branch == "(2)" and not generic.mixed_ricci_flat and generic.consistent
