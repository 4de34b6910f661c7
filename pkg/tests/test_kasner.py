import math

import numpy as np
import pytest

from qsclab import kasner
from qsclab.errors import SpecError
from qsclab.ode import NEGATIVE_CONTROL, RESIDUAL_TOL

R3 = math.sqrt(3)


def by_case(verdicts):
    out = {}
    for v in verdicts:
        out.setdefault(v.case, []).append(v)
    return out


def assert_emitted_holds(v, seed=0):
    assert v.emitted
    assert v.verify(np.random.default_rng(seed), 5) < RESIDUAL_TOL
    # with all exponents zero the metric does not see phi
    if v.p is None or any(v.p):
        assert v.family.negative_control() > NEGATIVE_CONTROL


# ---------------------------------------------------------------------
# parameters and specs
# ---------------------------------------------------------------------


def test_kasner_params():
    assert kasner.kasner_params((1, 2), (1, 2)) == (5.0, 9.0)
    assert kasner.kasner_params((2, 2 + R3, 2 - R3), (1, 1, 1)) == pytest.approx((6.0, 18.0))


def test_type_of():
    assert kasner.type_of((3,)) == "I"
    assert kasner.type_of((1, 2)) == "II"
    assert kasner.type_of((1, 1, 1)) == "III"
    assert kasner.type_of((2, 2)) is None


def test_spec_checks_stored_parameters():
    spec = kasner.KasnerSpec((1, 2), (1, 2), "exp(t)", 1, 1, zeta=5.0, eta=9.0)
    assert spec.kind == "II" and spec.nbar == 4
    assert spec.warpings() == ["(exp(t))**(1)", "(exp(t))**(2)"]
    with pytest.raises(SpecError):
        kasner.KasnerSpec((1, 2), (1, 2), "exp(t)", 1, 1, zeta=5.0 + 1e-12)


def test_zero_exponent_gives_unit_warping():
    spec = kasner.KasnerSpec((0, 1), (1, 2), "exp(t)", 1, 1)
    assert spec.warpings()[0] == "1"


# ---------------------------------------------------------------------
# Type II Einstein
# ---------------------------------------------------------------------


def test_typeII_worked_instance():
    cases = by_case(kasner.classify_typeII_einstein(1, 1))
    v = cases["T4.19(6)"][0]
    assert v.p == (0.0, 1.0)
    assert v.alpha == 0.0 and v.alpha_i == (0.0, 0.0)
    assert v.phi_source() == "c0*exp(t)"
    assert v.residuals == {"time": 0.0, "fiber1": 0.0, "fiber2": 0.0}
    assert_emitted_holds(v)
    assert kasner.oracle_check(v) < 1e-9


@pytest.mark.parametrize(
    "l1,l2",
    [(1, 1), (1, 2), (2, 1), (1, -1), (-1, -1), (1, R3), (1, (-3 + math.sqrt(33)) / 2), (-2, 0.5), (1.5, -2.5)],
)
def test_typeII_emitted_verdicts_hold(l1, l2):
    verdicts = kasner.classify_typeII_einstein(l1, l2)
    assert verdicts
    for v in verdicts:
        if v.emitted:
            assert_emitted_holds(v)
        else:
            assert v.status in ("rejected", "infeasible")


def test_typeII_equal_exponents_ratio():
    cases = by_case(kasner.classify_typeII_einstein(1, R3))
    assert set(cases) >= {"T4.19(1)", "T4.19(2)"}
    assert cases["T4.19(2)"][0].p == (1.0, 2.0)
    assert cases["T4.19(1)"][0].alpha == pytest.approx(3 - 3 * R3)


def test_typeII_case5_rejected():
    v = by_case(kasner.classify_typeII_einstein(1, 2))["T4.19(5)"][0]
    assert v.status == "rejected"
    assert v.residual_max > 1e-3


def test_typeII_case7_rejected():
    l1 = math.sqrt((5 + R3) / 6)
    v = by_case(kasner.classify_typeII_einstein(l1, 1))["T4.19(7)"][0]
    assert v.status == "rejected"
    assert v.residual_max > 1e-3


def test_typeII_case8_witness_and_infeasible_branch():
    good = by_case(kasner.classify_typeII_einstein(1, (-3 + math.sqrt(33)) / 2))
    v = good["T4.19(8)"][0]
    assert v.emitted
    zeta, eta = kasner.kasner_params(v.p, (1, 2))
    l1, l2 = 1, (-3 + math.sqrt(33)) / 2
    assert eta / zeta**2 == pytest.approx(l2**2 / (4 * (3 * l1**2 - l2**2)))
    assert "T4.19(9)" in good
    bad = by_case(kasner.classify_typeII_einstein(1, (-3 - math.sqrt(33)) / 2))
    assert bad["T4.19(8)"][0].status == "infeasible"


def test_typeII_case4_infeasible_when_ratio_unreachable():
    v = by_case(kasner.classify_typeII_einstein(1, -1))["T4.19(4)"][0]
    assert v.status == "infeasible"


def test_typeII_advisories():
    cases = by_case(kasner.classify_typeII_einstein(1, 1))
    assert "< 0; here 1" in cases["T4.19(3)"][0].advisory[0]
    assert "> 0; here 1" in cases["T4.19(4)"][0].advisory[0]
    assert "lambda1 = lambda2 < 0; here 1" in cases["T4.19(6)"][0].advisory[0]


def test_ratio_witness():
    (p2,) = kasner.ratio_witness(0.5)
    zeta, eta = kasner.kasner_params((1, p2), (1, 2))
    assert eta / zeta**2 == pytest.approx(0.5)
    assert kasner.ratio_witness(0.25) == []


def test_typeII_zero_coefficient():
    with pytest.raises(SpecError):
        kasner.classify_typeII_einstein(0, 1)


# ---------------------------------------------------------------------
# Type III Einstein
# ---------------------------------------------------------------------


def test_typeIII_worked_instance():
    (v,) = kasner.classify_typeIII_einstein(1, 1)
    assert v.case == "T4.20(3)"
    np.testing.assert_allclose(v.p, (2, 2 + R3, 2 - R3), rtol=1e-12)
    assert v.alpha == 0.0
    assert v.phi_source() == "c*exp(0.333333333333333*t)"
    assert set(v.residuals) == {"time", "fiber1", "fiber2", "fiber3"}
    assert_emitted_holds(v)
    assert kasner.oracle_check(v) < 1e-9


def test_typeIII_excluded_ratio_gives_nothing():
    assert kasner.classify_typeIII_einstein(1, 3) == []


def test_typeIII_unreachable_ratio_infeasible():
    (v,) = kasner.classify_typeIII_einstein(1, -1)
    assert v.status == "infeasible"
    assert "0.125" in v.note


def test_typeIII_sqrt3_ratio():
    cases = by_case(kasner.classify_typeIII_einstein(1, R3))
    assert cases["T4.20(1)"][0].status == "infeasible"
    v = cases["T4.20(2)"][0]
    assert v.p == (-1.0, 0.0, 1.0) and v.phi_source() == "c"
    assert_emitted_holds(v)


@pytest.mark.parametrize("zeta", [3.0, 6.0, -4.0])
def test_typeIII_witness_any_zeta(zeta):
    (v,) = kasner.classify_typeIII_einstein(2, 1, zeta=zeta)
    assert sum(v.p) == pytest.approx(zeta)
    assert len(set(np.round(v.p, 9))) == 3
    assert_emitted_holds(v)


def test_typeIII_witness_threshold():
    assert kasner.typeIII_witness(1 / 3) is None
    assert kasner.typeIII_witness(0.4) is not None


# ---------------------------------------------------------------------
# Type I
# ---------------------------------------------------------------------


@pytest.mark.parametrize("l1,l2", [(1, 1), (1, 2)])
def test_typeI_matches_field_equations(l1, l2):
    for fam in kasner.classify_typeI_einstein(l1, l2):
        if fam.applicable:
            assert kasner.typeI_einstein_consistency(fam) < 1e-9


# ---------------------------------------------------------------------
# scalar curvature
# ---------------------------------------------------------------------


@pytest.mark.parametrize("l1,l2", [(1, 1), (1, -1), (2, 0.5)])
def test_all_zero_exponents_scalar(l1, l2):
    Sbar = 3 * (l1**2 + l2**2 - 4 * l1 * l2)
    (v,) = kasner.solve_typeIII_scalar(l1, l2, Sbar, (0, 0, 0))
    assert v.case == "T4.21(1)" and v.emitted
    spec = kasner.KasnerSpec((0, 0, 0), (1, 1, 1), "exp(t)", l1, l2)
    prof = kasner.kasner_scalar(spec)
    assert np.max(np.abs(prof.values - Sbar)) == 0.0


def test_all_zero_exponents_wrong_constant_infeasible():
    (v,) = kasner.solve_typeIII_scalar(1, -1, 24.0, (0, 0, 0))
    assert v.status == "infeasible"


@pytest.mark.parametrize("Sbar,case", [(-3.0, "T4.21(3)(a)"), (0.0, "T4.21(3)(a)"), (5.0, "T4.21(3)(c)")])
def test_typeIII_scalar_psi_families(Sbar, case):
    (v,) = kasner.solve_typeIII_scalar(1, 1, Sbar, (1, 1, 1))
    assert v.case == case
    assert_emitted_holds(v)
    assert v.residuals["scalar"] < 1e-9


def test_typeIII_scalar_psi_threshold():
    zeta, eta = 3.0, 3.0
    sig, q = 2.0, -6.0
    thr = 9 * zeta**2 * sig**2 / (4 * (eta + zeta**2)) + q
    (v,) = kasner.solve_typeIII_scalar(1, 1, thr, (1, 1, 1))
    assert v.case == "T4.21(3)(b)"
    assert_emitted_holds(v)


@pytest.mark.parametrize("Sbar,count", [(-8.0, 2), (-6.0, 1), (-3.0, 0)])
def test_typeIII_scalar_zeta_zero(Sbar, count):
    vs = kasner.solve_typeIII_scalar(1, 1, Sbar, (1, -1, 0))
    emitted = [v for v in vs if v.emitted]
    assert len(emitted) == count
    for v in emitted:
        assert_emitted_holds(v)


@pytest.mark.parametrize("p", [(1, 1), (2, 0.5), (-1, 2)])
@pytest.mark.parametrize("Sbar", [-4.0, 1.0])
def test_typeII_scalar_flat_surface(p, Sbar):
    for v in kasner.solve_typeII_scalar(1.2, 0.7, Sbar, 0.0, p):
        if v.emitted:
            assert v.case.startswith("E65")
            assert_emitted_holds(v)


def test_typeII_scalar_zeta_zero():
    vs = kasner.solve_typeII_scalar(1, 1, -8.0, 0.0, (2, -1))
    assert [v.case for v in vs] == ["E64", "E64"]
    for v in vs:
        assert_emitted_holds(v)


def test_typeII_scalar_zero_exponents_with_curved_surface():
    (v,) = kasner.solve_typeII_scalar(1, 1, 2.0 - 6.0, 2.0, (0, 0))
    assert v.case == "E63" and v.emitted


def test_typeII_scalar_curved_surface_is_residual_only():
    (v,) = kasner.solve_typeII_scalar(1, 1, 0.0, 2.0, (1, 1))
    assert v.status == "residual_only"
    res = kasner.typeII_scalar_residual(1, 1, 0.0, 2.0, (1, 1), "exp(t)")
    assert set(res) == {"scalar", "psi"}
    assert res["scalar"] > 1e-3


def test_typeII_scalar_residual_accepts_solution():
    (v,) = kasner.solve_typeII_scalar(1, 1, 0.0, 0.0, (1, 1))
    res = kasner.typeII_scalar_residual(1, 1, 0.0, 0.0, (1, 1), v.phi_expr())
    assert max(res.values()) < 1e-9


def test_scalar_families_match_oracle():
    (v,) = kasner.solve_typeIII_scalar(1, 1, -3.0, (1, 1, 1))
    assert kasner.oracle_check(v) < 1e-8


def test_typeI_scalar_is_the_l3_solver():
    assert kasner.solve_typeI_scalar(1, 1, 0.0, 0.0).case_id.startswith("T3.19")


def test_verdict_json():
    (v,) = kasner.classify_typeIII_einstein(1, 1)
    out = v.to_json()
    assert out["case"] == "T4.20(3)" and out["zeta"] == pytest.approx(6.0)
    (bad,) = kasner.classify_typeIII_einstein(1, -1)
    assert bad.to_json()["p"] is None and bad.to_json()["phi"] is None


def test_zeta_zero_rate_uses_the_computed_constant():
    # for lambda = (1, -1) the constant 3(l1^2 + l2^2 - 4 l1 l2) is 18
    vs = kasner.solve_typeIII_scalar(1, -1, 10.0, (1, -1, 0))
    assert sorted(v.phi_source() for v in vs) == ["c0*exp(-2*t)", "c0*exp(2*t)"]
    for v in vs:
        assert_emitted_holds(v)
    assert kasner.solve_typeIII_scalar(1, -1, 18.0, (1, -1, 0))[0].phi_source() == "c"
    assert kasner.solve_typeIII_scalar(1, -1, 20.0, (1, -1, 0))[0].status == "infeasible"
