"""Einstein and constant scalar curvature conditions on ``-dt^2 + sum b_i^2 g_{F_i}``.

All formulas use the modified connection with ``P = d/dt`` unless a function
says otherwise.  Fiber Einstein constants and scalar curvatures follow the
library's Ricci sign (a round sphere has negative constants, hyperbolic
space positive ones).

Solution families are returned as :class:`qsclab.ode.Family` objects whose
residual is the governing equation they came from.  Two closed forms are
emitted in corrected form because the stated ones do not solve their own
equation: the degenerate ``l = 3`` scalar family gains the missing factor
``t`` on its linear term, and the two-exponential flat-fiber family uses
``l/2`` in front of ``lambda1 + lambda2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .closed_forms import ricci_matrix
from .connection import PField, QscParams, analyze
from .errors import DomainError, SpecError
from .expr import ScalarExpr, as_expr, format_number
from .geometry import compare_tensors
from .models import BaseModel, FiberModel, SpaceSpec
from .ode import TAU, Family, along, exp_term, grid, is_zero, join_terms, linear_term, num, scale_of, sign_cmp

SPHERE = "sphere"


@dataclass(frozen=True)
class GrwProblem:
    """Fibers, connection parameters, where ``P`` lives and what is asked.

    ``fiber_constants`` holds each fiber's Einstein constant for an Einstein
    target and its scalar curvature for a scalar target.
    """

    dims: tuple[int, ...]
    lambda1: float
    lambda2: float
    fiber_constants: tuple[float, ...] = ()
    p_location: str = "time"
    fiber_index: int | None = None
    target: str = "einstein"
    value: float = 0.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        consts = tuple(float(c) for c in self.fiber_constants) or (0.0,) * len(dims)
        object.__setattr__(self, "fiber_constants", consts)
        if not dims or min(dims) < 1:
            raise SpecError("fiber dimensions must be positive")
        if len(consts) != len(dims):
            raise SpecError("one fiber constant per fiber is required")
        if self.lambda1 * self.lambda2 == 0:
            raise SpecError("lambda1 and lambda2 must be nonzero")
        for d, c in zip(dims, consts):
            if d == 1 and c != 0:
                raise SpecError("a one-dimensional fiber has zero curvature constants")
        if self.p_location not in ("time", "fiber"):
            raise SpecError("P lives on the time axis or on a fiber")
        if self.p_location == "fiber" and not (self.fiber_index is not None and 0 <= self.fiber_index < len(dims)):
            raise SpecError("a fiber field needs a valid fiber index")
        if self.target not in ("einstein", "scalar"):
            raise SpecError("target must be 'einstein' or 'scalar'")

    @property
    def nbar(self) -> int:
        return 1 + sum(self.dims)


# ---------------------------------------------------------------------
# Einstein conditions
# ---------------------------------------------------------------------


@dataclass
class EinsteinResiduals:
    condition2: np.ndarray
    condition3: list[np.ndarray]
    scale: float

    @property
    def max_scaled(self) -> float:
        worst = max([float(np.max(np.abs(self.condition2)))] + [float(np.max(np.abs(c))) for c in self.condition3])
        return worst / self.scale


def _warping_arrays(warpings: Sequence, ts: np.ndarray):
    out = [along(as_expr(w), ts) for w in warpings]
    for k, (b, _, _) in enumerate(out):
        if np.min(b) <= 0:
            raise DomainError(f"warping {k} is not positive on the grid")
    return out


def einstein_residuals_arrays(
    dims: Sequence[int], l1: float, l2: float, alpha: float, alphas: Sequence[float], jets
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Pointwise residuals of the time-time equation and of each fiber equation."""
    nbar = 1 + sum(dims)
    logd = [b1 / b for b, b1, _ in jets]
    cond2 = sum(l * (l2 * b1 / b - b2 / b + l1**2 - l1 * l2) for l, (b, b1, b2) in zip(dims, jets)) - alpha
    cond3 = []
    for i, (l, (b, b1, b2)) in enumerate(zip(dims, jets)):
        others = sum(dims[s] * logd[s] for s in range(len(dims)) if s != i)
        cond3.append(
            alphas[i] - b * b2 + (1 - l) * b1**2 + (l2 * b**2 - b * b1) * others
            + (l2**2 + (1 - nbar) * l1 * l2) * b**2 + ((nbar - 1) * l1 + (l - 1) * l2) * b * b1
            - alpha * b**2
        )
    return np.asarray(cond2) * np.ones_like(jets[0][0]), cond3


def einstein_conditions(problem: GrwProblem, warpings: Sequence, ts: np.ndarray | None = None) -> EinsteinResiduals:
    """Residuals of the Einstein conditions for candidate warpings of ``t``."""
    if problem.p_location != "time":
        raise SpecError("use einstein_fiberP_conditions for a fiber field")
    if len(warpings) != len(problem.dims):
        raise SpecError("one warping per fiber is required")
    ts = grid() if ts is None else ts
    jets = _warping_arrays(warpings, ts)
    cond2, cond3 = einstein_residuals_arrays(
        problem.dims, problem.lambda1, problem.lambda2, problem.value, problem.fiber_constants, jets
    )
    scale = max(scale_of(b) for b, _, _ in jets)
    return EinsteinResiduals(cond2, cond3, scale)


def dimF1_ode(l1: float, l2: float, alpha: float):
    """Residual of ``f'' = l2 f' + (l1^2 - l1 l2) f - alpha f``."""

    def res(t, f, f1, f2, c):
        return f2 - l2 * f1 - (l1**2 - l1 * l2) * f + alpha * f

    return res


def dimFl_residuals(l: int, l1: float, l2: float, alpha: float, alphaF):
    """Residuals of the second-order equation and the first-order constraint for ``l > 1``.

    ``alphaF`` is a number or a callable of the free constants.
    """

    def res(t, f, f1, f2, c):
        aF = alphaF(c) if callable(alphaF) else alphaF
        ode = f2 - l2 * f1 - (l1**2 - l1 * l2 - alpha / l) * f
        first = (
            aF / (1 - l) + f1**2 + (alpha / l + l1 * l2 + (l2**2 - l1**2) / (1 - l)) * f**2
            + (l * l1 / (1 - l) + (l - 2) * l2 / (1 - l)) * f * f1
        )
        return [ode, first]

    return res


def _fiber_equation(l: int, l1: float, l2: float, alpha: float, alphaF: float = 0.0):
    def res(t, f, f1, f2, c):
        return (
            alphaF - f * f2 + (1 - l) * f1**2 + (l2**2 - l * l1 * l2 - alpha) * f**2
            + (l * l1 + (l - 1) * l2) * f * f1
        )

    return res


def _terms(*pairs: tuple[str, float]) -> str:
    parts = []
    for c, k in pairs:
        e = exp_term(k)
        parts.append(c if e == "1" else f"{c}*{e}")
    return " + ".join(parts)


def _trig(k: float, h: float, amp: tuple[str, str] = ("c1", "c2")) -> str:
    arg = "t" if h == 1 else f"{format_number(h)}*t"
    body = f"{amp[0]}*cos({arg}) + {amp[1]}*sin({arg})"
    e = exp_term(k)
    return f"({body})" if e == "1" else f"{e}*({body})"


def solve_einstein_dimF1(lambda1: float, lambda2: float, alpha: float, tau: float = TAU) -> Family:
    """The Einstein family for a one-dimensional fiber, split on the discriminant."""
    l1, l2 = float(lambda1), float(lambda2)
    if l1 * l2 == 0:
        raise SpecError("lambda1 and lambda2 must be nonzero")
    thr = (l1 - l2 / 2) ** 2
    D = (2 * l1 - l2) ** 2 - 4 * alpha
    side = sign_cmp(alpha, thr, tau)
    if side < 0:
        s = math.sqrt(D)
        src, case, valid = _terms(("c1", (l2 + s) / 2), ("c2", (l2 - s) / 2)), "T3.14(1)", "alpha < (lambda1 - lambda2/2)^2"
    elif side == 0:
        src, case, valid = f"(c1 + c2*t)*{exp_term(l2 / 2)}", "T3.14(2)", "alpha = (lambda1 - lambda2/2)^2"
        if exp_term(l2 / 2) == "1":
            src = "c1 + c2*t"
    else:
        src, case, valid = _trig(l2 / 2, math.sqrt(-D) / 2), "T3.14(3)", "alpha > (lambda1 - lambda2/2)^2"
    fam = Family(
        case, "f", ScalarExpr(src), dimF1_ode(l1, l2, alpha),
        constraints={"lambda1": l1, "lambda2": l2, "alpha": alpha, "alpha_F": 0.0, "discriminant": D},
        validity=valid,
    )
    fam.fix_defaults()
    _attach_condition3(fam, 1, l1, l2, alpha)
    return fam


def einstein_dimF1_doubled(lambda1: float, alpha: float, tau: float = TAU) -> Family:
    """The one-dimensional family written for ``lambda2 = 2 lambda1``."""
    l1 = float(lambda1)
    l2 = 2 * l1
    side = sign_cmp(alpha, 0.0, tau)
    if side < 0:
        r = math.sqrt(-alpha)
        src, case, valid = _terms(("c1", l1 + r), ("c2", l1 - r)), "C3.15(1)", "alpha < 0"
    elif side == 0:
        src, case, valid = f"(c1 + c2*t)*{exp_term(l1)}", "C3.15(2)", "alpha = 0"
    else:
        src, case, valid = _trig(l1, math.sqrt(alpha)), "C3.15(3)", "alpha > 0"
    fam = Family(
        case, "f", ScalarExpr(src), dimF1_ode(l1, l2, alpha),
        constraints={"lambda1": l1, "lambda2": l2, "alpha": alpha, "alpha_F": 0.0}, validity=valid,
    )
    fam.fix_defaults()
    _attach_condition3(fam, 1, l1, l2, alpha)
    return fam


def _attach_condition3(fam: Family, l: int, l1: float, l2: float, alpha: float) -> None:
    """Record how far the family is from the separate fiber equation."""
    ts = grid()
    f, f1, f2 = fam.evaluate(ts)
    if np.min(f) <= 0:
        return
    r = _fiber_equation(l, l1, l2, alpha)(ts, f, f1, f2, {})
    fam.extra["fiber_equation_residual"] = float(np.max(np.abs(r))) / scale_of(f)


def classify_einstein_dimFl(lambda1: float, lambda2: float, l: int, tau: float = TAU) -> list[Family]:
    """The four Einstein families for a fiber of dimension ``l > 1``."""
    if l <= 1:
        raise SpecError("this classification needs l > 1")
    l1, l2 = float(lambda1), float(lambda2)
    out = []

    def add(case, src, alpha, alphaF_fn, valid, ok, note=""):
        fam = Family(
            case, "f", ScalarExpr(src), dimFl_residuals(l, l1, l2, alpha, alphaF_fn),
            constraints={"lambda1": l1, "lambda2": l2, "l": l, "alpha": alpha},
            validity=valid, applicable=ok, note=note,
            constraint_fn=lambda c, fn=alphaF_fn: {"alpha_F": fn(c)},
        )
        if ok:
            fam.fix_defaults()
        else:
            fam.status = "not_applicable"
        out.append(fam)

    add("T3.16(1)", "c2", (l1**2 - l1 * l2) * l, lambda c: c["c2"] ** 2 * (l * l1**2 - l2**2), "always", True)
    same = is_zero(l1 - l2, tau, abs(l1))
    add(
        "T3.16(2)", f"c1*{exp_term(l1)} + c2", 0.0, lambda c: (l - 1) * c["c2"] ** 2 * l1**2,
        "lambda1 = lambda2", same,
    )
    quad = l2**2 - 2 * l * l1**2 + l * l1 * l2
    den = l * l1 - l2
    ok3 = not is_zero(quad, tau, l1**2 + l2**2) and not is_zero(den, tau, abs(l1))
    if not is_zero(den, tau, abs(l1)):
        alpha3 = ((3 * l**2 + l) * l1**2 * l2**2 - (l**2 + l) * l1 * l2**3 - 2 * l**2 * l1**3 * l2) / den**2
        src3 = _terms(("c0", (l * l1**2 - l2**2) / den))
    else:
        alpha3, src3 = math.nan, "c0"
    add(
        "T3.16(3)", src3, alpha3, lambda c: 0.0,
        "lambda2^2 - 2 l lambda1^2 + l lambda1 lambda2 != 0 and lambda2 != l lambda1", ok3,
        note="numerator uses lambda1*lambda2^3 in its second term",
    )
    ok4 = is_zero(l2**2 + l * l1 * l2 - 2 * l * l1**2, tau, l1**2 + l2**2)
    add(
        "T3.16(4)", _terms(("c1", l2 / 2)), l * (l1 - l2 / 2) ** 2, lambda c: 0.0,
        "lambda2^2 + l lambda1 lambda2 - 2 l lambda1^2 = 0", ok4,
    )
    return out


# ---------------------------------------------------------------------
# scalar curvature
# ---------------------------------------------------------------------


@dataclass
class ScalarProfile:
    values: np.ndarray
    mean: float
    deviation: float

    @property
    def constant(self) -> bool:
        return self.deviation <= 1e-9 * max(1.0, abs(self.mean))


def _profile(values) -> ScalarProfile:
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    return ScalarProfile(values, mean, float(np.max(np.abs(values - mean))))


def scalar_grw(l: int, lambda1: float, lambda2: float, f, SF: float = 0.0, ts: np.ndarray | None = None) -> ScalarProfile:
    """Scalar curvature of ``-dt^2 + f^2 g_F`` with ``P = d/dt`` along the grid."""
    ts = grid() if ts is None else ts
    f0, f1, f2 = along(as_expr(f), ts)
    if np.min(f0) <= 0:
        raise DomainError("f is not positive on the grid")
    l1, l2 = lambda1, lambda2
    S = (
        SF / f0**2 - 2 * l * f2 / f0 - l * (l - 1) * (f1 / f0) ** 2
        + l**2 * (l1 + l2) * f1 / f0 + l * (l1**2 + l2**2 - (l + 1) * l1 * l2)
    )
    return _profile(S)


def scalar_multiply(dims, lambda1, lambda2, warpings, SFs=None, ts=None) -> ScalarProfile:
    """Scalar curvature of a multiply warped product over an interval, ``P = d/dt``."""
    ts = grid() if ts is None else ts
    SFs = SFs or [0.0] * len(dims)
    jets = _warping_arrays(warpings, ts)
    l1, l2 = lambda1, lambda2
    nbar = 1 + sum(dims)
    d = [b1 / b for b, b1, _ in jets]
    S = np.zeros_like(ts)
    for i, (l, (b, b1, b2)) in enumerate(zip(dims, jets)):
        S += -2 * l * b2 / b + SFs[i] / b**2 - l * (l - 1) * d[i] ** 2
        S += ((nbar - 1) * l1 + l * l2) * l * d[i]
        for s in range(len(dims)):
            if s != i:
                S += -l * dims[s] * d[i] * d[s] + l2 * l * dims[s] * d[s]
        S -= l * (nbar * l1 * l2 - (l1**2 + l2**2))
    return _profile(S)


def scalar_fiberP(
    l: int, lambda1: float, lambda2: float, f, SF: float, gFPP: float, divFP: float, ts=None
) -> ScalarProfile:
    """Scalar curvature of ``-dt^2 + f^2 g_F`` with ``P`` tangent to the fiber."""
    ts = grid() if ts is None else ts
    f0, f1, f2 = along(as_expr(f), ts)
    if np.min(f0) <= 0:
        raise DomainError("f is not positive on the grid")
    nbar = l + 1
    l1, l2 = lambda1, lambda2
    S = (
        SF / f0**2 - 2 * l * f2 / f0 - l * (l - 1) * (f1 / f0) ** 2
        + (l * nbar * l1 * l2 - l * (l1**2 + l2**2)) * f0**2 * gFPP + l * (l1 + l2) * divFP
    )
    return _profile(S)


def fiber_scalar_case(lambda1: float, lambda2: float, nbar: int, tau: float = TAU) -> dict[str, Any]:
    """Which fiber quantities must be constant for the fiber scalar curvature to be constant."""
    l1, l2 = lambda1, lambda2
    sum0 = is_zero(l1 + l2, tau, abs(l1))
    quad0 = is_zero(l1**2 + l2**2 - nbar * l1 * l2, tau, l1**2 + l2**2)
    if sum0 and quad0:
        return {"case": "4", "status": "rejected", "requires": [], "reason": "forces lambda1 = lambda2 = 0"}
    if sum0:
        return {"case": "2", "status": "valid", "requires": ["g_F(P,P)"]}
    if quad0:
        return {"case": "1", "status": "valid", "requires": ["div_F P"]}
    return {"case": "3", "status": "valid", "requires": ["div_F P", "g_F(P,P)"]}


def scalar_ode_residual(l: int, lambda1: float, lambda2: float, Sbar: float, SF: float, v, v1, v2) -> np.ndarray:
    """Pointwise residual of the equation for ``v = f^2``."""
    l1, l2 = lambda1, lambda2
    return (
        v2 + (l - 3) / 4 * v1**2 / v - l / 2 * (l1 + l2) * v1
        + ((l + 1) * l1 * l2 - l1**2 - l2**2 + Sbar / l) * v - SF / l
    )


def _v_residual(l, l1, l2, Sbar, SF):
    def res(t, v, v1, v2, c):
        return scalar_ode_residual(l, l1, l2, Sbar, SF, v, v1, v2)

    return res


def _sqrt_positive(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.where(v > 0, v, np.nan))


def solve_scalar_l3(lambda1: float, lambda2: float, Sbar: float, SF: float, tau: float = TAU) -> Family:
    """The family for ``v = f^2`` when the fiber has dimension three."""
    l1, l2 = float(lambda1), float(lambda2)
    sig = l1 + l2
    q = 3 * l1**2 + 3 * l2**2 - 12 * l1 * l2
    thr = 27 / 16 * sig**2 + q
    note = ""
    if sign_cmp(Sbar, q, tau) == 0:
        if is_zero(sig, tau, abs(l1)):
            case, src, valid = "T3.19(5)", join_terms(linear_term(SF / 6, "t**2"), "c1*t", "c2"), "Sbar = 3l1^2+3l2^2-12l1l2, l1+l2 = 0"
        else:
            case, valid = "T3.19(4)", "Sbar = 3l1^2+3l2^2-12l1l2, l1+l2 != 0"
            src = join_terms("c1", linear_term(-2 * SF / (9 * sig), "t"), f"c2*{exp_term(1.5 * sig)}")
            note = "linear term carries the factor t"
    else:
        C = 4 * l1 * l2 - l1**2 - l2**2 + Sbar / 3
        part = SF / (3 * C)
        side = sign_cmp(Sbar, thr, tau)
        if side < 0:
            s = math.sqrt(9 / 4 * sig**2 - 4 * C)
            case, valid = "T3.19(1)", "Sbar < 27/16 (l1+l2)^2 + 3l1^2+3l2^2-12l1l2"
            src = _terms(("c1", (1.5 * sig + s) / 2), ("c2", (1.5 * sig - s) / 2))
        elif side == 0:
            case, valid = "T3.19(2)", "Sbar = 27/16 (l1+l2)^2 + 3l1^2+3l2^2-12l1l2"
            e = exp_term(0.75 * sig)
            src = "(c1 + c2*t)" + ("" if e == "1" else f"*{e}")
        else:
            case, valid = "T3.19(3)", "Sbar > 27/16 (l1+l2)^2 + 3l1^2+3l2^2-12l1l2"
            src = _trig(0.75 * sig, math.sqrt(4 * C - 9 / 4 * sig**2) / 2)
        if part != 0:
            src = f"{src} + {num(part)}"
    fam = Family(
        case, "v", ScalarExpr(src), _v_residual(3, l1, l2, Sbar, SF),
        constraints={"lambda1": l1, "lambda2": l2, "l": 3, "Sbar": Sbar, "S_F": SF},
        validity=valid, note=note, positive=_sqrt_positive,
    )
    fam.fix_defaults()
    return fam


def solve_scalar_flatfiber(lambda1: float, lambda2: float, l: int, Sbar: float, tau: float = TAU) -> Family:
    """The family ``v = w^(4/(l+1))`` for a flat fiber of dimension ``l != 3``."""
    if l == 3:
        return solve_scalar_l3(lambda1, lambda2, Sbar, 0.0, tau)
    if l < 1:
        raise SpecError("fiber dimension must be positive")
    l1, l2 = float(lambda1), float(lambda2)
    sig = l1 + l2
    C = (l + 1) * l1 * l2 - l1**2 - l2**2 + Sbar / l
    thr = l**3 * sig**2 / (4 * (l + 1)) - l * ((l + 1) * l1 * l2 - l1**2 - l2**2)
    disc = l**2 * sig**2 / 4 - (l + 1) * C
    side = sign_cmp(Sbar, thr, tau)
    note = ""
    if side < 0:
        s = math.sqrt(disc)
        case, valid = "T3.20(1)", "Sbar below the threshold"
        w = _terms(("c1", (l * sig / 2 + s) / 2), ("c2", (l * sig / 2 - s) / 2))
        note = "exponent uses l/2 (lambda1 + lambda2)"
    elif side == 0:
        case, valid = "T3.20(2)", "Sbar at the threshold"
        e = exp_term(l * sig / 4)
        w = "(c1 + c2*t)" + ("" if e == "1" else f"*{e}")
    else:
        case, valid = "T3.20(3)", "Sbar above the threshold"
        w = _trig(l * sig / 4, math.sqrt(-disc) / 2)
    src = f"({w})**(4/{l + 1})"
    fam = Family(
        case, "v", ScalarExpr(src), _v_residual(l, l1, l2, Sbar, 0.0),
        constraints={"lambda1": l1, "lambda2": l2, "l": l, "Sbar": Sbar, "S_F": 0.0, "threshold": thr},
        validity=valid, note=note, positive=_sqrt_positive,
    )
    fam.extra["w_expr"] = w
    fam.fix_defaults()
    return fam


# ---------------------------------------------------------------------
# P tangent to a fiber
# ---------------------------------------------------------------------


@dataclass
class FiberPConditions:
    """Einstein conditions when ``P`` is a unit field on a circle fiber ``r``."""

    fiber_index: int
    warping_variation: float
    mu0: float
    mu0_variation: float
    mu1: float
    forced_alpha: float
    linkage: float
    condition3: float
    condition4: list[float]
    violated: list[str] = field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return not self.violated

    def to_json(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def einstein_fiberP_conditions(
    problem: GrwProblem, warpings: Sequence, ts: np.ndarray | None = None, tol: float = 1e-9
) -> FiberPConditions:
    """Evaluate the fiber-field Einstein conditions for a circle fiber carrying ``P``.

    The field is the unit coordinate field of the circle, so its fiber
    divergence and fiber covariant derivative vanish and ``pi(P) = b_r^2``.
    """
    if problem.p_location != "fiber":
        raise SpecError("P must live on a fiber")
    r = problem.fiber_index
    if problem.dims[r] != 1:
        raise SpecError("the fiber carrying P must be a circle")
    ts = grid() if ts is None else ts
    jets = _warping_arrays(warpings, ts)
    dims, nbar = problem.dims, problem.nbar
    l1, l2, alpha = problem.lambda1, problem.lambda2, problem.value
    scale = max(scale_of(b) for b, _, _ in jets)
    br, br1, _ = jets[r]
    violated = []
    variation = float(np.max(np.abs(br1))) / scale
    if variation > tol:
        violated.append("2: b_r constant")
    mu_arr = sum(l * b2 / b for l, (b, _, b2) in zip(dims, jets))
    mu0 = float(np.mean(mu_arr))
    mu0_var = float(np.max(np.abs(mu_arr - mu0)))
    if mu0_var > tol * scale:
        violated.append("2: sum l_i b_i''/b_i constant")
    mu1 = 0.0
    br2 = float(np.mean(br)) ** 2
    forced = ((nbar - 1) * l1 * l2 - l2**2) * br2 - mu0 + l2 * mu1
    linkage = mu0 - l2 * mu1 + alpha - ((nbar - 1) * l1 * l2 - l2**2) * br2
    if abs(linkage) > tol * scale:
        violated.append("2: linkage")
    abar = br2 * (((nbar - 1) * l1 * l2 - l2**2) * br2 + l2 * mu1 - alpha)
    cond3 = abar - ((nbar - 1) * l1**2 - l2**2) * br2**2
    if abs(cond3) > tol * scale:
        violated.append("3: fiber carrying P")
    logd = [b1 / b for b, b1, _ in jets]
    cond4 = []
    for i, (l, (b, b1, b2)) in enumerate(zip(dims, jets)):
        if i == r:
            continue
        others = sum(dims[s] * logd[s] for s in range(len(dims)) if s != i)
        res = (
            problem.fiber_constants[i] - b * b2 + ((nbar - 1) * l1 * l2 - l2**2) * b**2 * br2
            - b * b1 * others - (l - 1) * b1**2 - (alpha - l2 * mu1) * b**2
        )
        cond4.append(float(np.max(np.abs(res))) / scale)
        if cond4[-1] > tol:
            violated.append(f"4: fiber {i}")
    return FiberPConditions(r, variation, mu0, mu0_var, mu1, forced, linkage, cond3, cond4, violated)


def fiber_field_forces_constant_warping(lambda1: float, lambda2: float, nbar: int, tau: float = TAU) -> bool:
    """True when the mixed Ricci terms force the warping to be constant."""
    return not is_zero(lambda2 - (nbar - 1) * lambda1, tau, abs(lambda1))


def constant_warping_alpha(alpha_B: float, lambda1: float, lambda2: float, nbar: int, piP: float) -> float:
    """Einstein constant on base directions for a constant warping and a field on the interval fiber."""
    return alpha_B + ((nbar - 1) * lambda1 * lambda2 - lambda2**2) * piP


def log_warping_ricci(l: int, lambda1: float, lambda2: float, f, reading: str, ts=None):
    """Ricci components in terms of ``q = 2 ln f``.

    Returns ``(Ric(d_t, d_t), (Ric(V, W) - Ric_F(V, W)) / g_F(V, W))`` along
    the grid.  ``reading="stated"`` uses ``+q''/2`` and ``+(n-1)/4 q'^2`` in
    the fiber block; ``reading="signed"`` uses the signs produced by signed
    traces on the Lorentzian base, ``-q''/2`` and ``-(n-1)/4 q'^2``.
    """
    ts = grid() if ts is None else ts
    f0, f1, f2 = along(as_expr(f), ts)
    q1 = 2 * f1 / f0
    q2 = 2 * (f2 / f0 - (f1 / f0) ** 2)
    nbar = l + 1
    l1, l2 = lambda1, lambda2
    tt = (1 - nbar) * (q1**2 / 4 + q2 / 2 - l2 * q1 / 2 + l1 * l2 - l1**2) * -1.0
    sign = {"stated": 1.0, "signed": -1.0}.get(reading)
    if sign is None:
        raise SpecError(f"unknown reading {reading!r}")
    fib = f0**2 * (
        sign * (nbar - 1) / 4 * q1**2 + 0.5 * ((nbar - 1) * l1 + (nbar - 2) * l2) * q1
        + l2**2 + (1 - nbar) * l1 * l2 + sign * q2 / 2
    )
    return tt, fib


# ---------------------------------------------------------------------
# realizing a family as a space for the oracle
# ---------------------------------------------------------------------


def fiber_for(l: int, constant: float, kind: str = "einstein") -> FiberModel:
    """A fiber of dimension ``l`` with the given Einstein constant or scalar curvature."""
    if l == 1:
        if constant != 0:
            raise SpecError("a circle has zero curvature")
        return FiberModel.circle()
    if constant == 0:
        return FiberModel.torus(l)
    k = constant if kind == "einstein" else constant / l
    radius = math.sqrt((l - 1) / abs(k))
    return FiberModel.sphere(l, radius) if k < 0 else FiberModel.hyperbolic(l, radius)


def realize(
    warpings: Sequence,
    dims: Sequence[int],
    lambda1: float,
    lambda2: float,
    fiber_constants: Sequence[float] | None = None,
    fiber_field: int | None = None,
    kind: str = "einstein",
) -> tuple[SpaceSpec, QscParams]:
    """The space ``-dt^2 + sum b_i^2 g_{F_i}`` and parameters with ``P = d/dt`` or a unit fiber field."""
    consts = list(fiber_constants or [0.0] * len(dims))
    fibers = [fiber_for(l, c, kind) for l, c in zip(dims, consts)]
    spec = SpaceSpec.build(BaseModel.interval(-1), fibers, [as_expr(w) for w in warpings])
    if fiber_field is None:
        P = PField.base(["1"])
    else:
        if fibers[fiber_field].kind != "circle":
            raise SpecError("the unit fiber field is defined on a circle")
        P = PField.fiber(fiber_field, ["1"])
    return spec, QscParams(lambda1, lambda2, P)


def sample_points(spec: SpaceSpec, ts: Sequence[float]) -> list[np.ndarray]:
    fiber = [x for f in spec.fibers for x in f.reference_point()]
    return [np.asarray([t] + fiber, dtype=float) for t in ts]


@dataclass
class EinsteinCheck:
    oracle: float
    closed_form: float
    routes: float

    @property
    def worst(self) -> float:
        return max(self.oracle, self.closed_form, self.routes)

    def to_json(self) -> dict[str, float]:
        return {"oracle": self.oracle, "closed_form": self.closed_form, "routes": self.routes}


def einstein_check(spec: SpaceSpec, params: QscParams, alpha: float, ts=(0.0, 0.25, 0.5, 0.75, 1.0)) -> EinsteinCheck:
    """Largest deviation of ``Ric - alpha g`` by the oracle and by the closed forms."""
    oracle = cf = routes = 0.0
    for p in sample_points(spec, ts):
        at = analyze(spec, p, params)
        ric_cf = ricci_matrix(spec, params, p)
        oracle = max(oracle, compare_tensors(at.ricci, alpha * at.metric).max_rel)
        cf = max(cf, compare_tensors(ric_cf, alpha * at.metric).max_rel)
        routes = max(routes, compare_tensors(ric_cf, at.ricci).max_rel)
    return EinsteinCheck(oracle, cf, routes)


def family_check(fam: Family, l: int, constants: dict[str, float] | None = None) -> EinsteinCheck:
    """Realize an Einstein family for one fiber and measure ``Ric - alpha g``."""
    lam1, lam2 = fam.constraints["lambda1"], fam.constraints["lambda2"]
    alphaF = fam.derived_constraints(constants).get("alpha_F", fam.constraints.get("alpha_F", 0.0))
    spec, params = realize([fam.instance(constants)], [l], lam1, lam2, [alphaF])
    return einstein_check(spec, params, fam.constraints["alpha"])


def dimF1_alpha(lambda1: float, lambda2: float, f, ts=None) -> ScalarProfile:
    """The Einstein constant forced pointwise by the one-dimensional fiber equation."""
    ts = grid() if ts is None else ts
    f0, f1, f2 = along(as_expr(f), ts)
    if np.min(f0) <= 0:
        raise DomainError("f is not positive on the grid")
    return _profile((lambda2 * f1 + (lambda1**2 - lambda1 * lambda2) * f0 - f2) / f0)


def _fingerprint(diff: np.ndarray, labels: Sequence[str], tol: float) -> str:
    signs = ["0" if abs(d) <= tol else ("+" if d > 0 else "-") for d in np.diag(diff)]
    return ",".join(f"{a}:{s}" for a, s in zip(labels, signs))


def family_cross_check(fam: Family, l: int, constants=None, tol: float = 1e-8) -> dict[str, Any]:
    """Oracle verdict for one Einstein family, with a sign fingerprint when it fails."""
    chk = family_check(fam, l, constants)
    out = {"case_id": fam.case_id, **chk.to_json(), "status": "match" if chk.worst <= tol else "ledger"}
    if out["status"] == "ledger":
        lam1, lam2 = fam.constraints["lambda1"], fam.constraints["lambda2"]
        alphaF = fam.derived_constraints(constants).get("alpha_F", fam.constraints.get("alpha_F", 0.0))
        spec, params = realize([fam.instance(constants)], [l], lam1, lam2, [alphaF])
        at = analyze(spec, sample_points(spec, [0.5])[0], params)
        labels = ["t"] + [f"y{k}" for k in range(l)]
        out["fingerprint"] = _fingerprint(at.ricci - fam.constraints["alpha"] * at.metric, labels, tol)
    return out
