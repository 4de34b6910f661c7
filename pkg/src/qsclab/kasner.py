"""Generalized Kasner space-times ``-dt^2 + sum phi^(2 p_i) g_{F_i}`` with ``P = d/dt``.

Four-dimensional types: I has one 3-dimensional fiber, II has fibers of
dimension (1, 2), III has three circles.  Type I questions are answered by
the single-fiber solvers in :mod:`qsclab.grw`.

Every verdict carries its family for ``phi`` (or for ``psi`` with
``phi = psi^k``) and the maximum residual of each governing equation.  A
classification case whose stated data do not satisfy those equations is
still returned, with status ``"rejected"`` and the measured residuals.
Cases that need an exponent vector with a prescribed ``eta/zeta^2`` get an
explicit witness; when none exists the verdict is ``"infeasible"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import grw
from .connection import analyze
from .errors import DomainError, SpecError
from .expr import ScalarExpr, as_expr, format_number
from .ode import RESIDUAL_TOL, TAU, Family, along, exp_term, grid, is_zero, sign_cmp, times_exp, unit_scale

TYPE_DIMS = {"I": (3,), "II": (1, 2), "III": (1, 1, 1)}


def kasner_params(p: Sequence[float], dims: Sequence[int]) -> tuple[float, float]:
    """``(zeta, eta) = (sum l_i p_i, sum l_i p_i^2)``."""
    if len(p) != len(dims):
        raise SpecError("one exponent per fiber is required")
    zeta = sum(l * q for l, q in zip(dims, p))
    eta = sum(l * q * q for l, q in zip(dims, p))
    return float(zeta), float(eta)


def type_of(dims: Sequence[int]) -> str | None:
    for name, d in TYPE_DIMS.items():
        if tuple(dims) == d:
            return name
    return None


@dataclass(frozen=True)
class KasnerSpec:
    """Exponents, fiber dimensions, ``phi`` and the connection parameters."""

    p: tuple[float, ...]
    dims: tuple[int, ...]
    phi: ScalarExpr
    lambda1: float
    lambda2: float
    zeta: float | None = None
    eta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "phi", as_expr(self.phi))
        zeta, eta = kasner_params(self.p, self.dims)
        for name, stored, value in (("zeta", self.zeta, zeta), ("eta", self.eta, eta)):
            if stored is not None and stored != value:
                raise SpecError(f"stored {name} {stored} does not match the exponents ({value})")
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "eta", eta)
        if self.lambda1 * self.lambda2 == 0:
            raise SpecError("lambda1 and lambda2 must be nonzero")

    @property
    def nbar(self) -> int:
        return 1 + sum(self.dims)

    @property
    def kind(self) -> str | None:
        return type_of(self.dims)

    def warpings(self, phi: ScalarExpr | None = None) -> list[str]:
        src = (phi or self.phi).source
        return ["1" if q == 0 else f"({src})**({format_number(q)})" for q in self.p]


# ---------------------------------------------------------------------
# governing equations
# ---------------------------------------------------------------------


def einstein_arrays(p, dims, l1, l2, alpha, alphas, f, f1, f2) -> list[np.ndarray]:
    """Residuals of the time equation and each fiber equation for ``phi``."""
    zeta, eta = kasner_params(p, dims)
    nbar = 1 + sum(dims)
    d, dd = f1 / f, f2 / f
    out = [zeta * (l2 * d - dd) - (eta - zeta) * d**2 + (l1**2 - l1 * l2) * (nbar - 1) - alpha]
    rhs = alpha - l2**2 + (nbar - 1) * l1 * l2
    for q, a in zip(p, alphas):
        out.append(
            a / f ** (2 * q) - q * dd - (zeta - 1) * q * d**2 + (l2 * zeta + ((nbar - 1) * l1 - l2) * q) * d - rhs
        )
    return out


def kasner_einstein_residuals(spec: KasnerSpec, alpha: float, alphas: Sequence[float], ts=None) -> list[np.ndarray]:
    """Pointwise Einstein residuals along the grid."""
    ts = grid() if ts is None else ts
    f, f1, f2 = along(spec.phi, ts)
    if np.min(f) <= 0:
        raise DomainError("phi is not positive on the grid")
    return einstein_arrays(spec.p, spec.dims, spec.lambda1, spec.lambda2, alpha, alphas, f, f1, f2)


def scalar_arrays(p, dims, l1, l2, SFs, f, f1, f2) -> np.ndarray:
    zeta, eta = kasner_params(p, dims)
    nbar = 1 + sum(dims)
    d, dd = f1 / f, f2 / f
    S = sum(s / f ** (2 * q) for s, q in zip(SFs, p))
    return (
        S - 2 * zeta * dd - (eta + zeta**2 - 2 * zeta) * d**2 + (l1 + l2) * zeta * (nbar - 1) * d
        + (nbar - 1) * (l1**2 + l2**2 - nbar * l1 * l2)
    ) * np.ones_like(f)


def kasner_scalar(spec: KasnerSpec, SFs: Sequence[float] | None = None, ts=None) -> grw.ScalarProfile:
    """Scalar curvature along the grid and its deviation from constancy."""
    ts = grid() if ts is None else ts
    f, f1, f2 = along(spec.phi, ts)
    if np.min(f) <= 0:
        raise DomainError("phi is not positive on the grid")
    SFs = list(SFs or [0.0] * len(spec.dims))
    return grw._profile(scalar_arrays(spec.p, spec.dims, spec.lambda1, spec.lambda2, SFs, f, f1, f2))


def _einstein_residual(p, dims, l1, l2, alpha, alphas):
    def res(t, f, f1, f2, c):
        return einstein_arrays(p, dims, l1, l2, alpha, alphas, f, f1, f2)

    return res


def _scalar_residual(p, dims, l1, l2, SFs, Sbar):
    def res(t, f, f1, f2, c):
        return scalar_arrays(p, dims, l1, l2, SFs, f, f1, f2) - Sbar

    return res


def psi_ode(l1: float, l2: float, Sbar: float, SF: float, q2: float, zeta: float, eta: float):
    """Residual of the linearized equation for ``psi`` with ``phi = psi^(2 zeta/(eta + zeta^2))``.

    ``q2`` is the exponent of the two-dimensional fiber; the source term is
    absent when ``SF`` is zero.
    """
    k = zeta**2 / (eta + zeta**2)
    q = 3 * l1**2 + 3 * l2**2 - 12 * l1 * l2

    def res(t, u, u1, u2, c):
        out = -4 * k * u2 + 6 * (l1 + l2) * k * u1 + (q - Sbar) * u
        if SF:
            out = out + SF * u ** (1 - 4 * q2 * zeta / (eta + zeta**2))
        return out

    return res


# ---------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------


@dataclass
class KasnerVerdict:
    kind: str
    case: str
    lambda1: float
    lambda2: float
    p: tuple[float, ...]
    family: Family | None
    labels: tuple[str, ...] = ()
    alpha: float | None = None
    alpha_i: tuple[float, ...] | None = None
    Sbar: float | None = None
    SF: tuple[float, ...] | None = None
    status: str = "valid"
    note: str = ""
    advisory: list[str] = field(default_factory=list)
    residuals: dict[str, float] = field(default_factory=dict)
    phi_power: float | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return TYPE_DIMS[self.kind]

    @property
    def zeta(self) -> float | None:
        return kasner_params(self.p, self.dims)[0] if len(self.p) == len(self.dims) else None

    @property
    def eta(self) -> float | None:
        return kasner_params(self.p, self.dims)[1] if len(self.p) == len(self.dims) else None

    @property
    def emitted(self) -> bool:
        return self.status == "valid"

    @property
    def residual_max(self) -> float:
        return max(self.residuals.values()) if self.residuals else math.nan

    def phi_expr(self, constants: dict[str, float] | None = None) -> ScalarExpr | None:
        if self.family is None:
            return None
        inst = self.family.instance(constants)
        if self.phi_power is None:
            return inst
        return ScalarExpr(f"({inst.source})**({format_number(self.phi_power)})")

    def phi_source(self) -> str | None:
        if self.family is None:
            return None
        if self.phi_power is None:
            return self.family.expr.source
        return f"({self.family.expr.source})**({format_number(self.phi_power)})"

    def measure(self, constants: dict[str, float] | None = None) -> dict[str, float]:
        """Per-equation scaled residual maxima for one choice of constants."""
        out = dict(zip(self.labels, self.family.parts(constants)))
        if self.Sbar is not None and self.phi_power is not None:
            spec = KasnerSpec(self.p, self.dims, self.phi_expr(constants), self.lambda1, self.lambda2)
            prof = kasner_scalar(spec, self.SF)
            out["scalar"] = float(np.max(np.abs(prof.values - self.Sbar)))
        return out

    def verify(self, rng: np.random.Generator | None = None, draws: int = 0) -> float:
        """Residuals at the default constants and at ``draws`` random admissible ones."""
        if self.family is None:
            return math.nan
        worst = self.measure()
        for _ in range(draws):
            c = self.family.draw(rng)
            for k, v in self.measure(c).items():
                worst[k] = max(worst[k], v)
        self.residuals = worst
        self.family.residual_max = max(worst.values())
        return self.family.residual_max

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "type": self.kind,
            "case": self.case,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "p": list(self.p) or None,
            "zeta": self.zeta,
            "eta": self.eta,
        }
        if self.Sbar is not None:
            out["Sbar"] = self.Sbar
        else:
            out["alpha"] = self.alpha
            out["alpha_i"] = list(self.alpha_i or ())
        if self.SF is not None:
            out["S_F"] = list(self.SF)
        out["phi"] = self.phi_source()
        if self.family is not None:
            out["constants"] = dict(sorted(self.family._consts(None).items()))
            if self.phi_power is not None:
                out["psi"] = self.family.expr.source
        out["status"] = self.status
        out["residuals"] = dict(self.residuals)
        if self.note:
            out["note"] = self.note
        if self.advisory:
            out["advisory"] = list(self.advisory)
        return out


def _einstein_verdict(kind, case, l1, l2, p, phi_src, alpha, alphas, note="", advisory=None) -> KasnerVerdict:
    dims = TYPE_DIMS[kind]
    fam = Family(
        case, "phi", ScalarExpr(phi_src), _einstein_residual(p, dims, l1, l2, alpha, alphas),
        constraints={"alpha": alpha, "alpha_i": list(alphas)}, scale=unit_scale,
    )
    fam.fix_defaults()
    labels = {"II": ("time", "fiber1", "fiber2"), "III": ("time", "fiber1", "fiber2", "fiber3")}[kind]
    v = KasnerVerdict(kind, case, l1, l2, tuple(p), fam, labels, alpha, tuple(alphas), note=note, advisory=advisory or [])
    v.verify()
    if v.residual_max > RESIDUAL_TOL:
        v.status = "rejected"
    return v


def _infeasible(kind, case, l1, l2, note, **kw) -> KasnerVerdict:
    return KasnerVerdict(kind, case, l1, l2, kw.pop("p", ()), None, status="infeasible", note=note, **kw)


def ratio_witness(rho: float, tau: float = TAU) -> list[float]:
    """The smallest ``p2`` with ``p1 = 1`` and ``(p1^2 + 2 p2^2)/(p1 + 2 p2)^2 = rho``."""
    A, B, C = 2 - 4 * rho, -4 * rho, 1 - rho
    if is_zero(A, tau):
        roots = [-C / B] if B else []
    else:
        D = B * B - 4 * A * C
        if D < -tau:
            return []
        s = math.sqrt(max(D, 0.0))
        roots = sorted({(-B + s) / (2 * A), (-B - s) / (2 * A)})
    roots = [r for r in roots if not is_zero(1 + 2 * r, 1e-12)]
    return sorted(roots, key=abs)[:1]


def classify_typeII_einstein(lambda1: float, lambda2: float, tau: float = TAU) -> list[KasnerVerdict]:
    """Every case of the Type II Einstein classification whose predicates hold."""
    l1, l2 = float(lambda1), float(lambda2)
    if l1 * l2 == 0:
        raise SpecError("lambda1 and lambda2 must be nonzero")
    sc = max(1.0, l1**2, l2**2)
    z = lambda x: is_zero(x, tau, sc)
    out: list[KasnerVerdict] = []
    sq3 = z(l2**2 - 3 * l1**2)
    triple = z(l2 - 3 * l1)
    quad = 6 * l1**2 - 3 * l1 * l2 - l2**2
    R = quad / (3 * l1 - l2) if not triple else math.nan
    a_sq3 = 3 * l1**2 - 3 * l1 * l2
    if sq3:
        out.append(_einstein_verdict("II", "T4.19(1)", l1, l2, (0.0, 0.0), "c", a_sq3, (0.0, 0.0)))
        out.append(_einstein_verdict("II", "T4.19(2)", l1, l2, (1.0, 2.0), "c", a_sq3, (0.0, 0.0)))
    den = (3 * l1 - l2) ** 2
    a35 = (18 * l1**4 - 6 * l1 * l2**3 + 24 * l1**2 * l2**2 - 36 * l1**3 * l2) / den if not triple else math.nan
    if not sq3 and not triple and not z(R):
        a2 = (18 * l1**4 - 2 * l2**4 + 6 * l1 * l2**3 - 18 * l1**3 * l2) / den
        k = (3 * l1**2 - l2**2) / (3 * l1 - l2)
        out.append(_einstein_verdict(
            "II", "T4.19(3)", l1, l2, (1.0, 0.0), times_exp("c", k), a35, (0.0, a2),
            advisory=[f"derivation branch has (6l1^2-3l1l2-l2^2)/(3l1-l2) < 0; here {format_number(R)}"],
        ))
    if l2**2 < 3 * l1**2 and not sq3 and not triple and not z(R):
        rho = (3 * l1**2 - l2**2) / den
        adv = [f"derivation branch has (6l1^2-3l1l2-l2^2)/(3l1-l2) > 0; here {format_number(R)}"]
        roots = ratio_witness(rho, tau)
        if not roots:
            out.append(_infeasible("II", "T4.19(4)", l1, l2, "no exponents reach eta/zeta^2", advisory=adv))
        for p2 in roots:
            zeta = 1 + 2 * p2
            out.append(_einstein_verdict(
                "II", "T4.19(4)", l1, l2, (1.0, p2), times_exp("c", (3 * l1 - l2) / zeta), 0.0, (0.0, 0.0),
                advisory=adv,
            ))
    X = 18 * l1**4 - l2**4 + 6 * l1 * l2**3 - 15 * l1**2 * l2**2
    if not triple and R < 0 and not z(X):
        out.append(_einstein_verdict(
            "II", "T4.19(5)", l1, l2, (1.0, 0.0), times_exp("c", (3 * l1 * l2 - 3 * l1**2) / (3 * l1 - l2)),
            a35, (0.0, X / den), note="stated exponent and alpha_2 do not satisfy the field equations",
        ))
    if z(l1 - l2):
        out.append(_einstein_verdict(
            "II", "T4.19(6)", l1, l2, (0.0, 1.0), times_exp("c0", l1), 0.0, (0.0, 0.0),
            advisory=[f"derivation branch has lambda1 = lambda2 < 0; here {format_number(l1)}"],
        ))
    for s in (1.0, -1.0):
        if z(l1**2 - (5 + s * math.sqrt(3)) / 6 * l2**2):
            p2 = 1.0
            p1 = (1 + s * math.sqrt(3)) * p2
            a2 = (p2 - p1) * (l2**2 - 3 * l1 * l2) / p1
            out.append(_einstein_verdict(
                "II", "T4.19(7)", l1, l2, (p1, p2), times_exp("c", l2 / (2 * p1)), 3 * l1**2 - 3 * l1 * l2, (0.0, a2),
                note="stated exponent and alpha_2 do not satisfy the field equations",
            ))
    if z(quad):
        if 3 * l1**2 - l2**2 > 0:
            rho = l2**2 / (4 * (3 * l1**2 - l2**2))
            roots = ratio_witness(rho, tau)
        else:
            roots = []
        if not roots:
            out.append(_infeasible(
                "II", "T4.19(8)", l1, l2, "needs eta/zeta^2 = lambda2^2/(4(3lambda1^2-lambda2^2)) > 0",
            ))
        for p2 in roots:
            zeta, eta = kasner_params((1.0, p2), (1, 2))
            out.append(_einstein_verdict(
                "II", "T4.19(8)", l1, l2, (1.0, p2), times_exp("c", l2 / 2 * zeta / eta), 0.0, (0.0, 0.0),
                note="exponents chosen with eta/zeta^2 = lambda2^2/(4(3lambda1^2-lambda2^2))",
            ))
        out.append(_einstein_verdict(
            "II", "T4.19(9)", l1, l2, (1.0, 0.0), times_exp("c", l2 / 2),
            l2**2 / 4 + 3 * l1**2 - 3 * l1 * l2, (0.0, 3 * l1**2 - 1.25 * l2**2),
        ))
    return out


def typeIII_witness(rho: float, zeta: float = 6.0, tau: float = TAU) -> tuple[float, float, float] | None:
    """Distinct exponents with ``sum p = zeta`` and ``sum p^2 = rho zeta^2``, or None."""
    p1 = zeta / 3
    eta = rho * zeta**2
    s = zeta - p1
    prod = (s**2 - (eta - p1**2)) / 2
    disc = s**2 - 4 * prod
    if disc <= tau * max(1.0, s**2):
        return None
    r = math.sqrt(disc)
    return (p1, (s + r) / 2, (s - r) / 2)


def classify_typeIII_einstein(lambda1: float, lambda2: float, zeta: float = 6.0, tau: float = TAU) -> list[KasnerVerdict]:
    """Type III Einstein cases with pairwise distinct exponents."""
    l1, l2 = float(lambda1), float(lambda2)
    if l1 * l2 == 0:
        raise SpecError("lambda1 and lambda2 must be nonzero")
    if zeta == 0:
        raise SpecError("the exponential case needs zeta != 0")
    sc = max(1.0, l1**2, l2**2)
    out: list[KasnerVerdict] = []
    if is_zero(l2**2 - 3 * l1**2, tau, sc):
        a = 3 * l1**2 - 3 * l1 * l2
        out.append(_infeasible(
            "III", "T4.20(1)", l1, l2, "zeta = eta = 0 forces equal exponents", alpha=a, alpha_i=(0.0,) * 3,
        ))
        out.append(_einstein_verdict("III", "T4.20(2)", l1, l2, (-1.0, 0.0, 1.0), "c", a, (0.0,) * 3))
    if not is_zero(l2 - 3 * l1, tau, sc):
        rho = (3 * l1**2 - l2**2) / (3 * l1 - l2) ** 2
        p = typeIII_witness(rho, zeta, tau)
        if p is None:
            out.append(_infeasible(
                "III", "T4.20(3)", l1, l2, f"no distinct exponents with eta/zeta^2 = {format_number(rho)}",
                alpha=0.0, alpha_i=(0.0,) * 3,
            ))
        else:
            out.append(_einstein_verdict(
                "III", "T4.20(3)", l1, l2, p, times_exp("c", (3 * l1 - l2) / zeta), 0.0, (0.0,) * 3,
                note=f"witness with zeta = {format_number(zeta)}",
            ))
    return out


def classify_typeI_einstein(lambda1: float, lambda2: float, tau: float = TAU) -> list[Family]:
    """Type I is the single-fiber case with ``l = 3``."""
    return grw.classify_einstein_dimFl(lambda1, lambda2, 3, tau)


def typeI_einstein_consistency(fam: Family, constants: dict[str, float] | None = None) -> float:
    """Residual of the Kasner Einstein equations for a Type I family with ``p = 1``."""
    alphaF = fam.derived_constraints(constants).get("alpha_F", 0.0)
    spec = KasnerSpec((1.0,), (3,), fam.instance(constants), fam.constraints["lambda1"], fam.constraints["lambda2"])
    res = kasner_einstein_residuals(spec, fam.constraints["alpha"], (alphaF,))
    f, _, _ = along(spec.phi, grid())
    return max(float(np.max(np.abs(r))) for r in res) / max(1.0, float(np.max(f * f)))


# ---------------------------------------------------------------------
# constant scalar curvature
# ---------------------------------------------------------------------


def _scalar_phi_verdict(kind, case, l1, l2, p, SF, Sbar, phi_src, note="") -> KasnerVerdict:
    dims = TYPE_DIMS[kind]
    fam = Family(case, "phi", ScalarExpr(phi_src), _scalar_residual(p, dims, l1, l2, SF, Sbar), scale=unit_scale)
    fam.fix_defaults()
    v = KasnerVerdict(kind, case, l1, l2, tuple(p), fam, ("scalar",), Sbar=Sbar, SF=tuple(SF), note=note)
    v.verify()
    if v.residual_max > RESIDUAL_TOL:
        v.status = "rejected"
    return v


def _psi_families(kind, prefix, l1, l2, p, Sbar, tau) -> list[KasnerVerdict]:
    zeta, eta = kasner_params(p, TYPE_DIMS[kind])
    k = zeta**2 / (eta + zeta**2)
    sig = l1 + l2
    q = 3 * l1**2 + 3 * l2**2 - 12 * l1 * l2
    thr = 9 * zeta**2 * sig**2 / (4 * (eta + zeta**2)) + q
    side = sign_cmp(Sbar, thr, tau)
    if side < 0:
        s = math.sqrt(9 * sig**2 / 4 + (q - Sbar) / k)
        case, src = f"{prefix}(a)", grw._terms(("c1", (1.5 * sig + s) / 2), ("c2", (1.5 * sig - s) / 2))
    elif side == 0:
        e = exp_term(0.75 * sig)
        case, src = f"{prefix}(b)", "(c1 + c2*t)" + ("" if e == "1" else f"*{e}")
    else:
        h = math.sqrt((Sbar - q) / k - 9 * sig**2 / 4) / 2
        case, src = f"{prefix}(c)", grw._trig(0.75 * sig, h)
    power = 2 * zeta / (eta + zeta**2)
    q2 = p[-1] if kind == "II" else 0.0
    fam = Family(
        case, "psi", ScalarExpr(src), psi_ode(l1, l2, Sbar, 0.0, q2, zeta, eta),
        constraints={"threshold": thr},
        positive=lambda u: np.power(np.where(u > 0, u, np.nan), power),
    )
    fam.fix_defaults()
    v = KasnerVerdict(
        kind, case, l1, l2, tuple(p), fam, ("psi",), Sbar=Sbar, SF=(0.0,) * len(p), phi_power=power,
    )
    v.verify()
    if v.residual_max > RESIDUAL_TOL:
        v.status = "rejected"
    return [v]


def _zeta_zero_families(kind, prefix, l1, l2, p, Sbar, tau) -> list[KasnerVerdict]:
    _, eta = kasner_params(p, TYPE_DIMS[kind])
    q = 3 * (l1**2 + l2**2 - 4 * l1 * l2)
    SF = (0.0,) * len(p)
    side = sign_cmp(Sbar, q, tau)
    if side > 0:
        return [_infeasible(kind, prefix, l1, l2, "Sbar above 3(l1^2+l2^2-4l1l2) has no solution", p=tuple(p), Sbar=Sbar)]
    if side == 0:
        return [_scalar_phi_verdict(kind, prefix, l1, l2, p, SF, Sbar, "c")]
    r = math.sqrt((q - Sbar) / eta)
    return [_scalar_phi_verdict(kind, prefix, l1, l2, p, SF, Sbar, times_exp("c0", s * r)) for s in (1.0, -1.0)]


def solve_typeIII_scalar(
    lambda1: float, lambda2: float, Sbar: float, p: Sequence[float] = (1.0, 1.0, 1.0), tau: float = TAU
) -> list[KasnerVerdict]:
    """Constant scalar curvature families for three circle fibers."""
    l1, l2 = float(lambda1), float(lambda2)
    if l1 * l2 == 0:
        raise SpecError("lambda1 and lambda2 must be nonzero")
    p = tuple(float(x) for x in p)
    if len(p) != 3:
        raise SpecError("Type III has three exponents")
    zeta, eta = kasner_params(p, (1, 1, 1))
    if is_zero(eta, tau):
        q = 3 * (l1**2 + l2**2 - 4 * l1 * l2)
        if sign_cmp(Sbar, q, tau) == 0:
            return [_scalar_phi_verdict("III", "T4.21(1)", l1, l2, p, (0.0,) * 3, Sbar, "c")]
        return [_infeasible("III", "T4.21(1)", l1, l2, "with all exponents zero Sbar is 3(l1^2+l2^2-4l1l2)", p=p, Sbar=Sbar)]
    if is_zero(zeta, tau):
        return _zeta_zero_families("III", "T4.21(2)", l1, l2, p, Sbar, tau)
    return _psi_families("III", "T4.21(3)", l1, l2, p, Sbar, tau)


def solve_typeII_scalar(
    lambda1: float, lambda2: float, Sbar: float, SF2: float = 0.0, p: Sequence[float] = (1.0, 1.0), tau: float = TAU
) -> list[KasnerVerdict]:
    """Constant scalar curvature for fibers of dimension (1, 2).

    Closed forms exist when the surface fiber is flat; otherwise the verdict
    is ``"residual_only"`` and :func:`typeII_scalar_residual` checks candidates.
    """
    l1, l2 = float(lambda1), float(lambda2)
    if l1 * l2 == 0:
        raise SpecError("lambda1 and lambda2 must be nonzero")
    p = tuple(float(x) for x in p)
    if len(p) != 2:
        raise SpecError("Type II has two exponents")
    zeta, eta = kasner_params(p, (1, 2))
    q = 3 * (l1**2 + l2**2 - 4 * l1 * l2)
    if is_zero(eta, tau):
        target = SF2 + q
        if sign_cmp(Sbar, target, tau) == 0:
            return [_scalar_phi_verdict("II", "E63", l1, l2, p, (0.0, SF2), Sbar, "c")]
        return [_infeasible("II", "E63", l1, l2, "with both exponents zero Sbar is S_F2 + 3(l1^2+l2^2-4l1l2)", p=p, Sbar=Sbar)]
    if SF2 != 0:
        v = KasnerVerdict("II", "E64" if is_zero(zeta, tau) else "E65", l1, l2, p, None,
                          Sbar=Sbar, SF=(0.0, SF2), status="residual_only",
                          note="curved surface fiber: no closed form, use typeII_scalar_residual")
        return [v]
    if is_zero(zeta, tau):
        return _zeta_zero_families("II", "E64", l1, l2, p, Sbar, tau)
    return _psi_families("II", "E65", l1, l2, p, Sbar, tau)


def typeII_scalar_residual(lambda1, lambda2, Sbar, SF2, p, phi, ts=None) -> dict[str, float]:
    """Residuals of a candidate ``phi`` against the Type II scalar equations.

    ``scalar`` is the deviation of the scalar curvature from ``Sbar``; for
    ``zeta != 0`` the equation for ``psi = phi^((eta + zeta^2)/(2 zeta))`` is
    reported as ``psi``.
    """
    ts = grid() if ts is None else ts
    spec = KasnerSpec(p, (1, 2), phi, lambda1, lambda2)
    f, f1, f2 = along(spec.phi, ts)
    if np.min(f) <= 0:
        raise DomainError("phi is not positive on the grid")
    scale = max(1.0, float(np.max(f * f)))
    S = scalar_arrays(spec.p, spec.dims, lambda1, lambda2, (0.0, SF2), f, f1, f2)
    out = {"scalar": float(np.max(np.abs(S - Sbar))) / scale}
    zeta, eta = spec.zeta, spec.eta
    if not is_zero(zeta):
        m = (eta + zeta**2) / (2 * zeta)
        u = f**m
        u1 = m * f ** (m - 1) * f1
        u2 = m * (m - 1) * f ** (m - 2) * f1**2 + m * f ** (m - 1) * f2
        r = psi_ode(lambda1, lambda2, Sbar, SF2, spec.p[1], zeta, eta)(ts, u, u1, u2, {})
        out["psi"] = float(np.max(np.abs(r))) / scale
    return out


def solve_typeI_scalar(lambda1: float, lambda2: float, Sbar: float, SF: float, tau: float = TAU) -> Family:
    return grw.solve_scalar_l3(lambda1, lambda2, Sbar, SF, tau)


# ---------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------


def realize_verdict(v: KasnerVerdict, constants: dict[str, float] | None = None):
    spec = KasnerSpec(v.p, v.dims, v.phi_expr(constants), v.lambda1, v.lambda2)
    if v.Sbar is not None:
        consts, kind = list(v.SF or (0.0,) * len(v.p)), "scalar"
    else:
        consts, kind = list(v.alpha_i or (0.0,) * len(v.p)), "einstein"
    return grw.realize(spec.warpings(), v.dims, v.lambda1, v.lambda2, consts, kind=kind)


def oracle_check(v: KasnerVerdict, ts=(0.0, 0.5, 1.0)) -> float:
    """Largest oracle deviation from ``Ric = alpha g`` or from the constant scalar curvature."""
    if v.family is None:
        raise SpecError("this verdict has no family to realize")
    space, params = realize_verdict(v)
    if v.Sbar is None:
        return grw.einstein_check(space, params, v.alpha, ts).worst
    worst = 0.0
    for pt in grw.sample_points(space, ts):
        worst = max(worst, abs(analyze(space, pt, params).scalar - v.Sbar) / max(1.0, abs(v.Sbar)))
    return worst
