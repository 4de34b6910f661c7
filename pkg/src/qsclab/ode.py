"""One-variable solution families checked on a fixed grid.

A family is a ScalarExpr in ``t`` with free constants (``c``, ``c0``,
``c1``, ``c2``).  Its governing equation is a callable taking the grid and
the value, first and second derivative arrays of the unknown plus the free
constants, and returns pointwise residuals.  Residuals are scaled by
``max(1, max f^2)`` over the grid, where ``f`` is the positive function the
family describes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import DomainError, QscError
from .expr import ScalarExpr, format_number
from .jet import Jet2

GRID_POINTS = 101
TAU = 1e-9
RESIDUAL_TOL = 1e-9
NEGATIVE_CONTROL = 1e-3
FREE_CONSTANTS = ("c", "c0", "c1", "c2")

# (t, u, u', u'', constants) -> residual array or list of arrays
Residual = Callable[..., Any]


def grid(n: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def along(expr: ScalarExpr, ts: np.ndarray, env: dict[str, float] | None = None, var: str = "t"):
    """Value, first and second derivative of ``expr`` in ``var`` at each grid point."""
    env = dict(env or {})
    out = np.empty((3, len(ts)))
    for k, t in enumerate(ts):
        env[var] = Jet2.variable(float(t), 0, 1)
        v = expr.evaluate(env)
        if isinstance(v, Jet2):
            out[:, k] = (v.value, v.grad[0], v.hess[0, 0])
        else:
            out[:, k] = (float(v), 0.0, 0.0)
    return out[0], out[1], out[2]


def scale_of(f: np.ndarray) -> float:
    return max(1.0, float(np.max(f * f)))


def unit_scale(f: np.ndarray) -> float:
    return 1.0


def sign_cmp(x: float, y: float, tau: float = TAU) -> int:
    """Three-way comparison with boundary snapping: within ``tau`` counts as equal."""
    d = x - y
    if abs(d) <= tau * max(1.0, abs(x), abs(y)):
        return 0
    return 1 if d > 0 else -1


def is_zero(x: float, tau: float = TAU, scale: float = 1.0) -> bool:
    return abs(x) <= tau * max(1.0, scale)


def exp_term(k: float, var: str = "t") -> str:
    """Source text for ``exp(k*t)`` that stays readable for k in {0, 1}."""
    if k == 0:
        return "1"
    if k == 1:
        return f"exp({var})"
    if k == -1:
        return f"exp(-{var})"
    return f"exp({format_number(k)}*{var})"


def times_exp(coef: str, k: float, var: str = "t") -> str:
    """``coef*exp(k*t)`` as source; the bare constant when ``k`` is zero."""
    e = exp_term(k, var)
    return coef if e == "1" else f"{coef}*{e}"


def linear_term(coef: float, monomial: str) -> str:
    """``coef*monomial`` as source; empty for zero, bare monomial for one."""
    if coef == 0:
        return ""
    if coef == 1:
        return monomial
    return f"{num(coef)}*{monomial}"


def join_terms(*terms: str) -> str:
    return " + ".join(t for t in terms if t) or "0"


def num(x: float) -> str:
    """A number as expression source, parenthesized when negative."""
    s = format_number(x)
    return f"({s})" if s.startswith("-") else s


@dataclass
class Family:
    """A closed-form family together with its governing residual.

    ``unknown`` names the grid function the expression gives (``f``, ``v``,
    ``psi``); ``positive`` maps that function to the one that must stay
    positive and sets the residual scale (``f = sqrt(v)``, ``phi``).
    ``scale`` maps that function to the residual divisor; residuals built
    from logarithmic derivatives are already scale free and use ``unit_scale``.
    """

    case_id: str
    unknown: str
    expr: ScalarExpr
    residual: Residual | None
    constants: dict[str, float] = field(default_factory=dict)
    constraints: dict[str, Any] = field(default_factory=dict)
    validity: str = ""
    applicable: bool = True
    status: str = "valid"
    note: str = ""
    positive: Callable[[np.ndarray], np.ndarray] | None = None
    constraint_fn: Callable[[dict[str, float]], dict[str, float]] | None = None
    residual_max: float = math.nan
    extra: dict[str, Any] = field(default_factory=dict)
    scale: Callable[[np.ndarray], float] = scale_of

    @property
    def free(self) -> tuple[str, ...]:
        return tuple(c for c in FREE_CONSTANTS if c in self.expr.names)

    def physical(self, values: np.ndarray) -> np.ndarray:
        return self.positive(values) if self.positive else values

    def derived_constraints(self, constants: dict[str, float] | None = None) -> dict[str, float]:
        """Constraints that depend on the free constants, e.g. a fiber Einstein constant."""
        if self.constraint_fn is None:
            return {}
        return self.constraint_fn(self._consts(constants))

    def _consts(self, constants):
        out = {c: 1.0 for c in self.free}
        out.update(self.constants)
        if constants:
            out.update(constants)
        return out

    def evaluate(self, ts: np.ndarray, constants: dict[str, float] | None = None):
        return along(self.expr, ts, self._consts(constants))

    def parts(
        self,
        constants: dict[str, float] | None = None,
        ts: np.ndarray | None = None,
        perturb: Callable[[np.ndarray], tuple] | None = None,
    ) -> list[float]:
        """Scaled maximum residual of each governing equation on the grid."""
        if self.residual is None:
            raise QscError(f"{self.case_id} has no governing residual")
        ts = grid() if ts is None else ts
        consts = self._consts(constants)
        u, u1, u2 = along(self.expr, ts, consts)
        if perturb is not None:
            d0, d1, d2 = perturb(ts)
            u, u1, u2 = u + d0, u1 + d1, u2 + d2
        phys = self.physical(u)
        if not np.all(np.isfinite(phys)) or np.min(phys) <= 0:
            raise DomainError(f"{self.case_id}: the family is not positive on the grid")
        res = self.residual(ts, u, u1, u2, consts)
        scale = self.scale(phys)
        return [float(np.max(np.abs(np.asarray(r)))) / scale for r in _as_list(res)]

    def check(
        self,
        constants: dict[str, float] | None = None,
        ts: np.ndarray | None = None,
        perturb: Callable[[np.ndarray], tuple] | None = None,
    ) -> float:
        """Scaled maximum residual on the grid."""
        return max(self.parts(constants, ts, perturb))

    def verify(self) -> float:
        self.residual_max = self.check()
        return self.residual_max

    def negative_control(self, amplitude: float = 0.01) -> float:
        """Residual after adding ``amplitude * scale * t^3`` to the unknown."""
        u, _, _ = self.evaluate(grid())
        a = amplitude * max(1.0, float(np.max(np.abs(u))))
        return self.check(perturb=lambda t: (a * t**3, 3 * a * t**2, 6 * a * t))

    def admissible(self, constants: dict[str, float], ts: np.ndarray | None = None) -> bool:
        ts = grid() if ts is None else ts
        try:
            u, _, _ = along(self.expr, ts, self._consts(constants))
            phys = self.physical(u)
        except (DomainError, ValueError, OverflowError, ZeroDivisionError):
            return False
        return bool(np.all(np.isfinite(phys)) and np.min(phys) > 1e-3)

    def draw(self, rng: np.random.Generator, tries: int = 500) -> dict[str, float]:
        """Random free constants keeping the family positive on the grid.

        Plain draws have magnitudes in [0.2, 2] and random signs; when none is
        admissible the defaults are rescaled by random factors in [0.5, 2].
        """
        names = self.free
        base = self._consts(None)
        for k in range(tries):
            if k < tries // 2:
                c = {n: float(rng.uniform(0.2, 2.0) * rng.choice((-1.0, 1.0))) for n in names}
            else:
                c = {n: float(base[n] * rng.uniform(0.5, 2.0) + rng.uniform(-0.1, 0.1)) for n in names}
            if self.admissible(c):
                return c
            flipped = {n: abs(v) for n, v in c.items()}
            if self.admissible(flipped):
                return flipped
        raise DomainError(f"{self.case_id}: no admissible constants found")

    def fix_defaults(self) -> None:
        """Pick default constants near 1 that keep the family positive."""
        names = self.free
        if self.admissible({}):
            return
        for trial in _default_trials(names):
            if self.admissible(trial):
                self.constants.update(trial)
                return

    def instance(self, constants: dict[str, float] | None = None) -> ScalarExpr:
        """The expression with the free constants substituted."""
        consts = self._consts(constants)
        src = self.expr.source
        for name in sorted(consts, key=len, reverse=True):
            src = re.sub(rf"\b{name}\b", num(consts[name]), src)
        return ScalarExpr(src)

    def to_json(self) -> dict[str, Any]:
        out = {
            "case_id": self.case_id,
            "unknown": self.unknown,
            "f_expr": self.expr.source,
            "constants": {k: v for k, v in sorted(self._consts(None).items())},
            "constraints": _jsonable({**self.constraints, **self.derived_constraints()}),
            "validity": self.validity,
            "applicable": self.applicable,
            "status": self.status,
            "residual_max": None if math.isnan(self.residual_max) else self.residual_max,
        }
        if self.note:
            out["note"] = self.note
        if self.extra:
            out.update(_jsonable(self.extra))
        return out

    def samples(self, ts: np.ndarray | None = None) -> list[tuple[float, float, float]]:
        """Rows of (t, value, pointwise scaled residual) for CSV output."""
        ts = grid() if ts is None else ts
        consts = self._consts(None)
        u, u1, u2 = along(self.expr, ts, consts)
        phys = self.physical(u)
        rows = np.zeros_like(ts)
        if self.residual is not None:
            for r in _as_list(self.residual(ts, u, u1, u2, consts)):
                rows = np.maximum(rows, np.abs(np.asarray(r)) * np.ones_like(ts))
            rows = rows / scale_of(phys)
        return [(float(t), float(p), float(r)) for t, p, r in zip(ts, phys, rows)]


def _default_trials(names: tuple[str, ...]):
    lead = (1.0, 2.0, 0.5, 5.0, 10.0)
    second = (0.0, -0.1, 0.1, -0.5, 0.5, -1.0, 1.0)
    for a in lead:
        for b in second:
            yield {n: (b if n == "c2" else a) for n in names}
    for a in lead:
        for b in second:
            yield {n: (a if n == "c2" else b) for n in names}
    for a in lead + (50.0, 100.0):
        yield {n: a for n in names}


def _as_list(res) -> list:
    return list(res) if isinstance(res, (list, tuple)) else [res]


def _jsonable(d: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, ScalarExpr):
            v = v.source
        elif isinstance(v, dict):
            v = _jsonable(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out
