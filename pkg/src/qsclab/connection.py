"""Quarter-symmetric connections built from a vector field ``P``.

The connection is

    nabla'_X Y = nabla_X Y + l1 * pi(Y) X - l2 * g(X, Y) P,   pi(X) = g(X, P),

where ``nabla`` is the Levi-Civita connection.  Its curvature is computed in
two independent ways: from the modified connection coefficients, and from the
Levi-Civita curvature plus the explicit correction terms in ``nabla P``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError, SpecError
from .expr import ScalarExpr, as_expr
from .geometry import (
    ConnectionJet,
    Frame,
    christoffel,
    curvature_from_conn,
    orthonormal_frame,
    ricci_scalar_from_curv,
)
from .jet import Jet2
from .models import MetricJet, SpaceSpec


@dataclass(frozen=True)
class PField:
    """The generating field: on the base, on one fiber, or identically zero."""

    where: str
    components: tuple[ScalarExpr, ...] = ()
    index: int | None = None

    def __post_init__(self):
        if self.where not in ("base", "fiber", "zero"):
            raise SpecError(f"P must live on the base, a fiber, or be zero; got {self.where!r}")
        object.__setattr__(self, "components", tuple(as_expr(c) for c in self.components))
        if self.where == "fiber" and self.index is None:
            raise SpecError("a fiber field needs a fiber index")
        if self.where != "fiber" and self.index is not None:
            raise SpecError("only fiber fields carry an index")

    @classmethod
    def base(cls, components: Sequence) -> "PField":
        return cls("base", tuple(components))

    @classmethod
    def fiber(cls, index: int, components: Sequence) -> "PField":
        return cls("fiber", tuple(components), int(index))

    @classmethod
    def zero(cls) -> "PField":
        return cls("zero")

    def validate(self, spec: SpaceSpec) -> None:
        if self.where == "zero":
            return
        if self.where == "base":
            names, dim = set(spec.base.coords), spec.base.dim
        else:
            if not 0 <= self.index < len(spec.fibers):
                raise SpecError(f"fiber index {self.index} out of range")
            fib = spec.fibers[self.index]
            names, dim = set(fib.coords), fib.dim
        if len(self.components) != dim:
            raise SpecError(f"P needs {dim} components on its factor, got {len(self.components)}")
        for c in self.components:
            if not c.names <= names:
                raise SpecError(f"P component {c} depends on names outside its factor")

    def slice_in(self, spec: SpaceSpec) -> slice | None:
        if self.where == "base":
            return spec.base_slice
        if self.where == "fiber":
            return spec.fiber_slice(self.index)
        return None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"where": self.where}
        if self.index is not None:
            out["index"] = self.index
        if self.components:
            out["components"] = [c.source for c in self.components]
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PField":
        where = data.get("where")
        idx = data.get("index")
        return cls(where, tuple(data.get("components", ())), None if idx is None else int(idx))


@dataclass(frozen=True)
class QscParams:
    """Connection parameters.

    In strict mode both coefficients must be nonzero and ``P`` may not vanish,
    which is the setting of every result implemented here.  Non-strict mode
    exists for tests that need the Levi-Civita limit.
    """

    lambda1: float
    lambda2: float
    P: PField
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lambda1", float(self.lambda1))
        object.__setattr__(self, "lambda2", float(self.lambda2))
        if self.strict:
            if self.lambda1 == 0.0:
                raise SpecError("lambda1 must be nonzero")
            if self.lambda2 == 0.0:
                raise SpecError("lambda2 must be nonzero")
            if self.P.where == "zero":
                raise SpecError("P must not be identically zero")

    def to_json(self) -> dict[str, Any]:
        out = {"lambda1": self.lambda1, "lambda2": self.lambda2, "P": self.P.to_json()}
        if not self.strict:
            out["strict"] = False
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "QscParams":
        try:
            return cls(
                data["lambda1"], data["lambda2"], PField.from_json(data["P"]),
                bool(data.get("strict", True)),
            )
        except KeyError as exc:
            raise SpecError(f"connection parameters are missing {exc.args[0]!r}") from None


def p_field_at(spec: SpaceSpec, P: PField, point) -> tuple[np.ndarray, np.ndarray]:
    """Components ``P^k`` and their derivatives ``dP[m, k]`` at ``point``."""
    P.validate(spec)
    n = spec.dim
    vals = np.zeros(n)
    jac = np.zeros((n, n))
    sl = P.slice_in(spec)
    if sl is None:
        return vals, jac
    env = spec.coordinate_jets(point)
    for k, c in zip(range(sl.start, sl.stop), P.components):
        v = c.evaluate(env)
        if isinstance(v, Jet2):
            vals[k], jac[:, k] = v.value, v.grad
        else:
            vals[k] = v
    return vals, jac


def qsc_coefficients(
    mj: MetricJet, lc: ConnectionJet, P: np.ndarray, dP: np.ndarray, l1: float, l2: float
) -> ConnectionJet:
    """Modified coefficients and their derivatives from Levi-Civita data."""
    g, dg = mj.g, mj.dg
    n = g.shape[0]
    eye = np.eye(n)
    pi = g @ P
    dpi = np.einsum("mjl,l->mj", dg, P) + np.einsum("jl,ml->mj", g, dP)
    gamma = lc.gamma + l1 * np.einsum("ki,j->kij", eye, pi) - l2 * np.einsum("ij,k->kij", g, P)
    dgamma = (
        lc.dgamma
        + l1 * np.einsum("ki,mj->mkij", eye, dpi)
        - l2 * (np.einsum("mij,k->mkij", dg, P) + np.einsum("ij,mk->mkij", g, dP))
    )
    return ConnectionJet(gamma, dgamma)


def covariant_derivative(gamma: np.ndarray, P: np.ndarray, dP: np.ndarray) -> np.ndarray:
    """``D[a, k]``: component ``k`` of ``nabla_{d_a} P``."""
    return dP + np.einsum("kam,m->ak", gamma, P)


def qsc_curvature_from_lc(
    g: np.ndarray, R: np.ndarray, P: np.ndarray, D: np.ndarray, l1: float, l2: float
) -> np.ndarray:
    """Curvature of the modified connection assembled from the Levi-Civita curvature."""
    n = g.shape[0]
    eye = np.eye(n)
    pi = g @ P
    piP = float(pi @ P)
    Dlow = D @ g  # Dlow[a, k] = g(d_k, nabla_a P)
    out = R.copy()
    out += l1 * np.einsum("ik,lj->lijk", Dlow, eye)
    out -= l1 * np.einsum("jk,li->lijk", Dlow, eye)
    out += l2 * np.einsum("ik,jl->lijk", g, D)
    out -= l2 * np.einsum("jk,il->lijk", g, D)
    out += l1 * l2 * piP * (np.einsum("ik,lj->lijk", g, eye) - np.einsum("jk,li->lijk", g, eye))
    out += l2 * l2 * (np.einsum("jk,i,l->lijk", g, pi, P) - np.einsum("ik,j,l->lijk", g, pi, P))
    out += l1 * l1 * (np.einsum("k,j,li->lijk", pi, pi, eye) - np.einsum("k,i,lj->lijk", pi, pi, eye))
    return out


def qsc_conn_at(spec: SpaceSpec, params: QscParams, point) -> ConnectionJet:
    mj = spec.metric_jet(point)
    P, dP = p_field_at(spec, params.P, point)
    return qsc_coefficients(mj, christoffel(mj), P, dP, params.lambda1, params.lambda2)


def torsion_at(spec: SpaceSpec, params: QscParams, point) -> np.ndarray:
    """Torsion ``T[k, i, j]``, the ``d_k`` component of ``T(d_i, d_j)``, from coefficients."""
    G = qsc_conn_at(spec, params, point).gamma
    return G - G.transpose(0, 2, 1)


def torsion_formula(g: np.ndarray, P: np.ndarray, l1: float) -> np.ndarray:
    """``T(X, Y) = l1 (pi(Y) X - pi(X) Y)`` in components."""
    pi = g @ P
    eye = np.eye(g.shape[0])
    return l1 * (np.einsum("j,ki->kij", pi, eye) - np.einsum("i,kj->kij", pi, eye))


def non_metricity_at(spec: SpaceSpec, params: QscParams, point) -> np.ndarray:
    """``Q[i, j, k] = (nabla'_{d_i} g)(d_j, d_k)`` from coefficients."""
    mj = spec.metric_jet(point)
    G = qsc_conn_at(spec, params, point).gamma
    return mj.dg - np.einsum("lij,lk->ijk", G, mj.g) - np.einsum("lik,jl->ijk", G, mj.g)


def non_metricity_formula(g: np.ndarray, P: np.ndarray, l1: float, l2: float) -> np.ndarray:
    """``(l2 - l1) [g(X, Y) pi(Z) + g(X, Z) pi(Y)]`` in components."""
    pi = g @ P
    return (l2 - l1) * (np.einsum("ij,k->ijk", g, pi) + np.einsum("ik,j->ijk", g, pi))


def curvature_qsc_coeff(spec: SpaceSpec, params: QscParams, point) -> np.ndarray:
    """Curvature differentiated directly from the modified coefficients."""
    return curvature_from_conn(qsc_conn_at(spec, params, point))


def curvature_qsc_direct(spec: SpaceSpec, params: QscParams, point) -> np.ndarray:
    """Curvature from the Levi-Civita curvature plus the correction terms."""
    mj = spec.metric_jet(point)
    lc = christoffel(mj)
    P, dP = p_field_at(spec, params.P, point)
    D = covariant_derivative(lc.gamma, P, dP)
    return qsc_curvature_from_lc(mj.g, curvature_from_conn(lc), P, D, params.lambda1, params.lambda2)


@dataclass(frozen=True)
class TensorAtPoint:
    """Everything the oracle knows at one point, for one connection."""

    point: np.ndarray
    metric: np.ndarray
    inverse_metric: np.ndarray
    conn: ConnectionJet
    curv: np.ndarray
    ricci: np.ndarray
    scalar: float
    frame: Frame


def analyze(spec: SpaceSpec, point, params: QscParams | None = None) -> TensorAtPoint:
    """Oracle data for the Levi-Civita connection, or the modified one if ``params`` is given."""
    p = spec.point(point)
    mj = spec.metric_jet(p)
    conn = christoffel(mj)
    if params is not None:
        P, dP = p_field_at(spec, params.P, p)
        conn = qsc_coefficients(mj, conn, P, dP, params.lambda1, params.lambda2)
    curv = curvature_from_conn(conn)
    frame = orthonormal_frame(mj.g)
    ric, scalar = ricci_scalar_from_curv(curv, mj.g, frame)
    return TensorAtPoint(p, mj.g, np.linalg.inv(mj.g), conn, curv, ric, scalar, frame)


def sub_qsc(
    mj: MetricJet, P: np.ndarray, dP: np.ndarray, l1: float, l2: float
) -> tuple[ConnectionJet, np.ndarray, np.ndarray, float]:
    """Connection, curvature, Ricci and scalar for a bare metric jet and field."""
    conn = qsc_coefficients(mj, christoffel(mj), P, dP, l1, l2)
    curv = curvature_from_conn(conn)
    ric, scalar = ricci_scalar_from_curv(curv, mj.g)
    return conn, curv, ric, scalar


def require_nonzero_P(P: np.ndarray) -> None:
    if not np.any(P):
        raise DomainError("P vanishes at this point")
