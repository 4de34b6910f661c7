"""Coordinate oracle for Levi-Civita data, curvature, Ricci and scalar curvature.

Index conventions used throughout:

* ``gamma[k, i, j]`` is the coefficient of ``d_k`` in ``nabla_{d_i} d_j``.
* ``dgamma[m, k, i, j]`` is its derivative along coordinate ``m``.
* ``R[l, i, j, k]`` is the ``d_l`` component of ``R(d_i, d_j) d_k`` with
  ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y]``.
* Ricci contracts the curvature against an orthonormal frame as
  ``Ric(X, Y) = sum_k eps_k g(R(X, E_k) Y, E_k)``, which is the negative of
  the more common trace over the first slot.  Scalar curvature is the signed
  trace of that Ricci tensor.
* Laplacians, gradient norms and divergences are signed traces, so on a
  negative-definite interval the Laplacian of ``f`` is ``-f''``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FrameError
from .expr import ScalarExpr, as_expr
from .jet import Jet2, variables
from .models import MetricJet, SpaceSpec


@dataclass(frozen=True)
class ConnectionJet:
    """Connection coefficients with their first derivatives."""

    gamma: np.ndarray
    dgamma: np.ndarray


@dataclass(frozen=True)
class Frame:
    """Orthonormal frame: column ``k`` of ``vectors`` is ``E_k`` with sign ``signs[k]``."""

    vectors: np.ndarray
    signs: np.ndarray


def metric_at(spec: SpaceSpec, point) -> MetricJet:
    """Metric of the product at ``point`` with exact first and second derivatives."""
    return spec.metric_jet(point)


def inverse_metric_jet(mj: MetricJet) -> tuple[np.ndarray, np.ndarray]:
    """Inverse metric and its first derivatives ``dginv[m, k, l]``."""
    ginv = np.linalg.inv(mj.g)
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, mj.dg, ginv)
    return ginv, dginv


def christoffel(mj: MetricJet) -> ConnectionJet:
    """Levi-Civita coefficients and their derivatives from a metric jet."""
    ginv, dginv = inverse_metric_jet(mj)
    dg, ddg = mj.dg, mj.ddg
    # lowered[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    lowered = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    gamma = 0.5 * np.einsum("kl,ijl->kij", ginv, lowered)
    dlowered = ddg + ddg.transpose(0, 2, 1, 3) - ddg.transpose(0, 2, 3, 1)
    dgamma = 0.5 * (
        np.einsum("mkl,ijl->mkij", dginv, lowered) + np.einsum("kl,mijl->mkij", ginv, dlowered)
    )
    return ConnectionJet(gamma, dgamma)


def levi_civita_at(spec: SpaceSpec, point) -> ConnectionJet:
    return christoffel(metric_at(spec, point))


def curvature_from_conn(conn: ConnectionJet) -> np.ndarray:
    """Curvature components ``R[l, i, j, k]`` of an arbitrary linear connection."""
    G, dG = conn.gamma, conn.dgamma
    return (
        dG.transpose(1, 0, 2, 3)
        - dG.transpose(1, 2, 0, 3)
        + np.einsum("lim,mjk->lijk", G, G)
        - np.einsum("ljm,mik->lijk", G, G)
    )


def orthonormal_frame(g: np.ndarray) -> Frame:
    """An orthonormal frame for a nondegenerate symmetric metric."""
    w, q = np.linalg.eigh(g)
    if np.any(np.abs(w) < 1e-300):
        raise DomainError("metric is degenerate")
    return Frame(q / np.sqrt(np.abs(w)), np.sign(w))


def check_frame(g: np.ndarray, frame: Frame, tol: float = 1e-10) -> None:
    gram = frame.vectors.T @ g @ frame.vectors
    err = np.max(np.abs(gram - np.diag(frame.signs)))
    if err > tol * max(1.0, np.max(np.abs(g))):
        raise FrameError(f"frame is not orthonormal for this metric (error {err:.3e})")


def ricci_scalar_from_curv(
    curv: np.ndarray, g: np.ndarray, frame: Frame | None = None
) -> tuple[np.ndarray, float]:
    """Ricci tensor ``Ric[i, j] = Ric(d_i, d_j)`` and scalar curvature.

    The frame only fixes how the trace is taken; any orthonormal frame gives
    the same answer.
    """
    frame = orthonormal_frame(g) if frame is None else frame
    check_frame(g, frame)
    E, eps = frame.vectors, frame.signs
    # sum_k eps_k E_k^a E_k^b, which equals the inverse metric
    trace = np.einsum("ak,k,bk->ab", E, eps, E)
    ric = np.einsum("ab,liaj,lb->ij", trace, curv, g)
    scalar = float(np.einsum("ak,k,bk,ab->", E, eps, E, ric))
    return ric, scalar


@dataclass(frozen=True)
class BaseCalculus:
    """Signed base calculus of one function (and optionally one vector field)."""

    value: float
    grad: np.ndarray
    grad_norm2: float
    hessian: np.ndarray
    laplacian: float
    divergence: float | None = None


def hessian_from_jet(grad: np.ndarray, hess: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Covariant Hessian ``H(d_a, d_b) = d_a d_b f - Gamma^c_ab d_c f``."""
    return hess - np.einsum("cab,c->ab", gamma, grad)


def divergence_from_jet(values: np.ndarray, jac: np.ndarray, gamma: np.ndarray) -> float:
    """Divergence of a field with components ``values`` and ``jac[m, k] = d_m X^k``."""
    return float(np.trace(jac) + np.einsum("aam,m->", gamma, values))


def base_calculus(
    spec: SpaceSpec, point, scalar: ScalarExpr | str, field: list | None = None
) -> BaseCalculus:
    """Gradient, gradient norm, Hessian, Laplacian and divergence on the base.

    ``scalar`` and ``field`` must depend on base coordinates only.
    """
    scalar = as_expr(scalar)
    base = spec.base
    names = set(base.coords)
    if not scalar.names <= names:
        raise DomainError(f"{scalar} is not a function on the base")
    p = spec.point(point)[spec.base_slice]
    xs = variables(p)
    env = dict(zip(base.coords, xs))
    n = base.dim
    f = scalar.evaluate(env)
    f = f if isinstance(f, Jet2) else Jet2.constant(f, n)
    mj = base.metric_jet(p)
    conn = christoffel(mj)
    ginv = np.linalg.inv(mj.g)
    grad = ginv @ f.grad
    hess = hessian_from_jet(f.grad, f.hess, conn.gamma)
    div = None
    if field is not None:
        comps = [as_expr(c) for c in field]
        if len(comps) != n or any(not c.names <= names for c in comps):
            raise DomainError("field must have one base-only component per base coordinate")
        vals = np.zeros(n)
        jac = np.zeros((n, n))
        for k, c in enumerate(comps):
            v = c.evaluate(env)
            if isinstance(v, Jet2):
                vals[k], jac[:, k] = v.value, v.grad
            else:
                vals[k] = v
        div = divergence_from_jet(vals, jac, conn.gamma)
    return BaseCalculus(
        value=f.value,
        grad=grad,
        grad_norm2=float(f.grad @ ginv @ f.grad),
        hessian=hess,
        laplacian=float(np.einsum("ab,ab->", ginv, hess)),
        divergence=div,
    )


@dataclass(frozen=True)
class Comparison:
    max_abs: float
    max_rel: float
    where: tuple[int, ...]

    def within(self, tol: float) -> bool:
        return self.max_rel <= tol


def compare_tensors(a, b) -> Comparison:
    """Largest absolute difference, and that difference relative to ``max(1, |b|)``.

    The relative figure is normwise: it divides by the largest entry of
    ``b`` (at least one) so entries that vanish up to rounding do not blow up.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return Comparison(0.0, 0.0, ())
    diff = np.abs(a - b)
    idx = np.unravel_index(int(np.argmax(diff)), diff.shape) if diff.ndim else ()
    m = float(diff.max())
    scale = max(1.0, float(np.abs(b).max()))
    return Comparison(m, m / scale, tuple(int(i) for i in idx))
