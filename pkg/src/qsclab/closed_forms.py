"""Closed-form connection, curvature, Ricci and scalar curvature formulas.

Each formula is written term by term in terms of ingredients of the factors:
the base metric and its own (possibly modified) connection, the bare fiber
metrics, the warping functions, and ``P`` together with ``nabla P`` (the
Levi-Civita derivative on the product).  Nothing here looks at the product
curvature, so comparing these values with :mod:`qsclab.connection` is a
genuine two-route check.

Two catalogs exist.  The *singly* catalog covers ``B x_f F`` with one warped
fiber; the *multiply* catalog covers multiply twisted products.  Slot
signatures are dispatched explicitly; a signature reached only through
antisymmetry of the curvature in its first two slots is marked as derived.

Reading conventions, fixed once here:

* ``Xb/b`` means ``(d_X b) / b``; ``VX(ln b)`` is the mixed second
  derivative of ``ln b``.
* Gradients, Hessians and Laplacians on the base use the base metric and are
  signed traces; ``grad_F`` uses the bare fiber metric.
* The barred base connection is the modified connection of the base with the
  base part of ``P``; when ``P`` lives on a fiber that part vanishes and the
  barred base objects reduce to Levi-Civita ones.
* The barred fiber connection is the fiber Levi-Civita connection plus the
  correction terms built from the product metric, ``pi`` and ``P``.
* Fiber curvature, fiber Ricci, fiber scalar curvature and the fiber
  divergence of ``P`` are taken on the fiber leaf through the point, with
  metric ``b_i(x, .)^2 g_F``.  For warped factors this is the bare fiber
  value; for twisted factors it is what makes the formulas hold.  The bare
  reading stays available as ``fiber_reading="bare"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np

from .connection import (
    QscParams,
    analyze,
    covariant_derivative,
    p_field_at,
    qsc_curvature_from_lc,
    sub_qsc,
)
from .errors import NotStated, SpecError
from .geometry import (
    christoffel,
    compare_tensors,
    curvature_from_conn,
    divergence_from_jet,
    hessian_from_jet,
    ricci_scalar_from_curv,
)
from .jet import Jet2, variables
from .models import MetricJet, SpaceSpec

SINGLY = "singly"
MULTIPLY = "multiply"


@dataclass(frozen=True)
class ClosedFormResult:
    formula_id: str
    value: np.ndarray | float
    uses: tuple[str, ...] = ()
    derived: str | None = None


class _Fiber:
    """Fiber data for one factor.

    ``g``, ``ginv`` and ``gamma`` always belong to the bare fiber metric.
    Curvature, Ricci, scalar curvature and divergence are taken on the fiber
    leaf through the point, whose induced metric is ``b_i(x, .)^2 g_F`` with
    the base point frozen, unless ``reading`` is ``"bare"``.  For a warped
    factor the two readings agree because these quantities are invariant
    under constant rescaling of the metric.  The scalar curvature is the
    trace of the leaf Ricci tensor against the bare metric, so that
    ``S_F / b^2`` is the leaf scalar curvature.
    """

    def __init__(self, spec: SpaceSpec, i: int, point: np.ndarray, reading: str):
        fib = spec.fibers[i]
        self.slice = s = spec.fiber_slice(i)
        self.dim = l = fib.dim
        mj = fib.metric_jet(point[s])
        conn = christoffel(mj)
        self.g = mj.g
        self.ginv = np.linalg.inv(mj.g)
        self.gamma = conn.gamma
        if reading == "bare":
            leaf_mj, leaf_conn = mj, conn
        elif reading == "leaf":
            ys = variables(point[s])
            env = dict(zip(spec.base.coords, point[spec.base_slice]))
            env.update(zip(fib.coords, ys))
            b = spec.warpings[i].evaluate(env)
            b2 = b * b if isinstance(b, Jet2) else Jet2.constant(b * b, l)
            leaf_mj = MetricJet.from_diagonal([b2 * e for e in fib.metric_diagonal(ys, l)])
            leaf_conn = christoffel(leaf_mj)
        else:
            raise SpecError(f"unknown fiber reading {reading!r}")
        self.leaf_gamma = leaf_conn.gamma
        self.curv = curvature_from_conn(leaf_conn)
        self.ricci, _ = ricci_scalar_from_curv(self.curv, leaf_mj.g)
        self.scalar = float(np.einsum("ab,ab->", self.ginv, self.ricci))


class Ingredients:
    """All factor-level data the closed forms need at one point."""

    def __init__(self, spec: SpaceSpec, params: QscParams, point, fiber_reading: str = "leaf"):
        self.spec = spec
        self.fiber_reading = fiber_reading
        self.params = params
        self.l1 = params.lambda1
        self.l2 = params.lambda2
        p = spec.point(point)
        self.point = p
        n = self.N = spec.dim
        self.m = len(spec.fibers)
        self.where = params.P.where
        self.r = params.P.index

        mj = spec.metric_jet(p)
        lc = christoffel(mj)
        self.g = mj.g
        P, dP = p_field_at(spec, params.P, p)
        self.P = P
        self.pi = mj.g @ P
        self.piP = float(self.pi @ P)
        self.D = covariant_derivative(lc.gamma, P, dP)
        self.Dlow = self.D @ mj.g

        self.b = spec.warping_jets(p)
        self.bval = np.array([b.value for b in self.b])

        bs = self.bs = spec.base_slice
        self.n = spec.base.dim
        base_mj = spec.base.metric_jet(p[bs])
        base_lc = christoffel(base_mj)
        self.gB = base_mj.g
        self.gBinv = np.linalg.inv(base_mj.g)
        self.gammaB = base_lc.gamma
        self.RB = curvature_from_conn(base_lc)
        self.RicB, self.SB = ricci_scalar_from_curv(self.RB, base_mj.g)
        if self.where == "base":
            conn_bar, self.RbarB, self.RicbarB, self.SbarB = sub_qsc(
                base_mj, P[bs], dP[bs, bs], self.l1, self.l2
            )
            self.gammabarB = conn_bar.gamma
            self.divBP = divergence_from_jet(P[bs], dP[bs, bs], self.gammaB)
        else:
            self.gammabarB = self.gammaB
            self.RbarB, self.RicbarB, self.SbarB = self.RB, self.RicB, self.SB
            self.divBP = 0.0

        self.fib = [_Fiber(spec, i, p, fiber_reading) for i in range(self.m)]
        self.divFP = 0.0
        if self.where == "fiber":
            F = self.fib[self.r]
            s = F.slice
            self.divFP = divergence_from_jet(P[s], dP[s, s], F.leaf_gamma)

        # base calculus of each warping, with fiber coordinates frozen
        self.HB = []
        self.gradB = []
        self.gradF = []
        self.lapB = np.zeros(self.m)
        self.dlnb = []
        self.ddlnb = []
        for i, b in enumerate(self.b):
            gb = b.grad[bs]
            H = hessian_from_jet(gb, b.hess[bs, bs], self.gammaB)
            self.HB.append(H)
            self.gradB.append(self._embed_base(self.gBinv @ gb))
            self.lapB[i] = float(np.einsum("ab,ab->", self.gBinv, H))
            F = self.fib[i]
            self.gradF.append(self._embed_fiber(i, F.ginv @ b.grad[F.slice]))
            self.dlnb.append(b.grad / b.value)
            self.ddlnb.append(b.hess / b.value - np.outer(b.grad, b.grad) / b.value**2)
        gBb = np.array([b.grad[bs] for b in self.b])
        self.normB = gBb @ self.gBinv @ gBb.T
        self.Pb = np.array([float(P @ b.grad) / b.value for b in self.b])

    # -- small helpers -------------------------------------------------
    def e(self, k: int) -> np.ndarray:
        v = np.zeros(self.N)
        v[k] = 1.0
        return v

    def _embed_base(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.N)
        out[self.bs] = v
        return out

    def _embed_fiber(self, i: int, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.N)
        out[self.spec.fiber_slice(i)] = v
        return out

    def slot(self, k: int) -> int | None:
        return self.spec.slot_of(k)

    def local(self, k: int) -> int:
        i = self.slot(k)
        return k if i is None else k - self.spec.fiber_slice(i).start

    def Xb(self, i: int, a: int) -> float:
        """``X b_i / b_i`` for ``X = d_a``."""
        return float(self.b[i].grad[a] / self.b[i].value)

    def gDP(self, w: int, a: int) -> float:
        """``g(d_w, nabla_{d_a} P)``."""
        return float(self.Dlow[a, w])

    def nablaB_gradB(self, i: int, a: int) -> np.ndarray:
        return self._embed_base(self.gBinv @ self.HB[i][:, a])

    def gradB_of_dln(self, i: int, k: int) -> np.ndarray:
        """Base gradient of ``d_k ln b_i``."""
        return self._embed_base(self.gBinv @ self.ddlnb[i][self.bs, k])

    def gradF_of_dln(self, i: int, a: int) -> np.ndarray:
        """Fiber gradient (bare fiber metric) of ``d_a ln b_i``."""
        F = self.fib[i]
        return self._embed_fiber(i, F.ginv @ self.ddlnb[i][F.slice, a])

    def gF(self, i: int, u: int, w: int) -> float:
        return float(self.fib[i].g[self.local(u), self.local(w)])

    def nablaF(self, i: int, u: int, w: int) -> np.ndarray:
        F = self.fib[i]
        return self._embed_fiber(i, F.gamma[:, self.local(u), self.local(w)])

    def RF(self, i: int, u: int, v: int, w: int) -> np.ndarray:
        F = self.fib[i]
        return self._embed_fiber(i, F.curv[:, self.local(u), self.local(v), self.local(w)])

    def RicF(self, i: int, v: int, w: int) -> float:
        return float(self.fib[i].ricci[self.local(v), self.local(w)])

    def fiber_dims(self) -> list[int]:
        return [F.dim for F in self.fib]


def build_ingredients(spec: SpaceSpec, params: QscParams, point, fiber_reading: str = "leaf") -> Ingredients:
    return Ingredients(spec, params, point, fiber_reading)


def _family(ing: Ingredients, family: str | None) -> str:
    warped_single = ing.m == 1 and ing.spec.is_warped
    if family is None:
        return SINGLY if warped_single else MULTIPLY
    if family == SINGLY and not warped_single:
        raise NotStated("the singly warped catalog needs one warped fiber")
    if family not in (SINGLY, MULTIPLY):
        raise SpecError(f"unknown catalog {family!r}")
    return family


def _check_P(ing: Ingredients) -> None:
    if ing.where == "zero":
        raise NotStated("no closed form is stated for a vanishing P")


# =====================================================================
# connection
# =====================================================================


def cf_connection(ing: Ingredients, a: int, b: int, family: str | None = None) -> ClosedFormResult:
    """Closed form for ``nabla'_{d_a} d_b``."""
    _check_P(ing)
    fam = _family(ing, family)
    sa, sb = ing.slot(a), ing.slot(b)
    l1, l2 = ing.l1, ing.l2
    e, g, pi, P = ing.e, ing.g, ing.pi, ing.P
    on_base = ing.where == "base"
    tag = ("P3.1" if on_base else "P3.2") if fam == SINGLY else ("P4.1" if on_base else "P4.2")

    if sa is None and sb is None:
        if on_base:
            v = ing._embed_base(ing.gammabarB[:, a, b])
            return ClosedFormResult(f"{tag}(1)", v, ("barred base connection",))
        v = ing._embed_base(ing.gammaB[:, a, b]) - l2 * g[a, b] * P
        return ClosedFormResult(f"{tag}(1)", v, ("base connection", "g", "P"))
    if sa is None:
        i = sb
        v = ing.Xb(i, a) * e(b)
        if not on_base:
            v = v + l1 * pi[b] * e(a)
        return ClosedFormResult(f"{tag}(2)", v, ("Xb/b", "pi"))
    if sb is None:
        i = sa
        coeff = ing.Xb(i, b) + (l1 * pi[b] if on_base else 0.0)
        return ClosedFormResult(f"{tag}(3)", coeff * e(a), ("Xb/b", "pi"))

    i, j = sa, sb
    u, w = a, b
    if fam == SINGLY:
        f = ing.bval[0]
        if on_base:
            v = -f * ing.gF(0, u, w) * ing.gradB[0] + ing.nablaF(0, u, w) - l2 * g[u, w] * P
            return ClosedFormResult(f"{tag}(4)", v, ("grad_B f", "fiber connection", "P"))
        v = -g[u, w] / f * ing.gradB[0] + _barred_fiber_conn(ing, 0, u, w)
        return ClosedFormResult(f"{tag}(4)", v, ("grad_B f", "barred fiber connection"))
    if i != j:
        v = np.zeros(ing.N) if on_base else l1 * pi[w] * e(u)
        return ClosedFormResult(f"{tag}(4)", v, ("pi",))
    bi = ing.bval[i]
    dl = ing.dlnb[i]
    gf = ing.gF(i, u, w)
    v = dl[u] * e(w) + dl[w] * e(u) - gf / bi * ing.gradF[i] - bi * gf * ing.gradB[i]
    if on_base:
        v = v + ing.nablaF(i, u, w) - l2 * g[u, w] * P
        uses = ("ln b", "grad_F b", "grad_B b", "fiber connection", "P")
    else:
        v = v + _barred_fiber_conn(ing, i, u, w)
        uses = ("ln b", "grad_F b", "grad_B b", "barred fiber connection")
    return ClosedFormResult(f"{tag}(5)", v, uses)


def _barred_fiber_conn(ing: Ingredients, i: int, u: int, w: int) -> np.ndarray:
    return ing.nablaF(i, u, w) + ing.l1 * ing.pi[w] * ing.e(u) - ing.l2 * ing.g[u, w] * ing.P


# =====================================================================
# curvature
# =====================================================================


def cf_curvature(
    ing: Ingredients, a: int, b: int, c: int, family: str | None = None
) -> ClosedFormResult:
    """Closed form for ``R'(d_a, d_b) d_c``."""
    _check_P(ing)
    fam = _family(ing, family)
    table = _curvature_singly if fam == SINGLY else _curvature_multiply
    res = table(ing, a, b, c)
    if res is not None:
        return res
    swapped = table(ing, b, a, c)
    if swapped is None:
        raise NotStated(f"no curvature item for slots {(a, b, c)}")
    return ClosedFormResult(swapped.formula_id, -swapped.value, swapped.uses, "antisymmetry")


def _zero(ing: Ingredients, fid: str) -> ClosedFormResult:
    return ClosedFormResult(fid, np.zeros(ing.N))


def _curvature_singly(ing: Ingredients, a: int, b: int, c: int) -> ClosedFormResult | None:
    kinds = "".join("B" if ing.slot(k) is None else "F" for k in (a, b, c))
    l1, l2 = ing.l1, ing.l2
    e, g, pi, P, piP = ing.e, ing.g, ing.pi, ing.P, ing.piP
    f = ing.bval[0]
    H = ing.HB[0]
    normB = ing.normB[0, 0]
    DP = lambda k: ing.D[k]  # noqa: E731
    gDP = ing.gDP

    if ing.where == "base":
        Pf = ing.Pb[0]
        if kinds == "BBB":
            return ClosedFormResult("P3.3(1)", ing._embed_base(ing.RbarB[:, a, b, c]), ("barred base curvature",))
        if kinds == "FBB":
            V, X, Y = a, b, c
            s = H[X, Y] / f + l2 * Pf * g[X, Y] + l1 * l2 * piP * g[X, Y] + l1 * gDP(Y, X) - l1**2 * pi[X] * pi[Y]
            return ClosedFormResult("P3.3(2)", -s * e(V), ("H^f", "Pf/f", "pi", "nabla P"))
        if kinds == "BBF":
            return _zero(ing, "P3.3(3)")
        if kinds == "FFB":
            return _zero(ing, "P3.3(4)")
        if kinds == "BFF":
            X, V, W = a, b, c
            br = ing.nablaB_gradB(0, X) / f + l1 * Pf * e(X) + l2 * DP(X) + l1 * l2 * piP * e(X) - l2**2 * pi[X] * P
            return ClosedFormResult("P3.3(5)", -g[V, W] * br, ("nabla grad f", "Pf/f", "nabla P", "pi"))
        if kinds == "FFF":
            U, V, W = a, b, c
            s = normB / f**2 + (l1 + l2) * Pf + l1 * l2 * piP
            v = ing.RF(0, U, V, W) - s * (g[V, W] * e(U) - g[U, W] * e(V))
            return ClosedFormResult("P3.3(6)", v, ("fiber curvature", "|grad f|^2", "Pf/f", "pi"))
        return None

    Xf = lambda k: ing.Xb(0, k)  # noqa: E731
    if kinds == "BBB":
        X, Y, Z = a, b, c
        v = (
            ing._embed_base(ing.RB[:, X, Y, Z])
            + l2 * (g[X, Z] * Xf(Y) - g[Y, Z] * Xf(X)) * P
            + l1 * l2 * piP * (g[X, Z] * e(Y) - g[Y, Z] * e(X))
        )
        return ClosedFormResult("P3.4(1)", v, ("base curvature", "Xf/f", "pi"))
    if kinds == "FBB":
        V, X, Y = a, b, c
        v = (
            -H[X, Y] / f * e(V)
            - l1 * pi[V] * Xf(Y) * e(X)
            - l2 * g[X, Y] * DP(V)
            - g[X, Y] * (l1 * l2 * piP * e(V) - l2**2 * pi[V] * P)
        )
        return ClosedFormResult("P3.4(2)", v, ("H^f", "pi", "nabla P"))
    if kinds == "BBF":
        X, Y, V = a, b, c
        return ClosedFormResult("P3.4(3)", l1 * pi[V] * (Xf(X) * e(Y) - Xf(Y) * e(X)), ("pi", "Xf/f"))
    if kinds == "FFB":
        V, W, X = a, b, c
        return ClosedFormResult("P3.4(4)", l1 * Xf(X) * (pi[W] * e(V) - pi[V] * e(W)), ("pi", "Xf/f"))
    if kinds == "BFF":
        X, V, W = a, b, c
        v = (
            -g[V, W] * ing.nablaB_gradB(0, X) / f
            + l1 * Xf(X) * pi[W] * e(V)
            - l1 * gDP(W, V) * e(X)
            - l2 * g[V, W] * Xf(X) * P
            - l1 * l2 * g[V, W] * piP * e(X)
            + l1**2 * pi[W] * pi[V] * e(X)
        )
        return ClosedFormResult("P3.4(5)", v, ("nabla grad f", "Xf/f", "pi", "nabla P"))
    if kinds == "FFF":
        U, V, W = a, b, c
        v = _fiber_block_fiberP(ing, 0, U, V, W, normB / f**2)
        return ClosedFormResult("P3.4(6)", v, ("fiber curvature", "|grad f|^2", "pi", "nabla P"))
    return None


def _fiber_block_fiberP(ing: Ingredients, i: int, U: int, V: int, W: int, grad_term: float) -> np.ndarray:
    l1, l2 = ing.l1, ing.l2
    e, g, pi, P, piP, D, gDP = ing.e, ing.g, ing.pi, ing.P, ing.piP, ing.D, ing.gDP
    return (
        ing.RF(i, U, V, W)
        - grad_term * (g[V, W] * e(U) - g[U, W] * e(V))
        + l1 * (gDP(W, U) * e(V) - gDP(W, V) * e(U))
        + l2 * (g[U, W] * D[V] - g[V, W] * D[U])
        + l1 * l2 * piP * (g[U, W] * e(V) - g[V, W] * e(U))
        + l2**2 * (g[V, W] * pi[U] - g[U, W] * pi[V]) * P
        + l1**2 * pi[W] * (pi[V] * e(U) - pi[U] * e(V))
    )


def _curvature_multiply(ing: Ingredients, a: int, b: int, c: int) -> ClosedFormResult | None:
    sa, sb, sc = ing.slot(a), ing.slot(b), ing.slot(c)
    kinds = "".join("B" if s is None else "F" for s in (sa, sb, sc))
    l1, l2 = ing.l1, ing.l2
    e, g, pi, P, piP = ing.e, ing.g, ing.pi, ing.P, ing.piP
    D, gDP = ing.D, ing.gDP
    bv = ing.bval

    if ing.where == "base":
        Pb = ing.Pb
        if kinds == "BBB":
            return ClosedFormResult("P4.3(1)", ing._embed_base(ing.RbarB[:, a, b, c]), ("barred base curvature",))
        if kinds == "FBB":
            V, X, Y = a, b, c
            i = sa
            # the stated denominator is read as the warping of V's own fiber
            s = (
                ing.HB[i][X, Y] / bv[i] + l2 * Pb[i] * g[X, Y] + l1 * l2 * piP * g[X, Y]
                + l1 * gDP(Y, X) - l1**2 * pi[X] * pi[Y]
            )
            return ClosedFormResult("P4.3(2)", -s * e(V), ("H^b", "Pb/b", "pi", "nabla P"))
        if kinds == "BBF":
            return _zero(ing, "P4.3(3)")
        if kinds == "FFB":
            V, W, X = a, b, c
            if sa != sb:
                return _zero(ing, "P4.3(6)")
            i = sa
            dd = ing.ddlnb[i]
            return ClosedFormResult("P4.3(4)", dd[V, X] * e(W) - dd[W, X] * e(V), ("VX ln b",))
        if kinds == "BFF":
            X, V, W = a, b, c
            if sb != sc:
                return _zero(ing, "P4.3(6)")
            i = sb
            br = (
                ing.nablaB_gradB(i, X) / bv[i]
                + ing.gradF_of_dln(i, X) / bv[i] ** 2
                + l1 * Pb[i] * e(X) + l2 * D[X] + l1 * l2 * piP * e(X) - l2**2 * pi[X] * P
            )
            v = ing.ddlnb[i][W, X] * e(V) - g[V, W] * br
            return ClosedFormResult("P4.3(7)", v, ("VX ln b", "nabla grad b", "grad_F X ln b", "Pb/b", "nabla P"))
        if kinds == "FBF":
            if sa != sc:
                return _zero(ing, "P4.3(6)")
            return None
        if kinds == "FFF":
            return _fff_multiply(ing, a, b, c, sa, sb, sc)
        return None

    r = ing.r
    Xbr = lambda k: ing.Xb(r, k)  # noqa: E731
    if kinds == "BBB":
        X, Y, Z = a, b, c
        v = (
            ing._embed_base(ing.RB[:, X, Y, Z])
            + l2 * (g[X, Z] * Xbr(Y) - g[Y, Z] * Xbr(X)) * P
            + l1 * l2 * piP * (g[X, Z] * e(Y) - g[Y, Z] * e(X))
        )
        return ClosedFormResult("P4.4(1)", v, ("base curvature", "Xb/b", "pi"))
    if kinds == "FBB":
        V, X, Y = a, b, c
        i = sa
        if i != r:
            v = -ing.HB[i][X, Y] / bv[i] * e(V) - l1 * l2 * piP * g[X, Y] * e(V)
            return ClosedFormResult("P4.4(2)", v, ("H^b", "pi"))
        # the Hessian term is read as multiplying V
        v = (
            -ing.HB[i][X, Y] / bv[i] * e(V)
            - l1 * pi[V] * ing.Xb(i, Y) * e(X)
            - l2 * g[X, Y] * D[V]
            - g[X, Y] * (l1 * l2 * piP * e(V) - l2**2 * pi[V] * P)
        )
        return ClosedFormResult("P4.4(3)", v, ("H^b", "pi", "nabla P"))
    if kinds == "BBF":
        X, Y, V = a, b, c
        return ClosedFormResult("P4.4(4)", l1 * pi[V] * (Xbr(X) * e(Y) - Xbr(Y) * e(X)), ("pi", "Xb/b"))
    if kinds == "FFB":
        V, W, X = a, b, c
        i, j = sa, sb
        if i != j:
            v = -l1 * (i == r) * ing.Xb(i, X) * pi[V] * e(W) + l1 * (j == r) * ing.Xb(j, X) * pi[W] * e(V)
            return ClosedFormResult("P4.4(5)", v, ("Xb/b", "pi"))
        dd = ing.ddlnb[i]
        v = dd[V, X] * e(W) - dd[W, X] * e(V) - l1 * (i == r) * ing.Xb(i, X) * (pi[V] * e(W) - pi[W] * e(V))
        return ClosedFormResult("P4.4(6)", v, ("VX ln b", "Xb/b", "pi"))
    if kinds == "BFF":
        X, V, W = a, b, c
        i, j = sb, sc
        if i != j:
            return ClosedFormResult("P4.4(8)", l1 * Xbr(X) * pi[W] * e(V), ("Xb/b", "pi"))
        # stated for unequal fibers, which item (8) already covers; applied to equal ones
        v = (
            ing.ddlnb[i][W, X] * e(V)
            - g[V, W] * ing.nablaB_gradB(i, X) / bv[i]
            - ing.gradF_of_dln(i, X) * ing.gF(i, V, W)
            + l1 * Xbr(X) * pi[W] * e(V)
            - l1 * gDP(W, V) * e(X)
            - l2 * g[V, W] * Xbr(X) * P
            - l1 * l2 * g[V, W] * piP * e(X)
            + l1**2 * pi[W] * pi[V] * e(X)
        )
        return ClosedFormResult("P4.4(9)", v, ("VX ln b", "nabla grad b", "grad_F X ln b", "Xb/b", "pi", "nabla P"))
    if kinds == "FFF":
        return _fff_multiply(ing, a, b, c, sa, sb, sc)
    return None


def _fff_multiply(ing: Ingredients, a, b, c, sa, sb, sc) -> ClosedFormResult | None:
    l1, l2 = ing.l1, ing.l2
    e, g, pi, P, piP, D, gDP = ing.e, ing.g, ing.pi, ing.P, ing.piP, ing.D, ing.gDP
    bv = ing.bval
    on_base = ing.where == "base"
    tag = "P4.3" if on_base else "P4.4"
    zero_item = "(5)" if on_base else "(7)"
    if sa == sb and sb != sc:
        return _zero(ing, tag + zero_item)
    if len({sa, sb, sc}) == 3:
        return _zero(ing, tag + zero_item)
    if sa != sb and sb == sc:
        U, V, W = a, b, c
        k, i = sa, sb
        cross = ing.normB[i, k] / (bv[i] * bv[k])
        if on_base:
            s = cross + l1 * ing.Pb[i] + l2 * ing.Pb[k] + l1 * l2 * piP
            return ClosedFormResult("P4.3(8)", -g[V, W] * s * e(U), ("g_B(grad b_i, grad b_k)", "Pb/b", "pi"))
        v = (
            -g[V, W] * cross * e(U)
            - l1 * gDP(W, V) * e(U)
            - l2 * g[V, W] * D[U]
            - l1 * l2 * piP * g[V, W] * e(U)
            + l2**2 * g[V, W] * pi[U] * P
            + l1**2 * pi[W] * (pi[V] * e(U) - pi[U] * e(V))
        )
        return ClosedFormResult("P4.4(10)", v, ("g_B(grad b_i, grad b_k)", "nabla P", "pi"))
    if sa == sb == sc:
        U, V, W = a, b, c
        i = sa
        common = (
            g[U, W] * ing.gradB_of_dln(i, V) - g[V, W] * ing.gradB_of_dln(i, U) + ing.RF(i, U, V, W)
        )
        grad_term = ing.normB[i, i] / bv[i] ** 2
        if on_base:
            s = grad_term + (l1 + l2) * ing.Pb[i] + l1 * l2 * piP
            v = common - s * (g[V, W] * e(U) - g[U, W] * e(V))
            return ClosedFormResult("P4.3(9)", v, ("grad_B V ln b", "fiber curvature", "|grad b|^2", "Pb/b", "pi"))
        if i != ing.r:
            v = (
                common
                - grad_term * (g[V, W] * e(U) - g[U, W] * e(V))
                + l1 * l2 * piP * (g[U, W] * e(V) - g[V, W] * e(U))
            )
            return ClosedFormResult("P4.4(11)", v, ("grad_B V ln b", "fiber curvature", "|grad b|^2", "pi"))
        # the gradient term names f; read as the warping of this fiber
        v = common - ing.RF(i, U, V, W) + _fiber_block_fiberP(ing, i, U, V, W, grad_term)
        return ClosedFormResult("P4.4(12)", v, ("grad_B V ln b", "fiber curvature", "|grad b|^2", "pi", "nabla P"))
    return None


# =====================================================================
# Ricci
# =====================================================================


def cf_ricci(
    ing: Ingredients, a: int, b: int, family: str | None = None, base_ricci: str = "lc"
) -> ClosedFormResult:
    """Closed form for ``Ric'(d_a, d_b)``.

    ``base_ricci`` picks the base Ricci term when ``P`` lives on a fiber:
    ``"lc"`` uses the base Levi-Civita Ricci tensor, ``"restricted"`` uses
    the trace over base directions of the modified curvature restricted to
    the base with the full ``P``.
    """
    _check_P(ing)
    fam = _family(ing, family)
    sa, sb = ing.slot(a), ing.slot(b)
    l1, l2 = ing.l1, ing.l2
    g, pi, piP = ing.g, ing.pi, ing.piP
    N, n = ing.N, ing.n
    dims = ing.fiber_dims()
    bv = ing.bval
    on_base = ing.where == "base"
    if fam == SINGLY:
        tag = "P3.5" if on_base else "P3.6"
    else:
        tag = "P4.5" if on_base else "P4.7"

    if sa is None and sb is None:
        X, Y = a, b
        if on_base:
            v = float(ing.RicbarB[X, Y])
            for i, li in enumerate(dims):
                v += li * (
                    ing.HB[i][X, Y] / bv[i] + l2 * ing.Pb[i] * g[X, Y] + l1 * l2 * piP * g[X, Y]
                    + l1 * ing.gDP(Y, X) - l1**2 * pi[X] * pi[Y]
                )
            return ClosedFormResult(f"{tag}(1)", v, ("barred base Ricci", "H^b", "Pb/b", "pi", "nabla P"))
        v = _base_ricci_fiberP(ing, X, Y, base_ricci)
        v += sum(li * ing.HB[i][X, Y] / bv[i] for i, li in enumerate(dims))
        v += ((N - 1) * l1 * l2 - l2**2) * piP * g[X, Y] + l2 * g[X, Y] * ing.divFP
        return ClosedFormResult(f"{tag}(1)", float(v), ("base Ricci", "H^b", "pi", "div_F P"))

    if sa is None or sb is None:
        X, V = (a, b) if sa is None else (b, a)
        i = sb if sa is None else sa
        if on_base:
            v = 0.0 if fam == SINGLY else (dims[i] - 1) * ing.ddlnb[i][V, X]
            return ClosedFormResult(f"{tag}(2)", float(v), ("VX ln b",))
        r = ing.r
        mixed = ((N - 1) * l1 - l2) * pi[V] * ing.Xb(r, X)
        twist = 0.0 if fam == SINGLY else (dims[i] - 1) * ing.ddlnb[i][V, X]
        if sa is None:
            return ClosedFormResult(f"{tag}(2)", float(twist + mixed), ("VX ln b", "pi", "Xb/b"))
        return ClosedFormResult(f"{tag}(3)", float(twist - mixed), ("VX ln b", "pi", "Xb/b"))

    i, j = sa, sb
    V, W = a, b
    if i != j:
        return ClosedFormResult(f"{tag}(3a)" if on_base else f"{tag}(4a)", 0.0)
    li = dims[i]
    brace = ing.lapB[i] / bv[i] + (li - 1) * ing.normB[i, i] / bv[i] ** 2
    brace += sum(dims[s] * ing.normB[i, s] / (bv[i] * bv[s]) for s in range(ing.m) if s != i)
    brace += ((N - 1) * l1 * l2 - l2**2) * piP
    label_b = f"{tag}(3)" if fam == SINGLY else f"{tag}(3b)"
    if on_base:
        brace += l2 * ing.divBP
        brace += l2 * sum(dims[s] * ing.Pb[s] for s in range(ing.m) if s != i)
        brace += ((N - 1) * l1 + (li - 1) * l2) * ing.Pb[i]
        v = ing.RicF(i, V, W) + brace * g[V, W]
        return ClosedFormResult(label_b, float(v), ("fiber Ricci", "Laplacian b", "|grad b|^2", "Pb/b", "pi", "div_B P"))
    v = (
        ing.RicF(i, V, W) + g[V, W] * brace
        + ((N - 1) * l1 - l2) * ing.gDP(W, V)
        + (l2**2 + (1 - N) * l1**2) * pi[V] * pi[W]
        + l2 * g[V, W] * ing.divFP
    )
    label = f"{tag}(4)" if fam == SINGLY else f"{tag}(4b)"
    return ClosedFormResult(label, float(v), ("fiber Ricci", "Laplacian b", "|grad b|^2", "pi", "nabla P", "div_F P"))


def ricci_matrix(
    spec: SpaceSpec, params: QscParams, point, family: str | None = None, fiber_reading: str = "leaf"
) -> np.ndarray:
    """All closed-form Ricci components at a point, as a matrix."""
    ing = Ingredients(spec, params, point, fiber_reading)
    return np.array([[cf_ricci(ing, a, b, family).value for b in range(ing.N)] for a in range(ing.N)])


def _base_ricci_fiberP(ing: Ingredients, X: int, Y: int, which: str) -> float:
    if which == "lc":
        return float(ing.RicB[X, Y])
    if which != "restricted":
        raise SpecError(f"unknown base Ricci reading {which!r}")
    # modified curvature built from the base curvature alone, traced over the base
    n = ing.n
    R = np.zeros((ing.N,) * 4)
    R[:n, :n, :n, :n] = ing.RB
    Rbar = qsc_curvature_from_lc(ing.g, R, ing.P, ing.D, ing.l1, ing.l2)
    return float(np.einsum("ab,la,lb->", ing.gBinv, Rbar[:, X, :n, Y], ing.g[:, :n]))


# =====================================================================
# scalar
# =====================================================================


def cf_scalar(ing: Ingredients, family: str | None = None) -> ClosedFormResult:
    _check_P(ing)
    fam = _family(ing, family)
    l1, l2 = ing.l1, ing.l2
    N, n, m = ing.N, ing.n, ing.m
    dims = ing.fiber_dims()
    bv = ing.bval
    piP = ing.piP
    if fam == SINGLY:
        f, n2 = bv[0], dims[0]
        common = (
            2 * n2 * ing.lapB[0] / f + ing.fib[0].scalar / f**2 + n2 * (n2 - 1) * ing.normB[0, 0] / f**2
        )
        if ing.where == "base":
            v = (
                ing.SbarB + common
                + n2 * (N - 1) * (l1 + l2) * ing.Pb[0]
                + (n2 * (N + n - 1) * l1 * l2 - n2 * (l1**2 + l2**2)) * piP
                + n2 * (l1 + l2) * ing.divBP
            )
            return ClosedFormResult("P3.7", float(v), ("barred base scalar", "Laplacian f", "fiber scalar", "Pf/f", "pi", "div_B P"))
        v = (
            ing.SbarB + common
            + (N * (N - 1) * l1 * l2 + (1 - N) * (l1**2 + l2**2)) * piP
            + (N - 1) * (l1 + l2) * ing.divFP
        )
        return ClosedFormResult("P3.8", float(v), ("base scalar", "Laplacian f", "fiber scalar", "pi", "div_F P"))

    common = ing.SbarB
    for i, li in enumerate(dims):
        common += 2 * li * ing.lapB[i] / bv[i] + ing.fib[i].scalar / bv[i] ** 2
        common += li * (li - 1) * ing.normB[i, i] / bv[i] ** 2
        for s in range(m):
            if s != i:
                common += li * dims[s] * ing.normB[i, s] / (bv[i] * bv[s])
    if ing.where == "base":
        v = common
        for i, li in enumerate(dims):
            v += li * ((N - 1) * l1 + (n + li - 1) * l2) * ing.Pb[i]
            v += l2 * sum(li * dims[s] * ing.Pb[s] for s in range(m) if s != i)
            v += li * ((N + n - 1) * l1 * l2 - (l1**2 + l2**2)) * piP
        v += (l1 + l2) * sum(dims) * ing.divBP
        return ClosedFormResult("P4.9", float(v), ("barred base scalar", "Laplacian b", "fiber scalars", "Pb/b", "pi", "div_B P"))
    v = common + (N * (N - 1) * l1 * l2 + (1 - N) * (l1**2 + l2**2)) * piP + (N - 1) * (l1 + l2) * ing.divFP
    return ClosedFormResult("P4.10", float(v), ("base scalar", "Laplacian b", "fiber scalars", "pi", "div_F P"))


# =====================================================================
# comparison against the oracle
# =====================================================================

MATCH = "MATCH"
MISMATCH = "MISMATCH"
NOT_STATED = "NOT_STATED"


@dataclass
class LedgerRow:
    formula_id: str
    kind: str
    point: tuple[float, ...]
    max_abs_diff: float
    max_rel_diff: float
    verdict: str
    slots: str = ""
    fingerprint: str = ""
    derived: bool = False

    def to_json(self) -> dict:
        return {
            "formula_id": self.formula_id,
            "kind": self.kind,
            "point": [round(x, 12) for x in self.point],
            "maxAbsDiff": self.max_abs_diff,
            "maxRelDiff": self.max_rel_diff,
            "verdict": self.verdict,
            "slots": self.slots,
            "fingerprint": self.fingerprint,
        }


def _signs(diff: np.ndarray, tol: float) -> str:
    d = np.atleast_1d(diff)
    scale = max(1.0, float(np.max(np.abs(d))))
    return "".join("+" if x > tol * scale else "-" if x < -tol * scale else "0" for x in d)


def _slot_label(ing: Ingredients, k: int) -> str:
    s = ing.slot(k)
    return "B" if s is None else f"F{s + 1}"


KINDS = ("connection", "curvature", "ricci", "scalar")


def compare_point(
    spec: SpaceSpec,
    params: QscParams,
    point,
    kinds: Iterable[str] = KINDS,
    family: str | None = None,
    tol: float = 1e-9,
    fiber_reading: str = "leaf",
) -> list[LedgerRow]:
    """Compare every stated item against the oracle at one point.

    One row per formula item: the worst slot combination decides the
    numbers, and the fingerprint records the slot signature and the sign
    pattern of that worst difference.
    """
    ing = Ingredients(spec, params, point, fiber_reading)
    oracle = analyze(spec, ing.point, params)
    N = ing.N
    rows: dict[str, LedgerRow] = {}
    pt = tuple(float(x) for x in ing.point)

    def record(kind: str, res: ClosedFormResult | None, ref, slots: tuple[int, ...], fid: str | None = None):
        label = "".join(_slot_label(ing, k) for k in slots)
        if res is None:
            key = fid or f"{kind}:{label}"
            rows.setdefault(key, LedgerRow(key, kind, pt, 0.0, 0.0, NOT_STATED, label))
            return
        cmp = compare_tensors(res.value, ref)
        bad = cmp.max_rel > tol
        row = rows.get(res.formula_id)
        if row is None:
            row = rows[res.formula_id] = LedgerRow(res.formula_id, kind, pt, 0.0, 0.0, MATCH)
        if cmp.max_rel >= row.max_rel_diff:
            row.max_abs_diff = cmp.max_abs
            row.max_rel_diff = cmp.max_rel
            if bad or row.verdict != MISMATCH:
                row.slots = label
                row.fingerprint = f"{label}:{_signs(np.asarray(res.value) - np.asarray(ref), tol)}" if bad else ""
        if bad:
            row.verdict = MISMATCH

    kinds = tuple(kinds)
    if "connection" in kinds:
        for a, b in product(range(N), repeat=2):
            record("connection", _try(cf_connection, ing, a, b, family=family), oracle.conn.gamma[:, a, b], (a, b))
    if "curvature" in kinds:
        for a, b, c in product(range(N), repeat=3):
            record("curvature", _try(cf_curvature, ing, a, b, c, family=family), oracle.curv[:, a, b, c], (a, b, c))
    if "ricci" in kinds:
        for a, b in product(range(N), repeat=2):
            record("ricci", _try(cf_ricci, ing, a, b, family=family), oracle.ricci[a, b], (a, b))
    if "scalar" in kinds:
        record("scalar", _try(cf_scalar, ing, family=family), oracle.scalar, ())
    return sorted(rows.values(), key=lambda r: (KINDS.index(r.kind), _item_key(r.formula_id)))


def _item_key(fid: str) -> tuple:
    import re

    parts = re.findall(r"\d+|[a-z]+", fid)
    return tuple(int(p) if p.isdigit() else p for p in parts)


def _try(fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NotStated:
        return None


def compare_catalog(
    spec: SpaceSpec,
    params: QscParams,
    points: Sequence,
    kinds: Iterable[str] = KINDS,
    family: str | None = None,
    tol: float = 1e-9,
    fiber_reading: str = "leaf",
) -> list[LedgerRow]:
    out: list[LedgerRow] = []
    for p in points:
        out.extend(compare_point(spec, params, p, kinds, family, tol, fiber_reading))
    return out


# =====================================================================
# mixed Ricci-flatness
# =====================================================================


@dataclass(frozen=True)
class MixedRicciVerdict:
    mixed_ricci_flat: bool
    predicted: bool
    branch: str
    max_mixed: float
    max_twist: float
    max_base_dependence: float
    consistent: bool


def mixed_ricci_flat_check(
    spec: SpaceSpec, params: QscParams, points: Sequence, tol: float = 1e-9
) -> MixedRicciVerdict:
    """Measure mixed Ricci components and test the stated characterization.

    With ``P`` on the base the prediction is: mixed Ricci-flat exactly when
    every factor is warped.  With ``P`` on fiber ``r`` it is: warped, and
    either ``lambda2 = (dim M - 1) lambda1`` or ``b_r`` has no base
    dependence.
    """
    max_mixed = 0.0
    max_twist = 0.0
    max_base = 0.0
    N = spec.dim
    where = params.P.where
    r = params.P.index
    for p in points:
        oracle = analyze(spec, p, params)
        b = spec.warping_jets(p)
        for a, c in product(range(N), repeat=2):
            sa, sc = spec.slot_of(a), spec.slot_of(c)
            if (sa is None) != (sc is None):
                max_mixed = max(max_mixed, abs(oracle.ricci[a, c]))
        for i, bi in enumerate(b):
            fs = spec.fiber_slice(i)
            dd = bi.hess / bi.value - np.outer(bi.grad, bi.grad) / bi.value**2
            max_twist = max(max_twist, float(np.max(np.abs(dd[fs, spec.base_slice]), initial=0.0)))
        if where == "fiber":
            max_base = max(max_base, float(np.max(np.abs(b[r].grad[spec.base_slice]), initial=0.0)))
    flat = max_mixed <= tol
    warped = max_twist <= tol
    if where == "base":
        predicted, branch = warped, "base"
    else:
        special = abs(params.lambda2 - (N - 1) * params.lambda1) <= tol
        if special:
            predicted, branch = warped, "(1)"
        else:
            predicted, branch = warped and max_base <= tol, "(2)"
    return MixedRicciVerdict(flat, predicted, branch, max_mixed, max_twist, max_base, flat == predicted)
