"""Base and fiber models and the multiply twisted product built from them.

Every metric in this package is diagonal in its coordinate chart, so a model
only has to produce its diagonal entries as jets.  The product metric is

    g = g_B + sum_i b_i^2 g_{F_i},

where each warping ``b_i`` may depend on the base coordinates and, for a
twisted factor, on the coordinates of its own fiber.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ChartError, DomainError, SpecError
from .expr import ScalarExpr, as_expr
from .jet import Jet2, variables

POLE_GUARD = 0.1
_FIBER_PREFIXES = "ywvu"


@dataclass(frozen=True)
class MetricJet:
    """Metric components with exact first and second coordinate derivatives.

    ``dg[m, i, j]`` is the derivative of ``g[i, j]`` along coordinate ``m``
    and ``ddg[m, n, i, j]`` the second derivative along ``m`` and ``n``.
    """

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    @classmethod
    def from_diagonal(cls, entries: Sequence[Jet2]) -> "MetricJet":
        n = len(entries)
        g = np.zeros((n, n))
        dg = np.zeros((n, n, n))
        ddg = np.zeros((n, n, n, n))
        for i, e in enumerate(entries):
            g[i, i] = e.value
            dg[:, i, i] = e.grad
            ddg[:, :, i, i] = e.hess
        return cls(g, dg, ddg)


def _as_jet(x, n: int) -> Jet2:
    return x if isinstance(x, Jet2) else Jet2.constant(float(x), n)


def _default_base_coords(n: int) -> tuple[str, ...]:
    names = ("t", "x", "z")
    return names[:n] if n <= len(names) else tuple(f"x{k + 1}" for k in range(n))


def _default_fiber_coords(index: int, dim: int) -> tuple[str, ...]:
    prefix = _FIBER_PREFIXES[index] if index < len(_FIBER_PREFIXES) else f"y{index}_"
    if dim == 1:
        return (prefix,)
    return tuple(f"{prefix}{k + 1}" for k in range(dim))


def _check_signature(sig) -> tuple[int, ...]:
    sig = tuple(int(s) for s in sig)
    if not sig or any(s not in (-1, 1) for s in sig):
        raise SpecError(f"signature entries must be +1 or -1, got {sig}")
    return sig


@dataclass(frozen=True)
class BaseModel:
    """An interval, a flat patch, or a conformally flat patch."""

    kind: str
    signature: tuple[int, ...]
    factor: ScalarExpr | None = None
    coords: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("interval", "flat", "conformal"):
            raise SpecError(f"unknown base kind {self.kind!r}")
        sig = _check_signature(self.signature)
        if self.kind == "interval" and len(sig) != 1:
            raise SpecError("an interval base has exactly one coordinate")
        object.__setattr__(self, "signature", sig)
        if self.kind == "conformal":
            if self.factor is None:
                raise SpecError("a conformal base needs a factor expression")
            object.__setattr__(self, "factor", as_expr(self.factor))
        elif self.factor is not None:
            raise SpecError(f"a {self.kind} base takes no factor")
        coords = tuple(self.coords) or _default_base_coords(len(sig))
        if len(coords) != len(sig):
            raise SpecError("base coordinate names do not match its dimension")
        object.__setattr__(self, "coords", coords)
        if self.factor is not None and not self.factor.names <= set(coords):
            raise SpecError(f"conformal factor {self.factor} uses non-base names")

    @classmethod
    def interval(cls, signature: int = -1, coord: str = "t") -> "BaseModel":
        return cls("interval", (signature,), coords=(coord,))

    @classmethod
    def flat(cls, signature: Sequence[int], coords: Sequence[str] = ()) -> "BaseModel":
        return cls("flat", tuple(signature), coords=tuple(coords))

    @classmethod
    def conformal(cls, signature: Sequence[int], factor, coords: Sequence[str] = ()) -> "BaseModel":
        return cls("conformal", tuple(signature), as_expr(factor), tuple(coords))

    @property
    def dim(self) -> int:
        return len(self.signature)

    def metric_diagonal(self, xs: Sequence[Jet2], n: int) -> list[Jet2]:
        if self.kind != "conformal":
            return [Jet2.constant(float(s), n) for s in self.signature]
        omega = _as_jet(self.factor.evaluate(dict(zip(self.coords, xs))), n)
        if omega.value <= 0.0:
            raise DomainError(f"conformal factor {self.factor} is not positive here")
        return [omega * float(s) for s in self.signature]

    def metric_jet(self, point: Sequence[float]) -> MetricJet:
        xs = variables(point)
        return MetricJet.from_diagonal(self.metric_diagonal(xs, len(xs)))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "interval":
            out["signature"] = self.signature[0]
        else:
            out["signature"] = list(self.signature)
        if self.factor is not None:
            out["factor"] = self.factor.source
        out["coords"] = list(self.coords)
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "BaseModel":
        kind = data.get("kind")
        sig = data.get("signature", -1 if kind == "interval" else None)
        if sig is None:
            raise SpecError("base signature is required")
        sig = (sig,) if isinstance(sig, (int, float)) else tuple(sig)
        return cls(kind, sig, data.get("factor"), tuple(data.get("coords", ())))


@dataclass(frozen=True)
class FiberModel:
    """A unit circle, a flat torus, a round sphere, or a hyperbolic space.

    The sphere chart uses polar angles followed by one azimuth; polar angles
    must stay ``POLE_GUARD`` radians away from the poles.  Hyperbolic space
    uses the upper half-space chart ``radius^2 |dy|^2 / y_last^2`` and needs
    ``y_last >= POLE_GUARD``.
    """

    kind: str
    dim: int = 1
    radius: float = 1.0
    coords: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "sphere", "hyperbolic"):
            raise SpecError(f"unknown fiber kind {self.kind!r}")
        if self.kind == "circle" and self.dim != 1:
            raise SpecError("a circle fiber has dimension 1")
        if self.kind == "sphere" and self.dim < 2:
            raise SpecError("a sphere fiber needs dimension at least 2")
        if self.dim < 1:
            raise SpecError("fiber dimension must be positive")
        if self.kind == "hyperbolic" and self.dim < 2:
            raise SpecError("a hyperbolic fiber needs dimension at least 2")
        if not self.radius > 0:
            raise SpecError("fiber radius must be positive")
        if self.coords and len(self.coords) != self.dim:
            raise SpecError("fiber coordinate names do not match its dimension")

    @classmethod
    def circle(cls) -> "FiberModel":
        return cls("circle", 1)

    @classmethod
    def torus(cls, dim: int) -> "FiberModel":
        return cls("torus", dim)

    @classmethod
    def sphere(cls, dim: int, radius: float = 1.0) -> "FiberModel":
        return cls("sphere", dim, float(radius))

    @classmethod
    def hyperbolic(cls, dim: int, radius: float = 1.0) -> "FiberModel":
        return cls("hyperbolic", dim, float(radius))

    def named(self, index: int) -> "FiberModel":
        if self.coords:
            return self
        return FiberModel(self.kind, self.dim, self.radius, _default_fiber_coords(index, self.dim))

    def check_chart(self, point: Sequence[float]) -> None:
        if self.kind == "hyperbolic":
            if point[-1] < POLE_GUARD:
                raise ChartError(f"half-space height {point[-1]} is below {POLE_GUARD}")
            return
        if self.kind != "sphere":
            return
        for k, theta in enumerate(point[: self.dim - 1]):
            if not POLE_GUARD <= theta <= math.pi - POLE_GUARD:
                raise ChartError(
                    f"polar angle {k} = {theta} is within {POLE_GUARD} rad of a pole"
                )

    def metric_diagonal(self, ys: Sequence[Jet2], n: int) -> list[Jet2]:
        if self.kind == "hyperbolic":
            h = ys[-1] if isinstance(ys[-1], Jet2) else Jet2.constant(ys[-1], n)
            conf = (self.radius**2) / (h * h)
            return [conf] * self.dim
        if self.kind not in ("sphere",):
            return [Jet2.constant(1.0, n) for _ in range(self.dim)]
        r2 = self.radius**2
        out = []
        acc = Jet2.constant(r2, n)
        for k in range(self.dim):
            out.append(acc)
            if k < self.dim - 1:
                s = ys[k].sin()
                acc = acc * s * s
        return out

    def metric_jet(self, point: Sequence[float]) -> MetricJet:
        self.check_chart(point)
        ys = variables(point)
        return MetricJet.from_diagonal(self.metric_diagonal(ys, len(ys)))

    def reference_point(self) -> list[float]:
        if self.kind == "sphere":
            return [1.0] * (self.dim - 1) + [0.5]
        if self.kind == "hyperbolic":
            return [0.0] * (self.dim - 1) + [1.0]
        return [0.0] * self.dim

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind != "circle":
            out["dim"] = self.dim
        if self.kind in ("sphere", "hyperbolic"):
            out["radius"] = self.radius
        if self.coords:
            out["coords"] = list(self.coords)
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "FiberModel":
        kind = data.get("kind")
        dim = int(data.get("dim", 1))
        return cls(kind, dim, float(data.get("radius", 1.0)), tuple(data.get("coords", ())))


@dataclass(frozen=True)
class SpaceSpec:
    """A multiply twisted product ``B x_{b_1} F_1 x ... x_{b_m} F_m``.

    Coordinates are ordered base first, then each fiber in turn.  A warping
    that depends on coordinates of its own fiber makes that factor twisted;
    dependence on any other fiber is rejected.
    """

    base: BaseModel
    fibers: tuple[FiberModel, ...]
    warpings: tuple[ScalarExpr, ...]
    twisted: tuple[bool, ...] = field(init=False)

    def __post_init__(self):
        fibers = tuple(f.named(i) for i, f in enumerate(self.fibers))
        warpings = tuple(as_expr(w) for w in self.warpings)
        if not fibers:
            raise SpecError("at least one fiber is required")
        if len(warpings) != len(fibers):
            raise SpecError("one warping function per fiber is required")
        object.__setattr__(self, "fibers", fibers)
        object.__setattr__(self, "warpings", warpings)
        names = list(self.base.coords)
        for f in fibers:
            names.extend(f.coords)
        if len(set(names)) != len(names):
            raise SpecError(f"coordinate names collide: {names}")
        base_names = set(self.base.coords)
        twisted = []
        for i, (f, w) in enumerate(zip(fibers, warpings)):
            own = set(f.coords)
            stray = w.names - base_names - own
            if stray:
                raise SpecError(f"warping {i} ({w}) depends on foreign names {sorted(stray)}")
            twisted.append(bool(w.names & own))
        object.__setattr__(self, "twisted", tuple(twisted))

    @classmethod
    def build(cls, base: BaseModel, fibers: Sequence[FiberModel], warpings: Sequence) -> "SpaceSpec":
        return cls(base, tuple(fibers), tuple(as_expr(w) for w in warpings))

    @property
    def coords(self) -> tuple[str, ...]:
        out = list(self.base.coords)
        for f in self.fibers:
            out.extend(f.coords)
        return tuple(out)

    @property
    def dim(self) -> int:
        return self.base.dim + sum(f.dim for f in self.fibers)

    @property
    def base_slice(self) -> slice:
        return slice(0, self.base.dim)

    def fiber_slice(self, i: int) -> slice:
        start = self.base.dim + sum(f.dim for f in self.fibers[:i])
        return slice(start, start + self.fibers[i].dim)

    def slot_of(self, index: int) -> int | None:
        """Fiber index owning a coordinate, or ``None`` for a base coordinate."""
        if index < self.base.dim:
            return None
        for i in range(len(self.fibers)):
            s = self.fiber_slice(i)
            if s.start <= index < s.stop:
                return i
        raise IndexError(index)

    @property
    def is_warped(self) -> bool:
        return not any(self.twisted)

    def point(self, values: Sequence[float] | Mapping[str, float]) -> np.ndarray:
        if isinstance(values, Mapping):
            try:
                values = [values[c] for c in self.coords]
            except KeyError as exc:
                raise SpecError(f"point is missing coordinate {exc.args[0]!r}") from None
        p = np.asarray(values, dtype=float)
        if p.shape != (self.dim,):
            raise SpecError(f"point must have {self.dim} coordinates, got {p.shape}")
        for i, f in enumerate(self.fibers):
            f.check_chart(p[self.fiber_slice(i)])
        return p

    def coordinate_jets(self, point) -> dict[str, Jet2]:
        p = self.point(point)
        return dict(zip(self.coords, variables(p)))

    def warping_jets(self, point) -> list[Jet2]:
        env = self.coordinate_jets(point)
        n = self.dim
        out = []
        for i, w in enumerate(self.warpings):
            b = _as_jet(w.evaluate(env), n)
            if b.value <= 0.0:
                raise DomainError(f"warping {i} ({w}) is not positive at this point")
            out.append(b)
        return out

    def metric_jet(self, point) -> MetricJet:
        env = self.coordinate_jets(point)
        xs = [env[c] for c in self.coords]
        n = self.dim
        entries = self.base.metric_diagonal(xs[self.base_slice], n)
        for f, b, s in zip(self.fibers, self.warping_jets(point), range(len(self.fibers))):
            b2 = b * b
            ys = xs[self.fiber_slice(s)]
            entries.extend(b2 * e for e in f.metric_diagonal(ys, n))
        return MetricJet.from_diagonal(entries)

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        """A random point: base coordinates in [-1, 1], fiber angles inside the guard."""
        vals = list(rng.uniform(-1.0, 1.0, self.base.dim))
        for f in self.fibers:
            if f.kind == "sphere":
                vals.extend(rng.uniform(POLE_GUARD + 0.2, math.pi - POLE_GUARD - 0.2, f.dim - 1))
                vals.append(rng.uniform(-math.pi, math.pi))
            elif f.kind == "hyperbolic":
                vals.extend(rng.uniform(-1.0, 1.0, f.dim - 1))
                vals.append(rng.uniform(0.5, 1.5))
            else:
                vals.extend(rng.uniform(-1.0, 1.0, f.dim))
        return np.asarray(vals)

    def to_json(self) -> dict[str, Any]:
        return {
            "base": self.base.to_json(),
            "fibers": [f.to_json() for f in self.fibers],
            "warpings": [w.source for w in self.warpings],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SpaceSpec":
        try:
            base = BaseModel.from_json(data["base"])
            fibers = tuple(FiberModel.from_json(f) for f in data["fibers"])
            warpings = tuple(as_expr(w) for w in data["warpings"])
        except KeyError as exc:
            raise SpecError(f"space spec is missing {exc.args[0]!r}") from None
        spec = cls(base, fibers, warpings)
        declared = data.get("twisted")
        if declared is not None and tuple(bool(x) for x in declared) != spec.twisted:
            raise SpecError(f"declared twisted flags {declared} disagree with the warpings")
        return spec
