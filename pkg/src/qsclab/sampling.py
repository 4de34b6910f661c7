"""Seeded random products and connection parameters for the two-route checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import PField, QscParams
from .expr import format_number
from .models import BaseModel, FiberModel, SpaceSpec


@dataclass(frozen=True)
class RandomConfig:
    spec: SpaceSpec
    params: QscParams
    points: tuple[np.ndarray, ...]


def _coef(rng: np.random.Generator, lo: float, hi: float) -> str:
    return format_number(round(float(rng.uniform(lo, hi)), 3))


def _lambda(rng: np.random.Generator) -> float:
    while True:
        x = round(float(rng.uniform(-3.0, 3.0)), 3)
        if abs(x) >= 0.1:
            return x


def _random_base(rng: np.random.Generator) -> BaseModel:
    kind = rng.integers(3)
    if kind == 0:
        return BaseModel.interval(int(rng.choice([-1, 1])))
    sig = [int(rng.choice([-1, 1])), 1]
    if kind == 1:
        return BaseModel.flat(sig)
    factor = f"exp({_coef(rng, -0.4, 0.4)}*t + {_coef(rng, -0.4, 0.4)}*x)"
    if rng.random() < 0.5:
        factor = f"1 + {_coef(rng, 0.05, 0.3)}*t^2 + {_coef(rng, 0.05, 0.3)}*x^2"
    return BaseModel.conformal(sig, factor)


def _random_fiber(rng: np.random.Generator) -> FiberModel:
    kind = rng.integers(3)
    if kind == 0:
        return FiberModel.circle()
    if kind == 1:
        return FiberModel.torus(2)
    return FiberModel.sphere(2, round(float(rng.uniform(0.5, 2.0)), 3))


def _base_function(rng: np.random.Generator, base: BaseModel) -> str:
    t = base.coords[0]
    x = base.coords[1] if base.dim > 1 else None
    lin = f"{_coef(rng, -0.8, 0.8)}*{t}" + (f" + {_coef(rng, -0.8, 0.8)}*{x}" if x else "")
    style = rng.integers(3)
    if style == 0:
        return f"{_coef(rng, 0.5, 2.0)}*exp({lin})"
    if style == 1:
        return f"{_coef(rng, 1.5, 3.0)} + sin({lin})"
    quad = f"{_coef(rng, 0.1, 0.5)}*{t}^2" + (f" + {_coef(rng, 0.1, 0.5)}*{x}^2" if x else "")
    return f"{_coef(rng, 0.8, 2.0)} + {lin} + {quad}"


def _twist(rng: np.random.Generator, fiber: FiberModel) -> str:
    y = fiber.coords[0]
    if rng.random() < 0.5:
        return f"(1 + {_coef(rng, 0.05, 0.3)}*{y}^2)"
    return f"exp({_coef(rng, 0.05, 0.3)}*sin({y}))"


def random_config(
    seed: int,
    *,
    twisted: bool | None = False,
    p_where: str | None = None,
    max_fibers: int = 2,
    n_points: int = 2,
) -> RandomConfig:
    """A random product of the shape used in the two-route checks.

    ``twisted=None`` lets the generator decide per fiber; ``p_where`` is
    ``"base"``, ``"fiber"`` (always a circle fiber) or ``None`` for either.
    """
    rng = np.random.default_rng(seed)
    base = _random_base(rng)
    m = int(rng.integers(1, max_fibers + 1))
    fibers = [_random_fiber(rng) for _ in range(m)]
    where = p_where or ("base" if rng.random() < 0.5 else "fiber")
    if where == "fiber" and not any(f.kind == "circle" for f in fibers):
        fibers[int(rng.integers(m))] = FiberModel.circle()
    fibers = [f.named(i) for i, f in enumerate(fibers)]
    warpings = []
    for f in fibers:
        w = _base_function(rng, base)
        twist = rng.random() < 0.5 if twisted is None else twisted
        if twist:
            w = f"({w})*{_twist(rng, f)}"
        warpings.append(w)
    spec = SpaceSpec.build(base, fibers, warpings)
    if where == "base":
        comps = [
            f"{_coef(rng, 0.5, 1.5)} + {_coef(rng, -0.5, 0.5)}*{c}" if k == 0
            else f"{_coef(rng, -0.5, 0.5)}*sin({base.coords[0]})"
            for k, c in enumerate(base.coords)
        ]
        P = PField.base(comps)
    else:
        r = next(i for i, f in enumerate(spec.fibers) if f.kind == "circle")
        y = spec.fibers[r].coords[0]
        P = PField.fiber(r, [f"{_coef(rng, 0.5, 1.5)} + {_coef(rng, -0.3, 0.3)}*cos({y})"])
    params = QscParams(_lambda(rng), _lambda(rng), P)
    points = tuple(spec.sample_point(rng) for _ in range(n_points))
    return RandomConfig(spec, params, points)
