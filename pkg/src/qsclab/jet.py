"""Second-order forward-mode differentiation.

A ``Jet2`` carries a value together with its exact gradient and Hessian
with respect to ``n`` independent variables.  Arithmetic and the elementary
functions propagate all three by the chain rule, so metric derivatives and
hence Christoffel symbols and their derivatives are exact up to rounding.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError


class Jet2:
    __slots__ = ("value", "grad", "hess")

    def __init__(self, value: float, grad: np.ndarray, hess: np.ndarray):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, c: float, n: int) -> "Jet2":
        return cls(c, np.zeros(n), np.zeros((n, n)))

    @classmethod
    def variable(cls, x: float, index: int, n: int) -> "Jet2":
        grad = np.zeros(n)
        grad[index] = 1.0
        return cls(x, grad, np.zeros((n, n)))

    @property
    def nvars(self) -> int:
        return self.grad.shape[0]

    def __repr__(self) -> str:
        return f"Jet2(value={self.value!r}, grad={self.grad.tolist()!r})"

    def _lift(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(float(other), self.nvars)

    def _chain(self, f0: float, f1: float, f2: float) -> "Jet2":
        g = self.grad
        return Jet2(f0, f1 * g, f1 * self.hess + f2 * np.outer(g, g))

    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, -self.grad, -self.hess)

    def __pos__(self) -> "Jet2":
        return self

    def __add__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return Jet2(self.value + float(other), self.grad, self.hess)
        return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return Jet2(self.value - float(other), self.grad, self.hess)
        return Jet2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = float(other)
            return Jet2(self.value * c, self.grad * c, self.hess * c)
        u, v = self, other
        cross = np.outer(u.grad, v.grad)
        return Jet2(
            u.value * v.value,
            u.grad * v.value + v.grad * u.value,
            u.hess * v.value + v.hess * u.value + cross + cross.T,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        v = self.value
        if v == 0.0:
            raise DomainError("division by zero in jet arithmetic")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = float(other)
            if c == 0.0:
                raise DomainError("division by zero in jet arithmetic")
            return self * (1.0 / c)
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet2":
        return self.reciprocal() * float(other)

    def __pow__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            if np.any(other.grad) or np.any(other.hess):
                return (other * self.log()).exp()
            other = other.value
        p = float(other)
        v = self.value
        if p == 0.0:
            return Jet2.constant(1.0, self.nvars)
        if p == 1.0:
            return self
        if p == 2.0:
            return self * self
        if v == 0.0 and p < 2.0:
            raise DomainError(f"power {p} is not twice differentiable at zero")
        if v < 0.0 and not p.is_integer():
            raise DomainError(f"non-integer power {p} of negative value {v}")
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rpow__(self, other) -> "Jet2":
        base = float(other)
        if base <= 0.0:
            raise DomainError(f"non-positive base {base} raised to a variable power")
        return (self * math.log(base)).exp()

    def exp(self) -> "Jet2":
        e = math.exp(self.value)
        return self._chain(e, e, e)

    def log(self) -> "Jet2":
        v = self.value
        if v <= 0.0:
            raise DomainError(f"log of non-positive value {v}")
        return self._chain(math.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self) -> "Jet2":
        v = self.value
        if v <= 0.0:
            raise DomainError(f"sqrt of non-positive value {v}")
        r = math.sqrt(v)
        return self._chain(r, 0.5 / r, -0.25 / (r * v))

    def sin(self) -> "Jet2":
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self) -> "Jet2":
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(c, -s, -c)

    def tan(self) -> "Jet2":
        t = math.tan(self.value)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def sinh(self) -> "Jet2":
        s, c = math.sinh(self.value), math.cosh(self.value)
        return self._chain(s, c, s)

    def cosh(self) -> "Jet2":
        s, c = math.sinh(self.value), math.cosh(self.value)
        return self._chain(c, s, c)


def variables(values, n: int | None = None, offset: int = 0) -> list[Jet2]:
    """Seed jets for consecutive coordinates starting at ``offset``."""
    values = list(values)
    n = len(values) + offset if n is None else n
    return [Jet2.variable(x, offset + k, n) for k, x in enumerate(values)]
