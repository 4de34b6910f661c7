"""Scalar expressions over named coordinates and constants.

The grammar is ordinary infix arithmetic: identifiers, numeric literals,
``+ - * / ^`` (``**`` is accepted as a synonym for ``^``), parentheses and
the functions ``exp log sqrt sin cos tan sinh cosh``.  Parsing reuses the
Python tokenizer through :mod:`ast` and rejects every node outside that
whitelist, so evaluation never touches ``eval``.

Expressions evaluate on floats, numpy arrays or :class:`~qsclab.jet.Jet2`
values, which gives exact first and second derivatives for free.
"""

from __future__ import annotations

import ast
import math
from typing import Mapping

import numpy as np

from .errors import DomainError, ExprError
from .jet import Jet2

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "tan", "sinh", "cosh")
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def _apply(name: str, x):
    if isinstance(x, Jet2):
        return getattr(x, name)()
    if name in ("log", "sqrt") and np.any(np.asarray(x) <= 0):
        raise DomainError(f"{name} of non-positive argument")
    with np.errstate(all="raise"):
        try:
            out = getattr(np, name)(x)
        except FloatingPointError as exc:
            raise DomainError(f"{name} overflow or invalid argument") from exc
    return float(out) if np.ndim(out) == 0 else out


def _check(node: ast.AST, names: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExprError(f"operator {type(node.op).__name__} is not allowed")
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExprError(f"operator {type(node.op).__name__} is not allowed")
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExprError("only exp, log, sqrt, sin, cos, tan, sinh, cosh may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExprError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], names)
    elif isinstance(node, ast.Name):
        if node.id in FUNCTIONS:
            raise ExprError(f"function {node.id} used as a value")
        if node.id not in CONSTANTS:
            names.add(node.id)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExprError(f"literal {node.value!r} is not a number")
    else:
        raise ExprError(f"syntax element {type(node).__name__} is not allowed")


class ScalarExpr:
    """A parsed scalar expression.  Equality and hashing use the source text."""

    __slots__ = ("source", "_tree", "names")

    def __init__(self, source: str | float | int):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source)) if not float(source).is_integer() else str(int(source))
        if not isinstance(source, str) or not source.strip():
            raise ExprError("expression must be a non-empty string")
        text = source.strip()
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExprError(f"cannot parse {text!r}: {exc.msg}") from None
        names: set[str] = set()
        _check(tree, names)
        self.source = text
        self._tree = tree
        self.names = frozenset(names)

    def __repr__(self) -> str:
        return f"ScalarExpr({self.source!r})"

    def __str__(self) -> str:
        return self.source

    def __eq__(self, other) -> bool:
        return isinstance(other, ScalarExpr) and other.source == self.source

    def __hash__(self) -> int:
        return hash(self.source)

    def is_constant(self) -> bool:
        return not self.names

    def __call__(self, env: Mapping[str, object] | None = None, **kwargs):
        return self.evaluate({**(env or {}), **kwargs})

    def evaluate(self, env: Mapping[str, object]):
        """Evaluate with ``env`` mapping names to floats, arrays or jets."""
        missing = self.names - env.keys()
        if missing:
            raise ExprError(f"unbound names {sorted(missing)} in {self.source!r}")
        try:
            return self._eval(self._tree.body, env)
        except ZeroDivisionError:
            raise DomainError(f"division by zero in {self.source!r}") from None
        except OverflowError:
            raise DomainError(f"overflow evaluating {self.source!r}") from None

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            a = self._eval(node.left, env)
            b = self._eval(node.right, env)
            if isinstance(node.op, ast.Pow) and not isinstance(a, Jet2) and not isinstance(b, Jet2):
                a_arr = np.asarray(a, dtype=float)
                if np.any(a_arr < 0) and not float(np.asarray(b)).is_integer():
                    raise DomainError(f"fractional power of a negative value in {self.source!r}")
                if np.any(a_arr == 0) and np.any(np.asarray(b) < 0):
                    raise DomainError(f"zero raised to a negative power in {self.source!r}")
            if isinstance(node.op, ast.Div) and not isinstance(b, Jet2) and np.any(np.asarray(b) == 0):
                raise DomainError(f"division by zero in {self.source!r}")
            return _BINOPS[type(node.op)](a, b)
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return _apply(node.func.id, self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            return CONSTANTS[node.id]
        return float(node.value)


def as_expr(value) -> ScalarExpr:
    return value if isinstance(value, ScalarExpr) else ScalarExpr(value)


def format_number(x: float, digits: int = 15) -> str:
    """Shortest clean literal for ``x`` (integers lose their trailing ``.0``)."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    r = float(f"{x:.{digits}g}")
    if r.is_integer() and abs(r) < 1e15:
        return str(int(r))
    return repr(r)


def scaled(coeff: float, var: str) -> str:
    """Render ``coeff*var`` with unit coefficients folded away."""
    if coeff == 1.0:
        return var
    if coeff == -1.0:
        return f"-{var}"
    return f"{format_number(coeff)}*{var}"
