"""Single-variable arithmetic expressions for custom coefficients.

Grammar: numeric literals, the variable ``x``, named constants supplied by
the caller, ``+ - * / ^`` with the usual precedence (``^`` binds tightest
and associates to the right, ``-x^2 = -(x^2)``), parentheses, and the
functions ``exp log sinh cosh tanh coth sqrt``.

The text is tokenized and parsed by :mod:`ast` after mapping ``^`` to the
Python power operator; the tree is then checked against the grammar and
compiled to a closure over numpy ufuncs.  Nothing is ever evaluated by
``eval``.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import ExpressionError

FUNCTIONS: dict = {
    "exp": np.exp,
    "log": np.log,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "coth": lambda v: 1.0 / np.tanh(v),
    "sqrt": np.sqrt,
}

_BINARY = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_ALLOWED_CHARS = re.compile(r"^[0-9A-Za-z_.+\-*/^() \t]*$")


@dataclass(frozen=True)
class Expression:
    """A parsed expression; call it on a scalar or array ``x``."""

    source: str
    _fn: Callable

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(x), dtype=float)
        return np.broadcast_to(out, x.shape).copy() if out.shape != x.shape else out

    def __str__(self):
        return self.source


def parse(source: str, constants: Optional[Mapping[str, float]] = None) -> Expression:
    """Parse ``source`` into an :class:`Expression`.

    Raises
    ------
    ExpressionError
        On syntax errors, unknown names or functions, or constructs outside
        the grammar.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("expression must be a non-empty string")
    if not _ALLOWED_CHARS.match(source):
        bad = sorted(set(c for c in source if not _ALLOWED_CHARS.match(c)))
        raise ExpressionError(f"illegal characters {bad} in {source!r}")
    if "**" in source:
        raise ExpressionError(f"use '^' for powers in {source!r}")
    consts = {k: float(v) for k, v in (constants or {}).items()}
    for name in consts:
        if name == "x" or name in FUNCTIONS:
            raise ExpressionError(f"constant name {name!r} is reserved")
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    return Expression(source, _compile(tree.body, consts, source))


def _compile(node, consts: dict, src: str) -> Callable:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"only numeric literals are allowed in {src!r}")
        v = float(node.value)
        return lambda x: v
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x: x
        if node.id in consts:
            v = consts[node.id]
            return lambda x: v
        raise ExpressionError(f"unknown name {node.id!r} in {src!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, consts, src)
        if isinstance(node.op, ast.USub):
            return lambda x: np.negative(inner(x))
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left = _compile(node.left, consts, src)
        right = _compile(node.right, consts, src)
        return lambda x: op(left(x), right(x))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            name = getattr(node.func, "id", "?")
            raise ExpressionError(f"unknown function {name!r} in {src!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument in {src!r}")
        fn = FUNCTIONS[node.func.id]
        arg = _compile(node.args[0], consts, src)
        return lambda x: fn(arg(x))
    raise ExpressionError(f"unsupported construct {type(node).__name__} in {src!r}")


def evaluate(source: str, x, constants: Optional[Mapping[str, float]] = None):
    """Parse and evaluate in one call."""
    return parse(source, constants)(x)


def is_finite_on(expr: Expression, points) -> bool:
    vals = expr(np.asarray(points, dtype=float))
    return bool(np.all(np.isfinite(vals)))
