"""Tiny arithmetic expression language for user-supplied coefficients.

Grammar: numbers, the variable ``r``, named parameters, ``+ - * / ^``
(``**`` also accepted), unary minus, parentheses and the functions
``sqrt``, ``exp``, ``log``. Expressions compile to numpy-vectorised
callables.
"""
from __future__ import annotations

import ast
from typing import Callable, Mapping

import numpy as np

from .errors import ExpressionError

_FUNCS = {"sqrt": np.sqrt, "exp": np.exp, "log": np.log}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile(node: ast.AST, params: Mapping[str, float]) -> Callable:
    if isinstance(node, ast.Expression):
        return _compile(node.body, params)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda r: value + 0.0 * r
    if isinstance(node, ast.Name):
        if node.id == "r":
            return lambda r: r
        if node.id in params:
            value = float(params[node.id])
            return lambda r: value + 0.0 * r
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, params)
        if isinstance(node.op, ast.USub):
            return lambda r: -inner(r)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _compile(node.left, params)
        right = _compile(node.right, params)
        return lambda r: op(left(r), right(r))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id not in _FUNCS or len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"unsupported function call {ast.unparse(node)!r}")
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0], params)
        return lambda r: fn(arg(r))
    raise ExpressionError(f"unsupported syntax {ast.unparse(node)!r}")


def compile_expression(text: str, params: Mapping[str, float] | None = None) -> Callable:
    """Compile ``text`` into a function of ``r``.

    >>> f = compile_expression("a - b*r", {"a": 0.1, "b": 0.5})
    >>> float(f(1.0))
    -0.4
    """
    source = text.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    fn = _compile(tree, dict(params or {}))

    def evaluate(r):
        with np.errstate(all="ignore"):
            return fn(np.asarray(r, dtype=float))

    return evaluate
