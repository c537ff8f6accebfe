"""A tiny arithmetic language for weights and test functions.

Grammar: numbers, ``pi``, the chart coordinates ``x``, ``y``, ``z``, the
operators ``+ - * / **`` and the functions ``sin``, ``cos``, ``exp``.
Anything else is rejected, so expressions are safe to read from configs.
"""
from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .mesh import Weight

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}
_COORDS = {"x": 0, "y": 1, "z": 2}


class ExpressionError(ValueError):
    pass


def _check(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("only unary + and - are allowed")
        _check(node.operand)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"constant {node.value!r} not allowed")
    elif isinstance(node, ast.Name):
        if node.id not in _COORDS and node.id != "pi":
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0])
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def _eval(node: ast.AST, pts: np.ndarray):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, pts), _eval(node.right, pts))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, pts)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return np.pi
        k = _COORDS[node.id]
        if k >= pts.shape[1]:
            raise ExpressionError(f"coordinate {node.id} is not defined in a {pts.shape[1]}D chart")
        return pts[:, k]
    return _FUNCS[node.func.id](_eval(node.args[0], pts))


def compile_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``text`` into ``f(points) -> values`` over (n, d) chart points."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree)

    def f(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(_eval(tree.body, pts), dtype=float), (len(pts),)).copy()

    f.__doc__ = str(text)
    return f


def parse_weight(text: str) -> Weight:
    """Weight from an expression; plain numbers give a constant weight."""
    try:
        value = float(text)
    except (TypeError, ValueError):
        return Weight(compile_expression(text), descriptor=str(text).strip())
    return Weight.const(value)
