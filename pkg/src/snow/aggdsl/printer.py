from __future__ import annotations

from .ast import Binary, Boolean, Call, Number, Ref, Unary

_PREC = {"or": 1, "and": 2, "not": 3, "<": 4, "<=": 4, ">": 4, ">=": 4, "==": 4, "!=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6}
_UNARY_MINUS = 7
_ATOM = 8


def _prec(node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["not"] if node.op == "not" else _UNARY_MINUS
    return _ATOM


def _wrap(node, min_prec: int) -> str:
    text = to_text(node)
    return f"({text})" if _prec(node) < min_prec else text


def _number(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_text(node) -> str:
    """Canonical source text; parsing it yields an equal AST."""
    if isinstance(node, Number):
        return _number(node.value)
    if isinstance(node, Boolean):
        return "true" if node.value else "false"
    if isinstance(node, Ref):
        return node.feature if node.subgroup is None else f"{node.feature}.{node.subgroup}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Unary):
        if node.op == "not":
            return "not " + _wrap(node.operand, _PREC["not"])
        return "-" + _wrap(node.operand, _UNARY_MINUS)
    if isinstance(node, Binary):
        p = _PREC[node.op]
        if p == 4:  # comparisons do not associate
            return f"{_wrap(node.left, p + 1)} {node.op} {_wrap(node.right, p + 1)}"
        return f"{_wrap(node.left, p)} {node.op} {_wrap(node.right, p + 1)}"
    raise TypeError(f"not an AST node: {node!r}")
