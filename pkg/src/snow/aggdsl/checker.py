"""Static typing for aggregation programs.

Types: ``num``, ``bool``, and their vector forms ``vnum`` / ``vbool`` produced
by wildcard references. Vectors only exist as arguments to reductions.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .ast import Binary, Boolean, Call, Number, Ref, Unary

NUMERIC_REDUCERS = {"max", "min", "mean", "sum", "count", "count_nonzero"}
BOOL_REDUCERS = {"any", "all"}
FUNCTIONS = NUMERIC_REDUCERS | BOOL_REDUCERS | {"count_if", "ratio", "percent"}


class DslSemanticError(ValueError):
    pass


Sources = Mapping[str, Sequence[str] | None]


def _scalar(t: str) -> bool:
    return t in ("num", "bool")


def infer(node, sources: Sources) -> str:
    if isinstance(node, Number):
        return "num"
    if isinstance(node, Boolean):
        return "bool"
    if isinstance(node, Ref):
        if node.feature not in sources:
            raise DslSemanticError(f"reference to undeclared source {node.feature!r}")
        subs = sources[node.feature]
        if node.subgroup is None:
            if subs:
                raise DslSemanticError(f"{node.feature} has subgroups; use {node.feature}.* or name a subgroup")
            return "num"
        if not subs:
            raise DslSemanticError(f"{node.feature} has no subgroups")
        hits = [s for s in subs if node.matches(s)]
        if not hits:
            raise DslSemanticError(f"{node.feature}.{node.subgroup} matches no subgroup")
        return "vnum" if node.is_wildcard else "num"
    if isinstance(node, Unary):
        t = infer(node.operand, sources)
        if node.op == "-":
            if t not in ("num", "bool"):
                raise DslSemanticError("unary minus needs a scalar")
            return "num"
        if not _scalar(t):
            raise DslSemanticError("'not' needs a scalar")
        return "bool"
    if isinstance(node, Binary):
        lt, rt = infer(node.left, sources), infer(node.right, sources)
        if node.op in ("+", "-", "*", "/"):
            if not (_scalar(lt) and _scalar(rt)):
                raise DslSemanticError(f"arithmetic '{node.op}' on a vector; reduce it first")
            return "num"
        if node.op in ("and", "or"):
            if not (_scalar(lt) and _scalar(rt)):
                raise DslSemanticError(f"'{node.op}' on a vector; use any() or all()")
            return "bool"
        # comparison; one side may be a vector
        if lt.startswith("v") and rt.startswith("v"):
            raise DslSemanticError("cannot compare two vectors")
        return "vbool" if (lt.startswith("v") or rt.startswith("v")) else "bool"
    if isinstance(node, Call):
        if node.func not in FUNCTIONS:
            raise DslSemanticError(f"unknown function {node.func!r}")
        if not node.args:
            raise DslSemanticError(f"{node.func}() needs at least one argument")
        types = [infer(a, sources) for a in node.args]
        if node.func in ("ratio", "percent"):
            if len(types) != 2 or not all(_scalar(t) for t in types):
                raise DslSemanticError(f"{node.func}(a, b) takes two scalars")
            return "num"
        if node.func == "count_if":
            if not all(t in ("bool", "vbool") for t in types):
                raise DslSemanticError("count_if() takes predicates (comparisons)")
            return "num"
        if node.func in BOOL_REDUCERS:
            return "bool"
        return "num"
    raise DslSemanticError(f"unknown node {node!r}")


def check(node, sources: Sources) -> str:
    """Type-check a whole program; the result must be a scalar number or boolean."""
    t = infer(node, sources)
    if not _scalar(t):
        raise DslSemanticError("program must evaluate to a single number or boolean, not a vector")
    return t


def references(node) -> set[str]:
    if isinstance(node, Ref):
        return {node.feature}
    if isinstance(node, Unary):
        return references(node.operand)
    if isinstance(node, Binary):
        return references(node.left) | references(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= references(a)
        return out
    return set()
