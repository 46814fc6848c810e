from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Boolean:
    value: bool


@dataclass(frozen=True)
class Ref:
    """``feature``, ``feature.subgroup`` or a suffix wildcard ``feature.left_*``."""

    feature: str
    subgroup: str | None = None

    @property
    def is_wildcard(self) -> bool:
        return self.subgroup is not None and self.subgroup.endswith("*")

    def matches(self, subgroup: str) -> bool:
        if self.subgroup is None:
            return False
        if self.is_wildcard:
            return subgroup.startswith(self.subgroup[:-1])
        return subgroup == self.subgroup


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "not"
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / < <= > >= == != and or
    left: object
    right: object


Node = Number | Boolean | Ref | Call | Unary | Binary
