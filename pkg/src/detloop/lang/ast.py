"""DetScript syntax tree. Nodes are frozen so equal sources give equal trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Pos:
    line: int
    column: int


_NOPOS = Pos(0, 0)


def _pos() -> Pos:
    return field(default=_NOPOS, compare=False, repr=False)


# --- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class IntLit:
    value: int
    pos: Pos = _pos()


@dataclass(frozen=True)
class StrLit:
    value: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    pos: Pos = _pos()


@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Expr, ...]
    pos: Pos = _pos()


Expr = Union[IntLit, StrLit, BoolLit, Var, Unary, Binary, Call]


# --- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Stmt
    orelse: Stmt | None = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Stmt
    pos: Pos = _pos()


@dataclass(frozen=True)
class DoWhile:
    body: Stmt
    cond: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Return:
    value: Expr | None = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Block:
    body: tuple[Stmt, ...]
    pos: Pos = _pos()


Stmt = Union[Let, Assign, If, While, DoWhile, Return, ExprStmt, Block]


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    body: Block
    pos: Pos = _pos()


@dataclass(frozen=True)
class Module:
    items: tuple[FunctionDef | Stmt, ...] = ()
