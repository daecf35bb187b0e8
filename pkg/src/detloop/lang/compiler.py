"""Lower a DetScript syntax tree to a flat opcode program.

The deterministic clock advances once per executed opcode, so the number of
opcodes emitted per construct is observable by scripts. The lowering table
below is therefore part of the public contract; changing it changes every
timestamp a script can see.

==========================  ===============================================  ==============
construct                   opcodes                                          count
==========================  ===============================================  ==============
int/str/bool literal        push_const                                       1
``-<int>``                  push_const (folded negative literal)             1
variable                    load_var                                         1
function name as value      push_const (function reference)                  1
``op e``                    e, unary_op                                      |e| + 1
``a op b``                  a, b, binary_op (``&&``/``||`` are strict)       |a| + |b| + 1
``f(a..)``                  a.., call                                        sum|a| + 1
``builtin(a..)``            a.., call_builtin                                sum|a| + 1
``let x = e;``              e, store_var                                     |e| + 1
``x = e;``                  e, store_var                                     |e| + 1
``e;``                      e, pop                                           |e| + 1
``if (c) A``                c, jump_if_false, A                              |c| + 1 + |A|
``if (c) A else B``         c, jump_if_false, A, jump, B                     |c| + 2 + |A| + |B|
``while (c) B``             c, jump_if_false, B, jump                        |c| + 2 + |B|
``do B while (c);``         B, c, jump_if_false, jump                        |B| + |c| + 2
``return e;``               e, return                                        |e| + 1
``return;``                 push_const unit, return                          2
``{ S.. }``                 S..                                              sum|S|
function epilogue           push_const unit, return                          2
==========================  ===============================================  ==============

Per iteration, ``while`` executes ``|c| + |B| + 2`` opcodes and a repeating
``do``-``while`` executes ``|B| + |c| + 2``; the final (exiting) pass costs
``|c| + 1`` and ``|B| + |c| + 1`` respectively. Top-level code has no
epilogue: the top-level task ends when execution falls off its last opcode.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Any

from detloop.errors import CompileError
from detloop.lang import ast

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

# name -> arity; every builtin is one call_builtin opcode
BUILTINS: dict[str, int] = {
    "now": 0,
    "output": 1,
    "set_timeout": 2,
    "set_interval": 2,
    "clear_interval": 1,
    "fetch": 3,
    "secret_sync": 1,
    "secret_async": 2,
    "request_frame": 1,
    "post": 2,
}

GLOBAL, LOCAL = 0, 1


class Op(IntEnum):
    PUSH_CONST = 0
    LOAD_VAR = 1
    STORE_VAR = 2
    BINARY_OP = 3
    UNARY_OP = 4
    JUMP = 5
    JUMP_IF_FALSE = 6
    CALL = 7
    CALL_BUILTIN = 8
    RETURN = 9
    POP = 10

    @property
    def label(self) -> str:
        return self.name.lower()


class Unit:
    """The value of statements and of calls that return nothing."""

    _instance: Unit | None = None

    def __new__(cls) -> Unit:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "unit"


UNIT = Unit()


@dataclass(frozen=True)
class FuncRef:
    name: str

    def __repr__(self) -> str:
        return f"<fn {self.name}>"


@dataclass(frozen=True)
class FunctionInfo:
    name: str
    entry: int
    arity: int
    nlocals: int


Instr = tuple[Op, Any]


@dataclass(frozen=True)
class Program:
    code: tuple[Instr, ...]
    constants: tuple[Any, ...]
    functions: dict[str, FunctionInfo]
    globals: tuple[str, ...]
    inputs: tuple[str, ...]
    main_end: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return disassemble(self) == disassemble(other)

    def __hash__(self) -> int:
        return hash(disassemble(self))


def _const_key(value: Any) -> tuple[str, Any]:
    # bool is an int subclass; keep True and 1 apart in the pool
    return (type(value).__name__, value)


class _FunctionScope:
    def __init__(self, params: tuple[str, ...]) -> None:
        self.blocks: list[dict[str, int]] = [{p: i for i, p in enumerate(params)}]
        self.nlocals = len(params)

    def lookup(self, name: str) -> int | None:
        for block in reversed(self.blocks):
            if name in block:
                return block[name]
        return None


class Compiler:
    def __init__(self, module: ast.Module, inputs: tuple[str, ...] = ()) -> None:
        self.module = module
        self.inputs = tuple(inputs)
        self.code: list[list[Any]] = []
        self.constants: list[Any] = []
        self._const_index: dict[tuple[str, Any], int] = {}
        self.functions: dict[str, ast.FunctionDef] = {}
        self.globals: dict[str, int] = {}
        self.declared: set[str] = set()
        self.scope: _FunctionScope | None = None

    # -- entry --

    def compile(self) -> Program:
        for name in self.inputs:
            if name in BUILTINS or name in self.globals:
                raise CompileError(f"bad input name {name!r}", 0, 0)
            self.globals[name] = len(self.globals)
            self.declared.add(name)
        for item in self.module.items:
            if isinstance(item, ast.FunctionDef):
                if item.name in self.functions:
                    raise self._err(f"duplicate function {item.name!r}", item.pos)
                if item.name in BUILTINS:
                    raise self._err(f"function {item.name!r} shadows a builtin", item.pos)
                if item.name in self.globals:
                    raise self._err(f"function {item.name!r} clashes with an input", item.pos)
                if len(set(item.params)) != len(item.params):
                    raise self._err(f"duplicate parameter in {item.name!r}", item.pos)
                self.functions[item.name] = item
        for item in self.module.items:
            if not isinstance(item, ast.FunctionDef):
                self._collect_globals(item)

        for item in self.module.items:
            if not isinstance(item, ast.FunctionDef):
                self.stmt(item)
        main_end = len(self.code)

        infos: dict[str, FunctionInfo] = {}
        for fn in self.functions.values():
            entry = len(self.code)
            self.scope = _FunctionScope(fn.params)
            self.stmt(fn.body)
            self.emit(Op.PUSH_CONST, self.const(UNIT))
            self.emit(Op.RETURN, None)
            infos[fn.name] = FunctionInfo(fn.name, entry, len(fn.params), self.scope.nlocals)
            self.scope = None

        return Program(
            code=tuple((op, arg) for op, arg in self.code),
            constants=tuple(self.constants),
            functions=infos,
            globals=tuple(self.globals),
            inputs=self.inputs,
            main_end=main_end,
        )

    def _collect_globals(self, stmt: ast.Stmt) -> None:
        if isinstance(stmt, ast.Let):
            if stmt.name in self.globals:
                raise self._err(f"global {stmt.name!r} declared twice", stmt.pos)
            if stmt.name in self.functions or stmt.name in BUILTINS:
                raise self._err(f"{stmt.name!r} is already a function", stmt.pos)
            self.globals[stmt.name] = len(self.globals)
        elif isinstance(stmt, ast.Block):
            for s in stmt.body:
                self._collect_globals(s)
        elif isinstance(stmt, ast.If):
            self._collect_globals(stmt.then)
            if stmt.orelse is not None:
                self._collect_globals(stmt.orelse)
        elif isinstance(stmt, (ast.While, ast.DoWhile)):
            self._collect_globals(stmt.body)

    # -- emission helpers --

    @staticmethod
    def _err(msg: str, pos: ast.Pos) -> CompileError:
        return CompileError(msg, pos.line, pos.column)

    def emit(self, op: Op, arg: Any) -> int:
        self.code.append([op, arg])
        return len(self.code) - 1

    def patch(self, at: int, target: int) -> None:
        self.code[at][1] = target

    def const(self, value: Any) -> int:
        key = _const_key(value)
        idx = self._const_index.get(key)
        if idx is None:
            idx = len(self.constants)
            self.constants.append(value)
            self._const_index[key] = idx
        return idx

    def _resolve_var(self, name: str, pos: ast.Pos) -> tuple[int, int] | None:
        if self.scope is not None:
            slot = self.scope.lookup(name)
            if slot is not None:
                return (LOCAL, slot)
            if name in self.globals:
                return (GLOBAL, self.globals[name])
            return None
        if name in self.declared:
            return (GLOBAL, self.globals[name])
        if name in self.globals:
            raise self._err(f"{name!r} used before its let-binding", pos)
        return None

    # -- statements --

    def stmt(self, s: ast.Stmt) -> None:
        if isinstance(s, ast.Let):
            self.expr(s.value)
            if self.scope is None:
                self.declared.add(s.name)
                self.emit(Op.STORE_VAR, (GLOBAL, self.globals[s.name]))
            else:
                block = self.scope.blocks[-1]
                if s.name in block:
                    raise self._err(f"{s.name!r} declared twice in one block", s.pos)
                if s.name in self.functions or s.name in BUILTINS:
                    raise self._err(f"{s.name!r} is already a function", s.pos)
                block[s.name] = self.scope.nlocals
                self.scope.nlocals += 1
                self.emit(Op.STORE_VAR, (LOCAL, block[s.name]))
        elif isinstance(s, ast.Assign):
            ref = self._resolve_var(s.name, s.pos)
            if ref is None:
                raise self._err(f"assignment to undeclared name {s.name!r}", s.pos)
            self.expr(s.value)
            self.emit(Op.STORE_VAR, ref)
        elif isinstance(s, ast.ExprStmt):
            self.expr(s.expr)
            self.emit(Op.POP, None)
        elif isinstance(s, ast.Block):
            if self.scope is not None:
                self.scope.blocks.append({})
            for inner in s.body:
                self.stmt(inner)
            if self.scope is not None:
                self.scope.blocks.pop()
        elif isinstance(s, ast.If):
            self.expr(s.cond)
            jf = self.emit(Op.JUMP_IF_FALSE, None)
            self.stmt(s.then)
            if s.orelse is None:
                self.patch(jf, len(self.code))
            else:
                j = self.emit(Op.JUMP, None)
                self.patch(jf, len(self.code))
                self.stmt(s.orelse)
                self.patch(j, len(self.code))
        elif isinstance(s, ast.While):
            top = len(self.code)
            self.expr(s.cond)
            jf = self.emit(Op.JUMP_IF_FALSE, None)
            self.stmt(s.body)
            self.emit(Op.JUMP, top)
            self.patch(jf, len(self.code))
        elif isinstance(s, ast.DoWhile):
            top = len(self.code)
            self.stmt(s.body)
            self.expr(s.cond)
            jf = self.emit(Op.JUMP_IF_FALSE, None)
            self.emit(Op.JUMP, top)
            self.patch(jf, len(self.code))
        elif isinstance(s, ast.Return):
            if self.scope is None:
                raise self._err("return outside a function", s.pos)
            if s.value is None:
                self.emit(Op.PUSH_CONST, self.const(UNIT))
            else:
                self.expr(s.value)
            self.emit(Op.RETURN, None)
        else:  # pragma: no cover - exhaustive over ast.Stmt
            raise TypeError(f"unknown statement {s!r}")

    # -- expressions --

    def expr(self, e: ast.Expr) -> None:
        if isinstance(e, ast.IntLit):
            if not INT_MIN <= e.value <= INT_MAX:
                raise self._err(f"integer literal {e.value} out of 64-bit range", e.pos)
            self.emit(Op.PUSH_CONST, self.const(e.value))
        elif isinstance(e, (ast.StrLit, ast.BoolLit)):
            self.emit(Op.PUSH_CONST, self.const(e.value))
        elif isinstance(e, ast.Var):
            ref = self._resolve_var(e.name, e.pos)
            if ref is not None:
                self.emit(Op.LOAD_VAR, ref)
            elif e.name in self.functions:
                self.emit(Op.PUSH_CONST, self.const(FuncRef(e.name)))
            else:
                raise self._err(f"unresolved name {e.name!r}", e.pos)
        elif isinstance(e, ast.Unary):
            self.expr(e.operand)
            self.emit(Op.UNARY_OP, e.op)
        elif isinstance(e, ast.Binary):
            self.expr(e.left)
            self.expr(e.right)
            self.emit(Op.BINARY_OP, e.op)
        elif isinstance(e, ast.Call):
            if e.name in self.functions:
                arity = len(self.functions[e.name].params)
                op = Op.CALL
            elif e.name in BUILTINS:
                arity = BUILTINS[e.name]
                op = Op.CALL_BUILTIN
            elif self._resolve_var(e.name, e.pos) is not None:
                raise self._err(f"{e.name!r} is a variable, not a function", e.pos)
            else:
                raise self._err(f"unresolved function {e.name!r}", e.pos)
            if len(e.args) != arity:
                raise self._err(
                    f"{e.name} expects {arity} argument(s), got {len(e.args)}", e.pos
                )
            for a in e.args:
                self.expr(a)
            self.emit(op, (e.name, len(e.args)))
        else:  # pragma: no cover
            raise TypeError(f"unknown expression {e!r}")


def compile_module(module: ast.Module, inputs: tuple[str, ...] = ()) -> Program:
    return Compiler(module, inputs).compile()


def compile_source(source: str, inputs: tuple[str, ...] = ()) -> Program:
    from detloop.lang.parser import parse_source

    return compile_module(parse_source(source), inputs)


def _fmt_arg(program: Program, op: Op, arg: Any) -> str:
    if op is Op.PUSH_CONST:
        return repr(program.constants[arg])
    if op in (Op.LOAD_VAR, Op.STORE_VAR):
        scope, slot = arg
        return program.globals[slot] if scope == GLOBAL else f"local[{slot}]"
    if op is Op.CALL or op is Op.CALL_BUILTIN:
        return f"{arg[0]}/{arg[1]}"
    if arg is None:
        return ""
    return str(arg)


def disassemble(program: Program) -> str:
    """Stable text listing of a program; used for golden files."""
    starts = {f.entry: f for f in program.functions.values()}
    lines = [f"inputs {' '.join(program.inputs)}".rstrip(), "main:"]
    for pc, (op, arg) in enumerate(program.code):
        if pc in starts:
            f = starts[pc]
            lines.append(f"function {f.name}/{f.arity} locals={f.nlocals}:")
        lines.append(f"  {pc:4d} {op.label} {_fmt_arg(program, op, arg)}".rstrip())
    return "\n".join(lines) + "\n"
