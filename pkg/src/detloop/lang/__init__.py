"""DetScript: lexer, parser and opcode compiler."""

from detloop.lang.compiler import (
    BUILTINS,
    UNIT,
    FuncRef,
    FunctionInfo,
    Op,
    Program,
    compile_module,
    compile_source,
    disassemble,
)
from detloop.lang.lexer import Token, TokenKind, reconstruct, tokenize
from detloop.lang.parser import parse, parse_expr, parse_source

__all__ = [
    "BUILTINS",
    "UNIT",
    "FuncRef",
    "FunctionInfo",
    "Op",
    "Program",
    "Token",
    "TokenKind",
    "compile_module",
    "compile_source",
    "disassemble",
    "parse",
    "parse_expr",
    "parse_source",
    "reconstruct",
    "tokenize",
]
