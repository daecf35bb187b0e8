"""Recursive-descent parser for DetScript.

Precedence, loosest first::

    ||  <  &&  <  == != < <= > >=  <  + -  <  * / %  <  unary - !

All binary operators are left-associative.
"""

from __future__ import annotations

from detloop.errors import ParseError
from detloop.lang import ast
from detloop.lang.lexer import Token, TokenKind, string_value, tokenize

_LEVELS: tuple[frozenset[str], ...] = (
    frozenset({"||"}),
    frozenset({"&&"}),
    frozenset({"==", "!=", "<", "<=", ">", ">="}),
    frozenset({"+", "-"}),
    frozenset({"*", "/", "%"}),
)


class Parser:
    def __init__(self, tokens: list[Token]) -> None:
        if not tokens or tokens[-1].kind is not TokenKind.END:
            raise ValueError("token stream must end with an END token")
        self.tokens = tokens
        self.i = 0

    # -- helpers --

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _at(self, text: str) -> bool:
        t = self.tok
        return t.kind in (TokenKind.PUNCT, TokenKind.OP, TokenKind.KEYWORD) and t.text == text

    def _accept(self, text: str) -> bool:
        if self._at(text):
            self.i += 1
            return True
        return False

    def _expect(self, text: str) -> Token:
        if not self._at(text):
            self._fail(repr(text))
        t = self.tok
        self.i += 1
        return t

    def _ident(self) -> Token:
        if self.tok.kind is not TokenKind.IDENT:
            self._fail("identifier")
        t = self.tok
        self.i += 1
        return t

    def _fail(self, expected: str) -> None:
        t = self.tok
        found = "end of input" if t.kind is TokenKind.END else t.text
        raise ParseError(expected, found, t.line, t.column)

    @staticmethod
    def _pos(t: Token) -> ast.Pos:
        return ast.Pos(t.line, t.column)

    # -- top level --

    def module(self) -> ast.Module:
        items: list[ast.FunctionDef | ast.Stmt] = []
        while self.tok.kind is not TokenKind.END:
            if self._at("function"):
                items.append(self.function())
            else:
                items.append(self.statement())
        return ast.Module(tuple(items))

    def function(self) -> ast.FunctionDef:
        start = self._expect("function")
        name = self._ident().text
        self._expect("(")
        params: list[str] = []
        if not self._at(")"):
            params.append(self._ident().text)
            while self._accept(","):
                params.append(self._ident().text)
        self._expect(")")
        return ast.FunctionDef(name, tuple(params), self.block(), self._pos(start))

    def block(self) -> ast.Block:
        start = self._expect("{")
        body: list[ast.Stmt] = []
        while not self._at("}"):
            if self.tok.kind is TokenKind.END:
                self._fail("'}'")
            body.append(self.statement())
        self.i += 1
        return ast.Block(tuple(body), self._pos(start))

    def statement(self) -> ast.Stmt:
        t = self.tok
        p = self._pos(t)
        if self._at("{"):
            return self.block()
        if self._accept("let"):
            name = self._ident().text
            self._expect("=")
            value = self.expression()
            self._expect(";")
            return ast.Let(name, value, p)
        if self._accept("if"):
            self._expect("(")
            cond = self.expression()
            self._expect(")")
            then = self.statement()
            orelse = self.statement() if self._accept("else") else None
            return ast.If(cond, then, orelse, p)
        if self._accept("while"):
            self._expect("(")
            cond = self.expression()
            self._expect(")")
            return ast.While(cond, self.statement(), p)
        if self._accept("do"):
            body = self.statement()
            self._expect("while")
            self._expect("(")
            cond = self.expression()
            self._expect(")")
            self._expect(";")
            return ast.DoWhile(body, cond, p)
        if self._accept("return"):
            value = None if self._at(";") else self.expression()
            self._expect(";")
            return ast.Return(value, p)
        if self._at("function"):
            self._fail("statement (functions may only be defined at top level)")
        if t.kind is TokenKind.IDENT and self.tokens[self.i + 1].text == "=" \
                and self.tokens[self.i + 1].kind is TokenKind.OP:
            self.i += 2
            value = self.expression()
            self._expect(";")
            return ast.Assign(t.text, value, p)
        expr = self.expression()
        self._expect(";")
        return ast.ExprStmt(expr, p)

    # -- expressions --

    def expression(self, level: int = 0) -> ast.Expr:
        if level == len(_LEVELS):
            return self.unary()
        left = self.expression(level + 1)
        ops = _LEVELS[level]
        while self.tok.kind is TokenKind.OP and self.tok.text in ops:
            op_tok = self.tok
            self.i += 1
            right = self.expression(level + 1)
            left = ast.Binary(op_tok.text, left, right, self._pos(op_tok))
        return left

    def unary(self) -> ast.Expr:
        t = self.tok
        if t.kind is TokenKind.OP and t.text in ("-", "!"):
            self.i += 1
            operand = self.unary()
            # fold "-<int>" so the most negative literal is expressible
            if t.text == "-" and isinstance(operand, ast.IntLit):
                return ast.IntLit(-operand.value, self._pos(t))
            return ast.Unary(t.text, operand, self._pos(t))
        return self.primary()

    def primary(self) -> ast.Expr:
        t = self.tok
        p = self._pos(t)
        if t.kind is TokenKind.INT:
            self.i += 1
            return ast.IntLit(int(t.text), p)
        if t.kind is TokenKind.STRING:
            self.i += 1
            return ast.StrLit(string_value(t.text), p)
        if self._accept("true"):
            return ast.BoolLit(True, p)
        if self._accept("false"):
            return ast.BoolLit(False, p)
        if t.kind is TokenKind.IDENT:
            self.i += 1
            if self._accept("("):
                args: list[ast.Expr] = []
                if not self._at(")"):
                    args.append(self.expression())
                    while self._accept(","):
                        args.append(self.expression())
                self._expect(")")
                return ast.Call(t.text, tuple(args), p)
            return ast.Var(t.text, p)
        if self._accept("("):
            e = self.expression()
            self._expect(")")
            return e
        self._fail("expression")
        raise AssertionError("unreachable")


def parse(tokens: list[Token]) -> ast.Module:
    return Parser(tokens).module()


def parse_expr(tokens: list[Token]) -> ast.Expr:
    """Parse a single expression that must span the whole token stream."""
    p = Parser(tokens)
    e = p.expression()
    if p.tok.kind is not TokenKind.END:
        p._fail("end of input")
    return e


def parse_source(source: str) -> ast.Module:
    return parse(tokenize(source))
