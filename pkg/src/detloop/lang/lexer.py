"""Tokenizer for DetScript.

Whitespace and ``//`` line comments are trivia: they produce no tokens, but
every token records its source offset so the original text can be rebuilt
from the token stream (see :func:`reconstruct`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from detloop.errors import LexError

KEYWORDS = frozenset(
    {"let", "function", "if", "else", "while", "do", "return", "true", "false"}
)
PUNCTUATION = frozenset({"(", ")", "{", "}", ",", ";"})
# longest first so "==" wins over "="
OPERATORS = ("==", "!=", "<=", ">=", "&&", "||", "=", "<", ">", "+", "-", "*", "/", "%", "!")


class TokenKind(Enum):
    IDENT = "identifier"
    INT = "integer-literal"
    STRING = "string-literal"
    KEYWORD = "keyword"
    PUNCT = "punctuation"
    OP = "operator"
    END = "end"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    column: int
    offset: int

    def __repr__(self) -> str:
        return f"Token({self.kind.value} {self.text!r} @{self.line}:{self.column})"


_TRIVIA = re.compile(r"(?:[ \t\r\n]+|//[^\n]*)+")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9](?:_?[0-9])*")
_STRING = re.compile(r'"(?:[^"\\\n]|\\["\\n])*"')


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    n = len(source)

    def advance_lines(upto: int) -> None:
        nonlocal line, line_start
        nl = source.rfind("\n", pos, upto)
        if nl != -1:
            line += source.count("\n", pos, upto)
            line_start = nl + 1

    while True:
        m = _TRIVIA.match(source, pos)
        if m:
            advance_lines(m.end())
            pos = m.end()
        if pos >= n:
            break
        col = pos - line_start + 1
        ch = source[pos]
        if m := _IDENT.match(source, pos):
            text = m.group()
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENT
        elif m := _INT.match(source, pos):
            text = m.group()
            kind = TokenKind.INT
            # reject "12abc" rather than splitting it into two tokens
            if m.end() < n and (source[m.end()].isalnum() or source[m.end()] == "_"):
                raise LexError(f"malformed integer literal {source[pos:m.end() + 1]!r}", line, col)
        elif ch == '"':
            m = _STRING.match(source, pos)
            if not m:
                raise LexError("unterminated string literal", line, col)
            text = m.group()
            kind = TokenKind.STRING
        elif ch in PUNCTUATION:
            text, kind = ch, TokenKind.PUNCT
        else:
            for op in OPERATORS:
                if source.startswith(op, pos):
                    text, kind = op, TokenKind.OP
                    break
            else:
                raise LexError(f"unexpected character {ch!r}", line, col)
        tokens.append(Token(kind, text, line, col, pos))
        pos += len(text)

    tokens.append(Token(TokenKind.END, "", line, pos - line_start + 1, pos))
    return tokens


def reconstruct(source: str, tokens: list[Token]) -> str:
    """Rebuild the source from token texts and the trivia between them."""
    out: list[str] = []
    pos = 0
    for tok in tokens:
        out.append(source[pos:tok.offset])
        out.append(tok.text)
        pos = tok.offset + len(tok.text)
    out.append(source[pos:])
    return "".join(out)


def string_value(text: str) -> str:
    """Decode a string-literal token's text."""
    body = text[1:-1]
    return re.sub(r"\\(.)", lambda m: "\n" if m.group(1) == "n" else m.group(1), body)
