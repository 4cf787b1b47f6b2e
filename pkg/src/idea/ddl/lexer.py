"""Tokenizer for the DDL/query surface."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SqlSyntaxError

IDENT, QIDENT, STRING, INT, FLOAT, PUNCT, EOF = "ident", "qident", "string", "int", "float", "punct", "eof"

_TWO_CHAR = {"!=", "<>", "<=", ">=", "||", "=="}
_ONE_CHAR = set("()[]{},;:.*=<>+-/%#?")

INT64_MAX = 2 ** 63 - 1


def _is_digit(ch):
    # ASCII only; str.isdigit also accepts superscripts and other numerals
    return "0" <= ch <= "9"


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    value: object
    text: str
    pos: int
    line: int
    col: int

    def is_kw(self, *words):
        return self.kind == IDENT and self.value.upper() in words

    def describe(self):
        if self.kind == EOF:
            return "end of input"
        return self.text


_ESCAPES = {'"': '"', "'": "'", "\\": "\\", "/": "/", "b": "\b", "f": "\f", "n": "\n",
            "r": "\r", "t": "\t"}


def tokenize(text):
    toks = []
    i = 0
    n = len(text)
    line = 1
    line_start = 0

    def err(msg, at, found=None):
        raise SqlSyntaxError(line, at - line_start + 1, msg, found)

    while True:
        # whitespace and comments
        while i < n:
            c = text[i]
            if c == "\n":
                i += 1
                line += 1
                line_start = i
            elif c in " \t\r\f\v":
                i += 1
            elif c == "-" and text.startswith("--", i):
                j = text.find("\n", i)
                i = n if j < 0 else j
            elif c == "/" and text.startswith("/*", i):
                j = text.find("*/", i + 2)
                if j < 0:
                    err("end of block comment", i, "end of input")
                for k in range(i, j):
                    if text[k] == "\n":
                        line += 1
                        line_start = k + 1
                i = j + 2
            else:
                break
        if i >= n:
            toks.append(Token(EOF, None, "", n, line, i - line_start + 1))
            return toks
        start = i
        col = i - line_start + 1
        c = text[i]
        if c.isalpha() or c == "_" or c == "$":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_$"):
                j += 1
            word = text[i:j]
            toks.append(Token(IDENT, word, word, start, line, col))
            i = j
        elif c == "`":
            j = i + 1
            buf = []
            while True:
                if j >= n or text[j] == "\n":
                    err("closing backtick", start, "end of line")
                if text[j] == "`":
                    if j + 1 < n and text[j + 1] == "`":
                        buf.append("`")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            if not buf:
                err("identifier", start, "``")
            toks.append(Token(QIDENT, "".join(buf), text[i:j + 1], start, line, col))
            i = j + 1
        elif c == '"' or c == "'":
            quote = c
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    err("closing quote", start, "end of input")
                ch = text[j]
                if ch == quote:
                    break
                if ch == "\n":
                    err("closing quote", start, "end of line")
                if ch == "\\":
                    if j + 1 >= n:
                        err("escape sequence", j, "end of input")
                    e = text[j + 1]
                    if e in _ESCAPES:
                        buf.append(_ESCAPES[e])
                        j += 2
                    elif e == "u":
                        hexs = text[j + 2:j + 6]
                        if len(hexs) != 4 or any(h not in "0123456789abcdefABCDEF" for h in hexs):
                            err("four hex digits after \\u", j, hexs)
                        cp = int(hexs, 16)
                        j += 6
                        # join surrogate pairs
                        if 0xD800 <= cp < 0xDC00 and text.startswith("\\u", j):
                            lo = text[j + 2:j + 6]
                            if len(lo) == 4 and all(h in "0123456789abcdefABCDEF" for h in lo):
                                lv = int(lo, 16)
                                if 0xDC00 <= lv < 0xE000:
                                    cp = 0x10000 + ((cp - 0xD800) << 10) + (lv - 0xDC00)
                                    j += 6
                        if 0xD800 <= cp < 0xE000:
                            err("valid unicode escape", j - 6, hexs)
                        buf.append(chr(cp))
                    else:
                        err("valid escape sequence", j, "\\" + e)
                else:
                    buf.append(ch)
                    j += 1
            toks.append(Token(STRING, "".join(buf), text[i:j + 1], start, line, col))
            i = j + 1
        elif _is_digit(c):
            j = i
            while j < n and _is_digit(text[j]):
                j += 1
            is_float = False
            if j + 1 < n and text[j] == "." and _is_digit(text[j + 1]):
                is_float = True
                j += 1
                while j < n and _is_digit(text[j]):
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and _is_digit(text[k]):
                    is_float = True
                    j = k
                    while j < n and _is_digit(text[j]):
                        j += 1
            if j < n and (text[j].isalpha() or text[j] == "_"):
                err("number", start, text[start:j + 1])
            lit = text[i:j]
            if is_float:
                v = float(lit)
                if v in (float("inf"), float("-inf")):
                    err("finite number", start, lit)
                toks.append(Token(FLOAT, v, lit, start, line, col))
            else:
                v = int(lit)
                if v > INT64_MAX + 1:
                    err("integer within Int64 range", start, lit)
                toks.append(Token(INT, v, lit, start, line, col))
            i = j
        else:
            two = text[i:i + 2]
            if two in _TWO_CHAR:
                toks.append(Token(PUNCT, two, two, start, line, col))
                i += 2
            elif c in _ONE_CHAR:
                toks.append(Token(PUNCT, c, c, start, line, col))
                i += 1
            else:
                err("a token", start, c)
