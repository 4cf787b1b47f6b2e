"""Recursive-descent parser for DDL statements and the query subset used by UDFs."""

from __future__ import annotations

from ..datamodel import MISSING
from ..errors import SqlSyntaxError, UnsupportedSyntax
from . import ast as A
from .lexer import EOF, FLOAT, IDENT, INT, PUNCT, QIDENT, STRING, tokenize

INT64_MAX = 2 ** 63 - 1
MAX_DEPTH = 150

# words that cannot be used as bare identifiers in expressions
RESERVED = {
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "LIMIT", "LET", "AS", "VALUE",
    "AND", "OR", "NOT", "IN", "EXISTS", "CASE", "WHEN", "THEN", "ELSE", "END", "ASC",
    "DESC", "TRUE", "FALSE", "NULL", "MISSING",
}

# recognised but deliberately unsupported constructs
UNSUPPORTED = {
    "JOIN", "UNNEST", "HAVING", "UNION", "DISTINCT", "OFFSET", "OVER", "INNER", "LEFT",
    "RIGHT", "OUTER", "LIKE", "BETWEEN", "INTERSECT", "EXCEPT", "WINDOW", "SOME", "EVERY",
    "SATISFIES", "IS",
}
UNSUPPORTED_STATEMENTS = {"DROP", "USE", "DELETE", "UPDATE", "SET", "LOAD", "ALTER",
                          "DECLARE", "EXPLAIN", "CREATE"}

_COMPARE = {"=": "=", "==": "=", "!=": "!=", "<>": "!=", "<": "<", "<=": "<=", ">": ">",
            ">=": ">="}


class Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.depth = 0

    # -- token helpers ------------------------------------------------------------------
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        j = min(self.i + k, len(self.toks) - 1)
        return self.toks[j]

    def advance(self):
        t = self.toks[self.i]
        if t.kind != EOF:
            self.i += 1
        return t

    def error(self, expected, tok=None):
        tok = tok or self.tok
        raise SqlSyntaxError(tok.line, tok.col, expected, tok.describe())

    def unsupported(self, construct, tok=None):
        tok = tok or self.tok
        raise UnsupportedSyntax(construct, tok.line, tok.col)

    def at_punct(self, p):
        t = self.tok
        return t.kind == PUNCT and t.value == p

    def accept_punct(self, p):
        if self.at_punct(p):
            return self.advance()
        return None

    def expect_punct(self, p):
        if not self.at_punct(p):
            self.error(repr(p))
        return self.advance()

    def at_kw(self, *words):
        return self.tok.is_kw(*words)

    def accept_kw(self, *words):
        if self.tok.is_kw(*words):
            return self.advance()
        return None

    def expect_kw(self, *words):
        if not self.tok.is_kw(*words):
            self.error(" or ".join(words))
        return self.advance()

    def name(self, what="identifier"):
        """Any identifier, including contextual keywords (used for object names)."""
        t = self.tok
        if t.kind == QIDENT:
            return self.advance().value
        if t.kind == IDENT and t.value.upper() not in RESERVED:
            return self.advance().value
        self.error(what)

    def span_from(self, start_tok):
        end = self.toks[self.i - 1] if self.i > 0 else start_tok
        return A.Span(start_tok.pos, end.pos + len(end.text), start_tok.line, start_tok.col)

    # -- statements ---------------------------------------------------------------------
    def parse_script(self):
        stmts = []
        while True:
            while self.accept_punct(";"):
                pass
            if self.tok.kind == EOF:
                return stmts
            stmts.append(self.statement())
            if self.tok.kind != EOF:
                self.expect_punct(";")

    def statement(self):
        start = self.tok
        if self.at_kw("CREATE"):
            self.advance()
            if self.accept_kw("TYPE"):
                node = self.create_type()
            elif self.accept_kw("DATASET"):
                node = self.create_dataset()
            elif self.accept_kw("INDEX"):
                node = self.create_index()
            elif self.accept_kw("FUNCTION"):
                node = self.create_function()
            elif self.accept_kw("FEED"):
                node = self.create_feed()
            elif self.tok.kind == IDENT and self.tok.value.upper() in ("DATAVERSE", "VIEW",
                                                                        "LIBRARY", "SYNONYM"):
                self.unsupported(f"CREATE {self.tok.value.upper()}")
            else:
                self.error("TYPE, DATASET, INDEX, FUNCTION or FEED")
        elif self.accept_kw("CONNECT"):
            self.expect_kw("FEED")
            feed = self.name("feed name")
            self.expect_kw("TO")
            self.expect_kw("DATASET")
            ds = self.name("dataset name")
            fn = None
            if self.accept_kw("APPLY"):
                self.expect_kw("FUNCTION")
                fn = self.function_name()
            node = A.ConnectFeed(feed, ds, fn)
        elif self.accept_kw("START"):
            self.expect_kw("FEED")
            node = A.StartFeed(self.name("feed name"))
        elif self.accept_kw("STOP"):
            self.expect_kw("FEED")
            node = A.StopFeed(self.name("feed name"))
        elif self.at_kw("INSERT", "UPSERT"):
            kind = self.advance().value.upper()
            self.expect_kw("INTO")
            ds = self.name("dataset name")
            self.expect_punct("(")
            body = self.query_or_expr()
            self.expect_punct(")")
            node = A.Insert(ds, body) if kind == "INSERT" else A.Upsert(ds, body)
        elif self.tok.kind == IDENT and self.tok.value.upper() in UNSUPPORTED_STATEMENTS:
            self.unsupported(f"{self.tok.value.upper()} statement")
        else:
            node = A.Query(self.query_or_expr())
        return _with_span(node, self.span_from(start))

    def function_name(self):
        n = self.name("function name")
        if self.accept_punct("#"):
            n = n + "#" + self.name("function name")
        return n

    def create_type(self):
        name = self.name("type name")
        self.expect_kw("AS")
        is_open = True
        if self.accept_kw("CLOSED"):
            is_open = False
        else:
            self.accept_kw("OPEN")
        self.expect_punct("{")
        fields = []
        seen = set()
        if not self.at_punct("}"):
            while True:
                ftok = self.tok
                fname = self.field_name()
                if fname in seen:
                    raise SqlSyntaxError(ftok.line, ftok.col, "distinct field names", fname)
                seen.add(fname)
                self.expect_punct(":")
                tname = self.name("type name")
                optional = bool(self.accept_punct("?"))
                fields.append(A.TypeField(fname, tname, optional))
                if not self.accept_punct(","):
                    break
        self.expect_punct("}")
        return A.CreateType(name, tuple(fields), is_open)

    def create_dataset(self):
        name = self.name("dataset name")
        self.expect_punct("(")
        tname = self.name("type name")
        self.expect_punct(")")
        self.expect_kw("PRIMARY")
        self.expect_kw("KEY")
        keys = [self.field_name()]
        while self.accept_punct(","):
            keys.append(self.field_name())
        return A.CreateDataset(name, tname, tuple(keys))

    def create_index(self):
        name = self.name("index name")
        self.expect_kw("ON")
        ds = self.name("dataset name")
        self.expect_punct("(")
        f = self.field_name()
        while self.accept_punct("."):
            f += "." + self.field_name()
        self.expect_punct(")")
        self.expect_kw("TYPE")
        kind = self.expect_kw("BTREE", "RTREE").value.upper()
        return A.CreateIndex(name, ds, f, kind)

    def create_function(self):
        name = self.name("function name")
        self.expect_punct("(")
        params = []
        if not self.at_punct(")"):
            params.append(self.name("parameter name"))
            while self.accept_punct(","):
                params.append(self.name("parameter name"))
        self.expect_punct(")")
        if len(set(params)) != len(params):
            self.error("distinct parameter names")
        self.expect_punct("{")
        body = self.query_or_expr()
        self.expect_punct("}")
        return A.CreateFunction(name, tuple(params), body)

    def create_feed(self):
        name = self.name("feed name")
        self.expect_kw("WITH")
        obj = self.primary()
        if not isinstance(obj, A.ObjectCtor):
            self.error("feed configuration object")
        opts = []
        for k, v in obj.fields:
            if not isinstance(v, A.Literal) or v.value is MISSING:
                raise SqlSyntaxError(self.tok.line, self.tok.col, f"literal value for {k!r}")
            opts.append((k, v.value))
        return A.CreateFeed(name, tuple(opts))

    def field_name(self):
        t = self.tok
        if t.kind in (IDENT, QIDENT):
            return self.advance().value
        if t.kind == STRING:
            return self.advance().value
        self.error("field name")

    # -- queries --------------------------------------------------------------------------
    def starts_query(self):
        return self.at_kw("SELECT", "LET", "FROM")

    def query_or_expr(self):
        if self.starts_query():
            return self.select_block()
        return self.expr()

    def select_block(self):
        start = self.tok
        if self.at_kw("FROM"):
            self.unsupported("FROM-first query")
        pre_lets = ()
        if self.accept_kw("LET"):
            pre_lets = self.let_bindings()
        if not self.at_kw("SELECT"):
            self.error("SELECT")
        self.advance()
        if self.at_kw("DISTINCT", "ALL", "ELEMENT", "RAW"):
            self.unsupported(f"SELECT {self.tok.value.upper()}")
        select_value = None
        projections = ()
        if self.accept_kw("VALUE"):
            select_value = self.expr()
        else:
            projections = self.projections()
        from_terms = ()
        if self.accept_kw("FROM"):
            from_terms = self.from_terms()
        lets = ()
        if self.accept_kw("LET"):
            lets = self.let_bindings()
        where = None
        if self.accept_kw("WHERE"):
            where = self.expr()
        group_by = ()
        if self.accept_kw("GROUP"):
            self.expect_kw("BY")
            items = [self.group_item()]
            while self.accept_punct(","):
                items.append(self.group_item())
            group_by = tuple(items)
        if self.at_kw("HAVING"):
            self.unsupported("HAVING")
        order_by = ()
        if self.accept_kw("ORDER"):
            self.expect_kw("BY")
            items = [self.order_item()]
            while self.accept_punct(","):
                items.append(self.order_item())
            order_by = tuple(items)
        limit = None
        if self.accept_kw("LIMIT"):
            limit = self.expr()
        if self.at_kw(*UNSUPPORTED):
            self.unsupported(self.tok.value.upper())
        return A.SelectBlock(pre_lets, select_value, projections, from_terms, lets, where,
                             group_by, order_by, limit, span=self.span_from(start))

    def let_bindings(self):
        out = []
        while True:
            n = self.name("variable name")
            self.expect_punct("=")
            out.append(A.LetBinding(n, self.expr()))
            if not self.accept_punct(","):
                return tuple(out)

    def projections(self):
        out = []
        while True:
            if self.at_punct("*"):
                self.unsupported("SELECT *")
            e = self.expr()
            if self.at_punct(".") and self.peek().kind == PUNCT and self.peek().value == "*":
                self.advance()
                self.advance()
                out.append(A.Projection(e, None, True))
            else:
                alias = None
                if self.accept_kw("AS"):
                    alias = self.name("alias")
                elif self.tok.kind == QIDENT or (self.tok.kind == IDENT
                                                  and self.tok.value.upper() not in RESERVED
                                                  and self.tok.value.upper() not in UNSUPPORTED):
                    alias = self.name("alias")
                out.append(A.Projection(e, alias, False))
            if not self.accept_punct(","):
                return tuple(out)

    def from_terms(self):
        out = []
        while True:
            if self.at_kw("FEED"):
                self.unsupported("FROM FEED (a feed is not a queryable data source)")
            if self.at_kw(*UNSUPPORTED):
                self.unsupported(self.tok.value.upper())
            e = self.expr()
            if self.accept_kw("AS"):
                alias = self.name("alias")
            elif self.tok.kind == QIDENT or (self.tok.kind == IDENT
                                              and self.tok.value.upper() not in RESERVED
                                              and self.tok.value.upper() not in UNSUPPORTED):
                alias = self.name("alias")
            elif isinstance(e, A.Var):
                alias = e.name
            else:
                self.error("alias for FROM term")
            out.append(A.FromTerm(e, alias))
            if self.at_kw(*UNSUPPORTED):
                self.unsupported(self.tok.value.upper())
            if not self.accept_punct(","):
                return tuple(out)

    def group_item(self):
        e = self.expr()
        alias = None
        if self.accept_kw("AS"):
            alias = self.name("alias")
        return A.GroupItem(e, alias)

    def order_item(self):
        e = self.expr()
        desc = False
        if self.accept_kw("DESC"):
            desc = True
        else:
            self.accept_kw("ASC")
        return A.OrderItem(e, desc)

    # -- expressions ------------------------------------------------------------------------
    def expr(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error("shallower expression nesting")
        try:
            return self.or_expr()
        finally:
            self.depth -= 1

    def or_expr(self):
        start = self.tok
        left = self.and_expr()
        while self.accept_kw("OR"):
            left = A.Binary("or", left, self.and_expr(), self.span_from(start))
        return left

    def and_expr(self):
        start = self.tok
        left = self.not_expr()
        while self.accept_kw("AND"):
            left = A.Binary("and", left, self.not_expr(), self.span_from(start))
        return left

    def not_expr(self):
        start = self.tok
        if self.accept_kw("NOT"):
            self.depth += 1
            if self.depth > MAX_DEPTH:
                self.error("shallower expression nesting")
            try:
                return A.Unary("not", self.not_expr(), self.span_from(start))
            finally:
                self.depth -= 1
        return self.comparison()

    def comparison(self):
        start = self.tok
        left = self.additive()
        while True:
            t = self.tok
            if t.kind == PUNCT and t.value in _COMPARE:
                self.advance()
                left = A.Binary(_COMPARE[t.value], left, self.additive(), self.span_from(start))
            elif t.is_kw("IN"):
                self.advance()
                left = A.InExpr(left, self.additive(), False, self.span_from(start))
            elif t.is_kw("NOT") and self.peek().is_kw("IN"):
                self.advance()
                self.advance()
                left = A.InExpr(left, self.additive(), True, self.span_from(start))
            elif t.is_kw("IS", "LIKE", "BETWEEN"):
                self.unsupported(t.value.upper())
            else:
                return left

    def additive(self):
        start = self.tok
        left = self.multiplicative()
        while True:
            t = self.tok
            if t.kind == PUNCT and t.value in ("+", "-", "||"):
                self.advance()
                left = A.Binary(t.value, left, self.multiplicative(), self.span_from(start))
            else:
                return left

    def multiplicative(self):
        start = self.tok
        left = self.unary()
        while True:
            t = self.tok
            if t.kind == PUNCT and t.value in ("*", "/", "%"):
                self.advance()
                left = A.Binary(t.value, left, self.unary(), self.span_from(start))
            else:
                return left

    def unary(self):
        start = self.tok
        if self.at_punct("-") or self.at_punct("+"):
            sign = self.advance().value
            self.depth += 1
            if self.depth > MAX_DEPTH:
                self.error("shallower expression nesting")
            try:
                operand = self.unary()
            finally:
                self.depth -= 1
            if sign == "+":
                return operand
            if isinstance(operand, A.Literal) and type(operand.value) in (int, float):
                v = -operand.value
                if type(v) is int and v < -INT64_MAX - 1:
                    self.error("integer within Int64 range", start)
                return A.Literal(v, self.span_from(start))
            return A.Unary("-", operand, self.span_from(start))
        return self.postfix()

    def postfix(self):
        start = self.tok
        e = self.primary()
        while True:
            if self.at_punct("."):
                nxt = self.peek()
                if nxt.kind == PUNCT and nxt.value == "*":
                    return e
                self.advance()
                t = self.tok
                if t.kind in (IDENT, QIDENT):
                    self.advance()
                    e = A.FieldAccess(e, t.value, self.span_from(start))
                else:
                    self.error("field name")
            elif self.at_punct("["):
                self.advance()
                idx = self.expr()
                self.expect_punct("]")
                e = A.IndexAccess(e, idx, self.span_from(start))
            else:
                return e

    def primary(self):
        t = self.tok
        start = t
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error("shallower expression nesting")
        try:
            if t.kind == INT:
                self.advance()
                if t.value > INT64_MAX and not (self.i >= 2 and self.toks[self.i - 2].kind == PUNCT
                                                and self.toks[self.i - 2].value == "-"):
                    self.error("integer within Int64 range", t)
                return A.Literal(t.value, self.span_from(start))
            if t.kind == FLOAT:
                self.advance()
                return A.Literal(t.value, self.span_from(start))
            if t.kind == STRING:
                self.advance()
                return A.Literal(t.value, self.span_from(start))
            if t.kind == QIDENT:
                return self.ident_or_call()
            if t.kind == IDENT:
                w = t.value.upper()
                if w == "TRUE":
                    self.advance()
                    return A.Literal(True, self.span_from(start))
                if w == "FALSE":
                    self.advance()
                    return A.Literal(False, self.span_from(start))
                if w == "NULL":
                    self.advance()
                    return A.Literal(None, self.span_from(start))
                if w == "MISSING":
                    self.advance()
                    return A.Literal(MISSING, self.span_from(start))
                if w == "CASE":
                    return self.case_expr()
                if w == "EXISTS":
                    self.advance()
                    operand = self.postfix()
                    return A.Exists(operand, self.span_from(start))
                if w in ("SELECT", "LET"):
                    self.error("expression (subqueries need parentheses)")
                if w in UNSUPPORTED:
                    self.unsupported(w)
                if w in RESERVED:
                    self.error("expression")
                return self.ident_or_call()
            if t.kind == PUNCT:
                if t.value == "(":
                    self.advance()
                    if self.starts_query():
                        q = self.select_block()
                        self.expect_punct(")")
                        return A.Subquery(q, self.span_from(start))
                    e = self.expr()
                    self.expect_punct(")")
                    return e
                if t.value == "[":
                    self.advance()
                    items = []
                    if not self.at_punct("]"):
                        items.append(self.expr())
                        while self.accept_punct(","):
                            items.append(self.expr())
                    self.expect_punct("]")
                    return A.ArrayCtor(tuple(items), self.span_from(start))
                if t.value == "{":
                    self.advance()
                    fields = []
                    seen = set()
                    if not self.at_punct("}"):
                        while True:
                            kt = self.tok
                            if kt.kind not in (STRING, IDENT, QIDENT):
                                self.error("field name")
                            self.advance()
                            if kt.value in seen:
                                raise SqlSyntaxError(kt.line, kt.col, "distinct field names",
                                                     kt.value)
                            seen.add(kt.value)
                            self.expect_punct(":")
                            fields.append((kt.value, self.expr()))
                            if not self.accept_punct(","):
                                break
                    self.expect_punct("}")
                    return A.ObjectCtor(tuple(fields), self.span_from(start))
            self.error("expression")
        finally:
            self.depth -= 1

    def ident_or_call(self):
        start = self.tok
        name = self.advance().value
        library = None
        if self.at_punct("#"):
            self.advance()
            library = name
            t = self.tok
            if t.kind not in (IDENT, QIDENT):
                self.error("function name")
            name = self.advance().value
            if not self.at_punct("("):
                self.error("'('")
        if self.at_punct("("):
            self.advance()
            args = []
            star = False
            if self.at_punct("*"):
                self.advance()
                star = True
            elif not self.at_punct(")"):
                if self.at_kw("DISTINCT"):
                    self.unsupported("DISTINCT in function arguments")
                args.append(self.query_or_expr_arg())
                while self.accept_punct(","):
                    args.append(self.query_or_expr_arg())
            self.expect_punct(")")
            return A.Call(name, tuple(args), library, star, self.span_from(start))
        return A.Var(name, self.span_from(start))

    def query_or_expr_arg(self):
        if self.starts_query():
            start = self.tok
            q = self.select_block()
            return A.Subquery(q, self.span_from(start))
        return self.expr()

    def case_expr(self):
        start = self.advance()
        subject = None
        if not self.at_kw("WHEN"):
            subject = self.expr()
        whens = []
        while self.accept_kw("WHEN"):
            w = self.expr()
            self.expect_kw("THEN")
            whens.append((w, self.expr()))
        if not whens:
            self.error("WHEN")
        default = None
        if self.accept_kw("ELSE"):
            default = self.expr()
        self.expect_kw("END")
        return A.Case(subject, tuple(whens), default, self.span_from(start))


def _with_span(node, span):
    object.__setattr__(node, "span", span)
    return node


def parse_script(text):
    """Parse ';'-separated statements into a list of AST nodes."""
    return Parser(text).parse_script()


def parse_statement(text):
    stmts = parse_script(text)
    if len(stmts) != 1:
        raise SqlSyntaxError(1, 1, "exactly one statement", f"{len(stmts)} statements")
    return stmts[0]


def parse_function_body(text):
    """Parse a function body, with or without its enclosing braces."""
    p = Parser(text)
    braced = bool(p.accept_punct("{"))
    body = p.query_or_expr()
    if braced:
        p.expect_punct("}")
    p.accept_punct(";")
    if p.tok.kind != EOF:
        p.error("end of function body")
    return body


def parse_expression(text):
    p = Parser(text)
    e = p.query_or_expr()
    if p.tok.kind != EOF:
        p.error("end of expression")
    return e
