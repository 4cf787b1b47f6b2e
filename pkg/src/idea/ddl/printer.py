"""Render AST nodes back to source text.

Compound expressions are always parenthesized, so the output reparses to an
equal AST without relying on precedence rules.
"""

from __future__ import annotations

import json
import re

from ..datamodel import MISSING
from . import ast as A
from .parser import RESERVED, UNSUPPORTED, UNSUPPORTED_STATEMENTS

_SIMPLE = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*\Z")
_KEYWORDS = RESERVED | UNSUPPORTED | UNSUPPORTED_STATEMENTS | {
    "CONNECT", "START", "STOP", "INSERT", "UPSERT", "INTO", "FEED", "TYPE", "DATASET",
    "INDEX", "FUNCTION", "WITH", "TO", "APPLY", "ON", "PRIMARY", "KEY", "OPEN", "CLOSED",
    "BTREE", "RTREE", "ALL", "ELEMENT", "RAW",
}

_BINOPS = {"and": "AND", "or": "OR"}


def ident(name):
    if _SIMPLE.match(name) and name.upper() not in _KEYWORDS:
        return name
    return "`" + name.replace("`", "``") + "`"


def _literal(v):
    if v is None:
        return "NULL"
    if v is MISSING:
        return "MISSING"
    if v is True:
        return "TRUE"
    if v is False:
        return "FALSE"
    if isinstance(v, int):
        return f"({v})" if v < 0 else str(v)
    if isinstance(v, float):
        r = repr(v)
        return f"({r})" if r.startswith("-") else r
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot print literal {v!r}")


def print_expr(e):
    t = type(e)
    if t is A.Literal:
        return _literal(e.value)
    if t is A.Var:
        return ident(e.name)
    if t is A.FieldAccess:
        return f"{print_expr(e.base)}.{ident(e.name)}"
    if t is A.IndexAccess:
        return f"{print_expr(e.base)}[{print_expr(e.index)}]"
    if t is A.Call:
        name = ident(e.name)
        if e.library:
            name = ident(e.library) + "#" + name
        if e.star:
            return f"{name}(*)"
        return f"{name}({', '.join(print_expr(a) for a in e.args)})"
    if t is A.Unary:
        if e.op == "not":
            return f"(NOT {print_expr(e.operand)})"
        return f"(-{print_expr(e.operand)})"
    if t is A.Binary:
        op = _BINOPS.get(e.op, e.op)
        return f"({print_expr(e.left)} {op} {print_expr(e.right)})"
    if t is A.InExpr:
        kw = "NOT IN" if e.negated else "IN"
        return f"({print_expr(e.expr)} {kw} {print_expr(e.collection)})"
    if t is A.Exists:
        return f"(EXISTS {print_expr(e.operand)})"
    if t is A.Case:
        parts = ["(CASE"]
        if e.subject is not None:
            parts.append(print_expr(e.subject))
        for w, th in e.whens:
            parts.append(f"WHEN {print_expr(w)} THEN {print_expr(th)}")
        if e.default is not None:
            parts.append(f"ELSE {print_expr(e.default)}")
        parts.append("END)")
        return " ".join(parts)
    if t is A.ArrayCtor:
        return "[" + ", ".join(print_expr(i) for i in e.items) + "]"
    if t is A.ObjectCtor:
        return "{" + ", ".join(f"{json.dumps(k)}: {print_expr(v)}" for k, v in e.fields) + "}"
    if t is A.Subquery:
        return f"({print_query(e.query)})"
    raise TypeError(f"not an expression: {t.__name__}")


def _lets(bindings):
    return ", ".join(f"{ident(b.name)} = {print_expr(b.expr)}" for b in bindings)


def print_query(q):
    out = []
    if q.pre_lets:
        out.append("LET " + _lets(q.pre_lets))
    if q.select_value is not None:
        out.append("SELECT VALUE " + print_expr(q.select_value))
    else:
        items = []
        for p in q.projections:
            s = print_expr(p.expr)
            if p.star:
                s += ".*"
            elif p.alias is not None:
                s += " AS " + ident(p.alias)
            items.append(s)
        out.append("SELECT " + ", ".join(items))
    if q.from_terms:
        out.append("FROM " + ", ".join(f"{print_expr(t.expr)} AS {ident(t.alias)}"
                                       for t in q.from_terms))
    if q.lets:
        out.append("LET " + _lets(q.lets))
    if q.where is not None:
        out.append("WHERE " + print_expr(q.where))
    if q.group_by:
        out.append("GROUP BY " + ", ".join(
            print_expr(g.expr) + (f" AS {ident(g.alias)}" if g.alias is not None else "")
            for g in q.group_by))
    if q.order_by:
        out.append("ORDER BY " + ", ".join(
            print_expr(o.expr) + (" DESC" if o.descending else "") for o in q.order_by))
    if q.limit is not None:
        out.append("LIMIT " + print_expr(q.limit))
    return " ".join(out)


def print_body(body):
    if isinstance(body, A.SelectBlock):
        return print_query(body)
    return print_expr(body)


def _fn_name(name):
    return "#".join(ident(p) for p in name.split("#"))


def _print(s):
    t = type(s)
    if t is A.CreateType:
        fields = ", ".join(f"{ident(f.name)}: {ident(f.type_name)}{'?' if f.optional else ''}"
                           for f in s.fields)
        return f"CREATE TYPE {ident(s.name)} AS {'OPEN' if s.open else 'CLOSED'} {{{fields}}}"
    if t is A.CreateDataset:
        keys = ", ".join(ident(k) for k in s.primary_key)
        return f"CREATE DATASET {ident(s.name)}({ident(s.type_name)}) PRIMARY KEY {keys}"
    if t is A.CreateIndex:
        f = ".".join(ident(p) for p in s.field.split("."))
        return f"CREATE INDEX {ident(s.name)} ON {ident(s.dataset)}({f}) TYPE {s.kind}"
    if t is A.CreateFunction:
        params = ", ".join(ident(p) for p in s.params)
        return f"CREATE FUNCTION {ident(s.name)}({params}) {{ {print_body(s.body)} }}"
    if t is A.CreateFeed:
        opts = ", ".join(f"{json.dumps(k)}: {_literal(v)}" for k, v in s.options)
        return f"CREATE FEED {ident(s.name)} WITH {{{opts}}}"
    if t is A.ConnectFeed:
        tail = f" APPLY FUNCTION {_fn_name(s.function)}" if s.function else ""
        return f"CONNECT FEED {ident(s.feed)} TO DATASET {ident(s.dataset)}{tail}"
    if t is A.StartFeed:
        return f"START FEED {ident(s.feed)}"
    if t is A.StopFeed:
        return f"STOP FEED {ident(s.feed)}"
    if t is A.Insert:
        return f"INSERT INTO {ident(s.dataset)}({print_body(s.body)})"
    if t is A.Upsert:
        return f"UPSERT INTO {ident(s.dataset)}({print_body(s.body)})"
    if t is A.Query:
        return print_body(s.body)
    raise TypeError(f"not a statement: {t.__name__}")


def print_statement(stmt):
    return _print(stmt) + ";"


def print_script(stmts):
    return "\n".join(print_statement(s) for s in stmts)
