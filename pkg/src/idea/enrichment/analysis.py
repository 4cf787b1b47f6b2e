"""Static analysis over query ASTs: free variables, conjunct splitting and
hoisting of outer-only subexpressions into named slots."""

from __future__ import annotations

import itertools
from dataclasses import replace

from ..ddl import ast as A
from .builtins import AGGREGATES

_slot_ids = itertools.count()


def fresh_name(prefix="h"):
    return f"\x00{prefix}{next(_slot_ids)}"


def is_aggregate_call(node):
    return (isinstance(node, A.Call) and node.library is None
            and node.name.lower() in AGGREGATES)


def free_vars(node, bound=frozenset()):
    """Names referenced by ``node`` that are not bound inside it or in ``bound``."""
    out = set()
    _fv(node, set(bound), out)
    return out


def _fv(n, bound, out):
    t = type(n)
    if n is None or t is A.Literal:
        return
    if t is A.Var:
        if n.name not in bound:
            out.add(n.name)
    elif t is A.FieldAccess:
        _fv(n.base, bound, out)
    elif t is A.IndexAccess:
        _fv(n.base, bound, out)
        _fv(n.index, bound, out)
    elif t is A.Call:
        for a in n.args:
            _fv(a, bound, out)
    elif t is A.Unary:
        _fv(n.operand, bound, out)
    elif t is A.Binary:
        _fv(n.left, bound, out)
        _fv(n.right, bound, out)
    elif t is A.InExpr:
        _fv(n.expr, bound, out)
        _fv(n.collection, bound, out)
    elif t is A.Exists:
        _fv(n.operand, bound, out)
    elif t is A.Case:
        _fv(n.subject, bound, out)
        for w, th in n.whens:
            _fv(w, bound, out)
            _fv(th, bound, out)
        _fv(n.default, bound, out)
    elif t is A.ArrayCtor:
        for i in n.items:
            _fv(i, bound, out)
    elif t is A.ObjectCtor:
        for _, v in n.fields:
            _fv(v, bound, out)
    elif t is A.Subquery:
        _block_fv(n.query, bound, out)
    elif t is A.SelectBlock:
        _block_fv(n, bound, out)
    else:
        raise TypeError(f"unexpected node {t.__name__}")


def _block_fv(q, bound, out):
    b = set(bound)
    for let in q.pre_lets:
        _fv(let.expr, b, out)
        b.add(let.name)
    for term in q.from_terms:
        if type(term.expr) is A.Var and term.expr.name not in b:
            pass  # a dataset reference
        else:
            _fv(term.expr, b, out)
        b.add(term.alias)
    for let in q.lets:
        _fv(let.expr, b, out)
        b.add(let.name)
    _fv(q.where, b, out)
    for g in q.group_by:
        _fv(g.expr, b, out)
    for g in q.group_by:
        if g.alias:
            b.add(g.alias)
    _fv(q.select_value, b, out)
    for p in q.projections:
        _fv(p.expr, b, out)
    for o in q.order_by:
        _fv(o.expr, b, out)
    _fv(q.limit, b, out)


def derived_name(expr):
    """Output field name implied by an unaliased projection, if any."""
    if type(expr) is A.Var:
        return expr.name
    if type(expr) is A.FieldAccess:
        return expr.name
    return None


def conjuncts(node):
    """Flatten a chain of ANDs."""
    if node is None:
        return []
    if isinstance(node, A.Binary) and node.op == "and":
        return conjuncts(node.left) + conjuncts(node.right)
    return [node]


def contains_aggregate(node):
    """True if ``node`` has an aggregate call outside nested subqueries."""
    stack = [node]
    while stack:
        n = stack.pop()
        if n is None or isinstance(n, (A.Subquery, A.SelectBlock)):
            continue
        if is_aggregate_call(n):
            return True
        if isinstance(n, tuple):
            stack.extend(n)
            continue
        for child in _children(n):
            stack.append(child)
    return False


def _children(n):
    t = type(n)
    if t is A.FieldAccess:
        return (n.base,)
    if t is A.IndexAccess:
        return (n.base, n.index)
    if t is A.Call:
        return n.args
    if t is A.Unary:
        return (n.operand,)
    if t is A.Binary:
        return (n.left, n.right)
    if t is A.InExpr:
        return (n.expr, n.collection)
    if t is A.Exists:
        return (n.operand,)
    if t is A.Case:
        out = [n.subject, n.default]
        for w, th in n.whens:
            out += [w, th]
        return [c for c in out if c is not None]
    if t is A.ArrayCtor:
        return n.items
    if t is A.ObjectCtor:
        return tuple(v for _, v in n.fields)
    return ()


def top_subqueries(node):
    """Subquery nodes in ``node`` that are not nested inside another subquery."""
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        if n is None:
            continue
        if type(n) is A.Subquery:
            out.append(n)
            continue
        stack.extend(_children(n))
    out.reverse()
    return out


class Hoister:
    """Rewrite a query block so every maximal subexpression that depends only
    on names from ``outer`` becomes a reference to a slot variable.

    After rewriting, the block depends on its enclosing scope only through the
    slot values, which makes its result a pure function of them.
    """

    def __init__(self, outer):
        self.outer = frozenset(outer)
        self.slots = []      # [(slot name, expression)]
        self._by_expr = {}

    def _slot_for(self, node):
        name = self._by_expr.get(node)
        if name is None:
            name = fresh_name()
            self._by_expr[node] = name
            self.slots.append((name, node))
        return A.Var(name, node.span)

    def expr(self, n, local):
        if n is None or type(n) is A.Literal:
            return n
        fv = free_vars(n)
        if fv and fv <= self.outer and not (fv & local) and not is_aggregate_call(n):
            return self._slot_for(n)
        t = type(n)
        if t is A.Var:
            return n
        if t is A.FieldAccess:
            return replace(n, base=self.expr(n.base, local))
        if t is A.IndexAccess:
            return replace(n, base=self.expr(n.base, local), index=self.expr(n.index, local))
        if t is A.Call:
            return replace(n, args=tuple(self.expr(a, local) for a in n.args))
        if t is A.Unary:
            return replace(n, operand=self.expr(n.operand, local))
        if t is A.Binary:
            return replace(n, left=self.expr(n.left, local), right=self.expr(n.right, local))
        if t is A.InExpr:
            return replace(n, expr=self.expr(n.expr, local),
                           collection=self.expr(n.collection, local))
        if t is A.Exists:
            return replace(n, operand=self.expr(n.operand, local))
        if t is A.Case:
            return replace(n, subject=self.expr(n.subject, local),
                           whens=tuple((self.expr(w, local), self.expr(th, local))
                                       for w, th in n.whens),
                           default=self.expr(n.default, local))
        if t is A.ArrayCtor:
            return replace(n, items=tuple(self.expr(i, local) for i in n.items))
        if t is A.ObjectCtor:
            return replace(n, fields=tuple((k, self.expr(v, local)) for k, v in n.fields))
        if t is A.Subquery:
            return replace(n, query=self.block(n.query, local))
        raise TypeError(f"unexpected node {t.__name__}")

    def block(self, q, local):
        b = set(local)
        pre = []
        for let in q.pre_lets:
            pre.append(A.LetBinding(let.name, self.expr(let.expr, b)))
            b.add(let.name)
        terms = []
        for term in q.from_terms:
            if type(term.expr) is A.Var and term.expr.name not in b \
                    and term.expr.name not in self.outer:
                terms.append(term)
            else:
                terms.append(A.FromTerm(self.expr(term.expr, b), term.alias))
            b.add(term.alias)
        lets = []
        for let in q.lets:
            lets.append(A.LetBinding(let.name, self.expr(let.expr, b)))
            b.add(let.name)
        where = self.expr(q.where, b)
        group_by = tuple(A.GroupItem(self.expr(g.expr, b), g.alias) for g in q.group_by)
        for g in q.group_by:
            if g.alias:
                b.add(g.alias)
        return replace(
            q,
            pre_lets=tuple(pre),
            from_terms=tuple(terms),
            lets=tuple(lets),
            where=where,
            group_by=group_by,
            select_value=self.expr(q.select_value, b),
            projections=tuple(A.Projection(self.expr(p.expr, b),
                                           p.alias if p.star or p.alias else derived_name(p.expr),
                                           p.star)
                              for p in q.projections),
            order_by=tuple(A.OrderItem(self.expr(o.expr, b), o.descending) for o in q.order_by),
            limit=self.expr(q.limit, b),
        )
