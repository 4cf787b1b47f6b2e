"""AST node types for statements and query expressions.

Nodes are frozen dataclasses; equality ignores source spans so that
parse(print(ast)) == ast holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    line: int
    col: int


def _span():
    return field(default=None, compare=False, repr=False)


# -- expressions ------------------------------------------------------------------------

class Expr:
    pass


@dataclass(frozen=True)
class Literal(Expr):
    value: object
    span: Span = _span()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class FieldAccess(Expr):
    base: Expr
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class IndexAccess(Expr):
    base: Expr
    index: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple
    library: str = None
    star: bool = False
    span: Span = _span()

    @property
    def qualified_name(self):
        return f"{self.library}#{self.name}" if self.library else self.name


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "not" | "-"
    operand: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    span: Span = _span()


@dataclass(frozen=True)
class InExpr(Expr):
    expr: Expr
    collection: Expr
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class Exists(Expr):
    operand: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Case(Expr):
    subject: Expr  # None for the searched form
    whens: tuple  # ((when, then), ...)
    default: Expr = None
    span: Span = _span()


@dataclass(frozen=True)
class ArrayCtor(Expr):
    items: tuple
    span: Span = _span()


@dataclass(frozen=True)
class ObjectCtor(Expr):
    fields: tuple  # ((name, expr), ...)
    span: Span = _span()


@dataclass(frozen=True)
class Subquery(Expr):
    query: "SelectBlock"
    span: Span = _span()


# -- query blocks -----------------------------------------------------------------------

@dataclass(frozen=True)
class LetBinding:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Projection:
    expr: Expr
    alias: str = None
    star: bool = False  # "x.*" merges the fields of x


@dataclass(frozen=True)
class FromTerm:
    expr: Expr
    alias: str


@dataclass(frozen=True)
class GroupItem:
    expr: Expr
    alias: str = None


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class SelectBlock:
    pre_lets: tuple = ()
    select_value: Expr = None  # SELECT VALUE e
    projections: tuple = ()
    from_terms: tuple = ()
    lets: tuple = ()
    where: Expr = None
    group_by: tuple = ()
    order_by: tuple = ()
    limit: Expr = None
    span: Span = _span()


# -- statements -------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeField:
    name: str
    type_name: str
    optional: bool = False


@dataclass(frozen=True)
class CreateType:
    name: str
    fields: tuple
    open: bool = True
    span: Span = _span()


@dataclass(frozen=True)
class CreateDataset:
    name: str
    type_name: str
    primary_key: tuple
    span: Span = _span()


@dataclass(frozen=True)
class CreateIndex:
    name: str
    dataset: str
    field: str
    kind: str  # "BTREE" | "RTREE"
    span: Span = _span()


@dataclass(frozen=True)
class CreateFunction:
    name: str
    params: tuple
    body: object  # SelectBlock or Expr
    span: Span = _span()


@dataclass(frozen=True)
class CreateFeed:
    name: str
    options: tuple  # ((key, value), ...) in source order
    span: Span = _span()

    @property
    def config(self):
        return dict(self.options)


@dataclass(frozen=True)
class ConnectFeed:
    feed: str
    dataset: str
    function: str = None
    span: Span = _span()


@dataclass(frozen=True)
class StartFeed:
    feed: str
    span: Span = _span()


@dataclass(frozen=True)
class StopFeed:
    feed: str
    span: Span = _span()


@dataclass(frozen=True)
class Insert:
    dataset: str
    body: object
    span: Span = _span()


@dataclass(frozen=True)
class Upsert:
    dataset: str
    body: object
    span: Span = _span()


@dataclass(frozen=True)
class Query:
    body: object
    span: Span = _span()


STATEMENT_TYPES = (CreateType, CreateDataset, CreateIndex, CreateFunction, CreateFeed,
                   ConnectFeed, StartFeed, StopFeed, Insert, Upsert, Query)


def walk(node):
    """Yield ``node`` and every AST node below it (expressions and query blocks)."""
    stack = [node]
    while stack:
        n = stack.pop()
        if n is None:
            continue
        yield n
        if isinstance(n, (tuple, list)):
            stack.extend(n)
            continue
        if isinstance(n, (Literal, Var)):
            continue
        if isinstance(n, FieldAccess):
            stack.append(n.base)
        elif isinstance(n, IndexAccess):
            stack.extend((n.base, n.index))
        elif isinstance(n, Call):
            stack.extend(n.args)
        elif isinstance(n, Unary):
            stack.append(n.operand)
        elif isinstance(n, Binary):
            stack.extend((n.left, n.right))
        elif isinstance(n, InExpr):
            stack.extend((n.expr, n.collection))
        elif isinstance(n, Exists):
            stack.append(n.operand)
        elif isinstance(n, Case):
            stack.append(n.subject)
            for w, t in n.whens:
                stack.extend((w, t))
            stack.append(n.default)
        elif isinstance(n, ArrayCtor):
            stack.extend(n.items)
        elif isinstance(n, ObjectCtor):
            stack.extend(e for _, e in n.fields)
        elif isinstance(n, Subquery):
            stack.append(n.query)
        elif isinstance(n, SelectBlock):
            stack.extend(b.expr for b in n.pre_lets)
            stack.append(n.select_value)
            stack.extend(p.expr for p in n.projections)
            stack.extend(t.expr for t in n.from_terms)
            stack.extend(b.expr for b in n.lets)
            stack.append(n.where)
            stack.extend(g.expr for g in n.group_by)
            stack.extend(o.expr for o in n.order_by)
            stack.append(n.limit)
        elif isinstance(n, (CreateFunction,)):
            stack.append(n.body)
        elif isinstance(n, (Insert, Upsert, Query)):
            stack.append(n.body)
