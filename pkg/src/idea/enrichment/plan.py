"""Compilation of query ASTs into executable closures and join plans.

Expressions compile to closures over an environment dict. A query block
compiles to a :class:`BlockPlan`: its outer-only subexpressions are hoisted
into slots (so results can be memoized per distinct slot values within a
batch), FROM terms are ordered greedily by access path (index probe, hash
table, spatial filter, then nested loop), and the remaining WHERE conjuncts
are attached as residual filters at the earliest step that binds their
variables. Reference-data state (scanned rows, hash tables, spatial arrays)
lives in the :class:`~idea.enrichment.evaluator.Invocation`, so it is rebuilt
whenever a new invocation starts.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..datamodel import MISSING, Circle, Point, Rectangle, kind_of, serialize_record
from ..ddl import ast as A
from ..errors import ArgumentTypeError, PlanError, UnknownFunction
from ..geometry import bounding_box
from ..storage.store import IndexKind
from .analysis import (
    Hoister,
    conjuncts,
    contains_aggregate,
    derived_name,
    free_vars,
    top_subqueries,
)
from .builtins import AGGREGATES, BUILTINS
from .hashjoin import hash_join
from .values import (
    COMPARISONS,
    and3,
    arith,
    concat,
    eq,
    freeze,
    join_key,
    negate,
    not3,
    or3,
    order_key,
)

INV = "\x00inv"
GKEY = "\x00gk"
ROWS = "\x00rows"
_NOPE = object()
_plan_ids = itertools.count()


class GroupInfo:
    def __init__(self, exprs, aliases, row_scope):
        self.exprs = {e: i for i, e in reversed(list(enumerate(exprs)))}
        self.aliases = aliases
        self.row_scope = row_scope


class Scope:
    __slots__ = ("names", "group")

    def __init__(self, names, group=None):
        self.names = frozenset(names)
        self.group = group

    def plus(self, *names):
        return Scope(self.names | set(names), self.group)


def memo_key(v):
    """Exact hashable form: distinguishes 1 from 1.0 and 0.0 from -0.0."""
    t = type(v)
    if t is str or t is int or t is bool:
        return (t, v)
    if t is float:
        return (t, repr(v))
    if t is list or t is tuple:
        return (list, tuple(memo_key(x) for x in v))
    if t is dict:
        return (dict, tuple((k, memo_key(x)) for k, x in v.items()))
    return (t, v)


def field_path(node, alias):
    """'a.b' when ``node`` is alias.a.b, else None."""
    names = []
    while type(node) is A.FieldAccess:
        names.append(node.name)
        node = node.base
    if type(node) is A.Var and node.name == alias and names:
        return ".".join(reversed(names))
    return None


# -- expression compiler --------------------------------------------------------------------

class Compiler:
    def __init__(self, catalog, functions, use_indexes=True):
        self.catalog = catalog
        self.functions = functions
        self.use_indexes = use_indexes
        self.plans = []
        self.subplans = {}
        self._fn_plans = {}
        self._compiling = set()

    # function bodies -----------------------------------------------------------------------
    def function_plan(self, fn):
        plan = self._fn_plans.get(fn.qualified_name)
        if plan is not None:
            return plan
        if fn.qualified_name in self._compiling:
            raise PlanError(f"function {fn.qualified_name} is recursive")
        self._compiling.add(fn.qualified_name)
        start = len(self.plans)
        try:
            plan = FunctionPlan(self, fn)
        finally:
            self._compiling.discard(fn.qualified_name)
        plan.plans = self.plans[start:]
        self._fn_plans[fn.qualified_name] = plan
        return plan

    # expressions -----------------------------------------------------------------------------
    def expr(self, n, scope):
        g = scope.group
        if g is not None and n in g.exprs:
            i = g.exprs[n]
            return lambda env: env[GKEY][i]
        method = getattr(self, "_c_" + type(n).__name__, None)
        if method is None:
            raise PlanError(f"cannot compile {type(n).__name__}")
        return method(n, scope)

    def _c_Literal(self, n, scope):
        v = n.value
        return lambda env: v

    def _c_Var(self, n, scope):
        name = n.name
        if name in scope.names:
            return lambda env: env[name]
        g = scope.group
        if g is not None and name in g.row_scope.names:
            raise PlanError(f"{name!r} must appear in GROUP BY or inside an aggregate")
        if self.catalog is not None and self.catalog.has_dataset(name):
            return lambda env: env[INV].dataset_rows(name)
        raise PlanError(f"unresolved name {name!r}")

    def _c_FieldAccess(self, n, scope):
        # flatten var.a.b.c into a single closure
        names = []
        base = n
        while type(base) is A.FieldAccess and not (scope.group and base in scope.group.exprs):
            names.append(base.name)
            base = base.base
        names.reverse()
        bf = self.expr(base, scope)
        if len(names) == 1:
            name = names[0]

            def f(env):
                b = bf(env)
                if type(b) is dict:
                    return b.get(name, MISSING)
                return None if b is None else MISSING
            return f

        def f(env):
            b = bf(env)
            for name in names:
                if type(b) is dict:
                    b = b.get(name, MISSING)
                elif b is None:
                    return None
                else:
                    return MISSING
            return b
        return f

    def _c_IndexAccess(self, n, scope):
        bf = self.expr(n.base, scope)
        xf = self.expr(n.index, scope)

        def f(env):
            b = bf(env)
            i = xf(env)
            if b is MISSING or i is MISSING:
                return MISSING
            if b is None or i is None:
                return None
            if type(i) is not int:
                raise ArgumentTypeError(f"array index must be an integer, got {kind_of(i)}")
            if type(b) is list:
                return b[i] if 0 <= i < len(b) else MISSING
            if type(b) is dict and i == 0:
                return b  # take-first on a single-row result
            return MISSING
        return f

    def _c_Unary(self, n, scope):
        of = self.expr(n.operand, scope)
        if n.op == "not":
            return lambda env: not3(of(env))
        return lambda env: negate(of(env))

    def _c_Binary(self, n, scope):
        lf = self.expr(n.left, scope)
        rf = self.expr(n.right, scope)
        op = n.op
        if op == "and":
            def f(env):
                a = lf(env)
                if a is False:
                    return False
                return and3(a, rf(env))
            return f
        if op == "or":
            def f(env):
                a = lf(env)
                if a is True:
                    return True
                return or3(a, rf(env))
            return f
        cmp = COMPARISONS.get(op)
        if cmp is not None:
            return lambda env: cmp(lf(env), rf(env))
        if op == "||":
            return lambda env: concat(lf(env), rf(env))
        if op in ("+", "-", "*", "/", "%"):
            return lambda env: arith(op, lf(env), rf(env))
        raise PlanError(f"unknown operator {op!r}")

    def _c_InExpr(self, n, scope):
        ef = self.expr(n.expr, scope)
        cf = self.expr(n.collection, scope)
        negated = n.negated

        def f(env):
            v = ef(env)
            c = cf(env)
            if v is MISSING or c is MISSING:
                return MISSING
            if v is None or c is None:
                return None
            if type(c) is not list:
                raise ArgumentTypeError(f"IN expects an array, got {kind_of(c)}")
            unknown = False
            found = False
            for x in c:
                r = eq(v, x)
                if r is True:
                    found = True
                    break
                if r is not False:
                    unknown = True
            res = True if found else (None if unknown else False)
            return not3(res) if negated else res
        return f

    def _c_Exists(self, n, scope):
        of = self.expr(n.operand, scope)

        def f(env):
            v = of(env)
            if v is MISSING or v is None:
                return False
            if type(v) is not list:
                raise ArgumentTypeError(f"EXISTS expects an array, got {kind_of(v)}")
            return len(v) > 0
        return f

    def _c_Case(self, n, scope):
        sf = self.expr(n.subject, scope) if n.subject is not None else None
        whens = [(self.expr(w, scope), self.expr(t, scope)) for w, t in n.whens]
        df = self.expr(n.default, scope) if n.default is not None else (lambda env: None)
        if sf is None:
            def f(env):
                for wf, tf in whens:
                    if wf(env) is True:
                        return tf(env)
                return df(env)
        else:
            def f(env):
                s = sf(env)
                for wf, tf in whens:
                    if eq(s, wf(env)) is True:
                        return tf(env)
                return df(env)
        return f

    def _c_ArrayCtor(self, n, scope):
        items = [self.expr(i, scope) for i in n.items]

        def f(env):
            out = []
            for i in items:
                v = i(env)
                out.append(None if v is MISSING else v)
            return out
        return f

    def _c_ObjectCtor(self, n, scope):
        fields = [(k, self.expr(v, scope)) for k, v in n.fields]

        def f(env):
            out = {}
            for k, vf in fields:
                v = vf(env)
                if v is not MISSING:
                    out[k] = v
            return out
        return f

    def _c_Subquery(self, n, scope):
        plan = BlockPlan(self, n.query, scope)
        self.subplans[id(n)] = plan
        key = plan.result_key

        def f(env):
            r = env.get(key, _NOPE)
            if r is not _NOPE:
                return r
            return plan.evaluate_from(env)
        f.plan = plan
        return f

    def _c_Call(self, n, scope):
        if n.library is None:
            lname = n.name.lower()
            if lname in AGGREGATES:
                return self._aggregate(n, lname, scope)
            if lname in BUILTINS:
                return self._builtin(n, lname, scope)
        fn = self.functions.lookup(n.qualified_name) if self.functions is not None else None
        if fn is None:
            raise UnknownFunction(f"unknown function {n.qualified_name}/{len(n.args)}")
        if n.star:
            raise PlanError(f"{n.qualified_name}(*) is only valid for count")
        if fn.arity != len(n.args):
            raise UnknownFunction(
                f"{n.qualified_name} takes {fn.arity} argument(s), got {len(n.args)}")
        args = [self.expr(a, scope) for a in n.args]
        if fn.native is not None:
            def f(env):
                inst = env[INV].native(fn)
                return inst.evaluate(*[a(env) for a in args])
            return f
        plan = self.function_plan(fn)
        params = fn.params

        def f(env):
            e = {INV: env[INV]}
            for p, a in zip(params, args):
                e[p] = a(env)
            return plan.call(e)
        return f

    def _builtin(self, n, lname, scope):
        fn, lo, hi, propagate = BUILTINS[lname]
        if n.star or not lo <= len(n.args) <= hi:
            raise UnknownFunction(f"{n.name} takes {lo} argument(s), got {len(n.args)}")
        args = [self.expr(a, scope) for a in n.args]
        if not propagate:
            return lambda env: fn(*[a(env) for a in args])
        if len(args) == 1:
            a0 = args[0]

            def f(env):
                x = a0(env)
                if x is MISSING or x is None:
                    return x
                return fn(x)
            return f
        if len(args) == 2:
            a0, a1 = args

            def f(env):
                x = a0(env)
                y = a1(env)
                if x is MISSING or y is MISSING:
                    return MISSING
                if x is None or y is None:
                    return None
                return fn(x, y)
            return f

        def f(env):
            vals = [a(env) for a in args]
            if any(v is MISSING for v in vals):
                return MISSING
            if any(v is None for v in vals):
                return None
            return fn(*vals)
        return f

    def _aggregate(self, n, lname, scope):
        agg = AGGREGATES[lname]
        g = scope.group
        if g is not None:
            if n.star:
                if lname != "count" or n.args:
                    raise PlanError(f"{n.name}(*) is not valid")
                return lambda env: len(env[ROWS])
            if len(n.args) != 1:
                raise UnknownFunction(f"{n.name} takes 1 argument, got {len(n.args)}")
            af = self.expr(n.args[0], g.row_scope)
            return lambda env: agg([af(r) for r in env[ROWS]])
        if n.star or len(n.args) != 1:
            raise PlanError(f"{n.name} outside a grouping query needs one array argument")
        af = self.expr(n.args[0], scope)

        def f(env):
            c = af(env)
            if c is MISSING or c is None:
                return c
            if type(c) is not list:
                raise ArgumentTypeError(f"{n.name} expects an array, got {kind_of(c)}")
            return agg(c)
        return f


# -- join steps -----------------------------------------------------------------------------

class _Step:
    """Binds one FROM alias. ``residuals`` are checked on every candidate."""

    kind = "nested"
    rank = 3

    def __init__(self, plan, term, index):
        self.plan = plan
        self.alias = term.alias
        self.term = term
        self.index = index
        self.residuals = []
        self.prefilters = []

    @property
    def state_key(self):
        return (self.plan.id, self.index)

    def scan_rows(self, inv):
        """Prefiltered (record, pk) rows of the dataset, built once per invocation."""
        return inv.state(self.state_key + ("scan",), self._build_scan)[0]

    def scan_info(self, inv):
        return inv.state(self.state_key + ("scan",), self._build_scan)

    def _build_scan(self, inv):
        ds = inv.dataset(self.term.dataset)
        pre = self.prefilters
        alias = self.alias
        rows = []
        key_of = ds.key_of
        if pre:
            env = {INV: inv}
            for rec in ds.scan():
                env[alias] = rec
                if all(p(env) is True for p in pre):
                    rows.append((rec, key_of(rec)))
        else:
            for rec in ds.scan():
                rows.append((rec, key_of(rec)))
        # sampled size estimate of the materialized build side
        sample = rows[::32]
        est = 0
        if sample:
            est = sum(len(serialize_record(r)) for r, _ in sample) * len(rows) // len(sample)
        inv.note_build(len(rows), est)
        return rows, est

    def candidates(self, env, inv):
        return self.scan_rows(inv)

    def prepare(self, inv):
        return self.scan_info(inv)[1]


class _ExprStep(_Step):
    kind = "expr"

    def __init__(self, plan, term, index, fn):
        super().__init__(plan, term, index)
        self.fn = fn

    def candidates(self, env, inv):
        c = self.fn(env)
        if c is MISSING or c is None:
            return ()
        if type(c) is not list:
            raise ArgumentTypeError(f"FROM expects an array, got {kind_of(c)}")
        return [(v, i) for i, v in enumerate(c)]

    def prepare(self, inv):
        return 0


class _HashStep(_Step):
    kind = "hash"
    rank = 1

    def __init__(self, plan, term, index, build_fn, probe_fn):
        super().__init__(plan, term, index)
        self.build_fn = build_fn
        self.probe_fn = probe_fn

    def _build_table(self, inv):
        rows, est = self.scan_info(inv)
        table = {}
        loose = []
        env = {INV: inv}
        alias = self.alias
        bf = self.build_fn
        for row in rows:
            env[alias] = row[0]
            k = bf(env)
            try:
                k = join_key(k)
            except TypeError:
                loose.append(row)
                continue
            if k is None:
                continue
            try:
                lst = table.get(k)
            except TypeError:
                loose.append(row)
                continue
            if lst is None:
                table[k] = [row]
            else:
                lst.append(row)
        return table, loose

    def table(self, inv):
        return inv.state(self.state_key + ("hash",), self._build_table)

    def candidates(self, env, inv):
        table, loose = self.table(inv)
        k = join_key(self.probe_fn(env))
        if k is None:
            return ()
        try:
            hit = table.get(k, ())
        except TypeError:
            hit = ()
        return list(hit) + loose if loose else hit

    def prepare(self, inv):
        est = self.scan_info(inv)[1]
        self.table(inv)
        return est


class _SpatialStep(_Step):
    kind = "spatial"
    rank = 2

    def __init__(self, plan, term, index, geom_fn, probe_fn):
        super().__init__(plan, term, index)
        self.geom_fn = geom_fn
        self.probe_fn = probe_fn

    def _build_boxes(self, inv):
        rows = self.scan_rows(inv)
        env = {INV: inv}
        alias = self.alias
        kept = []
        boxes = []
        for row in rows:
            env[alias] = row[0]
            g = self.geom_fn(env)
            if type(g) in (Point, Circle, Rectangle):
                kept.append(row)
                boxes.append(bounding_box(g))
        arr = np.array(boxes, dtype=float).reshape(-1, 4)
        return kept, arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy()

    def candidates(self, env, inv):
        kept, x1, y1, x2, y2 = inv.state(self.state_key + ("boxes",), self._build_boxes)
        g = self.probe_fn(env)
        if g is MISSING or g is None or not kept:
            return ()
        px1, py1, px2, py2 = bounding_box(g)
        mask = (x1 <= px2) & (x2 >= px1) & (y1 <= py2) & (y2 >= py1)
        return [kept[i] for i in np.flatnonzero(mask)]

    def prepare(self, inv):
        est = self.scan_info(inv)[1]
        inv.state(self.state_key + ("boxes",), self._build_boxes)
        return est


class _IndexEqStep(_Step):
    kind = "index"
    rank = 0

    def __init__(self, plan, term, index, index_name, probe_fn):
        super().__init__(plan, term, index)
        self.index_name = index_name
        self.probe_fn = probe_fn

    def candidates(self, env, inv):
        v = self.probe_fn(env)
        if v is MISSING or v is None:
            return ()
        ds = inv.dataset(self.term.dataset)
        try:
            recs = ds.index_lookup(self.index_name, v)
        except ArgumentTypeError:
            return ()
        inv.note_probe()
        return [(r, ds.key_of(r)) for r in recs]

    def prepare(self, inv):
        return 0


class _IndexSpatialStep(_Step):
    """R-tree probe. With ``radius_fn`` the indexed point is the centre of a
    circle and the probe geometry is dilated by the radius instead."""

    kind = "index"
    rank = 0

    def __init__(self, plan, term, index, index_name, probe_fn, radius_fn=None):
        super().__init__(plan, term, index)
        self.index_name = index_name
        self.probe_fn = probe_fn
        self.radius_fn = radius_fn

    def candidates(self, env, inv):
        g = self.probe_fn(env)
        if g is MISSING or g is None:
            return ()
        ds = inv.dataset(self.term.dataset)
        inv.note_probe()
        if self.radius_fn is not None:
            r = self.radius_fn(env)
            if type(r) not in (int, float):
                return ()
            if type(g) is Point:
                recs = ds.index_lookup_circle(self.index_name, Circle(g, float(r)))
            else:
                x1, y1, x2, y2 = bounding_box(g)
                recs = ds.index_lookup_box(self.index_name, (x1 - r, y1 - r, x2 + r, y2 + r))
        elif type(g) is Circle:
            recs = ds.index_lookup_circle(self.index_name, g)
        else:
            recs = ds.index_lookup_box(self.index_name, bounding_box(g))
        return [(r, ds.key_of(r)) for r in recs]

    def prepare(self, inv):
        return 0


class _Term:
    def __init__(self, alias, position, dataset=None, expr=None):
        self.alias = alias
        self.position = position
        self.dataset = dataset
        self.expr = expr


class _Conj:
    def __init__(self, node, aliases):
        self.node = node
        self.aliases = aliases


# -- query blocks --------------------------------------------------------------------------------

class BlockPlan:
    """Compiled SELECT block.

    ``top`` blocks (function bodies and statements) bind their outer names
    directly; nested blocks hoist outer references into slots. ``collapse``
    makes a FROM-less, non-aggregating block return its single row instead
    of a one-element list.
    """

    def __init__(self, compiler, block, outer_scope, top=False, collapse=False):
        self.id = next(_plan_ids)
        self.result_key = f"\x00r{self.id}"
        self.compiler = compiler
        self.top = top
        compiler.plans.append(self)
        if top:
            self.slot_names = []
            self.slot_fns = []
            q = block
            names = set(outer_scope.names)
        else:
            h = Hoister(outer_scope.names)
            q = h.block(block, set())
            self.slot_names = [s for s, _ in h.slots]
            self.slot_fns = [compiler.expr(e, outer_scope) for _, e in h.slots]
            names = set(self.slot_names)
        names.add(INV)
        self.block = q
        c = compiler

        # LET before SELECT
        self.pre_lets = []
        for let in q.pre_lets:
            self.pre_lets.append((let.name, c.expr(let.expr, Scope(names))))
            names.add(let.name)
        pre_names = frozenset(names)
        self.pre_names = pre_names

        # FROM terms
        terms = []
        for pos, t in enumerate(q.from_terms):
            if type(t.expr) is A.Var and t.expr.name not in names:
                if c.catalog is None or not c.catalog.has_dataset(t.expr.name):
                    raise PlanError(f"unknown dataset or variable {t.expr.name!r}")
                terms.append(_Term(t.alias, pos, dataset=t.expr.name))
            else:
                terms.append(_Term(t.alias, pos, expr=t.expr))
        aliases = [t.alias for t in terms]
        if len(set(aliases)) != len(aliases):
            raise PlanError("duplicate alias in FROM")
        alias_set = frozenset(aliases)
        self.terms = terms

        # LET after FROM
        row_names = set(pre_names) | alias_set
        self.lets = []
        for let in q.lets:
            self.lets.append((let.name, c.expr(let.expr, Scope(row_names))))
            row_names.add(let.name)
        let_names = {let.name for let in q.lets}
        self.row_scope = Scope(row_names)

        # WHERE conjuncts
        self.block_filters = []
        self.final_filters = []
        join_conjs = []
        for node in conjuncts(q.where):
            fv = free_vars(node)
            if fv & let_names:
                self.final_filters.append(c.expr(node, self.row_scope))
            elif not fv & alias_set:
                self.block_filters.append(c.expr(node, Scope(pre_names)))
            else:
                join_conjs.append(_Conj(node, frozenset(fv & alias_set)))
        self.steps = self._plan_steps(terms, join_conjs, pre_names)
        self.perm = [next(i for i, s in enumerate(self.steps) if s.alias == t.alias)
                     for t in terms]

        # grouping and output
        self.has_from = bool(terms)
        aggregating = bool(q.group_by) or any(
            contains_aggregate(e) for e in
            [q.select_value] + [p.expr for p in q.projections] + [o.expr for o in q.order_by]
            if e is not None)
        self.aggregating = aggregating
        if aggregating:
            self.group_fns = [c.expr(g.expr, self.row_scope) for g in q.group_by]
            galiases = {g.alias: i for i, g in enumerate(q.group_by) if g.alias}
            ginfo = GroupInfo([g.expr for g in q.group_by], galiases, self.row_scope)
            self.group_aliases = list(galiases.items())
            out_scope = Scope(pre_names | set(galiases), ginfo)
        else:
            out_scope = self.row_scope
        self.out_scope = out_scope

        self.select_value = None
        self.projections = []
        if q.select_value is not None:
            self.select_value = c.expr(q.select_value, out_scope)
        else:
            for pos, p in enumerate(q.projections, 1):
                fn = c.expr(p.expr, out_scope)
                if p.star:
                    self.projections.append((True, None, fn))
                else:
                    name = p.alias or derived_name(p.expr) or f"${pos}"
                    self.projections.append((False, name, fn))
        proj_names = {name for star, name, _ in self.projections if not star}
        self.order_uses_output = False
        self.order = []
        for o in q.order_by:
            fv = free_vars(o.expr)
            extra = (fv - out_scope.names) & proj_names
            if extra:
                self.order_uses_output = True
                sc = Scope(out_scope.names | extra, out_scope.group)
            else:
                sc = out_scope
            self.order.append((c.expr(o.expr, sc), o.descending))
        self.limit = c.expr(q.limit, Scope(pre_names)) if q.limit is not None else None
        self.collapse = collapse and not self.has_from and not aggregating

        # subqueries in LET/projection expressions of a FROM-less block can be
        # evaluated for a whole batch at once
        self.let_subplans = [self._subplans(let.expr) for let in q.pre_lets]
        self.output_subplans = []
        for e in [q.select_value] + [p.expr for p in q.projections]:
            if e is not None:
                self.output_subplans += self._subplans(e)

    def _subplans(self, node):
        found = (self.compiler.subplans.get(id(sq)) for sq in top_subqueries(node))
        return [p for p in found if p is not None]

    # planning -----------------------------------------------------------------------------
    def _plan_steps(self, terms, conjs, pre_names):
        c = self.compiler
        bound = set()
        remaining = list(terms)
        steps = []
        used = set()
        while remaining:
            best = None
            for term in remaining:
                if term.expr is not None:
                    deps = free_vars(term.expr) & {t.alias for t in terms}
                    if not deps <= bound:
                        continue
                    fn = c.expr(term.expr, Scope(pre_names | bound))
                    cand = (3, term.position, _ExprStep(self, term, len(steps), fn), None)
                else:
                    cand = None
                    linked = False
                    for ci, cj in enumerate(conjs):
                        if term.alias not in cj.aliases or not cj.aliases - {term.alias} <= bound:
                            continue
                        linked = linked or bool(cj.aliases - {term.alias}) or \
                            bool(free_vars(cj.node) - cj.aliases)
                        step = self._access(term, cj.node, pre_names | bound, len(steps))
                        if step is not None and (cand is None or step.rank < cand[0]):
                            cand = (step.rank, term.position, step, ci)
                    if cand is None:
                        cand = (3 if linked else 4, term.position,
                                _Step(self, term, len(steps)), None)
                if best is None or cand[:2] < best[:2]:
                    best = cand
            if best is None:
                raise PlanError("FROM terms depend on each other cyclically")
            _, _, step, ci = best
            if ci is not None:
                used.add(ci)
            steps.append(step)
            remaining = [t for t in remaining if t is not step.term]
            bound.add(step.term.alias)
        # attach conjuncts: single-alias static ones become prefilters of scan-based steps
        for cj in conjs:
            last = max(i for i, s in enumerate(steps) if s.alias in cj.aliases)
            step = steps[last]
            scope = Scope(pre_names | {s.alias for s in steps[:last + 1]})
            fn = c.expr(cj.node, scope)
            static = cj.aliases == {step.alias} and free_vars(cj.node) <= {step.alias}
            if static and step.kind in ("nested", "hash", "spatial"):
                step.prefilters.append(c.expr(cj.node, Scope({step.alias, INV})))
            else:
                step.residuals.append(fn)
        return steps

    def _access(self, term, node, avail, index):
        """A keyed access path for ``term`` from conjunct ``node``, if one applies."""
        c = self.compiler
        b = term.alias
        if type(node) is A.Binary and node.op == "=":
            for bside, pside in ((node.left, node.right), (node.right, node.left)):
                if free_vars(bside) == {b} and free_vars(pside) and free_vars(pside) <= avail:
                    probe = c.expr(pside, Scope(avail))
                    path = field_path(bside, b)
                    if c.use_indexes and path:
                        desc = c.catalog.dataset(term.dataset).index_on(path, IndexKind.BTREE)
                        if desc is not None:
                            return _IndexEqStep(self, term, index, desc.name, probe)
                    build = c.expr(bside, Scope({b, INV}))
                    return _HashStep(self, term, index, build, probe)
        if type(node) is A.Call and node.library is None and \
                node.name.lower() == "spatial_intersect" and len(node.args) == 2:
            x, y = node.args
            for bside, pside in ((x, y), (y, x)):
                if free_vars(bside) != {b} or not free_vars(pside) or not free_vars(pside) <= avail:
                    continue
                probe = c.expr(pside, Scope(avail))
                if c.use_indexes:
                    ds = c.catalog.dataset(term.dataset)
                    path = field_path(bside, b)
                    if path:
                        desc = ds.index_on(path, IndexKind.RTREE)
                        if desc is not None:
                            return _IndexSpatialStep(self, term, index, desc.name, probe)
                    if type(bside) is A.Call and bside.name.lower() == "create_circle" and \
                            len(bside.args) == 2 and not free_vars(bside.args[1]) & {b}:
                        path = field_path(bside.args[0], b)
                        desc = ds.index_on(path, IndexKind.RTREE) if path else None
                        if desc is not None:
                            radius = c.expr(bside.args[1], Scope(avail))
                            return _IndexSpatialStep(self, term, index, desc.name, probe, radius)
                geom = c.expr(bside, Scope({b, INV}))
                return _SpatialStep(self, term, index, geom, probe)
        return None

    # execution -------------------------------------------------------------------------------
    def evaluate_from(self, env):
        """Evaluate the block for one enclosing environment."""
        inv = env[INV]
        vals = [fn(env) for fn in self.slot_fns]
        return self.run_slots(vals, inv)

    def run_slots(self, vals, inv, leading=None):
        memo = None
        key = None
        if not self.top:
            key = tuple(memo_key(v) for v in vals)
            memo = inv.memo_for(self.id)
            try:
                r = memo.get(key, _NOPE)
            except TypeError:
                memo = None
                r = _NOPE
            if r is not _NOPE:
                return r
        env = {INV: inv}
        for name, v in zip(self.slot_names, vals):
            env[name] = v
        r = self.run_entry(env, leading)
        if memo is not None:
            memo[key] = r
        return r

    def run_entry(self, env, leading=None):
        for name, fn in self.pre_lets:
            env[name] = fn(env)
        return self.finish(env, leading)

    def finish(self, env, leading=None):
        inv = env[INV]
        for f in self.block_filters:
            if f(env) is not True:
                return self._empty(env)
        if self.has_from:
            rows = self._join(env, inv, leading)
        else:
            rows = [(env, ())]
        if self.lets or self.final_filters:
            kept = []
            for e, k in rows:
                for name, fn in self.lets:
                    e[name] = fn(e)
                if all(f(e) is True for f in self.final_filters):
                    kept.append((e, k))
            rows = kept
        return self._output(env, rows)

    def _empty(self, env):
        if self.collapse:
            return MISSING
        if self.aggregating and not self.block.group_by:
            return self._output_groups_of(env, [])
        return []

    def _join(self, env, inv, leading):
        rows = [(env, ())]
        for si, step in enumerate(self.steps):
            nxt = []
            alias = step.alias
            residuals = step.residuals
            for e, key in rows:
                if si == 0 and leading is not None:
                    cands = leading
                else:
                    cands = step.candidates(e, inv)
                for rec, pk in cands:
                    e2 = dict(e)
                    e2[alias] = rec
                    ok = True
                    for r in residuals:
                        if r(e2) is not True:
                            ok = False
                            break
                    if ok:
                        nxt.append((e2, key + (pk,)))
            rows = nxt
            if not rows:
                return rows
        if len(rows) > 1:
            perm = self.perm
            if len(perm) == 1:
                rows.sort(key=lambda r: r[1])
            else:
                rows.sort(key=lambda r: tuple(r[1][i] for i in perm))
        return rows

    def _output(self, env, rows):
        if self.aggregating:
            return self._output_groups_of(env, rows)
        return self._emit([e for e, _ in rows], env)

    def _output_groups_of(self, env, rows):
        if env is None:
            env = {}
        groups = {}
        order = []
        if self.block.group_by:
            fns = self.group_fns
            for e, _ in rows:
                kv = tuple(f(e) for f in fns)
                k = tuple(freeze(v) for v in kv)
                g = groups.get(k)
                if g is None:
                    g = groups[k] = (kv, [])
                    order.append(k)
                g[1].append(e)
        else:
            groups[()] = ((), [e for e, _ in rows])
            order.append(())
        units = []
        for k in order:
            kv, members = groups[k]
            genv = dict(env)
            genv[GKEY] = kv
            genv[ROWS] = members
            for alias, i in self.group_aliases:
                genv[alias] = kv[i]
            units.append(genv)
        return self._emit(units, env)

    def _emit(self, units, env):
        if self.select_value is not None:
            sv = self.select_value
            outs = []
            for u in units:
                v = sv(u)
                outs.append(None if v is MISSING else v)
        else:
            outs = []
            for u in units:
                obj = {}
                for star, name, fn in self.projections:
                    v = fn(u)
                    if star:
                        if type(v) is dict:
                            obj.update(v)
                        elif v is not MISSING and v is not None:
                            raise ArgumentTypeError(f".* expects an object, got {kind_of(v)}")
                    elif v is not MISSING:
                        obj[name] = v
                outs.append(obj)
        if self.order and len(outs) > 1:
            idx = list(range(len(outs)))
            for fn, desc in reversed(self.order):
                if self.order_uses_output:
                    keys = []
                    for u, o in zip(units, outs):
                        e = dict(u)
                        if type(o) is dict:
                            e.update(o)
                        keys.append(order_key(fn(e)))
                else:
                    keys = [order_key(fn(u)) for u in units]
                idx.sort(key=lambda i: keys[i], reverse=desc)
            outs = [outs[i] for i in idx]
        if self.limit is not None:
            n = self.limit(env)
            if type(n) is not int or n < 0:
                raise ArgumentTypeError("LIMIT expects a non-negative integer")
            outs = outs[:n]
        if self.collapse:
            return outs[0] if outs else MISSING
        return outs

    # batch evaluation ---------------------------------------------------------------------------
    def leading_hash(self):
        """The first step when it is a hash probe keyed only by slot values."""
        if not self.steps or self.pre_lets or self.block_filters:
            return None
        s = self.steps[0]
        return s if s.kind == "hash" else None

    def run_many(self, envs, inv, failures):
        """Evaluate the block for each enclosing environment in ``envs``.

        Returns one result per env (None where evaluation failed; the error is
        stored in ``failures`` by position). Distinct slot values are evaluated
        once; when the leading hash step's build side exceeds the memory budget
        the probes for the whole batch go through the spilling hash join.
        """
        results = [None] * len(envs)
        by_key = {}
        for i, env in enumerate(envs):
            try:
                vals = [fn(env) for fn in self.slot_fns]
                key = tuple(memo_key(v) for v in vals)
                hash(key)
            except Exception as e:  # noqa: BLE001 - per-record failure
                failures[i] = e
                continue
            ent = by_key.get(key)
            if ent is None:
                by_key[key] = (vals, [i])
            else:
                ent[1].append(i)
        leading = {}
        step = self.leading_hash()
        if step is not None and by_key:
            rows, est = step.scan_info(inv)
            if est > inv.budget:
                leading = self._spilled_leading(step, rows, est, by_key, inv, failures)
        for key, (vals, idxs) in by_key.items():
            if idxs[0] in failures:
                continue
            try:
                if step is not None and key in leading:
                    r = self.run_slots(vals, inv, leading[key])
                else:
                    r = self.run_slots(vals, inv)
            except Exception as e:  # noqa: BLE001
                for i in idxs:
                    failures[i] = e
                continue
            for i in idxs:
                results[i] = r
        return results

    def _spilled_leading(self, step, rows, est, by_key, inv, failures):
        keys = list(by_key)
        probes = []
        for j, key in enumerate(keys):
            vals, idxs = by_key[key]
            env = {INV: inv}
            env.update(zip(self.slot_names, vals))
            try:
                probes.append([j, step.probe_fn(env)])
            except Exception as e:  # noqa: BLE001
                for i in idxs:
                    failures[i] = e
        alias = step.alias
        benv = {INV: inv}

        def bkey(r):
            benv[alias] = r[1]
            return step.build_fn(benv)

        avg = max(1, est // max(1, len(rows)))
        pairs = hash_join([[pk, rec] for rec, pk in rows], probes, bkey, lambda p: p[1],
                          budget=inv.budget, spill_dir=inv.spill_dir, row_size=avg,
                          stats=inv.join_stats)
        inv.note_spill()
        out = {key: [] for key in keys}
        for p, b in pairs:
            out[keys[p[0]]].append((b[1], bytes(b[0])))
        return out


class FunctionPlan:
    """Compiled body of a declarative function."""

    def __init__(self, compiler, fn):
        self.fn = fn
        self.compiler = compiler
        scope = Scope(set(fn.params) | {INV})
        body = fn.body
        if isinstance(body, A.SelectBlock):
            self.block = BlockPlan(compiler, body, scope, top=True, collapse=True)
            self.expr = None
        else:
            self.block = None
            self.expr = compiler.expr(body, scope)

    def call(self, env):
        if self.block is not None:
            return self.block.run_entry(env)
        return self.expr(env)

    def evaluate_batch(self, records, inv):
        """Apply a one-parameter function to every record.

        Returns (outputs, failures): ``failures`` maps input position to the
        exception raised for that record, whose output slot stays None.
        FROM-less bodies run LET by LET across the whole batch so their
        subqueries are evaluated once per distinct input instead of per record.
        """
        param = self.fn.params[0]
        envs = [{INV: inv, param: r} for r in records]
        failures = {}
        outs = [None] * len(envs)
        b = self.block
        if b is None or b.has_from or b.aggregating:
            for i, e in enumerate(envs):
                try:
                    outs[i] = self.call(e)
                except Exception as ex:  # noqa: BLE001 - per-record failure
                    failures[i] = ex
            return outs, failures
        live = list(range(len(envs)))
        for (name, fn), subs in zip(b.pre_lets, b.let_subplans):
            _precompute(subs, envs, live, inv)
            kept = []
            for i in live:
                try:
                    envs[i][name] = fn(envs[i])
                    kept.append(i)
                except Exception as ex:  # noqa: BLE001
                    failures[i] = ex
            live = kept
        _precompute(b.output_subplans, envs, live, inv)
        for i in live:
            try:
                outs[i] = b.finish(envs[i])
            except Exception as ex:  # noqa: BLE001
                failures[i] = ex
        return outs, failures


def _precompute(plans, envs, live, inv):
    # errors are not recorded here: the lazy path re-raises them if the value
    # is actually needed (it may sit in an untaken CASE branch)
    for sp in plans:
        sel = [envs[i] for i in live]
        errs = {}
        res = sp.run_many(sel, inv, errs)
        key = sp.result_key
        for j, e in enumerate(sel):
            if j not in errs:
                e[key] = res[j]
