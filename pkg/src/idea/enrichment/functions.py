"""Enrichment functions: declarative (query-bodied) and native, with a registry
and the stateless/stateful classification."""

from __future__ import annotations

import dataclasses
import enum
import threading

from ..ddl import ast as A
from ..errors import CatalogError, ResourceLoadError, UnknownFunction
from .analysis import free_vars
from .builtins import AGGREGATES, BUILTINS
from .natives import BUNDLED


class Statefulness(enum.Enum):
    STATELESS = "stateless"
    STATEFUL = "stateful"


@dataclasses.dataclass
class EnrichmentFunction:
    """A named function. Exactly one of ``body`` (AST) and ``native`` (factory) is set."""

    name: str
    params: tuple
    body: object = None
    native: object = None
    resource_path: str = None
    needs_resource: bool = False

    @property
    def qualified_name(self):
        return self.name

    @property
    def arity(self):
        return len(self.params)

    @property
    def declarative(self):
        return self.native is None

    def __hash__(self):
        return hash(self.name)

    def __eq__(self, other):
        return self is other


def iter_nodes(node):
    """Every AST node reachable from ``node``, including those in nested queries."""
    stack = [node]
    while stack:
        n = stack.pop()
        if n is None:
            continue
        if isinstance(n, (tuple, list)):
            stack.extend(n)
            continue
        if not dataclasses.is_dataclass(n) or isinstance(n, A.Span):
            continue
        yield n
        for f in dataclasses.fields(n):
            if f.name != "span":
                stack.append(getattr(n, f.name))


def _operator_state(n):
    t = type(n)
    if t is A.Exists or t is A.InExpr:
        return True
    if t is A.SelectBlock:
        return len(n.from_terms) > 1 or bool(n.group_by or n.order_by or n.limit is not None)
    return False


class FunctionRegistry:
    def __init__(self):
        self._fns = {}
        self._class = {}
        self._lock = threading.Lock()

    def __contains__(self, name):
        return name in self._fns

    def names(self):
        return list(self._fns)

    def lookup(self, name):
        return self._fns.get(name)

    def get(self, name):
        fn = self._fns.get(name)
        if fn is None:
            raise UnknownFunction(f"unknown function {name}")
        return fn

    def _add(self, fn, replace=False):
        with self._lock:
            if fn.name in self._fns and not replace:
                raise CatalogError(f"function {fn.name} already exists")
            self._fns[fn.name] = fn
            self._class.clear()
        return fn

    def define(self, stmt, replace=False):
        """Register a declarative function from a CREATE FUNCTION statement."""
        if stmt.name.lower() in BUILTINS or stmt.name.lower() in AGGREGATES:
            raise CatalogError(f"{stmt.name} is a builtin function")
        if len(set(stmt.params)) != len(stmt.params):
            raise CatalogError(f"duplicate parameter in {stmt.name}")
        return self._add(EnrichmentFunction(stmt.name, tuple(stmt.params), body=stmt.body),
                         replace)

    def register_native(self, library, name, factory, arity=1, resource_path=None,
                        needs_resource=False, replace=False):
        params = tuple(f"arg{i}" for i in range(arity))
        fn = EnrichmentFunction(f"{library}#{name}", params, native=factory,
                                resource_path=resource_path,
                                needs_resource=needs_resource or resource_path is not None)
        return self._add(fn, replace)

    def install_library(self, library, resources=None):
        """Register a bundled native library. ``resources`` maps function name to
        its resource file path."""
        try:
            fns = BUNDLED[library]
        except KeyError:
            raise UnknownFunction(f"unknown library {library!r}") from None
        resources = resources or {}
        for name, (factory, arity, needs) in fns.items():
            path = resources.get(name)
            if needs and path is None:
                continue  # installed once its resource file is known
            self.register_native(library, name, factory, arity, path, needs, replace=True)

    def set_resource(self, qualified_name, path):
        """Attach (or replace) the resource file of a bundled native function."""
        library, _, name = qualified_name.partition("#")
        try:
            factory, arity, _ = BUNDLED[library][name]
        except KeyError:
            raise UnknownFunction(f"unknown native function {qualified_name}") from None
        if path is None:
            raise ResourceLoadError(f"{qualified_name} needs a resource file")
        return self.register_native(library, name, factory, arity, path, True, replace=True)

    def callees(self, fn):
        """User functions called directly by ``fn``'s body."""
        out = []
        if fn.body is None:
            return out
        for n in iter_nodes(fn.body):
            if type(n) is A.Call:
                if n.library is None and (n.name.lower() in BUILTINS or n.name.lower() in AGGREGATES):
                    continue
                callee = self._fns.get(n.qualified_name)
                if callee is not None and callee not in out:
                    out.append(callee)
        return out

    def classify(self, fn):
        """Stateful if the function reads any dataset, uses a join, grouping,
        ordering, limit, EXISTS or IN, declares a resource file, or calls a
        function that is itself stateful."""
        if isinstance(fn, str):
            fn = self.get(fn)
        cached = self._class.get(fn.name)
        if cached is not None:
            return cached
        result = self._classify(fn, set())
        self._class[fn.name] = result
        return result

    def _classify(self, fn, seen):
        if fn.native is not None:
            return Statefulness.STATEFUL if fn.needs_resource else Statefulness.STATELESS
        if fn.name in seen:
            return Statefulness.STATELESS  # recursion is rejected at compile time
        seen = seen | {fn.name}
        if free_vars(fn.body, frozenset(fn.params)):
            return Statefulness.STATEFUL  # unbound names are dataset references
        for n in iter_nodes(fn.body):
            if _operator_state(n):
                return Statefulness.STATEFUL
            if type(n) is A.SelectBlock and any(
                    type(t.expr) is A.Var for t in n.from_terms):
                # FROM over a dataset that is not shadowed by a local binding
                if _reads_dataset(n, fn.params):
                    return Statefulness.STATEFUL
        for callee in self.callees(fn):
            if self._classify(callee, seen) is Statefulness.STATEFUL:
                return Statefulness.STATEFUL
        return Statefulness.STATELESS


def _reads_dataset(block, params):
    bound = set(params) | {let.name for let in block.pre_lets}
    for t in block.from_terms:
        if type(t.expr) is A.Var and t.expr.name not in bound:
            return True
        bound.add(t.alias)
    return False
