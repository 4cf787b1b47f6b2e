from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from idea.ddl import ast as A
from idea.ddl import parse_expression, parse_script, parse_statement, print_expr, print_script
from idea.errors import IdeaError, SqlSyntaxError, UnsupportedSyntax

SCRIPTS = sorted((Path(__file__).parent / "scripts").glob("*.sqlpp"))
SUPPORTED = [p for p in SCRIPTS if "from_feed" not in p.name]


@pytest.mark.parametrize("path", SUPPORTED, ids=lambda p: p.stem)
def test_example_scripts_round_trip(path):
    stmts = parse_script(path.read_text())
    assert stmts
    assert parse_script(print_script(stmts)) == stmts


def test_statement_shapes():
    s = parse_statement("CREATE TYPE TweetType AS OPEN { id : int64, text: string };")
    assert isinstance(s, A.CreateType) and s.open and [f.name for f in s.fields] == ["id", "text"]
    s = parse_statement("CREATE DATASET Tweets(TweetType) PRIMARY KEY id;")
    assert (s.name, s.type_name, list(s.primary_key)) == ("Tweets", "TweetType", ["id"])
    s = parse_statement("CONNECT FEED F TO DATASET D APPLY FUNCTION lib#fn;")
    assert isinstance(s, A.ConnectFeed) and s.function == "lib#fn"
    s = parse_statement('CREATE FEED F WITH { "type-name": "T", "sockets": "h:1" };')
    assert dict(s.options)["sockets"] == "h:1"


def test_truncated_statement_reports_position():
    with pytest.raises(SqlSyntaxError) as e:
        parse_script("CREATE DATASET")
    assert "1:15" in str(e.value)


def test_feed_as_query_source_is_unsupported():
    bad = next(p for p in SCRIPTS if "from_feed" in p.name)
    with pytest.raises(UnsupportedSyntax):
        parse_script(bad.read_text())


def test_string_escapes():
    assert parse_expression(r'"a\nb\"cA"') == A.Literal('a\nb"cA')
    assert parse_expression(r"'it\'s'") == A.Literal("it's")
    e = A.Literal('tab\there "q" \\ back')
    assert parse_expression(print_expr(e)) == e


def test_operator_spellings():
    assert parse_expression("a <> b") == parse_expression("a != b")
    assert parse_expression("a AND b").op == "and"


# -- generated expressions --------------------------------------------------------------------

names = st.from_regex(r"[a-z][a-z0-9_]{0,5}", fullmatch=True).filter(
    lambda s: s.upper() not in {"AS", "AT", "BY", "IN", "IS", "OR", "ON", "TO", "NOT", "AND", "END",
                                "LET", "ASC", "ALL", "KEY", "RAW", "SET", "USE", "FOR", "NULL",
                                "TRUE", "FALSE", "CASE", "WHEN", "THEN", "ELSE", "FROM",
                                "SELECT", "VALUE", "WHERE", "GROUP", "ORDER", "LIMIT", "DESC"})
literals = st.one_of(st.none(), st.booleans(), st.integers(-2**62, 2**62),
                     st.floats(allow_nan=False, allow_infinity=False),
                     st.text(max_size=10)).map(A.Literal)
BINOPS = ["+", "-", "*", "/", "%", "||", "=", "!=", "<", "<=", ">", ">=", "and", "or"]


def _numeric_literal(e):
    return type(e) is A.Literal and type(e.value) in (int, float)


def _compound(kids):
    # the parser folds "-" applied to a number literal into a negative literal
    return st.one_of(
        st.builds(A.Binary, st.sampled_from(BINOPS), kids, kids),
        st.builds(A.Unary, st.just("not"), kids),
        st.builds(A.Unary, st.just("-"), kids.filter(lambda k: not _numeric_literal(k))),
        st.builds(A.FieldAccess, kids, names),
        st.builds(A.IndexAccess, kids, kids),
        st.builds(A.Call, names, st.lists(kids, max_size=3).map(tuple)),
        st.builds(A.InExpr, kids, kids, st.booleans()),
        st.builds(A.ArrayCtor, st.lists(kids, max_size=3).map(tuple)),
        st.builds(A.ObjectCtor, st.lists(st.tuples(names, kids), max_size=3,
                                         unique_by=lambda kv: kv[0]).map(tuple)),
        st.builds(A.Case, st.one_of(st.none(), kids),
                  st.lists(st.tuples(kids, kids), min_size=1, max_size=2).map(tuple),
                  st.one_of(st.none(), kids)),
    )


exprs = st.recursive(st.one_of(literals, names.map(A.Var)), _compound, max_leaves=10)


@given(exprs)
@settings(max_examples=300, deadline=None, suppress_health_check=list(HealthCheck))
def test_expression_round_trip(e):
    text = print_expr(e)
    assert parse_expression(text) == e
    assert print_expr(parse_expression(text)) == text


@given(st.text(max_size=60))
@settings(max_examples=300, deadline=None)
def test_garbage_raises_only_idea_errors(text):
    try:
        parse_script(text)
    except IdeaError:
        pass
