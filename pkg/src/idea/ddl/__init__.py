"""DDL/DML parser, AST and printer."""

from . import ast
from .lexer import Token, tokenize
from .parser import parse_expression, parse_function_body, parse_script, parse_statement
from .printer import print_body, print_expr, print_query, print_script, print_statement

__all__ = [
    "Token", "ast", "parse_expression", "parse_function_body", "parse_script",
    "parse_statement", "print_body", "print_expr", "print_query", "print_script",
    "print_statement", "tokenize",
]
