"""User-defined function evaluation over reference datasets."""

from .evaluator import (
    EnrichedBatch,
    EvaluationContext,
    Invocation,
    StreamEvaluator,
    evaluate_batch,
    evaluate_per_record,
    evaluate_record,
    open_stream_evaluator,
)
from .functions import EnrichmentFunction, FunctionRegistry, Statefulness
from .hashjoin import DEFAULT_BUDGET, JoinStats, hash_join, nested_loop_join

__all__ = [
    "DEFAULT_BUDGET",
    "EnrichedBatch",
    "EnrichmentFunction",
    "EvaluationContext",
    "FunctionRegistry",
    "Invocation",
    "JoinStats",
    "Statefulness",
    "StreamEvaluator",
    "evaluate_batch",
    "evaluate_per_record",
    "evaluate_record",
    "hash_join",
    "nested_loop_join",
    "open_stream_evaluator",
]
