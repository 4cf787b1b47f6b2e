"""Benchmark harness: workloads, generators, oracles, the runner and reports."""

from .generators import generate_reference, generate_tweets, tweet_lines
from .oracle import Oracle
from .runner import MetricsReport, UpdateFeeder, run_experiment, run_repeated
from .workloads import CASES, WorkloadSpec, get_case

__all__ = [
    "CASES",
    "MetricsReport",
    "Oracle",
    "UpdateFeeder",
    "WorkloadSpec",
    "generate_reference",
    "generate_tweets",
    "get_case",
    "run_experiment",
    "run_repeated",
    "tweet_lines",
]
