"""Experiment runner: boots a cluster, loads fixtures, runs a feed, reports metrics."""

from __future__ import annotations

import gc
import statistics
from dataclasses import dataclass, field, replace

from ..database import Database
from ..datamodel import deserialize_record, print_json, serialize_record
from ..ddl import ast as A
from ..ddl import parse_script
from ..feeds import DEFAULT_BATCH_SIZE, FeedDescriptor, LinesSource
from .generators import REFERENCE, UpdateMaker, generate_reference, generate_tweets, tweet_lines
from .oracle import Oracle
from .workloads import WorkloadSpec, case_script

# runs with at most this many tweets are checked against the oracle
AUDIT_LIMIT = 1_000
FEED_NAME = "TweetFeed"
TARGET = "EnrichedTweets"


def prepare_database(case, reference, nodes=1, **db_options):
    """A database with the tweet datasets, the case's schema and function,
    and ``reference`` ({dataset: records}) loaded."""
    db = Database(nodes=nodes, **db_options)
    stmts = parse_script(case_script(case))
    # indexes go in after the bulk load so they are built once
    for s in stmts:
        if not isinstance(s, A.CreateIndex):
            db.execute_statement(s)
    for name, records in reference.items():
        db.storage.dataset(name).bulk_load(records)
    for s in stmts:
        if isinstance(s, A.CreateIndex):
            db.execute_statement(s)
    return db


class UpdateFeeder:
    """Reference-data updates sent through their own data feed at ``rate``
    records per second, upserting into ``dataset``.

    After ``stop``, ``commits`` lists ``(commit_seq, record)`` in commit order.
    """

    def __init__(self, db, dataset, maker, rate, batch_size=DEFAULT_BATCH_SIZE):
        if rate < 0:
            raise ValueError("update rate must be non-negative")
        self.db = db
        self.dataset = dataset
        self.maker = maker
        self.rate = rate
        self.batch_size = batch_size
        self.name = f"{dataset}Updates"
        self.commits = []
        self._running = False

    def _lines(self):
        while True:
            yield print_json(self.maker()).encode("utf-8")

    def start(self):
        if self.rate <= 0:
            return self
        db = self.db
        type_name = db.storage.dataset(self.dataset).descriptor.datatype.name
        db.create_feed(FeedDescriptor(self.name, type_name,
                                      LinesSource(self._lines(), rate=self.rate),
                                      batch_size=self.batch_size, write_mode="upsert"))
        db.connect_feed(self.name, self.dataset)
        db.start_feed(self.name, record_commits=True)
        self._running = True
        return self

    def stop(self):
        if self._running:
            rt = self.db.feed_runtime(self.name)
            self.db.stop_feed(self.name)
            self._running = False
            self.commits = sorted((seq, deserialize_record(data)) for seq, data in rt.commits)
        return len(self.commits)


@dataclass
class MetricsReport:
    spec: WorkloadSpec
    throughput: float
    refresh_periods: list  # milliseconds per invocation
    ingested: int
    stored: int
    skipped: int
    freshness_lag_count: int = None  # None when not audited
    updates: int = 0
    elapsed: float = 0.0
    oracle_match: bool = None  # None when not audited
    static: bool = False
    runs: int = 1
    failures: list = field(default_factory=list)

    @property
    def p50_refresh_ms(self):
        return _quantile(self.refresh_periods, 0.5)

    @property
    def p95_refresh_ms(self):
        return _quantile(self.refresh_periods, 0.95)


def _quantile(values, q):
    if not values:
        return 0.0
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def freshness_violations(case, reference, commits, audit, tweets_by_id):
    """Invocations whose output reflects reference state older than their start.

    Invocation ``n`` must see every update committed at or before its
    watermark; it may also see updates committed while it ran (up to the
    next invocation's watermark). A record counts as fresh if it matches the
    oracle under any state in that window.
    """
    name = case.update_dataset
    if not commits or name is None:
        return 0
    key = REFERENCE[name].key
    base = {r[key]: r for r in reference[name]}
    audit = sorted(audit, key=lambda a: a[0])
    bounds = [a[1] for a in audit[1:]] + [float("inf")]
    applied = 0
    violations = 0
    for (n, watermark, records), upper in zip(audit, bounds):
        while applied < len(commits) and commits[applied][0] <= watermark:
            rec = commits[applied][1]
            base[rec[key]] = rec
            applied += 1
        window = [c for c in commits[applied:] if c[0] <= upper]
        states = [dict(base)]
        for _, rec in window:
            nxt = dict(states[-1])
            nxt[rec[key]] = rec
            states.append(nxt)
        oracles = [Oracle({**reference, name: list(s.values())}) for s in states]
        for out in records:
            tweet = tweets_by_id[out["id"]]
            want = serialize_record(out)
            if not any(serialize_record(o.enrich(case.case_id, [tweet])[0]) == want
                       for o in oracles):
                violations += 1
                break
    return violations


def run_experiment(spec, static=False, tweets=None, lines=None, db_options=None):
    """Run one feed to completion and report its metrics.

    ``tweets``/``lines`` may be passed in to reuse generated input across runs.
    ``static`` runs the single-job pipeline (parse, enrich and store in one
    long-running job) as a baseline.
    """
    case = spec.case
    if tweets is None:
        tweets = list(generate_tweets(spec.tweet_count, spec.seed))
    if lines is None:
        lines = tweet_lines(tweets)
    reference = generate_reference(case.datasets, spec.reference_scale, spec.seed)
    db = prepare_database(case, reference, spec.node_count, **(db_options or {}))
    try:
        audit = spec.tweet_count <= AUDIT_LIMIT
        db.create_feed(FeedDescriptor(FEED_NAME, "TweetType", LinesSource(tuple(lines)),
                                      batch_size=spec.batch_size, model=spec.model,
                                      intake_nodes=spec.intake_nodes))
        db.connect_feed(FEED_NAME, TARGET, case.function)
        feeder = None
        if spec.update_rate > 0 and case.update_dataset:
            maker = UpdateMaker(case.update_dataset, spec.reference_scale, spec.seed)
            feeder = UpdateFeeder(db, case.update_dataset, maker, spec.update_rate).start()
        # keep the collector from rescanning input and fixtures during the run
        gc.collect()
        gc.freeze()
        try:
            rt = db.start_feed(FEED_NAME, audit=audit and not static, static=static)
            try:
                rt.wait()
            finally:
                updates = feeder.stop() if feeder is not None else 0
                m = db.stop_feed(FEED_NAME)
        finally:
            gc.unfreeze()
        report = MetricsReport(
            spec=spec,
            throughput=m.throughput(),
            refresh_periods=[p * 1000 for p in m.refresh_periods],
            ingested=m.ingested,
            stored=m.stored,
            skipped=m.skipped,
            updates=updates,
            elapsed=m.elapsed,
            static=static,
            failures=list(m.failures),
        )
        if audit and case.function is not None:
            by_id = {t["id"]: t for t in tweets}
            if updates:
                if not static:
                    report.freshness_lag_count = freshness_violations(
                        case, reference, feeder.commits, m.audit, by_id)
            else:
                report.freshness_lag_count = 0
                expected = Oracle(reference).enrich(case.case_id, tweets)
                stored = {r["id"]: r for r in db.storage.dataset(TARGET).scan()}
                report.oracle_match = len(stored) == len(expected) and all(
                    e["id"] in stored
                    and serialize_record(stored[e["id"]]) == serialize_record(e)
                    for e in expected)
        return report
    finally:
        db.close()


def run_repeated(spec, runs=5, static=False):
    """Median report over ``runs`` runs with the same generated input."""
    tweets = list(generate_tweets(spec.tweet_count, spec.seed))
    lines = tweet_lines(tweets)
    reports = [run_experiment(spec, static=static, tweets=tweets, lines=lines)
               for _ in range(runs)]
    return median_report(reports)


def median_report(reports):
    if not reports:
        raise ValueError("no reports")
    mid = sorted(reports, key=lambda r: r.throughput)[len(reports) // 2]
    out = replace(mid, runs=len(reports))
    out.throughput = statistics.median(r.throughput for r in reports)
    return out


def spec_with(spec, **changes):
    return replace(spec, **changes)


__all__ = [
    "AUDIT_LIMIT",
    "MetricsReport",
    "UpdateFeeder",
    "freshness_violations",
    "median_report",
    "prepare_database",
    "run_experiment",
    "run_repeated",
    "spec_with",
]
