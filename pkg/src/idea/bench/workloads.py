"""The enrichment workloads: which scripts, function and reference data each uses."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from ..feeds.descriptor import FeedModel


@dataclass(frozen=True)
class Case:
    case_id: str
    title: str
    function: str  # None for the pass-through feed
    scripts: tuple  # script files after tweets.sqlpp, in load order
    datasets: tuple  # reference datasets to generate
    update_dataset: str = None  # target of the update feeder


CASES = {c.case_id: c for c in (
    Case("none", "No enrichment", None, (), ()),
    Case("Q1", "Safety rating", "enrichTweetQ1", ("q1.sqlpp",), ("SafetyRatings",),
         "SafetyRatings"),
    Case("Q2", "Religious population", "enrichTweetQ2",
         ("religious_populations.sqlpp", "q2.sqlpp"), ("ReligiousPopulations",),
         "ReligiousPopulations"),
    Case("Q3", "Largest religions", "enrichTweetQ3",
         ("religious_populations.sqlpp", "q3.sqlpp"), ("ReligiousPopulations",),
         "ReligiousPopulations"),
    Case("Q4", "Fuzzy suspects", "annotateTweetQ4", ("q4.sqlpp",),
         ("SensitiveNamesDataset",), "SensitiveNamesDataset"),
    Case("Q5", "Nearby monuments", "enrichTweetQ5",
         ("monuments.sqlpp", "monuments_index.sqlpp", "q5.sqlpp"), ("monumentList",),
         "monumentList"),
    Case("Q5-noindex", "Nearby monuments without a spatial index", "enrichTweetQ5",
         ("monuments.sqlpp", "q5.sqlpp"), ("monumentList",), "monumentList"),
    Case("Q6", "Suspicious names", "enrichTweetQ6",
         ("facilities.sqlpp", "religious_buildings.sqlpp", "q6.sqlpp"),
         ("Facilities", "ReligiousBuildings", "SuspiciousNames"), "SuspiciousNames"),
    Case("Q7", "Tweet context", "enrichTweetQ7", ("facilities.sqlpp", "q7.sqlpp"),
         ("Facilities", "DistrictAreas", "AverageIncomes", "Persons"), "Persons"),
    Case("Q8", "Worrisome tweets", "enrichTweetQ8", ("religious_buildings.sqlpp", "q8.sqlpp"),
         ("ReligiousBuildings", "AttackEvents"), "AttackEvents"),
    Case("safety", "US keyword check", "USTweetSafetyCheck", ("safety_check.sqlpp",), ()),
    Case("sensitive", "Sensitive word check", "tweetSafetyCheck",
         ("sensitive_words.sqlpp", "tweet_safety_check.sqlpp"), ("SensitiveWords",),
         "SensitiveWords"),
    Case("highrisk", "High-risk country check", "highRiskTweetCheck",
         ("sensitive_words.sqlpp", "high_risk_check.sqlpp"), ("SensitiveWords",),
         "SensitiveWords"),
)}

# every case whose output the oracle checks
ENRICHMENT_CASES = ("Q1", "Q2", "Q3", "Q4", "Q5", "Q5-noindex", "Q6", "Q7", "Q8",
                    "safety", "sensitive", "highrisk")


def get_case(case_id):
    key = "none" if case_id in (None, "", "none", "Q0") else case_id
    try:
        return CASES[key]
    except KeyError:
        raise ValueError(f"unknown case {case_id!r}; choose from {', '.join(CASES)}") from None


def script_text(name):
    return resources.files("idea.bench").joinpath("scripts", name).read_text(encoding="utf-8")


def case_script(case):
    """DDL for the tweet datasets, then the case's reference schema and function."""
    return "\n".join(script_text(s) for s in ("tweets.sqlpp",) + case.scripts)


@dataclass(frozen=True)
class WorkloadSpec:
    case_id: str = "Q1"
    tweet_count: int = 100_000
    batch_size: int = 420
    node_count: int = 4
    intake_mode: str = "single"  # single: node 0 only, balanced: every node
    model: FeedModel = FeedModel.PER_BATCH
    update_rate: float = 0.0
    reference_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        get_case(self.case_id)
        if not 0 < self.reference_scale <= 1:
            raise ValueError("reference scale must be in (0, 1]")
        if self.tweet_count < 0:
            raise ValueError("tweet count must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.node_count < 1:
            raise ValueError("node count must be positive")
        if self.intake_mode not in ("single", "balanced"):
            raise ValueError("intake mode is 'single' or 'balanced'")
        if self.update_rate < 0:
            raise ValueError("update rate must be non-negative")
        if not isinstance(self.model, FeedModel):
            object.__setattr__(self, "model", FeedModel.parse(self.model))

    @property
    def case(self):
        return get_case(self.case_id)

    @property
    def intake_nodes(self):
        return tuple(range(self.node_count)) if self.intake_mode == "balanced" else (0,)
