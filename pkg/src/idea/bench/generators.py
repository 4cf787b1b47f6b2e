"""Deterministic tweet and reference-data generators.

Every generator takes a seed and derives all randomness from it, so the same
arguments always give the same records. Reference cardinalities are the
published sizes multiplied by a scale factor; record sizes are padded towards
the published per-record byte sizes (measured as compact JSON).
"""

from __future__ import annotations

import bisect
import itertools
import random
import string
from dataclasses import dataclass

from ..datamodel import DateTime, Point, Rectangle, parse_datetime, print_json

TWEET_BYTES = 450
TWEET_SPREAD = 50
KEYWORD_PROBABILITY = 0.05
COUNTRY_COUNT = 200
ZIPF_EXPONENT = 1.0
# tweets are spaced this far apart in created_at
TWEET_INTERVAL_MS = 60_000
TWEET_EPOCH = parse_datetime("2019-01-01T00:00:00Z").millis

KEYWORDS = (
    "bomb", "explosive", "grenade", "rifle", "hostage", "sniper", "ambush", "detonator",
    "arson", "militia", "kidnap", "ransom", "smuggle", "sabotage", "riot", "extremist",
)

_FILLER = (
    "the", "quick", "weather", "today", "coffee", "music", "city", "friends", "happy",
    "morning", "travel", "photo", "game", "lunch", "new", "great", "weekend", "love",
    "school", "work", "beach", "sunny", "rain", "movie", "book", "dinner", "park", "run",
    "team", "win", "sale", "shop", "garden", "river", "train", "bus", "night", "party",
)

_FIRST = ("ada", "ben", "cara", "dev", "eli", "fay", "gus", "hana", "ivan", "jade", "kai",
          "lena", "milo", "nora", "omar", "pia", "quin", "rosa", "sami", "tara", "umar",
          "vera", "wade", "xena", "yuri", "zoe")
_LAST = ("adams", "baker", "chen", "diaz", "evans", "fox", "garcia", "hill", "ito", "jones",
         "khan", "lopez", "moore", "ngata", "olsen", "patel", "quist", "rossi", "silva",
         "tanaka", "urban", "vance", "wong", "xu", "young", "zhou")

RELIGIONS = tuple(f"religion_{c}" for c in "abcdefghijklmnopqrst")
FACILITY_TYPES = ("school", "hospital", "station", "market", "stadium", "library", "airport",
                  "museum", "bank", "police", "park", "mall")
ETHNICITIES = ("group_a", "group_b", "group_c", "group_d", "group_e", "group_f", "group_g",
               "group_h")
SAFETY_LEVELS = ("1", "2", "3", "4", "5")


def _assert_filler_clean():
    for w in _FILLER:
        for k in KEYWORDS:
            assert k not in w, (k, w)


_assert_filler_clean()


def country_codes(n=COUNTRY_COUNT):
    """``n`` distinct two-letter codes, "US" first (the most frequent)."""
    pairs = ["".join(p) for p in itertools.product(string.ascii_uppercase, repeat=2)]
    pairs.remove("US")
    random.Random(7).shuffle(pairs)
    return tuple(["US"] + pairs[: n - 1])


COUNTRIES = country_codes()


def _zipf_cum(n, s):
    total = 0.0
    cum = []
    for k in range(1, n + 1):
        total += 1.0 / k ** s
        cum.append(total)
    return cum


_COUNTRY_CUM = _zipf_cum(COUNTRY_COUNT, ZIPF_EXPONENT)


def zipf_country(rnd):
    u = rnd.random() * _COUNTRY_CUM[-1]
    return COUNTRIES[min(bisect.bisect_left(_COUNTRY_CUM, u), COUNTRY_COUNT - 1)]


def person_name(rnd):
    return f"{rnd.choice(_FIRST).title()} {rnd.choice(_LAST).title()}"


def _words(rnd, length):
    out = []
    size = -1
    while size < length:
        w = rnd.choice(_FILLER)
        out.append(w)
        size += len(w) + 1
    return " ".join(out)[:max(length, 0)]


def _screen_name(rnd, name):
    first, last = name.lower().split(" ")
    sep = rnd.choice(("_", ".", "", "-"))
    return f"{first}{sep}{last}{rnd.randint(0, 999)}" + rnd.choice(("", "!", "_x"))


def generate_tweets(n, seed=0, start_id=0):
    """``n`` tweets. Text is padded so the compact JSON line is about
    450 bytes; with probability 0.05 one keyword is injected into the text."""
    if n < 0:
        raise ValueError("tweet count must be non-negative")
    rnd = random.Random(f"tweets:{seed}")
    for i in range(start_id, start_id + n):
        name = person_name(rnd)
        rec = {
            "id": i,
            "text": "",
            "country": zipf_country(rnd),
            "user": {"screen_name": _screen_name(rnd, name), "name": name},
            "latitude": round(rnd.uniform(-90.0, 90.0), 4),
            "longitude": round(rnd.uniform(-180.0, 180.0), 4),
            "created_at": DateTime(TWEET_EPOCH + i * TWEET_INTERVAL_MS + rnd.randint(0, 59_999)),
        }
        target = rnd.randint(TWEET_BYTES - TWEET_SPREAD + 10, TWEET_BYTES + TWEET_SPREAD - 10)
        room = target - len(print_json(rec).encode("utf-8"))
        keyword = rnd.choice(KEYWORDS) if rnd.random() < KEYWORD_PROBABILITY else None
        if keyword is None:
            rec["text"] = _words(rnd, room)
        else:
            head = _words(rnd, max(room - len(keyword) - 1, 0) // 2)
            tail = _words(rnd, max(room - len(keyword) - len(head) - 2, 0))
            rec["text"] = " ".join(x for x in (head, keyword, tail) if x)
        yield rec


def tweet_lines(tweets):
    """Newline-free JSON lines (bytes) for ``tweets``."""
    return [print_json(t).encode("utf-8") for t in tweets]


# -- reference data -----------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceDataset:
    name: str
    key: str
    paper_count: int
    paper_bytes: int
    maker: object  # (index, rnd, world) -> record without padding

    def count(self, scale):
        return max(1, round(self.paper_count * scale))


class World:
    """Shared layout that several datasets refer to (district rectangles)."""

    def __init__(self, scale, seed):
        self.scale = scale
        self.seed = seed
        self.districts = _district_rects(max(1, round(500 * scale)), seed)


def _district_rects(n, seed, coverage=0.2):
    rnd = random.Random(f"districts:{seed}")
    area = coverage * 180.0 * 360.0 / n
    w = min((area / 2) ** 0.5, 90.0)
    h = min(2 * w, 180.0)
    out = []
    for _ in range(n):
        x = rnd.uniform(-90.0, 90.0 - w)
        y = rnd.uniform(-180.0, 180.0 - h)
        out.append(Rectangle(Point(round(x, 4), round(y, 4)),
                             Point(round(x + w, 4), round(y + h, 4))))
    return out


def _point(rnd):
    return Point(round(rnd.uniform(-90.0, 90.0), 4), round(rnd.uniform(-180.0, 180.0), 4))


def _safety_code(i):
    if i < COUNTRY_COUNT:
        return COUNTRIES[i]
    return f"Z{i:07d}"


def _attack_time(rnd):
    lo = TWEET_EPOCH - 120 * 86_400_000
    hi = TWEET_EPOCH + 70 * 86_400_000
    return DateTime(rnd.randrange(lo, hi, 1000))


REFERENCE = {
    d.name: d
    for d in (
        ReferenceDataset("SafetyRatings", "country_code", 500_000, 74, lambda i, r, w: {
            "country_code": _safety_code(i),
            "safety_rating": r.choice(SAFETY_LEVELS)}),
        ReferenceDataset("ReligiousPopulations", "rid", 500_000, 137, lambda i, r, w: {
            "rid": f"rp{i:07d}",
            "country_name": r.choice(COUNTRIES),
            "religion_name": r.choice(RELIGIONS),
            "population": r.randint(1_000, 50_000_000)}),
        ReferenceDataset("SensitiveNamesDataset", "sid", 5_000, 150, lambda i, r, w: {
            "sid": f"sn{i:06d}",
            "sensitiveName": person_name(r).lower().replace(" ", ""),
            "religionName": r.choice(RELIGIONS)}),
        ReferenceDataset("monumentList", "monument_id", 500_000, 94, lambda i, r, w: {
            "monument_id": f"m{i:07d}",
            "monument_location": _point(r)}),
        ReferenceDataset("ReligiousBuildings", "religious_building_id", 10_000, 205,
                         lambda i, r, w: {
            "religious_building_id": f"rb{i:06d}",
            "religion_name": r.choice(RELIGIONS),
            "building_location": _point(r),
            "registered_believer": r.randint(10, 100_000)}),
        ReferenceDataset("Facilities", "facility_id", 50_000, 142, lambda i, r, w: {
            "facility_id": f"f{i:06d}",
            "facility_location": _point(r),
            "facility_type": r.choice(FACILITY_TYPES)}),
        ReferenceDataset("SuspiciousNames", "suspicious_name_id", 1_000_000, 155,
                         lambda i, r, w: {
            "suspicious_name_id": f"su{i:07d}",
            "suspicious_name": person_name(r),
            "religion_name": r.choice(RELIGIONS),
            "threat_level": r.randint(1, 5)}),
        ReferenceDataset("AverageIncomes", "district_area_id", 50_000, 99, lambda i, r, w: {
            "district_area_id": f"d{i:05d}",
            "average_income": round(r.uniform(8_000.0, 120_000.0), 2)}),
        ReferenceDataset("DistrictAreas", "district_area_id", 500, 121, lambda i, r, w: {
            "district_area_id": f"d{i:05d}",
            "district_area": w.districts[i]}),
        # the published Residents size (10^9) is capped at 10^6 before scaling
        ReferenceDataset("Persons", "person_id", 1_000_000, 124, lambda i, r, w: {
            "person_id": f"p{i:07d}",
            "ethnicity": r.choice(ETHNICITIES),
            "location": _point(r)}),
        ReferenceDataset("AttackEvents", "attack_record_id", 5_000, 179, lambda i, r, w: {
            "attack_record_id": f"a{i:06d}",
            "attack_datetime": _attack_time(r),
            "attack_location": _point(r),
            "related_religion": r.choice(RELIGIONS)}),
        # not sized in the published experiments; chosen here
        ReferenceDataset("SensitiveWords", "wid", 10_000, 60, lambda i, r, w: {
            "wid": f"w{i:06d}",
            "country": zipf_country(r),
            "word": r.choice(KEYWORDS)}),
    )
}


def _pad(rec, target, rnd):
    size = len(print_json(rec).encode("utf-8"))
    room = target - size - len(',"info":""')
    if room > 0:
        rec["info"] = "".join(rnd.choice(string.ascii_lowercase) for _ in range(room))
    return rec


def make_record(name, index, rnd, world):
    d = REFERENCE[name]
    return _pad(d.maker(index, rnd, world), d.paper_bytes, rnd)


def generate_dataset(name, scale=0.01, seed=0, world=None):
    if not 0 < scale <= 1:
        raise ValueError("reference scale must be in (0, 1]")
    d = REFERENCE[name]
    world = world or World(scale, seed)
    rnd = random.Random(f"{name}:{seed}")
    return [make_record(name, i, rnd, world) for i in range(d.count(scale))]


def generate_reference(datasets, scale=0.01, seed=0):
    """Fixtures for the named datasets: ``{name: [records]}``."""
    if not 0 < scale <= 1:
        raise ValueError("reference scale must be in (0, 1]")
    world = World(scale, seed)
    return {name: generate_dataset(name, scale, seed, world) for name in datasets}


class UpdateMaker:
    """Produces replacement versions of existing reference records (same key)."""

    def __init__(self, name, scale, seed):
        self.name = name
        self.count = REFERENCE[name].count(scale)
        self.world = World(scale, seed)
        self.rnd = random.Random(f"updates:{name}:{seed}")

    def __call__(self):
        i = self.rnd.randrange(self.count)
        return make_record(self.name, i, self.rnd, self.world)
