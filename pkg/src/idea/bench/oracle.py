"""Brute-force reference implementations of every enrichment workload.

These deliberately share nothing with the query engine beyond the value
classes: joins are nested loops over key-sorted reference lists, grouping
keeps first-seen order, ordering is a stable sort, and geometry, edit
distance and calendar arithmetic are implemented here from scratch.
"""

from __future__ import annotations

import calendar
import datetime as _dt
import math

from ..datamodel import DateTime

_EPOCH = _dt.datetime(1970, 1, 1, tzinfo=_dt.timezone.utc)


def _by_key(rows, key):
    return sorted(rows, key=lambda r: r[key])


def _in_circle(px, py, cx, cy, r):
    return (px - cx) ** 2 + (py - cy) ** 2 <= r * r


def _in_rect(px, py, rect):
    return (rect.lower_left.x <= px <= rect.upper_right.x
            and rect.lower_left.y <= py <= rect.upper_right.y)


def _levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _letters_lower(s):
    return "".join(c for c in s if ("a" <= c <= "z") or ("A" <= c <= "Z")).lower()


def _plus_months(dt, months):
    d = _EPOCH + _dt.timedelta(milliseconds=dt.millis)
    total = d.year * 12 + (d.month - 1) + months
    year, month = divmod(total, 12)
    day = min(d.day, calendar.monthrange(year, month + 1)[1])
    moved = d.replace(year=year, month=month + 1, day=day)
    return DateTime((moved - _EPOCH) // _dt.timedelta(milliseconds=1))


def _group_count(rows, keyf, valf=None):
    order, counts = [], {}
    for r in rows:
        k = keyf(r)
        if k not in counts:
            counts[k] = 0
            order.append(k)
        if valf is None or valf(r) is not None:
            counts[k] += 1
    return [(k, counts[k]) for k in order]


class Oracle:
    """Enriches tweets against fixed reference data (``{dataset: [records]}``)."""

    def __init__(self, reference):
        self.ref = reference
        self._sorted = {}

    def rows(self, name, key):
        if name not in self._sorted:
            self._sorted[name] = _by_key(self.ref.get(name, []), key)
        return self._sorted[name]

    def enrich(self, case_id, tweets):
        fn = getattr(self, "_" + case_id.replace("-noindex", "").lower())
        return [fn(t) for t in tweets]

    def _q1(self, t):
        out = [s["safety_rating"] for s in self.rows("SafetyRatings", "country_code")
               if s["country_code"] == t["country"]]
        return {**t, "safety_rating": out}

    def _q2(self, t):
        pops = [r["population"] for r in self.rows("ReligiousPopulations", "rid")
                if r["country_name"] == t["country"]]
        return {**t, "religious_population": {"$1": sum(pops) if pops else None}}

    def _q3(self, t):
        match = [r for r in self.rows("ReligiousPopulations", "rid")
                 if r["country_name"] == t["country"]]
        match.sort(key=lambda r: r["population"])
        return {**t, "largest_religions": [r["religion_name"] for r in match[:3]]}

    def _q4(self, t):
        name = _letters_lower(t["user"]["screen_name"])
        out = [{"sensitiveName": s["sensitiveName"], "religionName": s["religionName"]}
               for s in self.rows("SensitiveNamesDataset", "sid")
               if _levenshtein(name, s["sensitiveName"]) < 5]
        return {**t, "related_suspects": out}

    def _q5(self, t):
        x, y = t["latitude"], t["longitude"]
        out = [m["monument_id"] for m in self.rows("monumentList", "monument_id")
               if _in_circle(m["monument_location"].x, m["monument_location"].y, x, y, 1.5)]
        return {**t, "nearby_monuments": out}

    def _q6(self, t):
        x, y = t["latitude"], t["longitude"]
        near_f = [f for f in self.rows("Facilities", "facility_id")
                  if _in_circle(x, y, f["facility_location"].x, f["facility_location"].y, 3.0)]
        facilities = [{"FacilityType": k, "Cnt": n}
                      for k, n in _group_count(near_f, lambda f: f["facility_type"])]
        near_b = [b for b in self.rows("ReligiousBuildings", "religious_building_id")
                  if _in_circle(x, y, b["building_location"].x, b["building_location"].y, 3.0)]
        near_b.sort(key=lambda b: math.sqrt((b["building_location"].x - x) ** 2
                                            + (b["building_location"].y - y) ** 2))
        buildings = [{"religious_building_id": b["religious_building_id"],
                      "religion_name": b["religion_name"]} for b in near_b[:3]]
        suspects = [{"suspect_id": s["suspicious_name_id"], "religion": s["religion_name"],
                     "threat_level": s["threat_level"]}
                    for s in self.rows("SuspiciousNames", "suspicious_name_id")
                    if s["suspicious_name"] == t["user"]["name"]]
        return {**t, "nearby_facilities": facilities, "nearby_religious_buildings": buildings,
                "suspicious_users_info": suspects}

    def _members(self, name, key, field):
        """Per district, the rows of ``name`` located inside it (key order)."""
        cache = self._sorted.setdefault(("members", name), {})
        if not cache:
            for d in self.rows("DistrictAreas", "district_area_id"):
                rect = d["district_area"]
                cache[d["district_area_id"]] = [
                    i for i, r in enumerate(self.rows(name, key))
                    if _in_rect(r[field].x, r[field].y, rect)]
        return cache

    def _q7(self, t):
        x, y = t["latitude"], t["longitude"]
        districts = self.rows("DistrictAreas", "district_area_id")
        # FROM a, d1: rows ordered by (a key, d1 key)
        income = [a["average_income"]
                  for a in self.rows("AverageIncomes", "district_area_id")
                  for d in districts
                  if a["district_area_id"] == d["district_area_id"]
                  and _in_rect(x, y, d["district_area"])]
        hit = [(j, d) for j, d in enumerate(districts) if _in_rect(x, y, d["district_area"])]
        fac_rows = self.rows("Facilities", "facility_id")
        fmem = self._members("Facilities", "facility_id", "facility_location")
        pairs = sorted((i, j) for j, d in hit for i in fmem[d["district_area_id"]])
        facilities = [{"facility_type": k, "Cnt": n} for k, n in
                      _group_count(pairs, lambda p: fac_rows[p[0]]["facility_type"])]
        people = self.rows("Persons", "person_id")
        pmem = self._members("Persons", "person_id", "location")
        pairs = sorted((i, j) for j, d in hit for i in pmem[d["district_area_id"]])
        ethnicity = [{"ethnicity": k, "EthnicityPopulation": n} for k, n in
                     _group_count(pairs, lambda p: people[p[0]]["ethnicity"])]
        return {**t, "area_avg_income": income, "area_facilities": facilities,
                "ethnicity_dist": ethnicity}

    def _q8(self, t):
        x, y = t["latitude"], t["longitude"]
        at = t["created_at"].millis
        attacks = self.rows("AttackEvents", "attack_record_id")
        rows = []
        for r in self.rows("ReligiousBuildings", "religious_building_id"):
            if not _in_circle(x, y, r["building_location"].x, r["building_location"].y, 3.0):
                continue
            for a in attacks:
                if (r["religion_name"] == a["related_religion"]
                        and at > a["attack_datetime"].millis
                        and at < _plus_months(a["attack_datetime"], 2).millis):
                    rows.append((r, a))
        out = [{"religion": k, "attack_num": n} for k, n in
               _group_count(rows, lambda p: p[0]["religion_name"],
                            lambda p: p[1].get("attack_record_id"))]
        return {**t, "nearby_religious_attacks": out}

    def _safety(self, t):
        red = t.get("country") == "US" and "bomb" in t["text"]
        return {**t, "safety_check_flag": "Red" if red else "Green"}

    def _sensitive(self, t):
        red = any(s["country"] == t["country"] and s["word"] in t["text"]
                  for s in self.rows("SensitiveWords", "wid"))
        return {**t, "safety_check_flag": "Red" if red else "Green"}

    def high_risk_countries(self):
        if "highrisk" in self._sorted:
            return self._sorted["highrisk"]
        groups = _group_count(self.rows("SensitiveWords", "wid"), lambda s: s["country"])
        groups.sort(key=lambda g: g[1])
        self._sorted["highrisk"] = [k for k, _ in groups[:10]]
        return self._sorted["highrisk"]

    def _highrisk(self, t):
        red = t["country"] in self.high_risk_countries()
        return {**t, "high_risk_flag": "Red" if red else "Green"}
