"""Native (plugin) function contract and the bundled library functions.

A native function is a class with ``initialize(resource_path)`` called once per
evaluator lifetime and ``evaluate(*args)`` called per input. Instances are
created fresh for every evaluator, so a resource file is re-read whenever a
new evaluator is built (once per batch under the batched model).
"""

from __future__ import annotations

import re

from ..datamodel import MISSING
from ..errors import ArgumentTypeError, ResourceLoadError


class NativeFunction:
    """Base class; subclasses override ``evaluate`` and optionally ``initialize``."""

    arity = 1

    def initialize(self, resource_path=None):
        pass

    def evaluate(self, *args):
        raise NotImplementedError


_NON_ALPHA = re.compile(r"[^a-zA-Z]+")


class RemoveSpecial(NativeFunction):
    """Strip every non-letter character and lowercase the rest."""

    def evaluate(self, s):
        if s is MISSING or s is None:
            return s
        if type(s) is not str:
            raise ArgumentTypeError("removeSpecial expects a string")
        return _NON_ALPHA.sub("", s).lower()


class USSafetyCheck(NativeFunction):
    """Record-in/record-out: flag US tweets that mention "bomb"."""

    def evaluate(self, record):
        if type(record) is not dict:
            raise ArgumentTypeError("USSafetyCheck expects a record")
        text = record.get("text")
        red = record.get("country") == "US" and type(text) is str and "bomb" in text
        out = dict(record)
        out["safety_check_flag"] = "Red" if red else "Green"
        return out


def load_keyword_file(path):
    """Read ``id|country|keyword`` lines into {country: [keyword, ...]}."""
    keywords = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                items = line.split("|")
                if len(items) < 3:
                    raise ResourceLoadError(f"{path}:{lineno}: expected id|country|keyword")
                keywords.setdefault(items[1], []).append(items[2])
    except OSError as e:
        raise ResourceLoadError(f"cannot read resource file {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ResourceLoadError(f"resource file {path} is not UTF-8") from e
    return keywords


class KeywordSafetyCheck(NativeFunction):
    """Flag a tweet "Red" when its text contains any keyword listed for its country."""

    def __init__(self):
        self.keywords = None

    def initialize(self, resource_path=None):
        if resource_path is None:
            raise ResourceLoadError("KeywordSafetyCheck needs a keyword resource file")
        self.keywords = load_keyword_file(resource_path)

    def evaluate(self, record):
        if type(record) is not dict:
            raise ArgumentTypeError("KeywordSafetyCheck expects a record")
        text = record.get("text")
        words = self.keywords.get(record.get("country"), ())
        red = type(text) is str and any(w in text for w in words)
        out = dict(record)
        out["safety_check_flag"] = "Red" if red else "Green"
        return out


# library name -> {function name: (factory, arity, needs_resource)}
BUNDLED = {
    "testlib": {
        "removeSpecial": (RemoveSpecial, 1, False),
        "USSafetyCheck": (USSafetyCheck, 1, False),
        "keywordSafetyCheck": (KeywordSafetyCheck, 1, True),
    },
}
