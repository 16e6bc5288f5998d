"""Deterministic operator intent and query processing.

A published grammar (verb + metric synonym table + magnitude) turns operator
utterances into typed intents; a three-segment knowledge store backs both
goal derivation and template-based query answering.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .hrlgen import Goal, METRIC_INCREASES
from .netsim import CLASSES

INTENT_TYPES = ("throughput", "delay", "energy_efficiency", "power", "loss")

# metric phrase -> intent type; resolution is first-longest-match with ties
# broken by declaration order here
SYNONYMS = [
    ("energy efficiency", "energy_efficiency"),
    ("energy consumption", "power"),
    ("power consumption", "power"),
    ("bits per joule", "energy_efficiency"),
    ("power usage", "power"),
    ("packet loss", "loss"),
    ("packet drops", "loss"),
    ("loss rate", "loss"),
    ("data rate", "throughput"),
    ("response time", "delay"),
    ("throughput", "throughput"),
    ("capacity", "throughput"),
    ("latency", "delay"),
    ("delay", "delay"),
    ("power", "power"),
    ("loss", "loss"),
    ("ee", "energy_efficiency"),
]

UP_VERBS = ("increase", "boost", "raise", "grow")
DOWN_VERBS = ("reduce", "decrease", "lower", "cut", "drop")
# "improve X" always means move X in its good direction
IMPROVE_VERBS = ("improve", "optimize", "optimise")
MAX_VERBS = ("maximize", "maximise")
MIN_VERBS = ("minimize", "minimise")

METRIC_UNIT = {"throughput": "mbps", "delay": "ms", "energy_efficiency": "bits/j",
               "power": "w", "loss": "%"}
METRIC_STORE_KEY = {"throughput": "thr_mbps", "delay": "delay_ms",
                    "energy_efficiency": "ee_bits_per_j", "power": "power_w",
                    "loss": "loss_pct"}


class IntentError(ValueError):
    pass


class UnsupportedIntentError(IntentError):
    pass


class MagnitudeRequiredError(IntentError):
    pass


class StalenessError(RuntimeError):
    pass


class UnknownQueryError(KeyError):
    pass


@dataclass(frozen=True)
class GrammarConfig:
    max_magnitude: float = 1.0       # |Λ| cap
    extreme_magnitude: float = 1.0   # Λ for minimize/maximize forms


@dataclass(frozen=True)
class Intent:
    raw: str = field(compare=False)
    t_y: str
    magnitude: float | None          # signed fraction Λ; None for absolute form
    scope: str = "network"           # network | class:<traffic class> | cell:<id>
    absolute_target: float | None = None

    def __post_init__(self):
        if self.t_y not in INTENT_TYPES:
            raise UnsupportedIntentError("unsupported intent type")


def _match_metric(text: str) -> tuple | None:
    """First-longest-match over the synonym phrases."""
    best = None
    for phrase, t_y in SYNONYMS:
        m = re.search(rf"\b{re.escape(phrase)}\b", text)
        if m and (best is None or len(phrase) > len(best[0])):
            best = (phrase, t_y)
    return best


def _match_scope(text: str) -> str:
    m = re.search(r"\bin cell (\d+)\b", text)
    if m:
        return f"cell:{m.group(1)}"
    m = re.search(rf"\bfor ({'|'.join(CLASSES)}) (users|traffic)\b", text)
    if m:
        return f"class:{m.group(1)}"
    return "network"


def parse_intent(text: str, cfg: GrammarConfig = GrammarConfig()) -> Intent:
    if not text or not text.strip():
        raise IntentError("empty intent text")
    low = text.lower().strip().rstrip(".!")
    metric = _match_metric(low)
    if metric is None:
        raise UnsupportedIntentError("unsupported intent type")
    _, t_y = metric
    higher_better = METRIC_INCREASES[t_y]

    verb = None
    for v in UP_VERBS + DOWN_VERBS + MAX_VERBS + MIN_VERBS + IMPROVE_VERBS:
        if re.search(rf"\b{v}\b", low):
            verb = v
            break
    if verb is None:
        raise UnsupportedIntentError("unsupported intent type")
    if verb in IMPROVE_VERBS:
        wants_up = higher_better
    else:
        wants_up = verb in UP_VERBS + MAX_VERBS

    scope = _match_scope(low)

    m_abs = re.search(r"\bto ([0-9]+(?:\.[0-9]+)?)\s*(ms|mbps|w|%)?", low)
    m_pct = re.search(r"\bby ([0-9]+(?:\.[0-9]+)?)\s*(%|percent)", low)
    if m_pct:
        pct = float(m_pct.group(1)) / 100.0
        improving = wants_up == higher_better
        magnitude = pct if improving else -pct
        if abs(magnitude) > cfg.max_magnitude:
            raise IntentError("magnitude out of range")
        return Intent(raw=text, t_y=t_y, magnitude=magnitude, scope=scope)
    if m_abs:
        return Intent(raw=text, t_y=t_y, magnitude=None, scope=scope,
                      absolute_target=float(m_abs.group(1)))
    if verb in MAX_VERBS + MIN_VERBS:
        improving = wants_up == higher_better
        magnitude = cfg.extreme_magnitude if improving else -cfg.extreme_magnitude
        return Intent(raw=text, t_y=t_y, magnitude=magnitude, scope=scope)
    raise MagnitudeRequiredError("magnitude required")


def render(intent: Intent) -> str:
    """Canonical utterance; parsing it yields an equal Intent."""
    higher_better = METRIC_INCREASES[intent.t_y]
    phrase = intent.t_y.replace("_", " ")
    if intent.scope.startswith("class:"):
        suffix = f" for {intent.scope.split(':', 1)[1]} traffic"
    elif intent.scope.startswith("cell:"):
        suffix = f" in cell {intent.scope.split(':', 1)[1]}"
    else:
        suffix = ""
    if intent.absolute_target is not None:
        verb = "increase" if higher_better else "reduce"
        unit = METRIC_UNIT[intent.t_y]
        return f"{verbs_cap(verb)} {phrase} to {intent.absolute_target:g} {unit}{suffix}"
    improving = intent.magnitude >= 0
    verb = ("increase" if improving else "reduce") if higher_better else \
           ("reduce" if improving else "increase")
    return f"{verbs_cap(verb)} {phrase} by {abs(intent.magnitude) * 100:g}%{suffix}"


def verbs_cap(verb: str) -> str:
    return verb[0].upper() + verb[1:]


# ---------------------------------------------------------------------------
# Knowledge store
# ---------------------------------------------------------------------------

class KnowledgeStore:
    """Three segments: dynamic KPIs (TTI-stamped), semi-static configuration,
    and intent-prompt exemplars."""

    def __init__(self):
        self.dynamic: dict[str, dict] = {}        # key -> {value, tti}
        self.semi_static: dict[str, object] = {}
        self.prompts: dict[str, str] = {}         # template -> response

    def update_dynamic(self, key: str, value, tti: int):
        self.dynamic[key] = {"value": value, "tti": int(tti)}

    def feed_kpis(self, kpi, power_w: float | None = None):
        for key in ("thr_mbps", "delay_ms", "ee_bits_per_j", "loss_pct"):
            self.update_dynamic(key, getattr(kpi, key), kpi.t)
        if power_w is not None:
            self.update_dynamic("power_w", power_w, kpi.t)

    def set_semi_static(self, key: str, value):
        self.semi_static[key] = value

    def add_prompt(self, template: str, response: str):
        self.prompts[template.lower()] = response

    def export_json(self, path):
        Path(path).write_text(json.dumps(
            {"dynamic": self.dynamic, "semi_static": self.semi_static,
             "prompts": self.prompts}, indent=2, sort_keys=True) + "\n")


def to_goal(intent: Intent, store: KnowledgeStore, now_tti: int,
            staleness_ttis: int = 100) -> Goal:
    key = METRIC_STORE_KEY[intent.t_y]
    entry = store.dynamic.get(key)
    if entry is None:
        raise StalenessError(f"no dynamic value for {key}")
    if now_tti - entry["tti"] > staleness_ttis:
        raise StalenessError(f"{key} snapshot is {now_tti - entry['tti']} TTIs old")
    current = float(entry["value"])
    direction = "increase" if METRIC_INCREASES[intent.t_y] else "decrease"
    if intent.absolute_target is not None:
        return Goal(metric=intent.t_y, target=intent.absolute_target,
                    direction=direction)
    if METRIC_INCREASES[intent.t_y]:
        target = current * (1 + intent.magnitude)
    else:
        target = current * (1 - intent.magnitude)
    return Goal(metric=intent.t_y, target=target, direction=direction)


QUERY_DYNAMIC = re.compile(
    r"what is the current (.+?)\??$")
QUERY_STATIC = re.compile(
    r"what is the configured (.+?)\??$")


def answer_query(text: str, store: KnowledgeStore) -> dict:
    low = text.lower().strip()
    m = QUERY_DYNAMIC.match(low)
    if m:
        metric = _match_metric(m.group(1))
        if metric is not None:
            key = METRIC_STORE_KEY[metric[1]]
            entry = store.dynamic.get(key)
            if entry is not None:
                return {"value": entry["value"], "tti": entry["tti"],
                        "segment": "dynamic", "key": key}
        raise UnknownQueryError("unknown query")
    m = QUERY_STATIC.match(low)
    if m:
        key = m.group(1).strip().replace(" ", "_")
        if key in store.semi_static:
            return {"value": store.semi_static[key], "tti": None,
                    "segment": "semi_static", "key": key}
        raise UnknownQueryError("unknown query")
    if low in store.prompts:
        return {"value": store.prompts[low], "tti": None,
                "segment": "intent_prompt", "key": low}
    raise UnknownQueryError("unknown query")


# ---------------------------------------------------------------------------
# Corpus fixtures
# ---------------------------------------------------------------------------

def load_corpus(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def intent_to_record(text: str, intent: Intent) -> dict:
    rec = {"text": text, "t_y": intent.t_y, "magnitude": intent.magnitude,
           "scope": intent.scope}
    if intent.absolute_target is not None:
        rec["absolute_target"] = intent.absolute_target
    return rec


def record_to_intent(rec: dict) -> Intent:
    return Intent(raw=rec["text"], t_y=rec["t_y"], magnitude=rec["magnitude"],
                  scope=rec["scope"], absolute_target=rec.get("absolute_target"))
