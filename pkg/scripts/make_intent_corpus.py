"""Regenerate the intent-utterance corpus fixture.

Expected parses are written from the documented grammar semantics, spelled
out independently here so the fixture stays an oracle for the parser.
"""

import json
from pathlib import Path

HIGHER_BETTER = {"throughput": True, "energy_efficiency": True,
                 "delay": False, "power": False, "loss": False}

PHRASES = {
    "throughput": ["throughput", "data rate", "capacity"],
    "delay": ["delay", "latency", "response time"],
    "energy_efficiency": ["energy efficiency", "ee"],
    "power": ["power", "power usage", "power consumption", "energy consumption"],
    "loss": ["packet loss", "loss rate", "packet drops"],
}
UNITS = {"throughput": "Mbps", "delay": "ms", "energy_efficiency": "bits/J",
         "power": "W", "loss": "%"}

UP = ["Increase", "Boost", "Raise"]
DOWN = ["Reduce", "Decrease", "Lower", "Cut"]
SCOPES = [("", "network"), (" for video traffic", "class:video"),
          (" for urllc users", "class:urllc"), (" in cell 2", "cell:2"),
          (" in cell 5", "cell:5")]


def rec(text, t_y, magnitude, scope, absolute=None):
    out = {"text": text, "t_y": t_y, "magnitude": magnitude, "scope": scope}
    if absolute is not None:
        out["absolute_target"] = absolute
    return out


def main():
    rows = [
        rec("Increase throughput by 10%", "throughput", 0.10, "network"),
        rec("Increase energy efficiency by 30%", "energy_efficiency", 0.30,
            "network"),
    ]
    pcts = [5, 10, 15, 20, 25, 30, 40, 50]
    i = 0
    for t_y, phrases in PHRASES.items():
        hb = HIGHER_BETTER[t_y]
        for phrase in phrases:
            for verb in UP + DOWN:
                up = verb in UP
                p = pcts[i % len(pcts)]
                suffix, scope = SCOPES[i % len(SCOPES)]
                i += 1
                improving = up == hb
                mag = p / 100.0 if improving else -p / 100.0
                rows.append(rec(f"{verb} {phrase} by {p}%{suffix}",
                                t_y, mag, scope))
    # improve forms: always the metric's good direction
    for t_y in PHRASES:
        p = pcts[i % len(pcts)]
        i += 1
        rows.append(rec(f"Improve {PHRASES[t_y][0]} by {p}%", t_y, p / 100.0,
                        "network"))
    # extreme forms
    for t_y, hb in HIGHER_BETTER.items():
        verb = "Maximize" if hb else "Minimize"
        rows.append(rec(f"{verb} {PHRASES[t_y][0]}", t_y, 1.0, "network"))
    # absolute-target forms
    targets = {"throughput": 300, "delay": 1, "energy_efficiency": 50000,
               "power": 150, "loss": 1}
    for t_y, hb in HIGHER_BETTER.items():
        verb = "Increase" if hb else "Reduce"
        rows.append(rec(f"{verb} {PHRASES[t_y][0]} to {targets[t_y]} {UNITS[t_y]}",
                        t_y, None, "network", absolute=float(targets[t_y])))
    # percent-word and punctuation variants
    extras = [
        rec("Increase throughput by 25 percent.", "throughput", 0.25, "network"),
        rec("Reduce latency by 30%!", "delay", 0.30, "network"),
        rec("Minimize delay to 1 ms", "delay", None, "network", absolute=1.0),
        rec("Cut power usage by 20% in cell 3", "power", 0.20, "cell:3"),
        rec("Boost data rate by 15% for gaming users", "throughput", 0.15,
            "class:gaming"),
        rec("Reduce packet loss by 50% for voice traffic", "loss", 0.50,
            "class:voice"),
    ]
    rows.extend(extras)
    # pad with more scope/percent combinations to reach 200
    j = 0
    combos = [(t, ph) for t, phs in PHRASES.items() for ph in phs]
    while len(rows) < 200:
        t_y, phrase = combos[j % len(combos)]
        hb = HIGHER_BETTER[t_y]
        p = pcts[(j * 3 + 1) % len(pcts)]
        suffix, scope = SCOPES[(j * 2 + 1) % len(SCOPES)]
        verb = ("Increase" if hb else "Reduce") if j % 2 == 0 else \
               ("Decrease" if hb else "Raise")
        improving = (verb in UP + ["Increase"]) == hb
        mag = p / 100.0 if improving else -p / 100.0
        rows.append(rec(f"{verb} {phrase} by {p}%{suffix}", t_y, mag, scope))
        j += 1
    assert len(rows) == 200, len(rows)
    assert len({r["text"] for r in rows}) == 200, "duplicate utterances"
    out = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / \
        "intent_corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    print(f"wrote {len(rows)} utterances to {out}")


if __name__ == "__main__":
    main()
