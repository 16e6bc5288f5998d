"""Regenerate the small offline decision dataset fixture.

Runs hierarchical data collection on a compact scenario and writes the
trajectory records used by the decision-transformer training tests.
"""

from pathlib import Path

from ranloop import hrlgen
from ranloop.netsim import ScenarioConfig

INTENTS = [
    {"metric": "throughput", "direction": "increase", "percent": 10},
    {"metric": "power", "direction": "decrease", "percent": 10},
]


def main():
    cfg = ScenarioConfig(n_small=4, n_ues=8, load_scale=0.5,
                         drift_window_ttis=50)
    cc = hrlgen.CollectConfig(episodes=2, decisions_per_episode=40,
                              interval_ttis=5, tau=10)
    out = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / \
        "d_offline.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    stats = hrlgen.collect(cfg, INTENTS, out, seed=3, collect_cfg=cc)
    print(f"wrote {stats['records']} records to {out}")


if __name__ == "__main__":
    main()
