"""Predictive intent validation.

Threshold calibration finds the operating points where associated KPIs move
significantly; a lookup table labels (intent type, network state) pairs with
an observed QoS-drift indicator by executing the intent in seeded simulation;
validation classifies a forecast into state flags and scans the table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from itertools import product
from pathlib import Path

import numpy as np

from . import appreg
from .netsim import ScenarioConfig, Simulator

FLAG_ORDER = ("load", "loss", "power")   # fixed triple ordering
UNKNOWN = "unknown"

# apps the executor would start for each intent type
INTENT_APPS = {
    "throughput": ("beamforming", "traffic_steering"),
    "delay": ("traffic_steering",),
    "energy_efficiency": ("cell_sleeping", "power_allocation"),
    "power": ("cell_sleeping", "power_allocation"),
    "loss": ("traffic_steering",),
}


class UndefinedChangeError(ValueError):
    pass


class CalibrationIncompleteError(RuntimeError):
    def __init__(self, metric, missing):
        super().__init__(f"no {missing}-threshold crossing found for {metric}")
        self.metric = metric
        self.missing = missing


def relative_change(now: float, prev: float) -> float:
    if prev == 0:
        raise UndefinedChangeError("previous value is zero")
    return (now - prev) / prev


def change_series(values) -> np.ndarray:
    """Relative changes between consecutive observations; absolute-change
    fallback when the previous value is zero."""
    values = np.asarray(values, dtype=float)
    out = np.empty(len(values) - 1)
    for i in range(1, len(values)):
        if values[i - 1] == 0:
            out[i - 1] = values[i] - values[i - 1]
        else:
            out[i - 1] = relative_change(values[i], values[i - 1])
    return out


def significance_threshold(values, percentile: float = 90.0) -> float:
    return float(np.percentile(np.abs(change_series(values)), percentile))


@dataclass
class KpiTrack:
    name: str
    increasing: bool          # True: higher value signals degradation (R_I)
    values: list


@dataclass
class CalibrationHistory:
    metric: str               # load | loss | power
    m_th: list                # monitored metric values (candidate thresholds)
    kpi_a: KpiTrack
    kpi_b: KpiTrack
    percentile: float = 90.0
    min_observations: int = 100

    def check(self):
        n = len(self.m_th)
        if n < self.min_observations:
            raise ValueError(f"{self.metric}: need >= {self.min_observations} "
                             f"observations, got {n}")
        if len(self.kpi_a.values) != n or len(self.kpi_b.values) != n:
            raise ValueError("history tracks must be aligned")


def select_threshold_pair(history: CalibrationHistory,
                          require=("upper", "lower")) -> tuple:
    """First significant crossings, in time order, set (Th_u, Th_l)."""
    history.check()
    tracks = (history.kpi_a, history.kpi_b)
    zetas = [significance_threshold(t.values, history.percentile) for t in tracks]
    changes = [change_series(t.values) for t in tracks]
    th_u = th_l = None
    for i in range(len(changes[0])):
        if th_u is None and any(
                t.increasing and c[i] > z
                for t, c, z in zip(tracks, changes, zetas)):
            th_u = float(history.m_th[i + 1])
        if th_l is None and any(
                not t.increasing and c[i] < -z
                for t, c, z in zip(tracks, changes, zetas)):
            th_l = float(history.m_th[i + 1])
    if "upper" in require and th_u is None:
        raise CalibrationIncompleteError(history.metric, "upper")
    if "lower" in require and th_l is None:
        raise CalibrationIncompleteError(history.metric, "lower")
    return th_u, th_l


@dataclass
class ThresholdSet:
    h_load: float
    l_load: float
    h_loss: float
    l_loss: float
    h_pc: float
    l_pc: float

    def __post_init__(self):
        for m in FLAG_ORDER:
            if self.high(m) <= self.low(m):
                raise ValueError(f"high threshold must exceed low for {m}")

    def high(self, metric):
        return {"load": self.h_load, "loss": self.h_loss,
                "power": self.h_pc}[metric]

    def low(self, metric):
        return {"load": self.l_load, "loss": self.l_loss,
                "power": self.l_pc}[metric]

    def flags(self, values: dict) -> tuple:
        """Binary (load, loss, power): 1 iff value >= high threshold."""
        return tuple(int(values[m] >= self.high(m)) for m in FLAG_ORDER)

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2,
                                         sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path):
        return cls(**json.loads(Path(path).read_text()))


def select_thresholds(histories: dict) -> ThresholdSet:
    """Calibrate all six thresholds from per-metric histories."""
    pairs = {}
    for metric in FLAG_ORDER:
        pairs[metric] = select_threshold_pair(histories[metric])
    return ThresholdSet(h_load=pairs["load"][0], l_load=pairs["load"][1],
                        h_loss=pairs["loss"][0], l_loss=pairs["loss"][1],
                        h_pc=pairs["power"][0], l_pc=pairs["power"][1])


# ---------------------------------------------------------------------------
# Lookup table construction
# ---------------------------------------------------------------------------

@dataclass
class LookupRow:
    t_y: str
    flags: tuple
    theta: object             # 0 | 1 | "unknown"
    score: float = 0.0        # max observed drift in the window (diagnostic)


class LookupTable:
    def __init__(self):
        self.rows: dict = {}

    def put(self, row: LookupRow):
        self.rows[(row.t_y, tuple(row.flags))] = row

    def get(self, t_y: str, flags: tuple) -> LookupRow | None:
        return self.rows.get((t_y, tuple(flags)))

    def to_json(self, path):
        data = [{"t_y": r.t_y, "flags": list(r.flags), "theta": r.theta,
                 "score": r.score}
                for r in sorted(self.rows.values(),
                                key=lambda r: (r.t_y, r.flags))]
        Path(path).write_text(json.dumps({"v": 1, "rows": data}, indent=2,
                                         sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path):
        table = cls()
        for r in json.loads(Path(path).read_text())["rows"]:
            table.put(LookupRow(r["t_y"], tuple(r["flags"]), r["theta"],
                                r["score"]))
        return table


@dataclass
class LookupConfig:
    warmup_ttis: int = 200
    window_ttis: int = 200    # post-execution drift window
    trials: int = 3
    n_small: int = 4
    n_ues: int = 16
    load_scale_high: float = 1.8
    load_scale_low: float = 0.4
    lossy_sinr_min_db: float = 0.0
    # drift must exceed the no-intent baseline by this factor to count as
    # caused by the intent (pre-existing degradation is not charged to it)
    drift_margin: float = 1.05


def scenario_for_flags(flags: tuple, lc: LookupConfig) -> ScenarioConfig:
    load_f, loss_f, power_f = flags
    return ScenarioConfig(
        n_small=lc.n_small, n_ues=lc.n_ues, drift_window_ttis=100,
        load_scale=lc.load_scale_high if load_f else lc.load_scale_low,
        sinr_min_db=lc.lossy_sinr_min_db if loss_f else -5.0,
        initial_power_level=3 if power_f else 0,
    )


def apply_power_profile(sim: Simulator, power_flag: int):
    if not power_flag:
        # power-saving posture: half the small cells asleep
        n_small = sim.cfg.n_small
        for b in range(1, n_small // 2 + 1):
            sim.asleep[b] = True


def measure_state(sim: Simulator, ttis: int) -> tuple:
    """(state values dict, max drift seen) over a measurement window."""
    max_drift = 0.0
    power = []
    kpi = None
    for _ in range(ttis):
        state, kpi = sim.step()
        power.append(state.total_power_w)
        for klass in kpi.drift.values():
            for v in klass.values():
                max_drift = max(max_drift, v)
    values = {"load": state.traffic_load_mbps, "loss": kpi.loss_pct,
              "power": float(np.mean(power))}
    return values, max_drift


def run_window(sim: Simulator, apps, ttis: int) -> float:
    """Run a window with the given app set; return the max drift observed."""
    max_drift = 0.0
    for _ in range(ttis):
        _, kpi = sim.step(apps)
        for klass in kpi.drift.values():
            for v in klass.values():
                max_drift = max(max_drift, v)
    return float(max_drift)


def _fresh_sim(flags, lc, seed):
    sim = Simulator(scenario_for_flags(flags, lc), seed=seed)
    apply_power_profile(sim, flags[2])
    return sim


def build_lookup(s_th: ThresholdSet, seed: int,
                 intent_types=tuple(INTENT_APPS),
                 lc: LookupConfig | None = None) -> LookupTable:
    lc = lc or LookupConfig()
    table = LookupTable()
    for flags in product((0, 1), repeat=3):
        realized_seed = baseline = None
        for trial in range(lc.trials):
            sim = _fresh_sim(flags, lc, seed + trial)
            values, _ = measure_state(sim, lc.warmup_ttis)
            if s_th.flags(values) == flags:
                realized_seed = seed + trial
                # no-intent continuation of the same trajectory
                baseline = run_window(sim, (), lc.window_ttis)
                break
        for t_y in intent_types:
            if realized_seed is None:
                table.put(LookupRow(t_y, flags, UNKNOWN))
                continue
            sim = _fresh_sim(flags, lc, realized_seed)
            measure_state(sim, lc.warmup_ttis)
            apps = [appreg.make_app(a) for a in INTENT_APPS[t_y]]
            drift = run_window(sim, apps, lc.window_ttis)
            # charge the intent only for drift it causes beyond the baseline
            caused = drift > baseline * lc.drift_margin + 1e-6
            table.put(LookupRow(t_y, flags, int(caused), score=drift))
    return table


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    valid: bool
    flags: tuple
    matched: list = field(default_factory=list)
    reasons: list = field(default_factory=list)

    def to_json_dict(self):
        return {"valid": self.valid, "flags": list(self.flags),
                "matched": [{"t_y": r.t_y, "flags": list(r.flags),
                             "theta": r.theta} for r in self.matched],
                "reasons": self.reasons}


def validate_intent(t_y: str, forecast_values: dict, table: LookupTable,
                    s_th: ThresholdSet, mode: str = "strict") -> Verdict:
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown mode {mode!r}")
    flags = s_th.flags(forecast_values)
    row = table.get(t_y, flags)
    if row is None or row.theta == UNKNOWN:
        if mode == "strict":
            return Verdict(False, flags, matched=[],
                           reasons=["uncovered state"])
        return Verdict(True, flags, matched=[],
                       reasons=["uncovered state (lenient)"])
    if row.theta > 0:
        return Verdict(False, flags, matched=[row],
                       reasons=[f"qos drift recorded (score={row.score:.4g})"])
    return Verdict(True, flags, matched=[row], reasons=[])
