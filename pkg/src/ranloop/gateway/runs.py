"""Run lifecycle, pipeline context construction, and KPI streaming.

A run owns one simulation pipeline (single writer); HTTP handlers and the
CLI both drive it through the same `RunWorker` methods, so identical
(config, seed, intent sequence) produce identical outcome reports.
"""

from __future__ import annotations

import itertools
import json
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .. import hdtga, hrlgen, intentd, orchestrator as orc
from .. import validate as vd
from ..netsim import ScenarioConfig
from .artifacts import canonical_json, sha256_bytes

SCHEMA_VERSION = 1
STATUSES = ("created", "running", "paused", "finished")
_TRANSITIONS = {("created", "running"), ("running", "paused"),
                ("paused", "running"), ("running", "finished"),
                ("paused", "finished")}

# compact transformer settings trained on the bundled offline dataset when
# no pretrained model file is supplied
TINY_HDTGA = dict(omega=8, lookback=8, d_model=16, d_ff=32, heads=8,
                  layers=2, epochs=2, batch_size=32, lr=3e-3, dropout=0.1,
                  seed=0)

DEFAULT_SCENARIO = dict(n_small=4, n_ues=12, load_scale=1.0,
                        drift_window_ttis=50)

DEFAULT_THRESHOLDS = vd.ThresholdSet(h_load=40.0, l_load=5.0, h_loss=5.0,
                                     l_loss=0.1, h_pc=180.0, l_pc=100.0)


class InvalidTransitionError(RuntimeError):
    def __init__(self, src, dst):
        super().__init__(f"cannot transition {src} -> {dst}")


class MissingArtifactError(FileNotFoundError):
    """Raised with a remediation hint when a required file is absent."""

    def __init__(self, path, hint):
        super().__init__(f"{path}: not found; {hint}")
        self.hint = hint


def permissive_table() -> vd.LookupTable:
    """Every (intent, flags) combination admitted; used when no learned
    lookup table is supplied."""
    table = vd.LookupTable()
    for t_y in vd.INTENT_APPS:
        for flags in itertools.product((0, 1), repeat=3):
            table.put(vd.LookupRow(t_y, flags, 0))
    return table


def normalize_config(config: dict | None) -> dict:
    """Fill defaults and reject unknown keys; the result is hashable."""
    config = dict(config or {})
    known = {"v", "seed", "interval_ttis", "budget_ms", "scenario",
             "dataset", "models", "thresholds", "lookup", "hdtga"}
    unknown = set(config) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = {
        "v": SCHEMA_VERSION,
        "seed": int(config.get("seed", 0)),
        "interval_ttis": int(config.get("interval_ttis", 5)),
        "budget_ms": float(config.get("budget_ms", 50.0)),
        "scenario": {**DEFAULT_SCENARIO, **config.get("scenario", {})},
        "dataset": config.get("dataset"),
        "models": config.get("models"),
        "thresholds": config.get("thresholds"),
        "lookup": config.get("lookup"),
        "hdtga": {**TINY_HDTGA, **config.get("hdtga", {})},
    }
    return out


def config_hash(config: dict) -> str:
    return sha256_bytes(canonical_json(config).encode())


_BUNDLE_CACHE: dict = {}


def load_or_train_bundle(config: dict) -> dict:
    """Return {meta, control, config} from a model file or by training the
    compact configuration on the referenced offline dataset."""
    if config.get("models"):
        path = Path(config["models"])
        if not path.exists():
            raise MissingArtifactError(
                path, "train one with `ranloop train-hdtga`")
        return hdtga.load_models(path)
    if not config.get("dataset"):
        raise MissingArtifactError(
            "<dataset>", "config needs either 'models' or 'dataset'")
    path = Path(config["dataset"])
    if not path.exists():
        raise MissingArtifactError(
            path, "produce one with `ranloop collect`")
    key = (str(path), canonical_json(config["hdtga"]))
    if key not in _BUNDLE_CACHE:
        cfg = hdtga.HdtgaConfig(**config["hdtga"])
        trajs = hdtga.split_trajectories(hrlgen.read_dataset(path))
        out = hdtga.train_hdtga(trajs, cfg)
        _BUNDLE_CACHE[key] = {"meta": out["meta"], "control": out["control"],
                              "config": cfg}
    return _BUNDLE_CACHE[key]


def build_context(config: dict) -> orc.PipelineContext:
    """Construct the intent pipeline from a normalized run config; shared by
    the CLI and the HTTP service so both produce identical reports."""
    bundle = load_or_train_bundle(config)
    if config.get("thresholds"):
        thresholds = vd.ThresholdSet.from_json(config["thresholds"])
    else:
        thresholds = DEFAULT_THRESHOLDS
    if config.get("lookup"):
        lookup = vd.LookupTable.from_json(config["lookup"])
    else:
        lookup = permissive_table()
    env = hrlgen.DecisionEnv(ScenarioConfig(**config["scenario"]),
                             seed=config["seed"],
                             interval_ttis=config["interval_ttis"])
    return orc.PipelineContext(env=env, store=intentd.KnowledgeStore(),
                               thresholds=thresholds, lookup=lookup,
                               meta=bundle["meta"], control=bundle["control"],
                               hdtga_cfg=bundle["config"],
                               budget_ms=config["budget_ms"])


@dataclass
class RunHandle:
    run_id: str
    config_hash: str
    seed: int
    status: str = "created"
    artifacts: dict = field(default_factory=dict)

    def advance(self, status: str):
        if status not in STATUSES:
            raise InvalidTransitionError(self.status, status)
        if (self.status, status) not in _TRANSITIONS:
            raise InvalidTransitionError(self.status, status)
        self.status = status

    def to_json_dict(self):
        return {"v": SCHEMA_VERSION, "run_id": self.run_id,
                "config_hash": self.config_hash, "seed": self.seed,
                "status": self.status, "artifacts": dict(self.artifacts)}


@dataclass
class StreamFrame:
    tti: int
    kpis: dict
    forecast: dict | None
    active_apps: list
    pending_verdicts: list

    def to_json_dict(self):
        return {"v": SCHEMA_VERSION, "tti": self.tti, "kpis": self.kpis,
                "forecast": self.forecast, "active_apps": self.active_apps,
                "pending_verdicts": self.pending_verdicts}


class FrameBuffer:
    """Bounded frame history; overflow drops the oldest frame and counts it."""

    def __init__(self, maxlen: int = 1024):
        self.frames: deque = deque(maxlen=maxlen)
        self.dropped = 0
        self._last_tti = None

    def append(self, frame: StreamFrame):
        if self._last_tti is not None and frame.tti <= self._last_tti:
            raise ValueError("stream TTIs must be strictly increasing")
        self._last_tti = frame.tti
        if len(self.frames) == self.frames.maxlen:
            self.dropped += 1
        self.frames.append(frame)


class RunWorker:
    """Single-writer owner of one pipeline; all mutation goes through the
    lock so concurrent request handlers never share simulator state."""

    def __init__(self, run_id: str, config: dict):
        self.config = normalize_config(config)
        self.handle = RunHandle(run_id=run_id,
                                config_hash=config_hash(self.config),
                                seed=self.config["seed"])
        self.ctx = build_context(self.config)
        self.lock = threading.Lock()
        self.buffer = FrameBuffer()
        self.kpi_log: list = []
        self.reports: list = []
        self._pending_verdicts: list = []
        self._active_apps: list = []
        self._last_hrl = None

    # -- forecasting ------------------------------------------------------

    def _forecast(self) -> dict | None:
        if self._last_hrl is None:
            return None
        return {"load": self._last_hrl.t_l, "loss": self._last_hrl.p_l,
                "power": self._last_hrl.p_c}

    # -- mutation (single writer) ------------------------------------------

    def step_frame(self) -> StreamFrame:
        """Advance one decision interval with the active app subset and
        record the windowed KPIs as a stream frame."""
        with self.lock:
            if self.handle.status == "created":
                self.handle.advance("running")
            subset = tuple(sorted(self._active_apps))
            idx = self.ctx.env.subsets.index(subset)
            hrl, metrics, _, _ = self.ctx.env.step(idx)
            self.ctx.history.append(hdtga.state_features(hrl.to_json_dict()))
            self.ctx._store_metrics(metrics)
            self._last_hrl = hrl
            kpis = {"tti": self.ctx.env.sim.t, **metrics}
            self.kpi_log.append(kpis)
            frame = StreamFrame(tti=self.ctx.env.sim.t, kpis=kpis,
                                forecast=self._forecast(),
                                active_apps=sorted(self._active_apps),
                                pending_verdicts=self._pending_verdicts)
            self._pending_verdicts = []
            self.buffer.append(frame)
            return frame

    def submit_intent(self, text: str, dry_run: bool = False) -> dict:
        with self.lock:
            if self.handle.status == "created":
                self.handle.advance("running")
            if dry_run:
                report = self._dry_run(text)
            else:
                report = orc.execute_intent(text, self.ctx)
                self._last_hrl = None  # snapshot consumed by the pipeline
                if report["kpi_after"] is not None:
                    kpis = {"tti": self.ctx.env.sim.t, **report["kpi_after"]}
                    self.kpi_log.append(kpis)
                if report["chosen_apps"]:
                    self._active_apps = list(report["chosen_apps"])
                self.reports.append(report)
            self._pending_verdicts.append(
                {"intent": report["intent"], "dry_run": dry_run,
                 "verdict": report["verdict"]})
            return report

    def _dry_run(self, text: str) -> dict:
        """Verdict without any state change: validate against the latest
        snapshot instead of advancing the simulator."""
        intent = intentd.parse_intent(text)
        if self._last_hrl is None:
            state = self.ctx.env.sim.snapshot()
            values = {"load": state.traffic_load_mbps,
                      "loss": state.packet_loss_pct,
                      "power": state.total_power_w}
        else:
            values = self._forecast()
        verdict = vd.validate_intent(intent.t_y, values, self.ctx.lookup,
                                     self.ctx.thresholds)
        return {"intent": intentd.render(intent), "t_y": intent.t_y,
                "verdict": verdict.to_json_dict(), "chosen_apps": [],
                "placements": {}, "score": None, "kpi_before": None,
                "kpi_after": None,
                "g_d": None, "dry_run": True}

    # -- snapshots ----------------------------------------------------------

    def state(self) -> dict:
        with self.lock:
            return {"v": SCHEMA_VERSION, "handle": self.handle.to_json_dict(),
                    "tti": self.ctx.env.sim.t,
                    "active_apps": sorted(self._active_apps),
                    "frames": len(self.buffer.frames),
                    "frames_dropped": self.buffer.dropped,
                    "reports": len(self.reports)}

    def kpis(self, window: int) -> list:
        with self.lock:
            if window <= 0:
                raise ValueError("window must be positive")
            return list(self.kpi_log[-window:])

    def forecast(self) -> dict:
        with self.lock:
            values = self._forecast()
            if values is None:
                state = self.ctx.env.sim.snapshot()
                values = {"load": state.traffic_load_mbps,
                          "loss": state.packet_loss_pct,
                          "power": state.total_power_w}
            return {"v": SCHEMA_VERSION, "tti": self.ctx.env.sim.t,
                    "values": values}

    def finish(self):
        with self.lock:
            if self.handle.status == "created":
                self.handle.advance("running")
            self.handle.advance("finished")


class RunRegistry:
    """In-memory run table; ids are deterministic per registry."""

    def __init__(self):
        self._runs: dict[str, RunWorker] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def create(self, config: dict | None) -> RunWorker:
        with self._lock:
            self._counter += 1
            run_id = f"run-{self._counter:04d}"
            worker = RunWorker(run_id, config or {})
            self._runs[run_id] = worker
            return worker

    def get(self, run_id: str) -> RunWorker:
        try:
            return self._runs[run_id]
        except KeyError:
            raise KeyError(f"unknown run {run_id!r}") from None

    def ids(self) -> list:
        return sorted(self._runs)


def run_intent_session(config: dict, intents: list[tuple[str, bool]]) -> dict:
    """Execute an ordered intent sequence on a fresh pipeline and return the
    outcome report document (shared CLI/service code path)."""
    worker = RunWorker("session", config)
    reports = []
    for text, dry_run in intents:
        reports.append(worker.submit_intent(text, dry_run=dry_run))
    worker.finish()
    return {"v": SCHEMA_VERSION, "config_hash": worker.handle.config_hash,
            "seed": worker.config["seed"], "reports": reports}


def write_session_report(path, document: dict):
    Path(path).write_text(canonical_json(document))


def read_session_report(path) -> dict:
    return json.loads(Path(path).read_text())
