"""Registry and desk-scale implementations of the network-optimizing apps.

Five applications (traffic steering, cell sleeping, power allocation,
beamforming, energy-efficient handover) expose a common protocol: a
descriptor with functionality/resource/conflict metadata, and
`act(state) -> AppAction` backed by a coarse tabular Q policy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .tabular import QTable

FUNCTIONALITIES = ("boost_throughput", "reduce_delay", "save_energy",
                   "reduce_power", "reduce_loss")

# intent type -> functionality it demands
INTENT_FUNCTIONALITY = {
    "throughput": "boost_throughput",
    "delay": "reduce_delay",
    "energy_efficiency": "save_energy",
    "power": "reduce_power",
    "loss": "reduce_loss",
}


class NotReadyError(RuntimeError):
    pass


class UnknownAppError(KeyError):
    pass


@dataclass
class AppDescriptor:
    app_id: str
    functionalities: tuple           # subset of FUNCTIONALITIES (flags rho_{a,f})
    input_type: str                  # e.g. traffic_flow, sinr, queue_length
    input_bytes: int                 # s_{t_IN}
    memory_mb: float                 # m_u (placeholder defaults, see registry file)
    proc_units: float                # p_u
    exec_latency_ms: float
    max_instances_per_location: int = 2
    conflicts: tuple = ()

    def validate(self):
        if self.memory_mb <= 0 or self.proc_units <= 0:
            raise ValueError(f"{self.app_id}: resources must be positive")
        for f in self.functionalities:
            if f not in FUNCTIONALITIES:
                raise ValueError(f"{self.app_id}: unknown functionality {f!r}")


@dataclass
class AppAction:
    app_id: str
    kind: str                        # sleep_mask | power_levels | steering | beams | handover
    params: dict = field(default_factory=dict)


class Registry:
    def __init__(self):
        self.descriptors: dict[str, AppDescriptor] = {}

    def register(self, desc: AppDescriptor):
        desc.validate()
        self.descriptors[desc.app_id] = desc
        return self

    def get(self, app_id: str) -> AppDescriptor:
        if app_id not in self.descriptors:
            raise UnknownAppError(app_id)
        return self.descriptors[app_id]

    def conflict_check(self, app_ids) -> tuple | None:
        """None when the set is admissible, else the offending pair (sorted)."""
        ids = sorted(set(app_ids))
        for a in ids:
            self.get(a)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                if b in self.get(a).conflicts or a in self.get(b).conflicts:
                    return (a, b)
        return None

    def apps_for_functionality(self, f: str) -> list[str]:
        return sorted(a for a, d in self.descriptors.items() if f in d.functionalities)

    def closure_ok(self, intent_types=INTENT_FUNCTIONALITY) -> bool:
        return all(self.apps_for_functionality(f) for f in intent_types.values())

    def save(self, path):
        data = {"v": 1, "apps": [asdict(d) for d in
                                 sorted(self.descriptors.values(), key=lambda d: d.app_id)]}
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Registry":
        data = json.loads(Path(path).read_text())
        reg = cls()
        for d in data["apps"]:
            d["functionalities"] = tuple(d["functionalities"])
            d["conflicts"] = tuple(d["conflicts"])
            reg.register(AppDescriptor(**d))
        return reg


def default_registry() -> Registry:
    reg = Registry()
    # resource figures are placeholder defaults (no published values exist)
    reg.register(AppDescriptor("traffic_steering",
                               ("boost_throughput", "reduce_delay", "reduce_loss"),
                               "traffic_flow", 200_000, 256, 2.0, 5.0,
                               conflicts=("cell_sleeping",)))
    reg.register(AppDescriptor("cell_sleeping",
                               ("save_energy", "reduce_power"),
                               "queue_length", 50_000, 128, 1.0, 3.0,
                               conflicts=("traffic_steering",)))
    reg.register(AppDescriptor("power_allocation",
                               ("save_energy", "reduce_power", "boost_throughput"),
                               "sinr", 80_000, 128, 1.5, 2.0))
    reg.register(AppDescriptor("beamforming",
                               ("boost_throughput",),
                               "ue_coordinates", 120_000, 192, 2.5, 4.0))
    reg.register(AppDescriptor("ee_handover",
                               ("save_energy", "reduce_delay"),
                               "sinr", 60_000, 96, 1.0, 2.0))
    assert reg.closure_ok()
    return reg


class BaseApp:
    """Tabular-policy application; act() is deterministic once trained."""

    kind = ""
    actions: list = []

    def __init__(self, descriptor: AppDescriptor):
        self.descriptor = descriptor
        self.app_id = descriptor.app_id
        self.conflict_ids = descriptor.conflicts
        self.table = QTable(len(self.actions))
        self.trained = False

    def pretrain_heuristic(self):
        """Fill Q so the greedy policy equals the documented rule."""
        raise NotImplementedError

    def discretize(self, state):
        raise NotImplementedError

    def _require_trained(self):
        if not self.trained:
            raise NotReadyError(f"{self.app_id}: policy not trained")

    def save_policy(self, path):
        self.table.save(path, {"app_id": self.app_id})

    def load_policy(self, path):
        self.table = QTable.load(path)
        self.trained = True


QUEUE_HOT = 40        # packets; coarse congestion bin boundary
LOAD_HOT_MBPS = 250.0


class TrafficSteeringApp(BaseApp):
    kind = "steering"
    actions = [
        {"video": 0.2, "gaming": 0.2, "voice": 0.1, "urllc": 0.5},   # macro_heavy
        {"video": 0.7, "gaming": 0.5, "voice": 0.3, "urllc": 0.8},   # balanced
        {"video": 0.95, "gaming": 0.9, "voice": 0.7, "urllc": 0.95}, # nr_heavy
    ]

    def discretize(self, state):
        macro_hot = state.bss[0].queue_packets > QUEUE_HOT
        small_hot = max(b.queue_packets for b in state.bss[1:]) > QUEUE_HOT
        return (int(macro_hot), int(small_hot))

    def pretrain_heuristic(self):
        self.table.row((1, 0))[2] = 1.0
        self.table.row((0, 1))[0] = 1.0
        self.table.row((0, 0))[1] = 1.0
        self.table.row((1, 1))[1] = 1.0
        self.trained = True

    def act(self, state) -> AppAction:
        self._require_trained()
        choice = self.table.best(self.discretize(state))
        return AppAction(self.app_id, self.kind, {"nr_fraction": self.actions[choice]})


class CellSleepApp(BaseApp):
    kind = "sleep_mask"
    actions = [0, 1]      # 0 = awake, 1 = sleep

    @staticmethod
    def bin_for_bs(bs, macro_hot: bool) -> str:
        if bs.asleep:
            return "asleep_macro_hot" if macro_hot else "asleep_macro_ok"
        return "idle" if bs.queue_packets == 0 else "busy"

    def discretize(self, state):
        macro_hot = state.bss[0].queue_packets > QUEUE_HOT
        return [self.bin_for_bs(b, macro_hot) for b in state.bss[1:]]

    def pretrain_heuristic(self):
        self.table.row("idle")[1] = 1.0
        self.table.row("busy")[0] = 1.0
        self.table.row("asleep_macro_ok")[1] = 1.0
        self.table.row("asleep_macro_hot")[0] = 1.0
        self.trained = True

    def act(self, state) -> AppAction:
        self._require_trained()
        sleep = []
        for bs, bin_ in zip(state.bss[1:], self.discretize(state)):
            if self.table.best(bin_) == 1:
                sleep.append(bs.bs_id)
        return AppAction(self.app_id, self.kind, {"sleep": sleep})


class PowerAllocationApp(BaseApp):
    kind = "power_levels"
    actions = [0, 1, 2, 3]           # indices into config power_levels
    sinr_target_db = 15.0

    @staticmethod
    def headroom_bin(headroom_db: float) -> int:
        return int(np.clip(np.floor(headroom_db / 3.0), -2, 6))

    def discretize(self, state):
        out = {}
        for bs in state.bss:
            if bs.asleep:
                continue
            attached = [u.sinr_db.get(bs.bs_id) for u in state.ues
                        if bs.bs_id in u.serving and bs.bs_id in u.sinr_db]
            if not attached:
                continue
            # headroom at full power: current sinr minus the level backoff
            level_frac_db = 10 * np.log10(
                [0.25, 0.5, 0.75, 1.0][bs.power_level])
            full_power_sinr = min(attached) - level_frac_db
            out[bs.bs_id] = self.headroom_bin(full_power_sinr - self.sinr_target_db)
        return out

    def pretrain_heuristic(self):
        # reward shape: meet the target at the cheapest level
        fracs = np.array([0.25, 0.5, 0.75, 1.0])
        for hb in range(-2, 7):
            row = self.table.row(hb)
            for lvl, frac in enumerate(fracs):
                backoff = 10 * np.log10(frac)
                meets = hb * 3.0 + backoff >= -1e-9
                # cheapest level that still meets the target; otherwise push
                # toward full power to shrink the shortfall
                row[lvl] = (1.0 - 0.2 * frac) if meets else (-1.0 + 0.1 * frac)
        self.trained = True

    def act(self, state) -> AppAction:
        self._require_trained()
        levels = {}
        for bs_id, hb in self.discretize(state).items():
            levels[bs_id] = self.table.best(hb)
        return AppAction(self.app_id, self.kind, {"levels": levels})


class BeamformingApp(BaseApp):
    kind = "beams"
    actions = list(range(16))        # steering codebook, constant-modulus phases

    def discretize(self, state):
        return None                  # geometric policy; table indexed by angle sector

    def pretrain_heuristic(self):
        for sector in range(16):
            self.table.row(sector)[sector] = 1.0
        self.trained = True

    def act(self, state) -> AppAction:
        self._require_trained()
        beams = {}
        for bs in state.bss[1:]:
            if bs.band != "high" or bs.asleep:
                continue
            attached = [u for u in state.ues if bs.bs_id in u.serving]
            if not attached:
                continue
            # steer at the heaviest-demand attached user (class order, then id)
            rank = {"video": 0, "urllc": 1, "gaming": 2, "voice": 3}
            target = min(attached, key=lambda u: (rank[u.t_class], u.ue_id))
            theta = target.angle_rad.get(bs.bs_id, 0.0)
            sector = int(np.round((theta % (2 * np.pi)) / (2 * np.pi) * 16)) % 16
            beams[bs.bs_id] = self.table.best(sector)
        return AppAction(self.app_id, self.kind, {"beams": beams})


class EeHandoverApp(BaseApp):
    kind = "handover"
    actions = ["consolidate", "balance"]

    def discretize(self, state):
        return "hot" if state.traffic_load_mbps > LOAD_HOT_MBPS else "cool"

    def pretrain_heuristic(self):
        self.table.row("cool")[0] = 1.0
        self.table.row("hot")[1] = 1.0
        self.trained = True

    def act(self, state) -> AppAction:
        self._require_trained()
        choice = self.actions[self.table.best(self.discretize(state))]
        return AppAction(self.app_id, self.kind, {"policy": choice})


APP_CLASSES = {
    "traffic_steering": TrafficSteeringApp,
    "cell_sleeping": CellSleepApp,
    "power_allocation": PowerAllocationApp,
    "beamforming": BeamformingApp,
    "ee_handover": EeHandoverApp,
}


def make_app(app_id: str, registry: Registry | None = None, pretrained=True):
    registry = registry or default_registry()
    app = APP_CLASSES[app_id](registry.get(app_id))
    if pretrained:
        app.pretrain_heuristic()
    return app


def default_app_suite(pretrained=True) -> dict[str, BaseApp]:
    reg = default_registry()
    return {a: make_app(a, reg, pretrained) for a in APP_CLASSES}
