"""Discrete-time (1 TTI = 1 ms) multi-RAT cellular simulator.

One macro LTE cell plus a ring of NR small cells (mid or high band)
serve dual-connected users.  Per TTI: packet arrivals per class law,
strict-URLLC-priority proportional-fair scheduling, queue drain, power
accounting, and KPI/QoS-drift bookkeeping.  Runs are bit-reproducible
for a fixed (config, seed).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import channel as ch
from . import qos as qosmod
from .traffic import CLASSES, TrafficSource


class ConflictError(ValueError):
    def __init__(self, pair):
        self.pair = tuple(sorted(pair))
        super().__init__(f"conflicting applications: {self.pair[0]} and {self.pair[1]}")


@dataclass
class ScenarioConfig:
    """Scenario knobs; field names mirror the simulation-settings table."""
    n_small: int = 6
    n_ues: int = 60
    arena_radius_m: float = 250.0
    small_ring_radius_m: float = 180.0

    # 5G NR
    nr_mid_bandwidth_hz: float = 50e6
    nr_high_bandwidth_hz: float = 100e6
    nr_mid_carrier_hz: float = 3.5e9
    nr_high_carrier_hz: float = 30e9
    nr_max_tx_power_dbm: float = 43.0
    nr_mid_subcarrier_hz: float = 15e3
    nr_high_subcarrier_hz: float = 60e3
    small_tx_power_dbm: float = 30.0

    # LTE
    lte_bandwidth_hz: float = 40e6
    lte_carrier_hz: float = 800e6
    lte_max_tx_power_dbm: float = 38.0
    lte_subcarrier_hz: float = 15e3

    # power model: P_C = P_fixed + pa_factor * P_TX when active, else sleep floor
    macro_fixed_w: float = 130.0
    small_fixed_w: float = 6.8
    pa_factor: float = 4.7
    sleep_fraction: float = 0.05      # P_sleep = sleep_fraction * P_fixed

    tti_ms: float = 1.0
    buffer_packets: int = 2000
    max_sched_per_bs: int = 4
    sinr_min_db: float = -5.0
    noise_density_w_per_hz: float = 3.98e-21
    power_levels: tuple = (0.25, 0.5, 0.75, 1.0)
    initial_power_level: int = 3

    load_scale: float = 1.0
    deadline_factor: float = 4.0
    drift_window_ttis: int = 100
    mobility: str = "static"          # static | waypoint
    ue_speed_mps: float = 1.5
    channel_profile_macro: str = "C"
    channel_profile_small_mid: str = "A"
    channel_profile_small_high: str = "D"
    beam_codebook_size: int = 16
    beam_gain_db: float = 9.0
    beam_mismatch_db: float = -3.0

    # default fraction of each class routed to the NR small-cell leg
    steering: dict = field(default_factory=lambda: {
        "video": 0.7, "gaming": 0.5, "voice": 0.3, "urllc": 0.8})

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path):
        data = json.loads(Path(path).read_text())
        data["power_levels"] = tuple(data.get("power_levels", cls.power_levels))
        return cls(**data)


@dataclass
class BsState:
    bs_id: int
    band: str                 # mid | high (macro LTE reported as mid)
    is_macro: bool
    tx_power_w: float
    consumed_power_w: float
    queue_packets: int
    asleep: bool
    beam_idx: int | None = None
    power_level: int = 3


@dataclass
class UeState:
    ue_id: int
    t_class: str
    serving: tuple            # (macro_bs, small_bs)
    sinr_db: dict = field(default_factory=dict)   # bs_id -> dB
    angle_rad: dict = field(default_factory=dict) # bs_id -> bearing from bs to ue


@dataclass
class NetworkState:
    t: int
    bss: list
    ues: list
    traffic_load_mbps: float
    packet_loss_pct: float

    @property
    def total_power_w(self) -> float:
        return sum(b.consumed_power_w for b in self.bss)


@dataclass
class KpiRecord:
    t: int
    thr_mbps: float
    delay_ms: float
    ee_bits_per_j: float
    loss_pct: float
    drift: dict               # class -> metric -> value

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "thr_mbps": self.thr_mbps,
                           "delay_ms": self.delay_ms,
                           "ee_bits_per_j": self.ee_bits_per_j,
                           "loss_pct": self.loss_pct, "drift": self.drift},
                          sort_keys=True)


def write_kpi_log(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_kpi_log(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line]


class _ClassWindow:
    """Rolling per-class stats over the drift window."""

    def __init__(self, window: int):
        self.window = window
        self.buf = deque()
        self.arrived = 0
        self.lost = 0
        self.delivered = 0
        self.delay_sum = 0.0

    def push(self, arrived, lost, delivered, delay_sum):
        self.buf.append((arrived, lost, delivered, delay_sum))
        self.arrived += arrived
        self.lost += lost
        self.delivered += delivered
        self.delay_sum += delay_sum
        if len(self.buf) > self.window:
            a, l, d, s = self.buf.popleft()
            self.arrived -= a
            self.lost -= l
            self.delivered -= d
            self.delay_sum -= s

    @property
    def loss_pct(self) -> float:
        return 100.0 * self.lost / self.arrived if self.arrived else 0.0

    @property
    def mean_delay_ms(self) -> float:
        return self.delay_sum / self.delivered if self.delivered else 0.0


class Simulator:
    """Owns one run; single-threaded, no shared mutable state."""

    def __init__(self, config: ScenarioConfig | None = None, seed: int = 0,
                 qos_requirements: dict | None = None):
        self.cfg = config or ScenarioConfig()
        self.seed = seed
        self.rng = np.random.default_rng(np.random.PCG64(seed))
        self.qos = qos_requirements or qosmod.default_requirements()
        self.t = 0
        self._build_topology()
        self._build_ues()
        self._build_channels()
        self._init_queues()
        self.total_energy_j = 0.0
        self.per_bs_energy_j = np.zeros(self.n_bs)
        self.windows = {c: _ClassWindow(self.cfg.drift_window_ttis) for c in CLASSES}
        self.steering = dict(self.cfg.steering)
        self.kpi_history: list[KpiRecord] = []

    # ---- construction ----

    def _build_topology(self):
        cfg = self.cfg
        self.n_bs = 1 + cfg.n_small
        self.bs_pos = np.zeros((self.n_bs, 2))
        angles = np.linspace(0, 2 * np.pi, cfg.n_small, endpoint=False)
        self.bs_pos[1:, 0] = cfg.small_ring_radius_m * np.cos(angles)
        self.bs_pos[1:, 1] = cfg.small_ring_radius_m * np.sin(angles)
        self.bs_band = ["mid"]
        self.bs_is_macro = [True] + [False] * cfg.n_small
        for i in range(cfg.n_small):
            self.bs_band.append("mid" if i % 2 == 0 else "high")
        self.bs_max_tx_w = np.array(
            [10 ** ((cfg.lte_max_tx_power_dbm - 30) / 10)] +
            [10 ** ((cfg.small_tx_power_dbm - 30) / 10)] * cfg.n_small)
        self.bs_fixed_w = np.array([cfg.macro_fixed_w] + [cfg.small_fixed_w] * cfg.n_small)
        self.power_level = np.full(self.n_bs, cfg.initial_power_level, dtype=int)
        self.asleep = np.zeros(self.n_bs, dtype=bool)
        self.beam_idx = [None] * self.n_bs
        self.bs_bandwidth = np.array(
            [cfg.lte_bandwidth_hz] +
            [cfg.nr_mid_bandwidth_hz if b == "mid" else cfg.nr_high_bandwidth_hz
             for b in self.bs_band[1:]])
        self.bs_carrier = np.array(
            [cfg.lte_carrier_hz] +
            [cfg.nr_mid_carrier_hz if b == "mid" else cfg.nr_high_carrier_hz
             for b in self.bs_band[1:]])

    def _build_ues(self):
        cfg = self.cfg
        r = cfg.arena_radius_m * np.sqrt(self.rng.random(cfg.n_ues))
        th = self.rng.uniform(0, 2 * np.pi, cfg.n_ues)
        self.ue_pos = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        self.ue_class = [CLASSES[i % len(CLASSES)] for i in range(cfg.n_ues)]
        self.sources = [TrafficSource.for_class(c) for c in self.ue_class]
        self.next_arrival_ms = np.array(
            [self.sources[u].next_gap_ms(self.rng, cfg.load_scale) if cfg.load_scale > 0
             else np.inf for u in range(cfg.n_ues)])
        # dual connectivity: macro + nearest small
        d_small = np.linalg.norm(self.ue_pos[:, None, :] - self.bs_pos[None, 1:, :], axis=2)
        self.serving_small = 1 + np.argmin(d_small, axis=1)
        self._waypoint = None
        if cfg.mobility == "waypoint":
            self._waypoint = self._draw_waypoints()

    def _draw_waypoints(self):
        r = self.cfg.arena_radius_m * np.sqrt(self.rng.random(self.cfg.n_ues))
        th = self.rng.uniform(0, 2 * np.pi, self.cfg.n_ues)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    def _build_channels(self):
        cfg = self.cfg
        self.small_scale = np.zeros((cfg.n_ues, self.n_bs))
        for u in range(cfg.n_ues):
            for b in range(self.n_bs):
                if b == 0:
                    profile = cfg.channel_profile_macro
                elif self.bs_band[b] == "mid":
                    profile = cfg.channel_profile_small_mid
                else:
                    profile = cfg.channel_profile_small_high
                model = ch.make_cdl_lite(profile, self.rng)
                h = ch.channel_gain(model, self.bs_carrier[b] * 1e-3)
                self.small_scale[u, b] = max(abs(h) ** 2, 1e-3)
        self._recompute_pathloss()

    def _recompute_pathloss(self):
        dist = np.linalg.norm(self.ue_pos[:, None, :] - self.bs_pos[None, :, :], axis=2)
        exps = np.array([3.5] + [3.2 if b == "mid" else 2.9 for b in self.bs_band[1:]])
        pl_db = np.zeros_like(dist)
        for b in range(self.n_bs):
            pl_db[:, b] = [ch.path_loss_db(d, self.bs_carrier[b], exps[b]) for d in dist[:, b]]
        self.path_gain = 10 ** (-pl_db / 10.0)
        self.ue_angle = np.arctan2(self.ue_pos[:, None, 1] - self.bs_pos[None, :, 1],
                                   self.ue_pos[:, None, 0] - self.bs_pos[None, :, 0])

    def _beam_mult(self, u: int, b: int) -> float:
        idx = self.beam_idx[b]
        if idx is None or self.bs_band[b] != "high":
            return 1.0
        cfg = self.cfg
        beam_angle = 2 * np.pi * idx / cfg.beam_codebook_size
        diff = np.angle(np.exp(1j * (self.ue_angle[u, b] - beam_angle)))
        if abs(diff) <= np.pi / cfg.beam_codebook_size:
            return 10 ** (cfg.beam_gain_db / 10)
        return 10 ** (cfg.beam_mismatch_db / 10)

    def _init_queues(self):
        # queue[(bs, ue)] = deque of [arrival_ms, bits_remaining, bits_total]
        self.queues: dict[tuple, deque] = {}
        self.bs_queued_packets = np.zeros(self.n_bs, dtype=int)
        self.ema_bits = np.full((self.cfg.n_ues, self.n_bs), 1e4)

    # ---- knobs exposed to applications ----

    def apply_action(self, action):
        kind = action.kind
        p = action.params
        if kind == "sleep_mask":
            mask = set(p["sleep"])
            for b in range(1, self.n_bs):      # macro never sleeps
                self.asleep[b] = b in mask
        elif kind == "power_levels":
            for b, lvl in p["levels"].items():
                b = int(b)
                if not 0 <= lvl < len(self.cfg.power_levels):
                    raise ValueError(f"power level {lvl} out of range")
                self.power_level[b] = lvl
        elif kind == "steering":
            for klass, frac in p["nr_fraction"].items():
                self.steering[klass] = float(np.clip(frac, 0.0, 1.0))
        elif kind == "beams":
            for b, idx in p["beams"].items():
                self.beam_idx[int(b)] = idx if idx is None else int(idx) % self.cfg.beam_codebook_size
        elif kind == "handover":
            policy = p.get("policy", "nearest")
            self._apply_handover(policy)
        else:
            raise ValueError(f"unknown action kind {kind!r}")

    def _apply_handover(self, policy: str):
        d = np.linalg.norm(self.ue_pos[:, None, :] - self.bs_pos[None, 1:, :], axis=2)
        if policy == "nearest":
            self.serving_small = 1 + np.argmin(d, axis=1)
        elif policy == "consolidate":
            # prefer already-busy, awake small cells so others can sleep
            load = np.array([self.bs_queued_packets[b] for b in range(1, self.n_bs)])
            score = d - 10.0 * (load > 0) + 1e6 * self.asleep[1:]
            self.serving_small = 1 + np.argmin(score, axis=1)
        elif policy == "balance":
            order = np.argsort(d.min(axis=1))
            counts = np.zeros(self.n_bs - 1)
            assign = np.zeros(self.cfg.n_ues, dtype=int)
            for u in order:
                cand = np.argsort(d[u])[:3]
                pick = min(cand, key=lambda c: (counts[c], d[u, c]))
                assign[u] = pick
                counts[pick] += 1
            self.serving_small = 1 + assign
        else:
            raise ValueError(f"unknown handover policy {policy!r}")

    # ---- per-TTI dynamics ----

    def _arrivals(self):
        cfg = self.cfg
        per_class = {c: [0, 0] for c in CLASSES}   # arrived, lost(overflow)
        now = self.t * cfg.tti_ms
        for u in range(cfg.n_ues):
            src = self.sources[u]
            klass = src.t_class
            while self.next_arrival_ms[u] <= now:
                arrival = self.next_arrival_ms[u]
                self.next_arrival_ms[u] = arrival + src.next_gap_ms(self.rng, cfg.load_scale)
                per_class[klass][0] += 1
                # route the packet to one dual-connectivity leg
                frac = self.steering.get(klass, 0.5)
                small = int(self.serving_small[u])
                if self.asleep[small]:
                    bs = 0
                else:
                    bs = small if self.rng.random() < frac else 0
                if self.bs_queued_packets[bs] >= cfg.buffer_packets:
                    per_class[klass][1] += 1
                    continue
                q = self.queues.setdefault((bs, u), deque())
                bits = src.packet_bytes * 8
                q.append([arrival, bits, bits])
                self.bs_queued_packets[bs] += 1
        return per_class

    def _sinr_db(self, u: int, b: int, tx_w: np.ndarray, active: np.ndarray) -> float:
        g = self.path_gain[u, b] * self.small_scale[u, b] * self._beam_mult(u, b)
        signal = tx_w[b] * g
        noise = self.cfg.noise_density_w_per_hz * self.bs_bandwidth[b]
        interference = 0.0
        for b2 in range(self.n_bs):
            if b2 != b and active[b2] and self.bs_band[b2] == self.bs_band[b] and b2 != 0 and b != 0:
                interference += tx_w[b2] * self.path_gain[u, b2] * self.small_scale[u, b2] \
                    * self._beam_mult(u, b2)
        return 10 * np.log10(max(signal / (noise + interference), 1e-12))

    def _schedule_and_serve(self, per_class):
        cfg = self.cfg
        now = self.t * cfg.tti_ms
        tx_w = self.bs_max_tx_w * np.array([cfg.power_levels[l] for l in self.power_level])
        active = ~self.asleep
        delivered_bits = 0
        per_class_del = {c: [0, 0.0] for c in CLASSES}   # delivered, delay_sum
        sinr_cache: dict[tuple, float] = {}

        for b in range(self.n_bs):
            if self.asleep[b]:
                continue
            legs = [(b2, u) for (b2, u) in self.queues if b2 == b and self.queues[(b2, u)]]
            if not legs:
                continue
            # deadline expiry before scheduling
            for key in legs:
                q = self.queues[key]
                klass = self.ue_class[key[1]]
                deadline = cfg.deadline_factor * self.qos[klass].entries["delay_ms"].required
                while q and now - q[0][0] > deadline:
                    q.popleft()
                    self.bs_queued_packets[b] -= 1
                    per_class[klass][1] += 1
            legs = [(b2, u) for (b2, u) in legs if self.queues[(b2, u)]]
            if not legs:
                continue

            def sinr_of(u):
                if (u, b) not in sinr_cache:
                    sinr_cache[(u, b)] = self._sinr_db(u, b, tx_w, active)
                return sinr_cache[(u, b)]

            usable = [(b2, u) for (b2, u) in legs if sinr_of(u) >= cfg.sinr_min_db]
            urllc = sorted([l for l in usable if self.ue_class[l[1]] == "urllc"],
                           key=lambda l: l[1])
            others = [l for l in usable if self.ue_class[l[1]] != "urllc"]
            # proportional fair: instantaneous rate over smoothed served bits
            others.sort(key=lambda l: (-np.log2(1 + 10 ** (sinr_of(l[1]) / 10))
                                       / (self.ema_bits[l[1], b] + 1e3), l[1]))
            sched = (urllc + others)[:cfg.max_sched_per_bs]
            if not sched:
                continue
            share = self.bs_bandwidth[b] / len(sched)
            for (_, u) in sched:
                rate = share * np.log2(1 + 10 ** (sinr_of(u) / 10))   # bits/s
                budget = rate * cfg.tti_ms / 1000.0
                served = 0.0
                q = self.queues[(b, u)]
                klass = self.ue_class[u]
                while q and budget > 0:
                    pkt = q[0]
                    take = min(budget, pkt[1])
                    pkt[1] -= take
                    budget -= take
                    served += take
                    if pkt[1] <= 1e-9:
                        q.popleft()
                        self.bs_queued_packets[b] -= 1
                        queueing = now - pkt[0]
                        transmission = pkt[2] / rate * 1000.0
                        per_class_del[klass][0] += 1
                        per_class_del[klass][1] += queueing + transmission
                        delivered_bits += pkt[2]
                self.ema_bits[u, b] = 0.9 * self.ema_bits[u, b] + 0.1 * served
        return delivered_bits, per_class_del, tx_w

    def step(self, active_apps=()) -> tuple[NetworkState, KpiRecord]:
        cfg = self.cfg
        check_conflicts(active_apps)
        if active_apps:
            state_before = self.snapshot()
            for app in active_apps:
                self.apply_action(app.act(state_before))

        if self._waypoint is not None:
            step_m = cfg.ue_speed_mps * cfg.tti_ms / 1000.0
            vec = self._waypoint - self.ue_pos
            dist = np.linalg.norm(vec, axis=1, keepdims=True)
            move = np.where(dist > step_m, vec / np.maximum(dist, 1e-9) * step_m, vec)
            self.ue_pos += move
            if self.t % 100 == 0:
                self._recompute_pathloss()

        per_class = self._arrivals()
        delivered_bits, per_class_del, tx_w = self._schedule_and_serve(per_class)

        # power accounting
        p_c = np.where(self.asleep,
                       cfg.sleep_fraction * self.bs_fixed_w,
                       self.bs_fixed_w + cfg.pa_factor * self.bs_max_tx_w
                       * np.array([cfg.power_levels[l] for l in self.power_level]))
        dt_s = cfg.tti_ms / 1000.0
        self.per_bs_energy_j += p_c * dt_s
        self.total_energy_j += float(p_c.sum()) * dt_s
        self._last_pc = p_c
        self._last_tx_w = tx_w

        # rolling windows and drift
        arrived_bits = 0
        for c in CLASSES:
            a, lost = per_class[c]
            d, dsum = per_class_del[c]
            self.windows[c].push(a, lost, d, dsum)
            arrived_bits += a * 8 * TrafficSource.for_class(c).packet_bytes
        drift = {}
        for c in CLASSES:
            w = self.windows[c]
            drift[c] = {
                "delay_ms": qosmod.qos_drift(self.qos[c], w.mean_delay_ms, "delay_ms"),
                "loss_pct": qosmod.qos_drift(self.qos[c], w.loss_pct, "loss_pct"),
            }

        total_del = sum(v[0] for v in per_class_del.values())
        delay_ms = (sum(v[1] for v in per_class_del.values()) / total_del) if total_del else 0.0
        energy_j = float(p_c.sum()) * dt_s
        kpi = KpiRecord(
            t=self.t,
            thr_mbps=delivered_bits / dt_s / 1e6,
            delay_ms=delay_ms,
            ee_bits_per_j=delivered_bits / energy_j if energy_j > 0 else 0.0,
            loss_pct=self._window_loss_pct(),
            drift=drift,
        )
        self.t += 1
        self.kpi_history.append(kpi)
        return self.snapshot(), kpi

    def _window_loss_pct(self) -> float:
        arrived = sum(w.arrived for w in self.windows.values())
        lost = sum(w.lost for w in self.windows.values())
        return 100.0 * lost / arrived if arrived else 0.0

    def _window_offered_mbps(self) -> float:
        bits = sum(w.arrived * 8 * TrafficSource.for_class(c).packet_bytes
                   for c, w in self.windows.items())
        span_ms = max(min(self.t, self.cfg.drift_window_ttis), 1) * self.cfg.tti_ms
        return bits / (span_ms / 1000.0) / 1e6

    # ---- snapshots ----

    def snapshot(self) -> NetworkState:
        cfg = self.cfg
        tx_w = self.bs_max_tx_w * np.array([cfg.power_levels[l] for l in self.power_level])
        active = ~self.asleep
        p_c = getattr(self, "_last_pc", np.where(
            self.asleep, cfg.sleep_fraction * self.bs_fixed_w,
            self.bs_fixed_w + cfg.pa_factor * tx_w))
        bss = [BsState(bs_id=b, band=self.bs_band[b], is_macro=self.bs_is_macro[b],
                       tx_power_w=0.0 if self.asleep[b] else float(tx_w[b]),
                       consumed_power_w=float(p_c[b]),
                       queue_packets=int(self.bs_queued_packets[b]),
                       asleep=bool(self.asleep[b]),
                       beam_idx=self.beam_idx[b],
                       power_level=int(self.power_level[b]))
               for b in range(self.n_bs)]
        ues = []
        for u in range(cfg.n_ues):
            small = int(self.serving_small[u])
            sinr = {0: self._sinr_db(u, 0, tx_w, active)}
            if not self.asleep[small]:
                sinr[small] = self._sinr_db(u, small, tx_w, active)
            angles = {0: float(self.ue_angle[u, 0]), small: float(self.ue_angle[u, small])}
            ues.append(UeState(ue_id=u, t_class=self.ue_class[u],
                               serving=(0, small), sinr_db=sinr, angle_rad=angles))
        return NetworkState(t=self.t, bss=bss, ues=ues,
                            traffic_load_mbps=self._window_offered_mbps(),
                            packet_loss_pct=self._window_loss_pct())


def check_conflicts(apps):
    """Reject app sets containing a declared conflicting pair."""
    apps = list(apps)
    for i, a in enumerate(apps):
        for b in apps[i + 1:]:
            if b.app_id in getattr(a, "conflict_ids", ()) or \
               a.app_id in getattr(b, "conflict_ids", ()):
                raise ConflictError((a.app_id, b.app_id))


def run(config: ScenarioConfig, seed: int, n_ttis: int, apps=()) -> list[KpiRecord]:
    sim = Simulator(config, seed)
    out = []
    for _ in range(n_ttis):
        _, kpi = sim.step(apps)
        out.append(kpi)
    return out
