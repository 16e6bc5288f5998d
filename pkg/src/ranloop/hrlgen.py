"""Offline trajectory generation with a hierarchical tabular learner.

A meta-controller adopts goals extracted from operator intents while a
controller picks conflict-free app subsets to chase them; every decision is
logged as a JSONL record. A feudal manager/worker network is included as the
hierarchical-RL baseline policy.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import appreg
from .netsim import ScenarioConfig, Simulator, CLASSES
from .tabular import QTable

GOAL_METRICS = ("throughput", "delay", "energy_efficiency", "power", "loss")
# map to the KPI window keys plus whether bigger is better
METRIC_KEY = {"throughput": "thr_mbps", "delay": "delay_ms",
              "energy_efficiency": "ee_bits_per_j", "power": "power_w",
              "loss": "loss_pct"}
METRIC_INCREASES = {"throughput": True, "delay": False,
                    "energy_efficiency": True, "power": False, "loss": False}


class GoalError(ValueError):
    pass


@dataclass(frozen=True)
class Goal:
    metric: str
    target: float
    direction: str            # increase | decrease

    def __post_init__(self):
        if self.metric not in GOAL_METRICS:
            raise GoalError(f"unknown goal metric {self.metric!r}")
        if not np.isfinite(self.target):
            raise GoalError("goal target must be finite")
        want = "increase" if METRIC_INCREASES[self.metric] else "decrease"
        if self.direction != want:
            raise GoalError(f"{self.metric} goals must {want}")

    def to_json_dict(self):
        return {"metric": self.metric, "target": self.target}

    def achieved(self, value: float, eps: float = 1e-9) -> float:
        """Attainment of the goal in goal units (1.0 == exactly met)."""
        if self.direction == "increase":
            return value / max(self.target, eps)
        return self.target / max(value, eps)


def goal_from_intent(intent: dict, current_value: float) -> Goal:
    """Turn {"metric", "direction", "percent"|"target"} into a numeric goal."""
    metric = intent["metric"]
    direction = intent["direction"]
    if "target" in intent:
        target = float(intent["target"])
    else:
        pct = float(intent["percent"]) / 100.0
        target = current_value * (1 + pct if direction == "increase" else 1 - pct)
    return Goal(metric=metric, target=target, direction=direction)


def quantize_goal(goal: Goal, current_value: float, step: float = 0.05) -> tuple:
    """Meta-controller bin: metric plus target in 5% steps of the current value."""
    if current_value <= 0:
        return (goal.metric, 0)
    return (goal.metric, int(np.round(goal.target / current_value / step)))


@dataclass
class HrlState:
    p_c: float                # power consumption, W
    t_class: dict             # class -> active UE count
    t_l: float                # offered load, Mbps
    p_l: float                # packet loss, %

    def discretize(self) -> tuple:
        dominant = max(sorted(self.t_class), key=lambda c: self.t_class[c])
        return (int(self.p_c // 20), dominant,
                int(self.t_l // 50), int(min(self.p_l, 20.0) // 2))

    def to_json_dict(self):
        return {"p_c": self.p_c, "t_class": dict(sorted(self.t_class.items())),
                "t_l": self.t_l, "p_l": self.p_l}


def intrinsic_reward(c: float, gamma_qs: float = 0.0, penalty: float = 0.0) -> float:
    if gamma_qs < 0 or penalty < 0:
        raise ValueError("gamma_qs and penalty must be non-negative")
    return c - penalty * gamma_qs


def conflict_free_subsets(registry=None) -> list[tuple]:
    registry = registry or appreg.default_registry()
    ids = sorted(registry.descriptors)
    out = []
    for r in range(len(ids) + 1):
        for combo in itertools.combinations(ids, r):
            if registry.conflict_check(combo) is None:
                out.append(combo)
    return out


class DecisionEnv:
    """Simulator wrapped at decision-level granularity.

    Each decision applies an app subset for `interval_ttis` TTIs and reports
    the window-averaged KPIs.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int, interval_ttis: int = 10,
                 registry=None):
        self.cfg = cfg
        self.interval = interval_ttis
        self.subsets = conflict_free_subsets(registry)
        self.apps = appreg.default_app_suite()
        self.sim = Simulator(cfg, seed)
        self.class_counts = {c: 0 for c in CLASSES}
        for k in self.sim.ue_class:
            self.class_counts[k] += 1

    def metrics(self, kpis, state) -> dict:
        return {
            "thr_mbps": float(np.mean([k.thr_mbps for k in kpis])),
            "delay_ms": float(np.mean([k.delay_ms for k in kpis])),
            "ee_bits_per_j": float(np.mean([k.ee_bits_per_j for k in kpis])),
            "loss_pct": kpis[-1].loss_pct,
            "power_w": state.total_power_w,
        }

    def gamma_qs(self, kpi) -> int:
        """UEs in traffic classes currently violating a QoS requirement."""
        n = 0
        for klass, drifts in kpi.drift.items():
            if any(v > 0 for v in drifts.values()):
                n += self.class_counts[klass]
        return n

    def observe(self) -> tuple:
        state = self.sim.snapshot()
        kpis = [self.sim.step()[1] for _ in range(self.interval)]
        return self._pack(state, kpis) + ([],)

    def step(self, subset_idx: int) -> tuple:
        """Apply the subset's decisions at the boundary, then run the window."""
        before = self.sim.snapshot()
        actions = [self.apps[a].act(before) for a in self.subsets[subset_idx]]
        for act in actions:
            self.sim.apply_action(act)
        kpis = []
        for _ in range(self.interval):
            state, kpi = self.sim.step()
            kpis.append(kpi)
        return self._pack(state, kpis) + (actions,)

    def _pack(self, state, kpis):
        m = self.metrics(kpis, state)
        hrl = HrlState(p_c=m["power_w"], t_class=dict(self.class_counts),
                       t_l=state.traffic_load_mbps, p_l=m["loss_pct"])
        return hrl, m, self.gamma_qs(kpis[-1])


@dataclass
class CollectConfig:
    episodes: int = 200
    decisions_per_episode: int = 500
    interval_ttis: int = 10
    tau: int = 10                    # extrinsic reward window, decisions
    penalty: float = 2.0             # QoS-violation weight in r_in
    epsilon: float = 0.2
    lr: float = 0.5
    gamma: float = 0.9


def collect(cfg: ScenarioConfig, intents: list, out_path, seed: int,
            collect_cfg: CollectConfig | None = None) -> dict:
    """Run hierarchical data collection and write the trajectory dataset.

    Returns summary statistics (records written, extrinsic rewards seen).
    """
    if not intents:
        raise ValueError("at least one intent is required")
    cc = collect_cfg or CollectConfig()
    controller = QTable(len(conflict_free_subsets()))
    meta = QTable(1)
    rng = np.random.default_rng(seed)
    n_records = 0
    extrinsics = []
    with open(out_path, "w") as fh:
        for ep in range(cc.episodes):
            env = DecisionEnv(cfg, seed=seed + ep, interval_ttis=cc.interval_ttis)
            hrl, metrics, gamma, _ = env.observe()
            for intent in intents:
                current = metrics[METRIC_KEY[intent["metric"]]]
                goal = goal_from_intent(intent, current)
                goal_bin = quantize_goal(goal, current)
                window = []
                for d in range(cc.decisions_per_episode):
                    s_bin = hrl.discretize()
                    row = controller.row((s_bin, goal_bin))
                    if rng.random() < cc.epsilon:
                        a = int(rng.integers(controller.n_actions))
                    else:
                        a = int(np.argmax(row))
                    hrl2, metrics, gamma, actions = env.step(a)
                    c = goal.achieved(metrics[METRIC_KEY[goal.metric]])
                    r_in = intrinsic_reward(c, gamma, cc.penalty)
                    window.append(r_in)
                    s2_bin = hrl2.discretize()
                    target = r_in + cc.gamma * controller.row((s2_bin, goal_bin)).max()
                    row[a] += cc.lr * (target - row[a])
                    record = {
                        "t": env.sim.t,
                        "s": hrl.to_json_dict(),
                        "g": goal.to_json_dict(),
                        "a": [{"app_id": act.app_id, "kind": act.kind,
                               "params": act.params} for act in actions],
                        "r_in": r_in,
                    }
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
                    n_records += 1
                    hrl = hrl2
                    if len(window) == cc.tau:
                        extrinsic = float(sum(window))
                        extrinsics.append(extrinsic)
                        mrow = meta.row((s_bin, goal_bin))
                        mrow[0] += cc.lr * (extrinsic - mrow[0])
                        window = []
    return {"records": n_records, "extrinsic_rewards": extrinsics,
            "controller": controller, "meta": meta}


def read_dataset(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


# ---------------------------------------------------------------------------
# Feudal manager/worker baseline
# ---------------------------------------------------------------------------

def cosine(u: np.ndarray, g: np.ndarray, eps: float = 1e-12) -> float:
    nu, ng = np.linalg.norm(u), np.linalg.norm(g)
    if nu < eps or ng < eps:
        return 0.0
    return float(np.dot(u, g) / (nu * ng))


def worker_intrinsic(states: list, goals: list, c: int) -> float:
    """R_I = (1/c) sum_i cos(s_t - s_{t-i}, g_{t-i}) over the last c steps.

    `goals[-i]` is the goal that was issued at state `states[-1-i]`.
    """
    if c <= 0:
        raise ValueError("horizon c must be positive")
    s_t = states[-1]
    total = 0.0
    for i in range(1, c + 1):
        total += cosine(s_t - states[-1 - i], goals[-i])
    return total / c


class FeudalNet:
    """Manager sets directional metric goals; worker picks app subsets."""

    def __init__(self, obs_dim: int, goal_dim: int, n_actions: int,
                 latent_dim: int = 8, horizon: int = 4, seed: int = 0):
        if horizon <= 0:
            raise ValueError("horizon c must be positive")
        rng = np.random.default_rng(seed)
        self.horizon = horizon
        self.w_percept = rng.normal(0, 0.3, (latent_dim, obs_dim))
        self.w_manager = rng.normal(0, 0.3, (goal_dim, latent_dim))
        self.w_embed = rng.normal(0, 0.3, (latent_dim, goal_dim))   # phi: W g
        self.u_actions = rng.normal(0, 0.3, (n_actions, latent_dim))
        self.v_baseline = np.zeros(latent_dim)

    def percept(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(self.w_percept @ x)

    def manager_goal(self, z: np.ndarray) -> np.ndarray:
        return self.w_manager @ z

    def policy(self, g: np.ndarray) -> np.ndarray:
        logits = self.u_actions @ (self.w_embed @ g)
        logits = logits - logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def value(self, z: np.ndarray) -> float:
        return float(self.v_baseline @ z)


def feudal_step(net: FeudalNet, x_t: np.ndarray, rng) -> tuple:
    """One decision: returns (action index, goal vector, latent, policy)."""
    z = net.percept(np.asarray(x_t, dtype=float))
    g = net.manager_goal(z)
    pi = net.policy(g)
    a = int(rng.choice(len(pi), p=pi))
    return a, g, z, pi


def manager_gradient(net: FeudalNet, z: np.ndarray, displacement: np.ndarray,
                     advantage: float, eps: float = 1e-12) -> np.ndarray:
    """d/dW_m [ A * cos(displacement, W_m z) ] in closed form."""
    g = net.w_manager @ z
    nu, ng = np.linalg.norm(displacement), np.linalg.norm(g)
    if nu < eps or ng < eps:
        return np.zeros_like(net.w_manager)
    d_cos_dg = displacement / (nu * ng) - np.dot(displacement, g) * g / (nu * ng ** 3)
    return advantage * np.outer(d_cos_dg, z)


def train_feudal(env: DecisionEnv, goal: Goal, decisions: int, seed: int,
                 net: FeudalNet | None = None, lr: float = 0.05,
                 gamma: float = 0.9,
                 metrics_log: list | None = None) -> FeudalNet:
    """Actor-critic worker plus transition-policy-gradient manager.

    When `metrics_log` is given, the window-averaged KPI dict of every
    decision is appended to it, so the online run itself can be scored.
    """
    rng = np.random.default_rng(seed)
    hrl, metrics, _, _ = env.observe()
    obs = _features(hrl)
    net = net or FeudalNet(obs_dim=obs.size, goal_dim=len(GOAL_METRICS),
                           n_actions=len(env.subsets), seed=seed)
    c = net.horizon
    metric_hist = [_metric_vector(metrics)]
    goal_hist = []
    z_hist = []
    for t in range(decisions):
        a, g, z, pi = feudal_step(net, obs, rng)
        hrl, metrics, gamma_qs, _ = env.step(a)
        if metrics_log is not None:
            metrics_log.append(metrics)
        obs2 = _features(hrl)
        z2 = net.percept(obs2)
        metric_hist.append(_metric_vector(metrics))
        goal_hist.append(g)
        z_hist.append(z)
        # worker: advantage actor-critic on the cosine intrinsic reward
        steps = min(c, len(goal_hist))
        r_i = worker_intrinsic(metric_hist, goal_hist, steps)
        adv = r_i + gamma * net.value(z2) - net.value(z)
        grad_logits = -pi
        grad_logits[a] += 1.0
        net.u_actions += lr * adv * np.outer(grad_logits, net.w_embed @ g)
        net.v_baseline += lr * adv * z
        # manager: transition policy gradient once a full horizon has elapsed
        if len(metric_hist) > c:
            disp = metric_hist[-1] - metric_hist[-1 - c]
            net.w_manager += lr * manager_gradient(net, z_hist[-c], disp,
                                                   advantage=adv)
        obs = obs2
    return net


def _features(hrl: HrlState) -> np.ndarray:
    counts = np.array([hrl.t_class[c] for c in CLASSES], dtype=float)
    frac = counts / max(counts.sum(), 1.0)
    return np.concatenate([[hrl.p_c / 200.0, hrl.t_l / 500.0, hrl.p_l / 100.0],
                           frac])


def _metric_vector(metrics: dict) -> np.ndarray:
    """Signed metric vector so 'improvement' always points positive."""
    out = []
    for m in GOAL_METRICS:
        v = metrics[METRIC_KEY[m]]
        out.append(v if METRIC_INCREASES[m] else -v)
    return np.array(out)


def goal_vector(goal: Goal) -> np.ndarray:
    """One-hot directional goal, e.g. throughput 220 -> {220, 0, 0, 0}."""
    vec = np.zeros(len(GOAL_METRICS))
    vec[GOAL_METRICS.index(goal.metric)] = goal.target
    return vec
