"""Placement scoring and the end-to-end intent pipeline.

A placement (which app instances run at which locations) is scored with a
utility / resource-risk / latency objective under hard feasibility
constraints; small instances ship with a brute-force oracle.  The pipeline
wires intent parsing, predictive validation, the decision transformers, the
constraint gate, and the simulator into one reproducible run.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import appreg, hdtga, hrlgen, intentd, validate as vd
from .hrlgen import METRIC_KEY

CONSTRAINTS = ("latency", "memory", "processing", "inputs", "qos_violations",
               "instance_bounds")
CONSTRAINT_TAGS = {"latency": "14a", "memory": "14b", "processing": "14c",
                   "inputs": "14d", "qos_violations": "14e",
                   "instance_bounds": "14f"}


class MissingLinkError(KeyError):
    def __init__(self, a, b):
        super().__init__(f"no link between {a!r} and {b!r}")
        self.pair = (a, b)


class StageError(RuntimeError):
    """Pipeline failure wrapper carrying the stage tag."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Topology:
    locations: tuple
    links: dict                      # (loc, loc) -> (rate_bps, delay_s)
    mem_max_mb: dict                 # loc -> MB
    proc_max: dict                   # loc -> processing units
    inputs_at: dict                  # loc -> set of available input types

    def __post_init__(self):
        for loc in self.locations:
            if self.mem_max_mb[loc] <= 0 or self.proc_max[loc] <= 0:
                raise ValueError(f"{loc}: capacities must be positive")

    def link(self, a, b) -> tuple:
        """(rate_bps, delay_s); links are symmetric, local transfer is free."""
        if a == b:
            return (float("inf"), 0.0)
        if (a, b) in self.links:
            return self.links[(a, b)]
        if (b, a) in self.links:
            return self.links[(b, a)]
        raise MissingLinkError(a, b)

    def input_locations(self, input_type: str) -> list:
        return [l for l in self.locations
                if input_type in self.inputs_at.get(l, ())]


def two_site_topology() -> Topology:
    """Controller + DU reference topology used by the shipped toys."""
    return Topology(
        locations=("ctl", "du"),
        links={("ctl", "du"): (1e9, 0.001)},
        mem_max_mb={"ctl": 768.0, "du": 512.0},
        proc_max={"ctl": 8.0, "du": 6.0},
        inputs_at={"du": {"traffic_flow", "queue_length", "sinr",
                          "ue_coordinates"},
                   "ctl": {"traffic_flow"}},
    )


@dataclass
class OrchestrationPolicy:
    """Instance counts per (app, location) plus the latency budget."""
    placements: dict                 # app_id -> {loc: count}
    budget_ms: float = 50.0

    def count(self, app_id, loc) -> int:
        return self.placements.get(app_id, {}).get(loc, 0)

    def placed_apps(self) -> list:
        return sorted(a for a, locs in self.placements.items()
                      if any(locs.values()))

    def total_instances(self, app_id) -> int:
        return sum(self.placements.get(app_id, {}).values())


@dataclass
class ScoreConfig:
    g1: float = 0.5
    g2: float = 0.5
    varpi: float = 2.0
    q_max_frac: float = 0.10
    target_location: str = "ctl"


@dataclass
class PolicyScore:
    utility: float
    risk: float
    delta_collect_ms: float
    delta_exec_ms: float
    delta_norm: float                # Δ_LAT / budget
    objective: float
    covered: int
    violated: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violated

    @property
    def delta_lat_ms(self) -> float:
        return self.delta_collect_ms + self.delta_exec_ms

    def to_json_dict(self):
        return {"U": self.utility, "R": self.risk,
                "delta_ms": self.delta_lat_ms, "objective": self.objective,
                "covered": self.covered, "violated": list(self.violated)}


def data_collection_time(policy: OrchestrationPolicy, topo: Topology,
                         registry: appreg.Registry, functionality: str,
                         dest: str) -> float:
    """Seconds to gather inputs for every placed instance providing the
    functionality: per input location, bits/(rate * n_inputs) + delay."""
    total = 0.0
    for app_id in policy.placed_apps():
        desc = registry.get(app_id)
        if functionality not in desc.functionalities:
            continue
        sources = topo.input_locations(desc.input_type)
        if not sources:
            continue
        per_instance = sum(
            desc.input_bytes * 8.0 / (topo.link(src, dest)[0] * len(sources))
            + topo.link(src, dest)[1]
            for src in sources)
        total += policy.total_instances(app_id) * per_instance
    return total


def score(policy: OrchestrationPolicy, topo: Topology,
          registry: appreg.Registry, required: tuple, gamma_qs: int,
          n_ues: int, cfg: ScoreConfig | None = None) -> PolicyScore:
    cfg = cfg or ScoreConfig()
    violated = []

    # resource usage and 14b/14c/14f
    util_terms = []
    for loc in topo.locations:
        mem = sum(policy.count(a, loc) * registry.get(a).memory_mb
                  for a in policy.placements)
        proc = sum(policy.count(a, loc) * registry.get(a).proc_units
                   for a in policy.placements)
        util_terms.extend([mem / topo.mem_max_mb[loc],
                           proc / topo.proc_max[loc]])
        if mem > topo.mem_max_mb[loc]:
            violated.append(CONSTRAINT_TAGS["memory"])
        if proc > topo.proc_max[loc]:
            violated.append(CONSTRAINT_TAGS["processing"])
    risk = float(np.mean(util_terms)) if util_terms else 0.0

    for app_id, locs in policy.placements.items():
        desc = registry.get(app_id)
        for loc, count in locs.items():
            if count < 0 or count > desc.max_instances_per_location:
                violated.append(CONSTRAINT_TAGS["instance_bounds"])

    # 14d input availability for every placed app
    for app_id in policy.placed_apps():
        if not topo.input_locations(registry.get(app_id).input_type):
            violated.append(CONSTRAINT_TAGS["inputs"])

    # coverage and latency
    providers = {f for a in policy.placed_apps()
                 for f in registry.get(a).functionalities}
    covered = sum(1 for f in required if f in providers)
    delta_collect = sum(
        data_collection_time(policy, topo, registry, f, cfg.target_location)
        for f in required) * 1000.0
    delta_exec = sum(registry.get(a).exec_latency_ms *
                     policy.total_instances(a) for a in policy.placed_apps())
    delta_lat = delta_collect + delta_exec
    if delta_lat > policy.budget_ms:
        violated.append(CONSTRAINT_TAGS["latency"])
    delta_norm = delta_lat / policy.budget_ms

    if gamma_qs > cfg.q_max_frac * n_ues:
        violated.append(CONSTRAINT_TAGS["qos_violations"])

    utility = covered - cfg.varpi * gamma_qs
    objective = utility - cfg.g1 * risk - cfg.g2 * delta_norm
    return PolicyScore(utility=utility, risk=risk,
                       delta_collect_ms=delta_collect,
                       delta_exec_ms=delta_exec, delta_norm=delta_norm,
                       objective=objective, covered=covered,
                       violated=sorted(set(violated)))


def enumerate_policies(app_ids, topo: Topology, max_count: int = 1,
                       budget_ms: float = 50.0):
    """All instance-count assignments over (app, location); toy sizes only."""
    cells = [(a, l) for a in app_ids for l in topo.locations]
    for counts in itertools.product(range(max_count + 1), repeat=len(cells)):
        placements = {}
        for (a, l), c in zip(cells, counts):
            if c:
                placements.setdefault(a, {})[l] = c
        yield OrchestrationPolicy(placements=placements, budget_ms=budget_ms)


def best_policy(candidates, topo, registry, required, gamma_qs, n_ues,
                cfg: ScoreConfig | None = None):
    """Feasible objective argmax; deterministic first-wins tie-break.
    Returns (policy, score) or (None, None) when nothing is feasible."""
    best = (None, None)
    for policy in candidates:
        s = score(policy, topo, registry, required, gamma_qs, n_ues, cfg)
        if not s.feasible:
            continue
        if best[1] is None or s.objective > best[1].objective:
            best = (policy, s)
    return best


# ---------------------------------------------------------------------------
# Intent pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineContext:
    env: "hrlgen.DecisionEnv"
    store: intentd.KnowledgeStore
    thresholds: vd.ThresholdSet
    lookup: vd.LookupTable
    meta: hdtga.MetaTransformer
    control: hdtga.ControlTransformer
    hdtga_cfg: hdtga.HdtgaConfig
    topology: Topology = field(default_factory=two_site_topology)
    registry: appreg.Registry = field(default_factory=appreg.default_registry)
    score_cfg: ScoreConfig = field(default_factory=ScoreConfig)
    budget_ms: float = 50.0
    history: list = field(default_factory=list)   # recent state features
    vocab: list = field(default_factory=hdtga.build_vocab)

    def observe(self):
        hrl, metrics, gamma, _ = self.env.observe()
        self._store_metrics(metrics)
        self.history.append(hdtga.state_features(hrl.to_json_dict()))
        return hrl, metrics, gamma

    def _store_metrics(self, metrics: dict):
        for key, value in metrics.items():
            self.store.update_dynamic(key, value, self.env.sim.t)

    def window(self) -> np.ndarray:
        omega = self.hdtga_cfg.omega
        hist = self.history[-omega:]
        pad = [hist[0]] * (omega - len(hist))
        return np.asarray(pad + hist)


def _token_policy(token: int, ctx: PipelineContext) -> OrchestrationPolicy:
    """Default placement for an app subset: one instance each at the DU."""
    loc = ctx.topology.locations[-1]
    return OrchestrationPolicy(
        placements={a: {loc: 1} for a in ctx.vocab[token]},
        budget_ms=ctx.budget_ms)


def placement_candidates(app_ids, topo: Topology, budget_ms: float,
                         max_count: int = 1):
    """Every placement that runs >= 1 instance of each listed app."""
    for policy in enumerate_policies(sorted(app_ids), topo,
                                     max_count=max_count,
                                     budget_ms=budget_ms):
        if all(policy.total_instances(a) >= 1 for a in app_ids):
            yield policy


def admit_placement(app_ids, ctx: PipelineContext, required: tuple):
    """Brute-force objective argmax over the subset's placements, subject
    to the hard feasibility constraints."""
    return best_policy(
        placement_candidates(app_ids, ctx.topology, ctx.budget_ms),
        ctx.topology, ctx.registry, required, 0, ctx.env.cfg.n_ues,
        ctx.score_cfg)


def execute_intent(text: str, ctx: PipelineContext,
                   window_decisions: int = 10) -> dict:
    """Run one intent through parse -> goal -> forecast -> validation ->
    transformer prediction -> constraint gate -> simulator execution."""
    def stage(name, fn):
        try:
            return fn()
        except Exception as err:
            raise StageError(name, err) from err

    hrl, metrics_before, gamma = ctx.observe()
    intent = stage("parse", lambda: intentd.parse_intent(text))
    goal = stage("goal", lambda: intentd.to_goal(intent, ctx.store,
                                                 now_tti=ctx.env.sim.t))

    # persistence forecast of the classification metrics
    forecast_values = stage("forecast", lambda: {
        "load": hrl.t_l, "loss": hrl.p_l, "power": hrl.p_c})
    verdict = stage("validate", lambda: vd.validate_intent(
        intent.t_y, forecast_values, ctx.lookup, ctx.thresholds))
    report = {"intent": intentd.render(intent), "t_y": intent.t_y,
              "verdict": verdict.to_json_dict(), "chosen_apps": [],
              "placements": {}, "score": None, "kpi_before": metrics_before,
              "kpi_after": None, "g_d": None}
    if not verdict.valid:
        return report

    goal_vec = hdtga.goal_features(goal.to_json_dict())
    states = ctx.window()
    beta_token = stage("meta_predict", lambda: hdtga.meta_predict(
        ctx.meta, states, goal_vec))
    required = (appreg.INTENT_FUNCTIONALITY[intent.t_y],)

    def allowed(token):
        if ctx.registry.conflict_check(ctx.vocab[token]) is not None:
            return False
        policy, s = admit_placement(ctx.vocab[token], ctx, required)
        # must have a feasible placement that provides the functionality
        return policy is not None and s.covered == len(required)

    token = stage("control_predict", lambda: hdtga.control_predict(
        ctx.control, states, goal_vec, beta_token, 1, is_allowed=allowed))
    # admission: the placement is always the constrained objective argmax
    policy, policy_score = admit_placement(ctx.vocab[token], ctx, required)
    if policy is None or policy_score.covered < len(required):
        # gate: fall back to the oracle over the token vocabulary
        fallback = (None, None, None)
        for tok in range(len(ctx.vocab)):
            if ctx.registry.conflict_check(ctx.vocab[tok]) is not None:
                continue
            p, s = admit_placement(ctx.vocab[tok], ctx, required)
            if p is None or s.covered < len(required):
                continue
            if fallback[2] is None or s.objective > fallback[2].objective:
                fallback = (tok, p, s)
        if fallback[1] is None:
            raise StageError("gate", ValueError("no feasible placement"))
        token, policy, policy_score = fallback

    subset_idx = ctx.env.subsets.index(tuple(sorted(policy.placed_apps())))
    metrics_after = None
    for _ in range(window_decisions):
        hrl, metrics_after, gamma, _ = ctx.env.step(subset_idx)
        ctx.history.append(hdtga.state_features(hrl.to_json_dict()))
    ctx._store_metrics(metrics_after)

    achieved = metrics_after[METRIC_KEY[goal.metric]]
    report.update({
        "chosen_apps": list(policy.placed_apps()),
        "placements": {a: dict(sorted(locs.items()))
                       for a, locs in sorted(policy.placements.items())},
        "score": policy_score.to_json_dict(),
        "kpi_after": metrics_after,
        "g_d": hdtga.goal_deviation(goal.target, achieved),
    })
    return report


def write_report(path, report: dict):
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
