"""Goal-conditioned hierarchical decision transformer.

A meta-transformer picks the important past action (the one whose logged
outcome came closest to the goal) and a control-transformer predicts the
next orchestration action from the state window, the goal, and that past
action — with no returns-to-go anywhere in the input.  A vanilla decision
transformer with returns-to-go is included as the comparison baseline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import seqcore as sq
from .hrlgen import (GOAL_METRICS, METRIC_INCREASES, METRIC_KEY, Goal,
                     conflict_free_subsets)
from .seqcore import tensor as T
from .seqcore.tensor import Tensor

TOKEN_TYPES_HDTGA = ("state", "goal", "action")
TOKEN_TYPES_DT = ("return", "state", "action")

# goal-metric value read off a logged state record (proxy units documented:
# energy efficiency is offered load per consumed watt)
def value_from_state(s: dict, metric: str) -> float:
    if metric == "throughput":
        return float(s["t_l"])
    if metric == "power":
        return float(s["p_c"])
    if metric == "loss":
        return float(s["p_l"])
    if metric == "energy_efficiency":
        return float(s["t_l"]) / max(float(s["p_c"]), 1e-9)
    raise ValueError(f"goal metric {metric!r} is not observable in logged states")


GOAL_NORM = {"throughput": 500.0, "delay": 50.0, "energy_efficiency": 5.0,
             "power": 200.0, "loss": 100.0}


def goal_deviation(g_f: float, g_a: float, s_f: float = 1.0) -> float:
    """Exponential deviation: s_f * (e^{|(G_f - G_a)/G_f|} - 1)."""
    if g_f == 0:
        raise ValueError("goal target G_f must be nonzero")
    if s_f <= 0:
        raise ValueError("scaling factor s_f must be positive")
    return s_f * (math.exp(abs((g_f - g_a) / g_f)) - 1.0)


def split_trajectories(records: list) -> list:
    """Contiguous runs with increasing t and a constant goal."""
    trajs, cur = [], []
    for rec in records:
        if cur and (rec["t"] <= cur[-1]["t"] or rec["g"] != cur[-1]["g"]):
            trajs.append(cur)
            cur = []
        cur.append(rec)
    if cur:
        trajs.append(cur)
    return trajs


def state_features(s: dict) -> np.ndarray:
    counts = np.array([s["t_class"][c] for c in sorted(s["t_class"])],
                      dtype=float)
    frac = counts / max(counts.sum(), 1.0)
    return np.concatenate([[s["p_c"] / 200.0, s["t_l"] / 500.0,
                            s["p_l"] / 100.0], frac])


def goal_features(g: dict) -> np.ndarray:
    vec = np.zeros(len(GOAL_METRICS))
    vec[GOAL_METRICS.index(g["metric"])] = g["target"] / GOAL_NORM[g["metric"]]
    return vec


def build_vocab(registry=None) -> list:
    return conflict_free_subsets(registry)


def action_token(actions: list, vocab: list) -> int:
    """Map a logged action list to its app-subset token."""
    subset = tuple(sorted({a["app_id"] for a in actions}))
    try:
        return vocab.index(subset)
    except ValueError:
        raise ValueError(f"action subset {subset!r} not in vocabulary") from None


@dataclass
class MetaLabel:
    traj_id: int
    t: int
    beta: int
    fraction: float           # achieved-goal fraction in [0, 1]


def _observable(metric: str) -> bool:
    return metric in ("throughput", "power", "loss", "energy_efficiency")


def label_important_actions(trajectories: list, s_f: float = 1.0,
                            lookback: int = 20) -> list:
    """For each step, β = argmin over the lookback of the goal deviation of
    the state logged right after the candidate action; ties take the
    smallest β.  Metrics not recoverable from logged states (delay) fall
    back to the logged intrinsic reward as the attainment signal.  Steps
    with an empty lookback (trajectory start) are skipped."""
    if not trajectories or not any(trajectories):
        raise ValueError("dataset is empty")
    labels = []
    for traj_id, traj in enumerate(trajectories):
        for t in range(1, len(traj)):
            g = traj[t]["g"]
            direction = ("increase" if METRIC_INCREASES[g["metric"]]
                         else "decrease")
            observable = _observable(g["metric"])
            best_beta, best_dev = None, None
            for beta in range(1, min(t, lookback) + 1):
                post = traj[t - beta + 1]
                if observable:
                    dev = goal_deviation(g["target"],
                                         value_from_state(post["s"],
                                                          g["metric"]), s_f)
                else:
                    dev = -float(post["r_in"])
                if best_dev is None or dev < best_dev:
                    best_beta, best_dev = beta, dev
            post = traj[t - best_beta + 1]
            if observable:
                frac = Goal(g["metric"], g["target"], direction).achieved(
                    value_from_state(post["s"], g["metric"]))
            else:
                frac = float(post["r_in"])
            labels.append(MetaLabel(traj_id, t, best_beta,
                                    float(np.clip(frac, 0.0, 1.0))))
    return labels


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass
class HdtgaConfig:
    state_dim: int = 7
    goal_dim: int = len(GOAL_METRICS)
    vocab: int = 24
    omega: int = 20           # context window, decisions
    lookback: int = 20        # meta-label search depth B_max
    d_model: int = 32
    d_ff: int = 64
    heads: int = 8
    layers: int = 4
    dropout: float = 0.1
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    q_align_weight: float = 0.5   # 0 disables the auxiliary value loss
    s_f: float = 1.0
    seed: int = 0


class Block(sq.Module):
    """Pre-norm causal self-attention block."""

    def __init__(self, cfg: sq.AttentionConfig, d_ff: int, rng):
        self.attn = sq.MultiHeadAttention(cfg, rng)
        self.ff = sq.FeedForward(cfg.d_model, d_ff, rng)
        self.ln1 = sq.LayerNorm(cfg.d_model)
        self.ln2 = sq.LayerNorm(cfg.d_model)

    def __call__(self, x, mask, rng=None, train=False):
        x = T.add(x, self.attn(self.ln1(x), self.ln1(x), mask=mask,
                               rng=rng, train=train))
        return T.add(x, self.ff(self.ln2(x)))


class _SequenceModel(sq.Module):
    def __init__(self, cfg: HdtgaConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        attn = sq.AttentionConfig(d_model=cfg.d_model, heads=cfg.heads,
                                  dropout=cfg.dropout)
        self.state_proj = sq.Linear(cfg.state_dim, cfg.d_model, rng)
        self.action_embed = sq.Embedding(cfg.vocab, cfg.d_model, rng)
        self.blocks = [Block(attn, cfg.d_ff, rng) for _ in range(cfg.layers)]
        self.ln_out = sq.LayerNorm(cfg.d_model)
        self._pos = sq.sinusoidal_encoding(cfg.omega + 2, cfg.d_model)
        self._rng = rng

    def _run(self, x: Tensor, rng=None, train=False) -> Tensor:
        mask = sq.causal_mask(x.shape[1])
        for block in self.blocks:
            x = block(x, mask, rng=rng, train=train)
        return self.ln_out(x)

    def _logits(self, h_last: Tensor) -> Tensor:
        # output head tied to the action embedding table
        return T.matmul(h_last, T.transpose(self.action_embed.table, (1, 0)))

    @staticmethod
    def _at(h: Tensor, pos: int) -> Tensor:
        """Hidden states at one sequence position: (B, L, d) -> (B, d)."""
        b, _, d = h.shape
        picked = T.take_rows(T.transpose(h, (1, 0, 2)), [pos])
        return T.reshape(picked, (b, d))


class MetaTransformer(_SequenceModel):
    """Selects the important past action a_{t-β} for a (window, goal) pair."""

    TOKEN_TYPES = TOKEN_TYPES_HDTGA

    def __init__(self, cfg: HdtgaConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.seed + 1)
        self.goal_proj = sq.Linear(cfg.goal_dim, cfg.d_model, rng)

    def forward(self, states: np.ndarray, goals: np.ndarray,
                rng=None, train=False) -> Tensor:
        b, w, _ = states.shape
        tok_s = T.add(self.state_proj(Tensor(states)),
                      Tensor(self._pos[None, :w, :]))
        tok_g = T.add(self.goal_proj(Tensor(goals[:, None, :])),
                      Tensor(self._pos[None, w - 1:w, :]))
        x = T.concat([tok_s, tok_g], axis=1)
        h = self._run(x, rng=rng, train=train)
        return self._logits(self._at(h, w))

    def position_logits(self, states: np.ndarray, goals: np.ndarray) -> np.ndarray:
        """Action logits at every sequence position (causality probes)."""
        b, w, _ = states.shape
        tok_s = T.add(self.state_proj(Tensor(states)),
                      Tensor(self._pos[None, :w, :]))
        tok_g = T.add(self.goal_proj(Tensor(goals[:, None, :])),
                      Tensor(self._pos[None, w - 1:w, :]))
        h = self._run(T.concat([tok_s, tok_g], axis=1))
        return self._logits(h).data


class ControlTransformer(_SequenceModel):
    """Predicts the next action from (window, goal, important past action)."""

    TOKEN_TYPES = TOKEN_TYPES_HDTGA

    def __init__(self, cfg: HdtgaConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.seed + 2)
        self.goal_proj = sq.Linear(cfg.goal_dim, cfg.d_model, rng)
        self.q_head = sq.Linear(cfg.d_model, 1, rng)

    def forward(self, states: np.ndarray, goals: np.ndarray,
                beta_actions: np.ndarray, betas: np.ndarray,
                rng=None, train=False) -> tuple:
        b, w, _ = states.shape
        tok_s = T.add(self.state_proj(Tensor(states)),
                      Tensor(self._pos[None, :w, :]))
        tok_g = T.add(self.goal_proj(Tensor(goals[:, None, :])),
                      Tensor(self._pos[None, w - 1:w, :]))
        # past action embedded at its own timestep position t-β
        act = self.action_embed(np.asarray(beta_actions, dtype=np.intp))
        pos = self._pos[np.clip(w - 1 - np.asarray(betas, dtype=int), 0, w - 1)]
        tok_a = T.add(T.reshape(act, (b, 1, self.cfg.d_model)),
                      Tensor(pos[:, None, :]))
        x = T.concat([tok_s, tok_g, tok_a], axis=1)
        h = self._run(x, rng=rng, train=train)
        h_last = self._at(h, w + 1)
        return self._logits(h_last), self.q_head(h_last)


class DecisionTransformerBaseline(_SequenceModel):
    """Vanilla decision transformer conditioned on returns-to-go."""

    TOKEN_TYPES = TOKEN_TYPES_DT

    def __init__(self, cfg: HdtgaConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.seed + 3)
        self.rtg_proj = sq.Linear(1, cfg.d_model, rng)

    def forward(self, states: np.ndarray, rtg: np.ndarray,
                rng=None, train=False) -> Tensor:
        b, w, _ = states.shape
        tok_r = T.add(self.rtg_proj(Tensor(np.asarray(rtg, dtype=float)
                                           .reshape(b, 1, 1))),
                      Tensor(self._pos[None, :1, :]))
        tok_s = T.add(self.state_proj(Tensor(states)),
                      Tensor(self._pos[None, :w, :]))
        x = T.concat([tok_r, tok_s], axis=1)
        h = self._run(x, rng=rng, train=train)
        return self._logits(self._at(h, w))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainingSet:
    states: np.ndarray        # (N, omega, state_dim)
    goals: np.ndarray         # (N, goal_dim)
    meta_targets: np.ndarray  # (N,) token of a_{t-beta}
    betas: np.ndarray         # (N,)
    control_targets: np.ndarray   # (N,) token of a_t
    rewards: np.ndarray       # (N,) logged r_in at t
    rtg: np.ndarray           # (N,) returns-to-go at t


def build_training_set(trajectories: list, cfg: HdtgaConfig,
                       vocab: list | None = None) -> TrainingSet:
    vocab = vocab or build_vocab()
    labels = {(l.traj_id, l.t): l
              for l in label_important_actions(trajectories, cfg.s_f,
                                               cfg.lookback)}
    rows = {k: [] for k in ("states", "goals", "meta_targets", "betas",
                            "control_targets", "rewards", "rtg")}
    for traj_id, traj in enumerate(trajectories):
        feats = [state_features(r["s"]) for r in traj]
        suffix = np.cumsum([r["r_in"] for r in traj][::-1])[::-1]
        for t in range(cfg.omega - 1, len(traj)):
            label = labels.get((traj_id, t))
            if label is None:
                continue
            rows["states"].append(feats[t - cfg.omega + 1:t + 1])
            rows["goals"].append(goal_features(traj[t]["g"]))
            rows["meta_targets"].append(
                action_token(traj[t - label.beta]["a"], vocab))
            rows["betas"].append(label.beta)
            rows["control_targets"].append(action_token(traj[t]["a"], vocab))
            rows["rewards"].append(traj[t]["r_in"])
            rows["rtg"].append(suffix[t])
    if not rows["states"]:
        raise ValueError("no trainable windows; trajectories shorter than omega")
    return TrainingSet(**{k: np.asarray(v, dtype=float) if k in
                          ("states", "goals", "rewards", "rtg")
                          else np.asarray(v, dtype=int)
                          for k, v in rows.items()})


def _fit(model, loss_fn, n: int, cfg: HdtgaConfig, rng) -> list:
    opt = sq.Adam(model.parameters(), lr=cfg.lr)
    losses = []
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in sq.minibatches(n, cfg.batch_size, rng):
            opt.zero_grad()
            loss = loss_fn(idx)
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
        losses.append(total / n)
    return losses


def train_hdtga(trajectories: list, cfg: HdtgaConfig,
                vocab: list | None = None) -> dict:
    vocab = vocab or build_vocab()
    if cfg.vocab != len(vocab):
        raise ValueError(f"config vocab {cfg.vocab} != action vocabulary "
                         f"{len(vocab)}")
    ts = build_training_set(trajectories, cfg, vocab)
    meta = MetaTransformer(cfg)
    control = ControlTransformer(cfg)
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng(cfg.seed + 10)

    def meta_loss(idx):
        logits = meta.forward(ts.states[idx], ts.goals[idx],
                              rng=drop_rng, train=True)
        return sq.cross_entropy(logits, ts.meta_targets[idx])

    meta_losses = _fit(meta, meta_loss, len(ts.states), cfg, rng)

    def control_loss(idx):
        logits, q = control.forward(ts.states[idx], ts.goals[idx],
                                    ts.meta_targets[idx], ts.betas[idx],
                                    rng=drop_rng, train=True)
        loss = sq.cross_entropy(logits, ts.control_targets[idx])
        if cfg.q_align_weight > 0:
            aux = sq.mse(T.reshape(q, (len(idx),)), ts.rewards[idx])
            loss = T.add(loss, T.mul(aux, cfg.q_align_weight))
        return loss

    control_losses = _fit(control, control_loss, len(ts.states), cfg, rng)
    return {"meta": meta, "control": control, "vocab": vocab,
            "meta_losses": meta_losses, "control_losses": control_losses}


def train_dt(trajectories: list, cfg: HdtgaConfig,
             vocab: list | None = None) -> dict:
    vocab = vocab or build_vocab()
    ts = build_training_set(trajectories, cfg, vocab)
    model = DecisionTransformerBaseline(cfg)
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng(cfg.seed + 10)

    def loss_fn(idx):
        logits = model.forward(ts.states[idx], ts.rtg[idx],
                               rng=drop_rng, train=True)
        return sq.cross_entropy(logits, ts.control_targets[idx])

    losses = _fit(model, loss_fn, len(ts.states), cfg, rng)
    return {"model": model, "vocab": vocab, "losses": losses,
            "mean_rtg": float(ts.rtg.mean())}


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def meta_predict(meta: MetaTransformer, states: np.ndarray,
                 goal: np.ndarray) -> int:
    logits = meta.forward(states[None], goal[None])
    return int(np.argmax(logits.data[0]))


def control_predict(control: ControlTransformer, states: np.ndarray,
                    goal: np.ndarray, beta_action: int, beta: int,
                    is_allowed=None) -> int:
    logits, _ = control.forward(states[None], goal[None],
                                np.array([beta_action]), np.array([beta]))
    ranked = np.argsort(-logits.data[0])
    for token in ranked:
        if is_allowed is None or is_allowed(int(token)):
            return int(token)
    raise ValueError("no permitted action in vocabulary")


def save_models(path, bundle: dict, kind: str = "hdtga"):
    cfg = (bundle.get("meta") or bundle["model"]).cfg
    if kind == "hdtga":
        named = ([("meta." + n, p.data) for n, p in
                  bundle["meta"].named_parameters()] +
                 [("control." + n, p.data) for n, p in
                  bundle["control"].named_parameters()])
    else:
        named = [("model." + n, p.data) for n, p in
                 bundle["model"].named_parameters()]
    sq.save_params(path, named, meta={"kind": kind, "config": asdict(cfg),
                                      "vocab_size": cfg.vocab})


def load_models(path) -> dict:
    meta, params = sq.load_params(path)
    cfg = HdtgaConfig(**meta["config"])
    by_prefix = {}
    for name, arr in params:
        prefix, rest = name.split(".", 1)
        by_prefix.setdefault(prefix, []).append((rest, arr))

    def fill(model, items):
        lookup = dict(model.named_parameters())
        if set(lookup) != {n for n, _ in items}:
            raise sq.ModelFileError("parameter names do not match model")
        for name, arr in items:
            lookup[name].data[...] = arr
        return model

    if meta["kind"] == "hdtga":
        return {"meta": fill(MetaTransformer(cfg), by_prefix["meta"]),
                "control": fill(ControlTransformer(cfg), by_prefix["control"]),
                "config": cfg}
    return {"model": fill(DecisionTransformerBaseline(cfg),
                          by_prefix["model"]), "config": cfg}


# ---------------------------------------------------------------------------
# Evaluation report
# ---------------------------------------------------------------------------

def report_rows_csv(path, rows: list):
    """rows: dicts with goal, method, G_d, thr, delay, ee."""
    cols = ["goal", "method", "G_d", "thr", "delay", "ee"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in cols})
