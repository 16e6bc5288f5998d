"""Shared tabular Q-learning utilities for the desk-scale learners."""

from __future__ import annotations

import numpy as np

from .seqcore.serialize import save_params, load_params


class QTable:
    """Q-values keyed by hashable state bins over a fixed discrete action set."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.q: dict = {}

    def row(self, state) -> np.ndarray:
        key = state if isinstance(state, str) else repr(state)
        if key not in self.q:
            self.q[key] = np.zeros(self.n_actions)
        return self.q[key]

    def best(self, state) -> int:
        return int(np.argmax(self.row(state)))

    def save(self, path, meta=None):
        named = sorted(self.q.items())
        save_params(path, [(k, v) for k, v in named],
                    {"kind": "qtable", "n_actions": self.n_actions, **(meta or {})})

    @classmethod
    def load(cls, path) -> "QTable":
        meta, params = load_params(path)
        if meta.get("kind") != "qtable":
            raise ValueError("not a qtable file")
        table = cls(int(meta["n_actions"]))
        table.q = {k: v for k, v in params}
        return table


def q_learning(env, table: QTable, episodes: int, seed: int,
               lr: float = 0.5, gamma: float = 0.9, epsilon: float = 0.2,
               max_steps: int = 100) -> float:
    """Standard epsilon-greedy Q-learning; returns the final max update magnitude.

    `env` needs reset(seed) -> state and step(action) -> (state, reward, done).
    """
    rng = np.random.default_rng(seed)
    last_max_update = np.inf
    for ep in range(episodes):
        s = env.reset(seed + ep)
        max_update = 0.0
        for _ in range(max_steps):
            row = table.row(s)
            a = int(rng.integers(table.n_actions)) if rng.random() < epsilon \
                else int(np.argmax(row))
            s2, r, done = env.step(a)
            target = r if done else r + gamma * table.row(s2).max()
            update = lr * (target - row[a])
            row[a] += update
            max_update = max(max_update, abs(update))
            s = s2
            if done:
                break
        last_max_update = max_update
    return last_max_update


def policy_evaluation(transitions, rewards, policy, gamma=0.9, tol=1e-10):
    """Exact policy evaluation for enumerable toy MDPs.

    transitions[s][a] -> next state, rewards[s][a] -> float; states are
    0..n-1, policy is a list of actions.
    """
    n = len(transitions)
    v = np.zeros(n)
    while True:
        v2 = np.array([rewards[s][policy[s]] + gamma * v[transitions[s][policy[s]]]
                       for s in range(n)])
        if np.abs(v2 - v).max() < tol:
            return v2
        v = v2


def enumerate_optimal_policy(transitions, rewards, gamma=0.9):
    """Brute-force argmax over all deterministic policies (toy sizes only)."""
    import itertools
    n = len(transitions)
    n_actions = len(transitions[0])
    best, best_v = None, -np.inf
    for policy in itertools.product(range(n_actions), repeat=n):
        v = policy_evaluation(transitions, rewards, list(policy), gamma).sum()
        if v > best_v:
            best, best_v = list(policy), v
    return best, best_v
