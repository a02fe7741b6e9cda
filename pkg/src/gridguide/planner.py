"""Monte Carlo tree search over messages, one plan per time step.

The guide cannot act; it searches over which message to send next,
simulating how the builder would respond using its cloned builder model
and rolling the real environment dynamics forward.  Because the builder
is stochastic, each (node, message) edge keeps statistics per sampled
outcome state.  Rewards inside the search are normalized by the task's
reward scale, so planning sees {0, 1} returns regardless of how the
raw reward is scaled.

The model passed in needs three things: a `vocab_size` attribute and
`sample(state, msg, rng)` / `argmax(state, msg)` action lookups
(FrozenPolicyCache provides them).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import EnvState, GridConfig, TaskSpec, reward, step


@dataclass(frozen=True)
class MctsConfig:
    simulations: int = 128
    max_depth: int = 12
    uct_c: float = 1.4
    gamma: float = 0.95
    builder_mode: str = "sample"  # how the model picks actions inside the search

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.uct_c < 0:
            raise ValueError("uct_c must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.builder_mode not in ("sample", "argmax"):
            raise ValueError(f"unknown builder_mode {self.builder_mode!r}")


def uct_score(total_return: float, visits: int, parent_visits: int, uct_c: float) -> float:
    """Mean return plus exploration bonus; an unvisited edge scores infinity."""
    if parent_visits < 1:
        raise ValueError("parent_visits must be >= 1")
    if visits == 0:
        return math.inf
    return total_return / visits + uct_c * math.sqrt(math.log(parent_visits) / visits)


class _Edge:
    __slots__ = ("n", "total", "outcomes")

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.outcomes = {}  # next EnvState -> _Node


class _Node:
    __slots__ = ("state", "edges")

    def __init__(self, state: EnvState, vocab_size: int):
        self.state = state
        self.edges = [_Edge() for _ in range(vocab_size)]

    def visits(self) -> int:
        return sum(e.n for e in self.edges)


def _pick_message(node: _Node, uct_c: float) -> int:
    parent = max(node.visits(), 1)
    best, best_score = 0, -math.inf
    for i, e in enumerate(node.edges):
        score = uct_score(e.total, e.n, parent, uct_c)
        if score > best_score:
            best, best_score = i, score
    return best


def _model_action(model, state, msg, mode, rng) -> int:
    if mode == "argmax":
        return model.argmax(state, msg)
    return model.sample(state, msg, rng)


def _rollout(state: EnvState, depth: int, task: TaskSpec, model, env_cfg: GridConfig,
             cfg: MctsConfig, rng: np.random.Generator) -> float:
    """Uniform-message playout from `depth` to the plan horizon.

    Returns the discounted return measured from the rollout's first step.
    """
    g = 0.0
    disc = 1.0
    while depth < cfg.max_depth:
        msg = int(rng.integers(model.vocab_size))
        action = _model_action(model, state, msg, cfg.builder_mode, rng)
        nxt = step(state, action, env_cfg)
        r, done = reward(state, action, nxt, task, env_cfg)
        g += disc * (r / task.reward_scale)
        if done:
            break
        disc *= cfg.gamma
        state = nxt
        depth += 1
    return g


def _simulate(root: _Node, task: TaskSpec, model, env_cfg: GridConfig,
              cfg: MctsConfig, rng: np.random.Generator):
    node = root
    path = []  # (edge, normalized immediate reward) along the walk
    tail = 0.0
    depth = 0
    while True:
        msg = _pick_message(node, cfg.uct_c)
        edge = node.edges[msg]
        action = _model_action(model, node.state, msg, cfg.builder_mode, rng)
        nxt = step(node.state, action, env_cfg)
        r, done = reward(node.state, action, nxt, task, env_cfg)
        path.append((edge, r / task.reward_scale))
        depth += 1
        if done or depth >= cfg.max_depth:
            break
        child = edge.outcomes.get(nxt)
        if child is None:
            # first time this outcome is reached: expand and play out
            child = _Node(nxt, len(node.edges))
            edge.outcomes[nxt] = child
            tail = _rollout(nxt, depth, task, model, env_cfg, cfg, rng)
            break
        node = child
    g = tail
    for edge, r in reversed(path):
        g = r + cfg.gamma * g
        edge.n += 1
        edge.total += g


def mcts_search(state: EnvState, task: TaskSpec, model, env_cfg: GridConfig,
                cfg: MctsConfig, rng: np.random.Generator) -> _Node:
    """Run the full simulation budget and return the root with its statistics."""
    root = _Node(state, model.vocab_size)
    for _ in range(cfg.simulations):
        _simulate(root, task, model, env_cfg, cfg, rng)
    return root


def mcts_plan(state: EnvState, task: TaskSpec, model, env_cfg: GridConfig,
              cfg: MctsConfig, rng: np.random.Generator) -> int:
    """Pick the message whose root edge was visited most, ties to lowest index."""
    root = mcts_search(state, task, model, env_cfg, cfg, rng)
    return int(np.argmax([e.n for e in root.edges]))
