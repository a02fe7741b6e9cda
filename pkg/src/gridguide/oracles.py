"""Brute-force ground truth: BFS, value iteration, exact random-walk
success probabilities, and exhaustive message-plan enumeration.

Everything here works on small instances only and exists to check the
learned components against answers that cannot be wrong.  Guards refuse
instances too large to enumerate rather than silently grinding.
"""
from __future__ import annotations

from collections import deque
from itertools import permutations

import numpy as np

from .env import (
    Action,
    EnvState,
    GridConfig,
    TaskSpec,
    reward,
    step,
    task_success,
)

STATE_GUARD = 1_000_000  # refuse enumerations beyond this many states
SWEEP_GUARD = 100_000


class OracleGuardError(RuntimeError):
    """The instance is too large for brute force."""


def _with_t0(core) -> EnvState:
    ax, ay, gripper, blocks = core
    return EnvState(ax, ay, gripper, blocks, 0)


def _neighbors(core, config: GridConfig):
    state = _with_t0(core)
    for a in Action:
        yield int(a), step(state, int(a), config).core()


def bfs_oracle(state: EnvState, task: TaskSpec, config: GridConfig):
    """Minimal number of direct actions to task success, or None.

    Searches the deterministic transition graph breadth-first, ignoring
    the step counter (plans may be longer than the episode horizon).
    """
    start = state.core()
    if task_success(_with_t0(start), task):
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        core = queue.popleft()
        d = dist[core]
        for _, nxt in _neighbors(core, config):
            if nxt in dist:
                continue
            if task_success(_with_t0(nxt), task):
                return d + 1
            dist[nxt] = d + 1
            queue.append(nxt)
            if len(dist) > STATE_GUARD:
                raise OracleGuardError(f"BFS exceeded {STATE_GUARD} states")
    return None


def enumerate_cores(config: GridConfig):
    """Every valid state core, by direct construction.

    Loose blocks sit on pairwise distinct cells (the agent may stand on
    one, and may carry a block over one); a grasped block rides at the
    agent's cell with the gripper closed.  Block slot order matters, so
    each choice of which slot is grasped is its own state.
    """
    cells = [(x, y) for y in range(config.height) for x in range(config.width)]
    n = config.n_blocks
    out = []
    for agent in cells:
        for loose in permutations(cells, n):
            out.append((agent[0], agent[1], False, tuple((x, y, False) for x, y in loose)))
        for i in range(n):
            for rest in permutations(cells, n - 1):
                blocks = list(rest[:i]) + [agent] + list(rest[i:])
                core = (agent[0], agent[1], True,
                        tuple((x, y, j == i) for j, (x, y) in enumerate(blocks)))
                out.append(core)
        if len(out) > STATE_GUARD:
            raise OracleGuardError(f"state enumeration exceeded {STATE_GUARD}")
    return out


class TabularMdp:
    """Dense tabular view of a task: indexed cores, transitions, rewards."""

    def __init__(self, states, index, transitions, rewards, terminal):
        self.states = states
        self.index = index
        self.transitions = transitions  # (S, A) next-state indices
        self.rewards = rewards  # (S, A)
        self.terminal = terminal  # (S,) success predicate per state


def build_task_mdp(config: GridConfig, task: TaskSpec) -> TabularMdp:
    cores = enumerate_cores(config)
    index = {c: i for i, c in enumerate(cores)}
    n = len(cores)
    transitions = np.zeros((n, len(Action)), dtype=int)
    rewards = np.zeros((n, len(Action)))
    terminal = np.zeros(n, dtype=bool)
    for i, core in enumerate(cores):
        state = _with_t0(core)
        if task_success(state, task):
            terminal[i] = True
            transitions[i, :] = i
            continue
        for a, nxt in _neighbors(core, config):
            transitions[i, a] = index[nxt]
            if task_success(_with_t0(nxt), task):
                rewards[i, a] = task.reward_scale
    return TabularMdp(cores, index, transitions, rewards, terminal)


def value_iteration(mdp: TabularMdp, gamma: float, tol: float = 1e-10) -> np.ndarray:
    """Optimal values by Bellman backups to residual < tol.

    Successful states are absorbing with value zero; the payoff sits on
    the transition into them.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    v = np.zeros(len(mdp.states))
    for _ in range(SWEEP_GUARD):
        q = mdp.rewards + gamma * v[mdp.transitions]
        new = q.max(axis=1)
        new[mdp.terminal] = 0.0
        residual = np.abs(new - v).max()
        v = new
        if residual < tol:
            return v
    raise OracleGuardError(f"value iteration did not converge in {SWEEP_GUARD} sweeps")


def greedy_policy(mdp: TabularMdp, v: np.ndarray, gamma: float) -> np.ndarray:
    q = mdp.rewards + gamma * v[mdp.transitions]
    return q.argmax(axis=1)


def greedy_episode_length(mdp: TabularMdp, policy: np.ndarray, start_core, cap: int):
    """Steps the greedy policy takes to reach success from start, or None."""
    i = mdp.index[start_core]
    for steps in range(cap + 1):
        if mdp.terminal[i]:
            return steps
        i = mdp.transitions[i, policy[i]]
    return None


def random_walk_success_table(config: GridConfig, task: TaskSpec, horizon: int):
    """Exact per-core probability that uniform random actions reach
    success within `horizon` steps, by absorbing-chain iteration.

    Returns (mdp, probs) with probs indexed like mdp.states."""
    mdp = build_task_mdp(config, task)
    # h[s] = P(success within k steps | in s); build up k = 0..horizon
    h = mdp.terminal.astype(float)
    for _ in range(horizon):
        h = np.where(mdp.terminal, 1.0, h[mdp.transitions].mean(axis=1))
    return mdp, h


def random_walk_success_prob(config: GridConfig, task: TaskSpec, start_core, horizon: int) -> float:
    mdp, h = random_walk_success_table(config, task, horizon)
    if start_core not in mdp.index:
        raise ValueError("start state is not a valid core for this config")
    return float(h[mdp.index[start_core]])


def enumerate_plan_values(state: EnvState, task: TaskSpec, model, env_cfg: GridConfig,
                          depth: int, gamma: float) -> np.ndarray:
    """Exact per-first-message values over all message plans of length `depth`.

    The model is consulted in argmax mode, making transitions
    deterministic; full-width recursion with memoization then yields the
    true optimal discounted return for each first message.
    """
    vocab = model.vocab_size
    cache = {}

    def best_value(s: EnvState, d: int) -> float:
        if d == 0:
            return 0.0
        key = (s, d)
        hit = cache.get(key)
        if hit is None:
            hit = max(q_value(s, m, d) for m in range(vocab))
            cache[key] = hit
        return hit

    def q_value(s: EnvState, m: int, d: int) -> float:
        action = model.argmax(s, m)
        nxt = step(s, action, env_cfg)
        r, done = reward(s, action, nxt, task, env_cfg)
        r = r / task.reward_scale
        if done or d == 1:
            return r
        return r + gamma * best_value(nxt, d - 1)

    return np.array([q_value(state, m, depth) for m in range(vocab)])
