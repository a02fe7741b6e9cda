"""Frozen-policy evaluation, task transfer, and protocol statistics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .env import EnvState, GridConfig, TaskSpec, observe, reset, reward, step, task_success
from .planner import MctsConfig, mcts_plan
from .policies import FrozenPolicyCache, MessagePolicy, uniform_message


@dataclass
class EvalReport:
    task: str
    episodes: int
    success_rate: float
    mean_length: float
    mode: str
    seed: Optional[int] = None


def _core_json(state: EnvState):
    return [state.agent_x, state.agent_y, bool(state.gripper),
            [[bx, by, bool(g)] for (bx, by, g) in state.blocks]]


def _core_from_json(core, t=0) -> EnvState:
    ax, ay, gripper, blocks = core
    return EnvState(int(ax), int(ay), bool(gripper),
                    tuple((int(bx), int(by), bool(g)) for bx, by, g in blocks), t)


def _make_actor(builder, config: GridConfig, mode: str):
    if hasattr(builder, "act"):
        return lambda s, obs, m, rng: builder.act(obs, m, rng, mode)
    cache = FrozenPolicyCache(builder, config)
    if mode == "argmax":
        return lambda s, obs, m, rng: cache.argmax(s, m)
    return lambda s, obs, m, rng: cache.sample(s, m, rng)


def evaluate(model, builder, config: GridConfig, task: TaskSpec, episodes: int,
             mcts_cfg: MctsConfig, rng: np.random.Generator, mode: str = "sample",
             message_source: Optional[str] = None, log: Optional[list] = None,
             seed: Optional[int] = None) -> EvalReport:
    """Run guided episodes with frozen policies and report success.

    Messages come from per-step tree search through `model` unless
    message_source="uniform" (or no model is given), in which case they
    are drawn uniformly; a builder that ignores messages behaves
    identically either way.  If `log` is a list, one replayable record
    per episode is appended to it.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if message_source is None:
        message_source = "planned" if model is not None else "uniform"
    if message_source == "planned":
        model_cache = model if not isinstance(model, MessagePolicy) \
            else FrozenPolicyCache(model, config)

        def pick_message(s):
            return mcts_plan(s, task, model_cache, config, mcts_cfg, rng)
    else:
        vocab = model.vocab_size if model is not None else builder.vocab_size

        def pick_message(s):
            return uniform_message(rng, vocab)
    act = _make_actor(builder, config, mode)
    successes = 0
    lengths = []
    for ep in range(episodes):
        state = reset(config, task, rng)
        entry = {"episode": ep, "task": task.kind, "seed": seed,
                 "start": _core_json(state), "steps": []}
        if task_success(state, task):
            succ, steps = True, 0
        else:
            steps = 0
            while True:
                msg = pick_message(state)
                obs = observe(state, config)
                action = act(state, obs, msg, rng)
                nxt = step(state, action, config)
                r, done = reward(state, action, nxt, task, config)
                if log is not None:
                    entry["steps"].append({"obs": [float(v) for v in obs], "msg": int(msg),
                                           "action": int(action), "reward": float(r),
                                           "state": _core_json(nxt)})
                state = nxt
                steps += 1
                if done:
                    succ = task_success(state, task)
                    break
        successes += succ
        lengths.append(steps)
        if log is not None:
            entry["success"] = bool(succ)
            log.append(entry)
    return EvalReport(task=task.kind, episodes=episodes, success_rate=successes / episodes,
                      mean_length=float(np.mean(lengths)), mode=mode, seed=seed)


def transfer_eval(model, builder, config: GridConfig, target_task: TaskSpec, episodes: int,
                  mcts_cfg: MctsConfig, rng: np.random.Generator, mode: str = "sample",
                  log: Optional[list] = None, seed: Optional[int] = None) -> EvalReport:
    """Evaluate a frozen builder and its source-fitted model on a new task.

    Nothing is retrained: the planner simply searches against the new
    task's reward through the unchanged builder model.
    """
    return evaluate(model, builder, config, target_task, episodes, mcts_cfg, rng,
                    mode=mode, log=log, seed=seed)


def replay_episode(entry: dict, config: GridConfig) -> bool:
    """Re-simulate a logged episode and check every recorded state matches."""
    state = _core_from_json(entry["start"])
    for rec in entry["steps"]:
        state = step(state, int(rec["action"]), config)
        if _core_json(state) != rec["state"]:
            return False
    return True


@dataclass
class ProtocolStats:
    counts: np.ndarray        # vocab x actions tally
    cond: np.ndarray          # empirical P(action | message); zero rows unsupported
    msg_marginal: np.ndarray
    support: np.ndarray       # messages that actually occurred
    mi_bits: float
    h_action_given_msg: float
    h_msg: float
    h_action: float


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def protocol_stats(records, vocab_size: int, n_actions: int = 6) -> ProtocolStats:
    """Empirical message/action coupling from interaction records."""
    records = list(records)
    if not records:
        raise ValueError("no records to analyse")
    counts = np.zeros((vocab_size, n_actions))
    for rec in records:
        counts[rec.msg, rec.action] += 1
    n = counts.sum()
    joint = counts / n
    p_msg = joint.sum(axis=1)
    p_act = joint.sum(axis=0)
    support = p_msg > 0
    cond = np.zeros_like(joint)
    cond[support] = counts[support] / counts[support].sum(axis=1, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / np.outer(p_msg, p_act)[mask]
    mi = float((joint[mask] * np.log2(ratio)).sum())
    h_cond = float(-(joint[mask] * np.log2(cond[mask])).sum())
    return ProtocolStats(counts=counts, cond=cond, msg_marginal=p_msg, support=support,
                         mi_bits=mi, h_action_given_msg=h_cond,
                         h_msg=_entropy(p_msg), h_action=_entropy(p_act))
