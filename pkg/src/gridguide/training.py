"""The iterated two-frame training loop.

One iteration alternates two interaction frames.  In a modeling frame
the guide stays silent in intent: it sends uniform random messages and
records how the builder responds, then clones that behavior into a fresh
builder model.  In a guiding frame the guide plans each message by tree
search through the cloned model, and the builder afterwards imitates its
own guided behavior.  Buffers are discarded at frame boundaries; the
builder's parameters are the only thing that persists.

The builder never sees a reward: records carry (observation, message,
action) and nothing else, and the builder-side fits consume only those.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .env import GridConfig, TaskSpec, observe, reset, reward, step, task_success
from .planner import MctsConfig, mcts_plan
from .policies import (
    BcHyper,
    DEFAULT_HIDDEN,
    FrozenPolicyCache,
    MessagePolicy,
    check_vocab,
    fit_builder_model,
    init_policy,
    self_imitate,
    uniform_message,
)


class StepRecord(NamedTuple):
    obs: np.ndarray
    msg: int
    action: int
    provenance: str  # "uniform" or "planned" message


class Buffer:
    """Ordered interaction records for one frame role."""

    ROLES = ("modeling", "guiding")

    def __init__(self, role: str):
        if role not in self.ROLES:
            raise ValueError(f"unknown buffer role {role!r}")
        self.role = role
        self.records = []
        self.episode_spans = []  # (lo, hi, success) filled by the guiding frame

    def append(self, rec: StepRecord):
        self.records.append(rec)

    def clear(self):
        self.records = []
        self.episode_spans = []

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class TrainConfig:
    env: GridConfig
    task: TaskSpec
    vocab_size: int = 6
    n_iterations: int = 10
    n_collect: int = 100  # episodes per iteration, split evenly across the two frames
    model_bc: BcHyper = field(default_factory=BcHyper)
    builder_bc: BcHyper = field(default_factory=BcHyper)
    mcts: MctsConfig = field(default_factory=MctsConfig)
    hidden: tuple = DEFAULT_HIDDEN
    builder_eval_mode: str = "sample"
    imitate_successful_only: bool = False
    seed: int = 0

    def __post_init__(self):
        check_vocab(self.vocab_size)
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.n_collect < 2 or self.n_collect % 2:
            raise ValueError("n_collect must be even and >= 2")
        self.task.validate_for(self.env)


@dataclass
class IterationMetrics:
    iteration: int
    model_loss: float
    builder_loss: float
    guiding_success: float
    d_a_size: int
    d_b_size: int
    model_hash: str
    builder_hash: str


@dataclass
class RunArtifacts:
    builder: MessagePolicy
    model: MessagePolicy
    metrics: list
    final_model_loss: float
    final_frame_size: int
    seed: int


def hash_params(policy: MessagePolicy) -> str:
    h = hashlib.sha256()
    for arr in policy.params.weights + policy.params.biases:
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _run_episode(config, task, pick_message, act, rng, buffer, provenance):
    """One episode; records every step; returns (success, steps)."""
    state = reset(config, task, rng)
    steps = 0
    while True:
        msg = pick_message(state)
        obs = observe(state, config)
        action = act(state, obs, msg)
        nxt = step(state, action, config)
        if buffer is not None:
            buffer.append(StepRecord(obs, msg, action, provenance))
        _, done = reward(state, action, nxt, task, config)
        state = nxt
        steps += 1
        if done:
            return task_success(state, task), steps


def run_modeling_frame(builder: MessagePolicy, config: GridConfig, task: TaskSpec,
                       episodes: int, rng: np.random.Generator) -> Buffer:
    """Collect builder behavior under uniform random messages."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    buffer = Buffer("modeling")
    cache = FrozenPolicyCache(builder, config)
    vocab = builder.vocab_size
    for _ in range(episodes):
        _run_episode(
            config, task,
            pick_message=lambda s: uniform_message(rng, vocab),
            act=lambda s, obs, m: cache.sample(s, m, rng),
            rng=rng, buffer=buffer, provenance="uniform",
        )
    return buffer


def run_guiding_frame(model: MessagePolicy, builder: MessagePolicy, config: GridConfig,
                      task: TaskSpec, episodes: int, mcts_cfg: MctsConfig,
                      rng: np.random.Generator, message_source: str = "planned"):
    """Collect builder behavior under guided (or control-uniform) messages.

    Returns (buffer, success_rate); success_rate is None for zero episodes.
    """
    if message_source not in ("planned", "uniform"):
        raise ValueError(f"unknown message_source {message_source!r}")
    buffer = Buffer("guiding")
    if episodes == 0:
        return buffer, None
    builder_cache = FrozenPolicyCache(builder, config)
    vocab = builder.vocab_size
    if message_source == "planned":
        model_cache = model if not isinstance(model, MessagePolicy) \
            else FrozenPolicyCache(model, config)

        def pick_message(s):
            return mcts_plan(s, task, model_cache, config, mcts_cfg, rng)
    else:
        def pick_message(s):
            return uniform_message(rng, vocab)
    successes = 0
    spans = []
    for _ in range(episodes):
        lo = len(buffer)
        succ, _ = _run_episode(
            config, task, pick_message,
            act=lambda s, obs, m: builder_cache.sample(s, m, rng),
            rng=rng, buffer=buffer, provenance=message_source,
        )
        spans.append((lo, len(buffer), succ))
        successes += succ
    buffer.episode_spans = spans
    return buffer, successes / episodes


def _successful_records(buffer: Buffer):
    out = []
    for lo, hi, succ in getattr(buffer, "episode_spans", []):
        if succ:
            out.extend(buffer.records[lo:hi])
    return out


def train_guided(cfg: TrainConfig, initial_builder: Optional[MessagePolicy] = None,
                 guiding_messages: str = "planned",
                 progress: Optional[callable] = None) -> RunArtifacts:
    """Run the full iterated loop and return the trained pair plus metrics.

    With guiding_messages="uniform" this becomes the random-message
    control: identical in every respect except that guiding frames send
    uniform messages (the builder still self-imitates those interactions).
    `progress`, if given, is called with each IterationMetrics as it lands.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    if initial_builder is None:
        builder = init_policy(rng, cfg.env, cfg.vocab_size, cfg.hidden)
    else:
        builder = initial_builder.copy()
    model = None
    per_frame = cfg.n_collect // 2
    metrics = []
    for it in range(cfg.n_iterations):
        d_a = run_modeling_frame(builder, cfg.env, cfg.task, per_frame, rng)
        model, model_loss = fit_builder_model(d_a.records, cfg.env, cfg.vocab_size,
                                              cfg.model_bc, rng, cfg.hidden)
        d_a_size = len(d_a)
        d_a.clear()
        d_b, success = run_guiding_frame(model, builder, cfg.env, cfg.task, per_frame,
                                         cfg.mcts, rng, message_source=guiding_messages)
        records = _successful_records(d_b) if cfg.imitate_successful_only else d_b.records
        if records:
            builder, builder_loss = self_imitate(builder, records, cfg.builder_bc, rng)
        else:
            builder_loss = float("nan")
        d_b_size = len(d_b)
        d_b.clear()
        metrics.append(IterationMetrics(
            iteration=it, model_loss=model_loss, builder_loss=builder_loss,
            guiding_success=success, d_a_size=d_a_size, d_b_size=d_b_size,
            model_hash=hash_params(model), builder_hash=hash_params(builder),
        ))
        if progress is not None:
            progress(metrics[-1])
    final = run_modeling_frame(builder, cfg.env, cfg.task, per_frame, rng)
    model, final_loss = fit_builder_model(final.records, cfg.env, cfg.vocab_size,
                                          cfg.model_bc, rng, cfg.hidden)
    final_size = len(final)
    final.clear()
    return RunArtifacts(builder=builder, model=model, metrics=metrics,
                        final_model_loss=final_loss, final_frame_size=final_size,
                        seed=cfg.seed)


def train_random_messages(cfg: TrainConfig,
                          initial_builder: Optional[MessagePolicy] = None,
                          progress: Optional[callable] = None) -> RunArtifacts:
    """Control run: the guide never plans during training."""
    return train_guided(cfg, initial_builder, guiding_messages="uniform",
                        progress=progress)
