"""Flat experiment configuration: one YAML file, explicit defaults.

Every key has a default; unknown keys are rejected so typos fail loudly.
`serialize_config` emits the canonical fully-expanded form, and
load(serialize(load(x))) is the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import yaml

from .env import ConfigurationError, GridConfig, TaskSpec
from .planner import MctsConfig
from .policies import BcHyper, check_vocab
from .training import TrainConfig

VARIANTS = ("guided", "random_messages", "random_builder")
TRANSFER_TARGETS = ("hline", "vline")


@dataclass
class ExperimentConfig:
    # world
    width: int = 5
    height: int = 5
    n_blocks: int = 1
    horizon: int = 40
    # task
    task: str = "grasp"
    place_target: Optional[list] = None  # defaults to the grid centre for place
    shape_cells: Optional[list] = None
    reward_scale: float = 1.0
    curriculum: Optional[list] = None  # task kinds trained in sequence; overrides `task`
    # protocol and loop
    vocab_size: int = 6
    n_iterations: int = 10
    n_collect: int = 100
    # behavioral cloning
    model_epochs: int = 100
    builder_epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    hidden: list = field(default_factory=lambda: [126, 126])
    imitate_successful_only: bool = False
    # planner
    mcts_simulations: int = 384
    mcts_max_depth: int = 12
    mcts_uct_c: float = 1.4
    mcts_gamma: float = 0.95
    mcts_builder_mode: str = "argmax"
    eval_simulations: int = 256
    # experiment
    seeds: list = field(default_factory=lambda: [0])
    variants: list = field(default_factory=lambda: list(VARIANTS))
    eval_episodes: int = 100
    eval_mode: str = "sample"
    log_episodes: bool = True
    out_dir: str = "runs/experiment"
    run_id: str = "run"
    workers: int = 1
    # transfer block (used by the transfer pipeline)
    transfer_target: str = "hline"
    transfer_episodes: int = 100

    def __post_init__(self):
        grid = self.grid()  # bounds-checks the world fields
        if self.n_blocks < 1:
            raise ConfigurationError("experiments need at least one block")
        check_vocab(self.vocab_size)
        for kind in self.task_kinds():
            self.task_spec(kind).validate_for(grid)
        if self.curriculum is not None and not self.curriculum:
            raise ConfigurationError("curriculum must be a nonempty list of task kinds")
        if not self.seeds:
            raise ConfigurationError("seeds must be a nonempty list")
        if any(not isinstance(s, int) for s in self.seeds):
            raise ConfigurationError("seeds must be integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigurationError(f"unknown variants {unknown}, expected subset of {VARIANTS}")
        if not self.variants:
            raise ConfigurationError("variants must be nonempty")
        if self.eval_mode not in ("sample", "argmax"):
            raise ConfigurationError(f"eval_mode must be sample or argmax, got {self.eval_mode!r}")
        if self.transfer_target not in TRANSFER_TARGETS:
            raise ConfigurationError(
                f"transfer_target must be one of {TRANSFER_TARGETS}, got {self.transfer_target!r}")
        if self.eval_episodes < 1 or self.transfer_episodes < 1:
            raise ConfigurationError("episode counts must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        self.mcts()  # validates planner knobs

    # builders for the runtime objects

    def grid(self) -> GridConfig:
        return GridConfig(self.width, self.height, self.n_blocks, self.horizon)

    def task_kinds(self) -> list:
        return list(self.curriculum) if self.curriculum is not None else [self.task]

    def task_spec(self, kind: Optional[str] = None) -> TaskSpec:
        kind = self.task if kind is None else kind
        if kind == "place":
            target = self.place_target or [self.width // 2, self.height // 2]
            return TaskSpec("place", place_target=tuple(target), reward_scale=self.reward_scale)
        if kind == "shapes":
            if not self.shape_cells:
                raise ConfigurationError("shapes task needs shape_cells")
            cells = frozenset(tuple(c) for c in self.shape_cells)
            return TaskSpec("shapes", shape_cells=cells, reward_scale=self.reward_scale)
        return TaskSpec(kind, reward_scale=self.reward_scale)

    def mcts(self, simulations: Optional[int] = None) -> MctsConfig:
        return MctsConfig(
            simulations=self.mcts_simulations if simulations is None else simulations,
            max_depth=self.mcts_max_depth, uct_c=self.mcts_uct_c,
            gamma=self.mcts_gamma, builder_mode=self.mcts_builder_mode)

    def train_config(self, seed: int, kind: Optional[str] = None) -> TrainConfig:
        return TrainConfig(
            env=self.grid(), task=self.task_spec(kind), vocab_size=self.vocab_size,
            n_iterations=self.n_iterations, n_collect=self.n_collect,
            model_bc=BcHyper(self.model_epochs, self.batch_size, self.lr),
            builder_bc=BcHyper(self.builder_epochs, self.batch_size, self.lr),
            mcts=self.mcts(), hidden=tuple(self.hidden),
            imitate_successful_only=self.imitate_successful_only, seed=seed)

    def transfer_task(self) -> TaskSpec:
        return TaskSpec(self.transfer_target, reward_scale=self.reward_scale)


def load_config_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping of keys to values")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise ConfigurationError(str(e))


def load_config(path: str) -> ExperimentConfig:
    with open(path) as f:
        data = yaml.safe_load(f)
    return load_config_dict(data if data is not None else {})


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical form: every key, declaration order, defaults made explicit."""
    out = {}
    for f in fields(ExperimentConfig):
        out[f.name] = getattr(cfg, f.name)
    return yaml.safe_dump(out, sort_keys=False)


def with_overrides(cfg: ExperimentConfig, **over) -> ExperimentConfig:
    return replace(cfg, **over)
