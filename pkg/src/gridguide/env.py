"""Deterministic block-construction grid world.

A single agent moves on a w x h grid holding at most one block with its
gripper.  Tasks are sparse: the reward is paid exactly once, on the
transition that first satisfies the task predicate, and the episode ends
on success or when the step horizon runs out.

States are plain tuples so they are hashable (planner tree keys, oracle
enumeration) and cheap to copy.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np


class ConfigurationError(ValueError):
    """Invalid grid/task configuration."""


class EpisodeExhaustedError(RuntimeError):
    """step() called on a state whose horizon is already spent."""


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    TOGGLE_GRIPPER = 4
    NOOP = 5


N_ACTIONS = 6

# dx, dy for the four movement actions, indexed by Action value.
# UP decreases y so that row 0 renders at the top.
_DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0))


@dataclass(frozen=True)
class GridConfig:
    width: int
    height: int
    n_blocks: int
    horizon: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.n_blocks < 0:
            raise ConfigurationError(f"n_blocks must be >= 0, got {self.n_blocks}")
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.width * self.height < self.n_blocks + 1:
            raise ConfigurationError(
                f"{self.width}x{self.height} grid cannot hold {self.n_blocks} blocks plus the agent"
            )

    @property
    def obs_dim(self) -> int:
        return 3 + 3 * self.n_blocks


class EnvState(NamedTuple):
    """Full world configuration.  blocks is a tuple of (x, y, grasped)."""

    agent_x: int
    agent_y: int
    gripper: bool
    blocks: tuple
    t: int

    def core(self):
        """State without the step counter (for caches and search keys)."""
        return (self.agent_x, self.agent_y, self.gripper, self.blocks)


TASK_KINDS = ("grasp", "place", "hline", "vline", "shapes")


@dataclass(frozen=True)
class TaskSpec:
    """Task identity: the success predicate plus the sparse reward it pays.

    reward_scale is the magnitude paid on the success transition.  The
    guide-side planner normalises by it, so it exists purely to let
    experiments rescale rewards without touching anything else.
    """

    kind: str
    place_target: Optional[tuple] = None
    shape_cells: Optional[frozenset] = None
    reward_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigurationError(f"unknown task kind {self.kind!r}, expected one of {TASK_KINDS}")
        if self.reward_scale <= 0:
            raise ConfigurationError("reward_scale must be positive")
        if self.kind == "place":
            if self.place_target is None:
                raise ConfigurationError("place task needs place_target")
        elif self.place_target is not None:
            raise ConfigurationError(f"{self.kind} task carries no place_target")
        if self.kind == "shapes":
            if not self.shape_cells:
                raise ConfigurationError("shapes task needs shape_cells")
        elif self.shape_cells is not None:
            raise ConfigurationError(f"{self.kind} task carries no shape_cells")

    def validate_for(self, config: GridConfig) -> None:
        w, h = config.width, config.height
        if self.kind == "place":
            x, y = self.place_target
            if not (0 <= x < w and 0 <= y < h):
                raise ConfigurationError(f"place_target {self.place_target} out of bounds for {w}x{h}")
        if self.kind == "shapes":
            cells = self.shape_cells
            if len(cells) != config.n_blocks:
                raise ConfigurationError(
                    f"shapes task needs exactly n_blocks={config.n_blocks} cells, got {len(cells)}"
                )
            for (x, y) in cells:
                if not (0 <= x < w and 0 <= y < h):
                    raise ConfigurationError(f"shape cell {(x, y)} out of bounds for {w}x{h}")


def reset(config: GridConfig, task: TaskSpec, rng: np.random.Generator) -> EnvState:
    """Spawn the agent and blocks on uniformly random pairwise-distinct cells.

    For place tasks, layouts that already satisfy the predicate are
    rejection-resampled so every episode starts unsolved.
    """
    task.validate_for(config)
    n_cells = config.width * config.height
    for _ in range(10_000):
        cells = rng.choice(n_cells, size=config.n_blocks + 1, replace=False)
        ax, ay = int(cells[0]) % config.width, int(cells[0]) // config.width
        blocks = tuple(
            (int(c) % config.width, int(c) // config.width, False) for c in cells[1:]
        )
        state = EnvState(ax, ay, False, blocks, 0)
        if task.kind == "place" and task_success(state, task):
            continue
        return state
    raise ConfigurationError("could not sample a non-successful initial layout for place task")


def step(state: EnvState, action: int, config: GridConfig) -> EnvState:
    """Apply one action.  Deterministic; raises once the horizon is spent."""
    if state.t >= config.horizon:
        raise EpisodeExhaustedError(f"episode horizon {config.horizon} already reached")
    ax, ay, gripper, blocks, t = state
    t += 1
    if action == Action.NOOP:
        return EnvState(ax, ay, gripper, blocks, t)
    if action < 4:
        dx, dy = _DELTAS[action]
        nx, ny = ax + dx, ay + dy
        if 0 <= nx < config.width and 0 <= ny < config.height:
            if gripper:
                blocks = tuple((nx, ny, True) if b[2] else b for b in blocks)
            return EnvState(nx, ny, gripper, blocks, t)
        return EnvState(ax, ay, gripper, blocks, t)
    # toggle gripper
    if gripper:
        # release onto the agent cell unless a loose block already sits there
        for b in blocks:
            if b[0] == ax and b[1] == ay and not b[2]:
                return EnvState(ax, ay, gripper, blocks, t)
        blocks = tuple((b[0], b[1], False) if b[2] else b for b in blocks)
        return EnvState(ax, ay, False, blocks, t)
    for i, b in enumerate(blocks):
        if b[0] == ax and b[1] == ay and not b[2]:
            blocks = blocks[:i] + ((ax, ay, True),) + blocks[i + 1:]
            return EnvState(ax, ay, True, blocks, t)
    return EnvState(ax, ay, False, blocks, t)


def observe(state: EnvState, config: GridConfig) -> np.ndarray:
    """Flat observation: agent x, y, gripper, then x, y, grasped per block.

    Coordinates are normalised to [0, 1] by (dimension - 1); a 1-wide
    dimension maps to 0.  Block order is spawn order.
    """
    xs = config.width - 1 or 1
    ys = config.height - 1 or 1
    out = np.empty(3 + 3 * config.n_blocks)
    out[0] = state.agent_x / xs
    out[1] = state.agent_y / ys
    out[2] = 1.0 if state.gripper else 0.0
    i = 3
    for (bx, by, g) in state.blocks:
        out[i] = bx / xs
        out[i + 1] = by / ys
        out[i + 2] = 1.0 if g else 0.0
        i += 3
    return out


def task_success(state: EnvState, task: TaskSpec) -> bool:
    kind = task.kind
    if kind == "grasp":
        return state.gripper
    if kind == "place":
        tx, ty = task.place_target
        for (bx, by, g) in state.blocks:
            if bx == tx and by == ty and not g:
                return True
        return False
    if kind == "hline":
        ys = set()
        xs = []
        for (bx, by, g) in state.blocks:
            if g:
                return False
            ys.add(by)
            xs.append(bx)
        if len(ys) > 1:
            return False
        return not xs or max(xs) - min(xs) == len(xs) - 1
    if kind == "vline":
        xs = set()
        ys = []
        for (bx, by, g) in state.blocks:
            if g:
                return False
            xs.add(bx)
            ys.append(by)
        if len(xs) > 1:
            return False
        return not ys or max(ys) - min(ys) == len(ys) - 1
    # shapes
    placed = set()
    for (bx, by, g) in state.blocks:
        if g:
            return False
        placed.add((bx, by))
    return placed == task.shape_cells


def reward(prev: EnvState, action: int, next_state: EnvState, task: TaskSpec,
           config: GridConfig) -> tuple[float, bool]:
    """Sparse reward: paid once, on the transition that first succeeds.

    done is True on success or when the horizon is reached.
    """
    succ_next = task_success(next_state, task)
    if succ_next and not task_success(prev, task):
        return task.reward_scale, True
    return 0.0, succ_next or next_state.t >= config.horizon


# Render glyphs.  The agent is 'A', or 'G' while carrying; a lowercase
# variant marks an extra loose block under the agent so that parsing a
# rendering recovers full cell occupancy.
_GLYPHS = {
    (False, False, False): ".",
    (False, False, True): "b",
    (True, False, False): "A",
    (True, False, True): "a",
    (True, True, False): "G",
    (True, True, True): "g",
}
_GLYPHS_INV = {v: k for k, v in _GLYPHS.items()}


def render_ascii(state: EnvState, config: GridConfig) -> str:
    """One glyph per cell, rows joined by newlines.

    '.' empty, 'b' loose block, 'A' agent, 'G' agent carrying a block;
    'a'/'g' are the same with a loose block under the agent.
    """
    loose = {(b[0], b[1]) for b in state.blocks if not b[2]}
    rows = []
    for y in range(config.height):
        row = []
        for x in range(config.width):
            agent = (x, y) == (state.agent_x, state.agent_y)
            row.append(_GLYPHS[(agent, agent and state.gripper, (x, y) in loose)])
        rows.append("".join(row))
    return "\n".join(rows)


def parse_ascii(text: str):
    """Invert render_ascii into (agent_cell, carrying, loose_block_cells)."""
    agent = None
    carrying = False
    loose = set()
    for y, row in enumerate(text.split("\n")):
        for x, ch in enumerate(row):
            is_agent, is_carrying, has_loose = _GLYPHS_INV[ch]
            if is_agent:
                agent = (x, y)
                carrying = is_carrying
            if has_loose:
                loose.add((x, y))
    return agent, carrying, loose


def validate_state(state: EnvState, config: GridConfig) -> None:
    """Raise AssertionError on any violated state invariant."""
    assert 0 <= state.agent_x < config.width and 0 <= state.agent_y < config.height, "agent out of bounds"
    assert len(state.blocks) == config.n_blocks, "block count changed"
    grasped = [b for b in state.blocks if b[2]]
    assert len(grasped) <= 1, "more than one block grasped"
    assert state.gripper == (len(grasped) == 1), "gripper flag inconsistent with grasped blocks"
    for (bx, by, g) in state.blocks:
        assert 0 <= bx < config.width and 0 <= by < config.height, "block out of bounds"
        if g:
            assert (bx, by) == (state.agent_x, state.agent_y), "grasped block away from agent"
    loose = [(b[0], b[1]) for b in state.blocks if not b[2]]
    assert len(loose) == len(set(loose)), "loose blocks overlap"
    assert 0 <= state.t <= config.horizon, "step count outside horizon"
