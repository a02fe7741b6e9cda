"""Emergent message protocols in a block-construction grid world.

A reward-blind builder acts; an action-less guide that sees the task
plans one-hot messages with tree search over a cloned model of the
builder.  Alternating modeling and guiding frames bootstrap a shared
protocol from scratch.
"""

from gridguide.env import (
    Action,
    ConfigurationError,
    EnvState,
    EpisodeExhaustedError,
    GridConfig,
    TaskSpec,
    observe,
    render_ascii,
    reset,
    reward,
    step,
    task_success,
)

__all__ = [
    "Action",
    "ConfigurationError",
    "EnvState",
    "EpisodeExhaustedError",
    "GridConfig",
    "TaskSpec",
    "observe",
    "render_ascii",
    "reset",
    "reward",
    "step",
    "task_success",
]

__version__ = "0.1.0"
