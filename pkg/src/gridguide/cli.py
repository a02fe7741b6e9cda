"""Command-line front end.

    gridguide train    --config cfg.yaml [--seeds 0 1] [--out dir]
    gridguide eval     --run dir --task grasp --episodes 50
    gridguide transfer --run dir --target hline
    gridguide oracle   --instance "3x3 grasp"
    gridguide inspect  --run dir

All subcommands exit 0 on success and nonzero on bad input or missing
artifacts.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from collections import namedtuple
from dataclasses import asdict

import numpy as np

from .artifacts import (EVAL_STREAM, load_pair, load_run_config, read_jsonl,
                        read_summary, run_experiment, run_transfer,
                        EPISODES_NAME, METRICS_NAME, SUMMARY_NAME)
from .config import load_config, with_overrides
from .env import (Action, ConfigurationError, EnvState, GridConfig, TaskSpec,
                  render_ascii, validate_state)
from .evaluation import _core_from_json, evaluate, protocol_stats, replay_episode
from .oracles import (OracleGuardError, bfs_oracle, build_task_mdp, greedy_episode_length,
                      greedy_policy, random_walk_success_prob, value_iteration)

MsgAction = namedtuple("MsgAction", ["msg", "action"])


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    over = {}
    if args.seeds is not None:
        over["seeds"] = args.seeds
    if args.out is not None:
        over["out_dir"] = args.out
    if over:
        cfg = with_overrides(cfg, **over)
    result = run_experiment(cfg)
    print(f"run written to {result.out_dir}")
    for row in result.summary_rows:
        print(f"  seed {row['seed']:>3} {row['variant']:<16} {row['task']:<7} "
              f"success {row['success_rate']:.2f} mean_len {row['mean_len']:.1f}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.run)
    task = cfg.task_spec(args.task)
    task.validate_for(cfg.grid())
    builder, model = load_pair(args.run, args.variant, args.seed)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, EVAL_STREAM, 97]))
    report = evaluate(model, builder, cfg.grid(), task, args.episodes,
                      cfg.mcts(cfg.eval_simulations), rng, mode=cfg.eval_mode,
                      seed=args.seed)
    payload = asdict(report)
    payload.update(variant=args.variant, run=cfg.run_id)
    out = os.path.join(args.run, f"eval_{args.task}_{args.variant}_seed{args.seed}.json")
    with open(out, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"task {report.task}: success {report.success_rate:.3f} over "
          f"{report.episodes} episodes, mean length {report.mean_length:.1f}")
    print(f"report written to {out}")
    return 0


def cmd_transfer(args) -> int:
    rows = run_transfer(args.run, target_kind=args.target, episodes=args.episodes,
                        seeds=args.seeds)
    for row in rows:
        print(f"  seed {row['seed']:>3} {row['variant']:<16} {row['task']:<7} "
              f"success {row['success_rate']:.2f} mean_len {row['mean_len']:.1f}")
    return 0


def _parse_xy(text: str):
    x, y = text.split(",")
    return int(x), int(y)


def parse_instance(text: str):
    """Parse an oracle instance description.

    Grammar (whitespace-separated):
        WxH [task] [agent=x,y] [block=x,y[;x,y...]] [carry=i]
            [target=x,y] [shape=x,y[;x,y...]] [horizon=N] [gamma=G]
    Defaults: grasp task, agent at (0,0), one loose block in the far
    corner, horizon 40, gamma 0.95.
    """
    task_kind = "grasp"
    agent = (0, 0)
    blocks = None
    carry = None
    target = None
    shape = None
    horizon = 40
    gamma = 0.95
    size = None
    for tok in text.split():
        if "=" in tok:
            key, val = tok.split("=", 1)
            if key == "agent":
                agent = _parse_xy(val)
            elif key == "block":
                blocks = [_parse_xy(p) for p in val.split(";")]
            elif key == "carry":
                carry = int(val)
            elif key == "target":
                target = _parse_xy(val)
            elif key == "shape":
                shape = [_parse_xy(p) for p in val.split(";")]
            elif key == "horizon":
                horizon = int(val)
            elif key == "gamma":
                gamma = float(val)
            else:
                raise ConfigurationError(f"unknown instance key {key!r}")
        elif "x" in tok and tok[0].isdigit():
            w, h = tok.split("x")
            size = (int(w), int(h))
        else:
            task_kind = tok
    if size is None:
        raise ConfigurationError("instance needs a WxH grid size, e.g. '3x3 grasp'")
    w, h = size
    if blocks is None:
        blocks = [(w - 1, h - 1)]
    config = GridConfig(w, h, n_blocks=len(blocks), horizon=horizon)
    task = TaskSpec(task_kind,
                    place_target=target if task_kind == "place" else None,
                    shape_cells=frozenset(shape) if task_kind == "shapes" else None)
    task.validate_for(config)
    gripper = carry is not None
    block_tuples = []
    for i, (bx, by) in enumerate(blocks):
        if carry is not None and i == carry:
            block_tuples.append((agent[0], agent[1], True))
        else:
            block_tuples.append((bx, by, False))
    state = EnvState(agent[0], agent[1], gripper, tuple(block_tuples), 0)
    try:
        validate_state(state, config)
    except AssertionError as e:
        raise ConfigurationError(f"invalid instance state: {e}")
    return state, task, config, gamma


def cmd_oracle(args) -> int:
    state, task, config, gamma = parse_instance(args.instance)
    desc = " ".join(f"({bx},{by},{'carried' if g else 'loose'})" for bx, by, g in state.blocks)
    print(f"instance: {config.width}x{config.height} {task.kind} "
          f"n_blocks={config.n_blocks} horizon={config.horizon}")
    print(f"state: agent=({state.agent_x},{state.agent_y}) "
          f"gripper={'full' if state.gripper else 'empty'} blocks=[{desc}]")
    opt = bfs_oracle(state, task, config)
    print(f"bfs_optimal: {'unreachable' if opt is None else opt}")
    mdp = build_task_mdp(config, task)
    v = value_iteration(mdp, gamma)
    pol = greedy_policy(mdp, v, gamma)
    length = greedy_episode_length(mdp, pol, state.core(), cap=config.horizon)
    print(f"vi_greedy: {'no success within horizon' if length is None else length} "
          f"(gamma={gamma})")
    p = random_walk_success_prob(config, task, state.core(), config.horizon)
    print(f"random_walk_success: {p:.6f} (horizon {config.horizon})")
    return 0


def _episode_frames(entry: dict, config: GridConfig, limit: int = 12) -> str:
    state = _core_from_json(entry["start"])
    frames = [render_ascii(state, config)]
    for rec in entry["steps"][:limit]:
        state = _core_from_json(rec["state"], t=0)
        frames.append(render_ascii(state, config))
    lines = []
    for i, frame in enumerate(frames):
        tag = "start" if i == 0 else (f"step {i} "
                                      f"msg={entry['steps'][i - 1]['msg']} "
                                      f"act={Action(entry['steps'][i - 1]['action']).name}")
        lines.append(tag)
        lines.append(frame)
    if len(entry["steps"]) > limit:
        lines.append(f"... {len(entry['steps']) - limit} more steps")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    cfg = load_run_config(args.run)
    summary_path = os.path.join(args.run, SUMMARY_NAME)
    if os.path.isfile(summary_path):
        print("summary:")
        for row in read_summary(summary_path):
            print(f"  seed {row['seed']:>3} {row['variant']:<16} {row['task']:<7} "
                  f"success {float(row['success_rate']):.2f} "
                  f"mean_len {float(row['mean_len']):.1f}")
    metrics = [m for m in read_jsonl(os.path.join(args.run, METRICS_NAME))
               if m["variant"] == args.variant and m["frame"] == "guiding"]
    if metrics:
        print(f"{args.variant} guiding success by iteration:")
        for seed in sorted({m["seed"] for m in metrics}):
            curve = [m["success_rate"] for m in metrics if m["seed"] == seed]
            print(f"  seed {seed}: " + " ".join("--" if s is None else f"{s:.2f}"
                                                for s in curve))
    episodes = [e for e in read_jsonl(os.path.join(args.run, EPISODES_NAME))
                if e["variant"] == args.variant
                and (args.seed is None or e["seed"] == args.seed)]
    if not episodes:
        print(f"no logged episodes for variant {args.variant}")
        return 0
    pairs = [MsgAction(step["msg"], step["action"])
             for e in episodes for step in e["steps"]]
    grid = cfg.grid()
    ok = sum(replay_episode(e, grid) for e in episodes)
    print(f"episodes: {len(episodes)} logged, {ok} replay exactly")
    if pairs:
        stats = protocol_stats(pairs, cfg.vocab_size)
        print(f"protocol: {int(stats.support.sum())}/{cfg.vocab_size} messages used, "
              f"I(M;A) = {stats.mi_bits:.3f} bits, H(A|M) = {stats.h_action_given_msg:.3f} bits")
        print("message -> action counts (rows are messages):")
        header = " ".join(f"{Action(a).name:>7}"[:7] for a in range(6))
        print(f"      {header}")
        for m in range(cfg.vocab_size):
            row = " ".join(f"{int(c):>7}" for c in stats.counts[m])
            print(f"  m{m:<2} {row}")
    shown = next((e for e in episodes if e["success"]), episodes[0])
    print(f"episode {shown['episode']} (seed {shown['seed']}, "
          f"{'success' if shown['success'] else 'failure'}):")
    print(_episode_frames(shown, grid))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridguide",
                                description="Two-agent guided block construction.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the full experiment from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seeds", type=int, nargs="+", default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate trained checkpoints on a task")
    e.add_argument("--run", required=True)
    e.add_argument("--task", required=True)
    e.add_argument("--episodes", type=int, required=True)
    e.add_argument("--variant", default="guided")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval)

    tr = sub.add_parser("transfer", help="evaluate a run's checkpoints on a new task")
    tr.add_argument("--run", required=True)
    tr.add_argument("--target", required=True)
    tr.add_argument("--episodes", type=int, default=None)
    tr.add_argument("--seeds", type=int, nargs="+", default=None)
    tr.set_defaults(fn=cmd_transfer)

    o = sub.add_parser("oracle", help="print brute-force baselines for an instance")
    o.add_argument("--instance", required=True,
                   help="e.g. '3x3 grasp agent=0,0 block=2,2 horizon=40'")
    o.set_defaults(fn=cmd_oracle)

    i = sub.add_parser("inspect", help="summarize a run directory")
    i.add_argument("--run", required=True)
    i.add_argument("--variant", default="guided")
    i.add_argument("--seed", type=int, default=None)
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, OracleGuardError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
