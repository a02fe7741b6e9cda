"""Run orchestration and on-disk artifacts.

A run directory contains:

    config.yaml      canonical copy of the effective configuration
    metrics.jsonl    one JSON object per training frame (schema below)
    summary.csv      run, seed, variant, task, success_rate, mean_len
    episodes.jsonl   replayable evaluation episodes (one object each)
    checkpoints/     {variant}_seed{seed}_{builder|model}.npz

Checkpoint container: a stored (uncompressed) zip of .npy members, one
named double array per parameter tensor (layer{i}_w, layer{i}_b) plus
an int64 scalar vocab_size; readable with numpy.load.  Timestamps are
pinned so identical parameters give identical bytes.

metrics.jsonl rows are ordered by (seed, phase, iteration, frame) and
carry: run, seed, variant, task, phase, iteration, frame ("modeling"
or "guiding"), bc_loss, success_rate (null on modeling rows), buffer_size,
param_hash (sha256 of the just-fitted network).  Wall-clock goes to
stdout only, never into files, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from .config import ExperimentConfig, VARIANTS, load_config_dict, serialize_config
from .evaluation import EvalReport, evaluate, transfer_eval
from .nets import MlpParams
from .policies import MessagePolicy, RandomBuilder
from .training import RunArtifacts, hash_params, train_guided, train_random_messages

EVAL_STREAM = 0x5EED      # mixed into eval rng seeds so eval never shares the training stream
TRANSFER_STREAM = 0x7A57

METRICS_NAME = "metrics.jsonl"
SUMMARY_NAME = "summary.csv"
EPISODES_NAME = "episodes.jsonl"
CONFIG_NAME = "config.yaml"
CHECKPOINT_DIR = "checkpoints"
SUMMARY_FIELDS = ("run", "seed", "variant", "task", "success_rate", "mean_len")


# checkpoints

def _npy_bytes(arr: np.ndarray) -> bytes:
    bio = io.BytesIO()
    np.lib.format.write_array(bio, arr, version=(1, 0), allow_pickle=False)
    return bio.getvalue()


def save_checkpoint(path: str, policy: MessagePolicy) -> None:
    entries = [("vocab_size", np.array(policy.vocab_size, dtype=np.int64))]
    for i, (w, b) in enumerate(zip(policy.params.weights, policy.params.biases)):
        entries.append((f"layer{i}_w", np.asarray(w, dtype=np.float64)))
        entries.append((f"layer{i}_b", np.asarray(b, dtype=np.float64)))
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in entries:
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, _npy_bytes(arr))


def load_checkpoint(path: str) -> MessagePolicy:
    with np.load(path) as z:
        vocab = int(z["vocab_size"].item())
        weights, biases = [], []
        i = 0
        while f"layer{i}_w" in z.files:
            weights.append(np.asarray(z[f"layer{i}_w"], dtype=np.float64))
            biases.append(np.asarray(z[f"layer{i}_b"], dtype=np.float64))
            i += 1
    if not weights:
        raise ValueError(f"{path} holds no layer arrays")
    return MessagePolicy(MlpParams(weights, biases), vocab)


def checkpoint_path(out_dir: str, variant: str, seed: int, role: str) -> str:
    return os.path.join(out_dir, CHECKPOINT_DIR, f"{variant}_seed{seed}_{role}.npz")


# json / csv writers

def _clean(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def dumps_row(row: dict) -> str:
    return json.dumps({k: _clean(v) for k, v in row.items()},
                      sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: str, rows) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(dumps_row(row) + "\n")


def read_jsonl(path: str) -> list:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_summary(path: str, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in SUMMARY_FIELDS})


def read_summary(path: str) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# per-seed training and evaluation

def _metrics_rows(cfg: ExperimentConfig, seed: int, variant: str, phase: int,
                  task_kind: str, art: RunArtifacts) -> list:
    base = {"run": cfg.run_id, "seed": seed, "variant": variant,
            "task": task_kind, "phase": phase}
    rows = []
    for m in art.metrics:
        rows.append({**base, "iteration": m.iteration, "frame": "modeling",
                     "bc_loss": m.model_loss, "success_rate": None,
                     "buffer_size": m.d_a_size, "param_hash": m.model_hash})
        rows.append({**base, "iteration": m.iteration, "frame": "guiding",
                     "bc_loss": m.builder_loss, "success_rate": m.guiding_success,
                     "buffer_size": m.d_b_size, "param_hash": m.builder_hash})
    rows.append({**base, "iteration": len(art.metrics), "frame": "modeling",
                 "bc_loss": art.final_model_loss, "success_rate": None,
                 "buffer_size": art.final_frame_size,
                 "param_hash": hash_params(art.model)})
    return rows


def _train_variant(cfg: ExperimentConfig, seed: int, variant: str):
    """Train one variant for one seed.  Returns (builder, model, metrics_rows)."""
    if variant == "random_builder":
        return RandomBuilder(cfg.vocab_size), None, []
    trainer = train_guided if variant == "guided" else train_random_messages
    rows = []
    builder = None
    art = None
    for phase, kind in enumerate(cfg.task_kinds()):
        def progress(m, kind=kind):
            print(f"[{cfg.run_id}] seed {seed} {variant} {kind} it {m.iteration}: "
                  f"model_loss {m.model_loss:.3f} builder_loss {m.builder_loss:.3f} "
                  f"success {m.guiding_success:.2f}", flush=True)
        art = trainer(cfg.train_config(seed, kind), initial_builder=builder,
                      progress=progress)
        builder = art.builder
        rows.extend(_metrics_rows(cfg, seed, variant, phase, kind, art))
    return art.builder, art.model, rows


def _eval_variant(cfg: ExperimentConfig, seed: int, variant: str, builder, model,
                  log: Optional[list]) -> EvalReport:
    rng = np.random.default_rng(np.random.SeedSequence([seed, EVAL_STREAM,
                                                        VARIANTS.index(variant)]))
    task = cfg.task_spec(cfg.task_kinds()[-1])
    return evaluate(model, builder, cfg.grid(), task, cfg.eval_episodes,
                    cfg.mcts(cfg.eval_simulations), rng, mode=cfg.eval_mode,
                    log=log, seed=seed)


def _seed_payload(cfg: ExperimentConfig, seed: int, out_dir: Optional[str]):
    """All work for one seed: train and evaluate every variant.

    Returns (metrics_rows, summary_rows, episode_entries); checkpoints are
    written directly (paths are disjoint across seeds).
    """
    metrics_rows, summary_rows, episodes = [], [], []
    final_kind = cfg.task_kinds()[-1]
    for variant in cfg.variants:
        t0 = time.perf_counter()
        builder, model, rows = _train_variant(cfg, seed, variant)
        t1 = time.perf_counter()
        metrics_rows.extend(rows)
        log = [] if cfg.log_episodes else None
        report = _eval_variant(cfg, seed, variant, builder, model, log)
        t2 = time.perf_counter()
        summary_rows.append({"run": cfg.run_id, "seed": seed, "variant": variant,
                             "task": final_kind, "success_rate": report.success_rate,
                             "mean_len": report.mean_length})
        if log:
            for entry in log:
                episodes.append({"run": cfg.run_id, "variant": variant, **entry})
        if out_dir is not None and model is not None:
            save_checkpoint(checkpoint_path(out_dir, variant, seed, "builder"), builder)
            save_checkpoint(checkpoint_path(out_dir, variant, seed, "model"), model)
        print(f"[{cfg.run_id}] seed {seed} {variant}: train {t1 - t0:.1f}s, "
              f"eval {t2 - t1:.1f}s, success {report.success_rate:.2f}, "
              f"mean_len {report.mean_length:.1f}", flush=True)
    return metrics_rows, summary_rows, episodes


def _seed_payload_from_yaml(cfg_yaml: str, seed: int, out_dir: Optional[str]):
    return _seed_payload(load_config_dict(yaml.safe_load(cfg_yaml)), seed, out_dir)


@dataclass
class RunResult:
    out_dir: str
    summary_rows: list
    metrics_rows: list


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
    """Train and evaluate every (seed, variant) pair and write the run files.

    Seeds run in worker processes when cfg.workers > 1; results are merged
    in seed order, so the files do not depend on scheduling.
    """
    out_dir = cfg.out_dir if out_dir is None else out_dir
    os.makedirs(os.path.join(out_dir, CHECKPOINT_DIR), exist_ok=True)
    with open(os.path.join(out_dir, CONFIG_NAME), "w") as f:
        f.write(serialize_config(cfg))
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        cfg_yaml = serialize_config(cfg)
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.seeds))) as pool:
            payloads = list(pool.map(_seed_payload_from_yaml, [cfg_yaml] * len(cfg.seeds),
                                     cfg.seeds, [out_dir] * len(cfg.seeds)))
    else:
        payloads = [_seed_payload(cfg, seed, out_dir) for seed in cfg.seeds]
    metrics_rows, summary_rows, episodes = [], [], []
    for m, s, e in payloads:
        metrics_rows.extend(m)
        summary_rows.extend(s)
        episodes.extend(e)
    write_jsonl(os.path.join(out_dir, METRICS_NAME), metrics_rows)
    write_summary(os.path.join(out_dir, SUMMARY_NAME), summary_rows)
    write_jsonl(os.path.join(out_dir, EPISODES_NAME), episodes)
    return RunResult(out_dir=out_dir, summary_rows=summary_rows, metrics_rows=metrics_rows)


# working with an existing run directory

def load_run_config(run_dir: str) -> ExperimentConfig:
    path = os.path.join(run_dir, CONFIG_NAME)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{run_dir} has no {CONFIG_NAME}; not a run directory?")
    with open(path) as f:
        return load_config_dict(yaml.safe_load(f))


def load_pair(run_dir: str, variant: str, seed: int):
    """Load the trained (builder, model) checkpoints of one run leg."""
    paths = [checkpoint_path(run_dir, variant, seed, role) for role in ("builder", "model")]
    for p in paths:
        if not os.path.isfile(p):
            raise FileNotFoundError(f"missing checkpoint {p}")
    return load_checkpoint(paths[0]), load_checkpoint(paths[1])


def run_transfer(run_dir: str, target_kind: Optional[str] = None,
                 episodes: Optional[int] = None, seeds: Optional[list] = None,
                 variant: str = "guided") -> list:
    """Evaluate trained pairs from `run_dir` on a new task, with no retraining.

    For each seed the planner searches the target task's reward through the
    already-fitted builder model; a message-blind random builder is evaluated
    on the same episodes count as the baseline.  Writes transfer_summary.csv
    into the run directory and returns its rows.
    """
    cfg = load_run_config(run_dir)
    target_kind = cfg.transfer_target if target_kind is None else target_kind
    episodes = cfg.transfer_episodes if episodes is None else episodes
    seeds = cfg.seeds if seeds is None else seeds
    grid = cfg.grid()
    task = cfg.task_spec(target_kind)
    task.validate_for(grid)
    rows = []
    for seed in seeds:
        builder, model = load_pair(run_dir, variant, seed)
        rng = np.random.default_rng(np.random.SeedSequence([seed, TRANSFER_STREAM]))
        report = transfer_eval(model, builder, grid, task, episodes,
                               cfg.mcts(cfg.eval_simulations), rng,
                               mode=cfg.eval_mode, seed=seed)
        rows.append({"run": cfg.run_id, "seed": seed, "variant": f"{variant}_transfer",
                     "task": target_kind, "success_rate": report.success_rate,
                     "mean_len": report.mean_length})
        base_rng = np.random.default_rng(np.random.SeedSequence([seed, TRANSFER_STREAM, 1]))
        base = evaluate(None, RandomBuilder(cfg.vocab_size), grid, task, episodes,
                        cfg.mcts(cfg.eval_simulations), base_rng, mode=cfg.eval_mode,
                        seed=seed)
        rows.append({"run": cfg.run_id, "seed": seed, "variant": "random_builder",
                     "task": target_kind, "success_rate": base.success_rate,
                     "mean_len": base.mean_length})
        print(f"[{cfg.run_id}] seed {seed} transfer->{target_kind}: "
              f"guided {report.success_rate:.2f}, random {base.success_rate:.2f}", flush=True)
    write_summary(os.path.join(run_dir, "transfer_summary.csv"), rows)
    return rows
