"""End-to-end regression gates for the whole package.

Each test is one self-contained claim about the system, checked at full
scale with its runtime budget asserted alongside the property itself:

1.  backprop gradients match central differences on random networks
2.  the environment holds its invariants over 1e5 random steps and
    logged episodes replay to identical states
3.  behavioral cloning recovers a scripted deterministic policy
4.  tree search matches exhaustive plan enumeration on small worlds
5.  value-iteration greedy rollouts match optimal path lengths
6.  guided training beats both controls at the default configuration
    (plus the learning-curve trend that makes that credible)
7.  a protocol trained on grasp+place transfers to the line-building task
8.  builder updates are invariant to reward scaling
9.  repeated training runs produce byte-identical metrics

The heavy runs (6 and 7) train the full system and take tens of minutes
between them; everything else finishes in seconds to a couple of
minutes.
"""
import time

import numpy as np
import pytest

from gridguide.artifacts import run_experiment, run_transfer
from gridguide.cli import main
from gridguide.config import load_config_dict
from gridguide.env import (
    GridConfig,
    TaskSpec,
    observe,
    reset,
    step,
    task_success,
    validate_state,
)
from gridguide.evaluation import evaluate, replay_episode
from gridguide.nets import forward_logits, grad_check, init_params
from gridguide.oracles import (
    bfs_oracle,
    build_task_mdp,
    enumerate_plan_values,
    greedy_episode_length,
    greedy_policy,
    value_iteration,
)
from gridguide.planner import MctsConfig, mcts_plan
from gridguide.policies import BcHyper, RandomBuilder, encode_dataset, fit_builder_model
from gridguide.training import StepRecord, TrainConfig, hash_params, train_guided

from test_planner import ScriptedModel


def test_gradients_match_central_differences():
    # 100 random (network, batch) draws, worst relative error below 1e-4.
    # Biases get small noise so no preactivation sits exactly on a ReLU
    # kink, where central differences are invalid by construction.
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng(1000 + i)
        in_dim = int(rng.integers(3, 13))
        n_out = int(rng.integers(2, 6))
        depth = int(rng.integers(1, 3))
        hidden = [int(rng.integers(3, 9)) for _ in range(depth)]
        params = init_params(rng, in_dim, n_out, hidden)
        for b in params.biases:
            b += rng.normal(0.0, 0.1, b.shape)
        batch = int(rng.integers(1, 5))
        X = rng.normal(size=(batch, in_dim))
        y = rng.integers(0, n_out, size=batch)
        worst = max(worst, grad_check(params, X, y))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-4, f"worst relative gradient error {worst:.3e}"
    assert elapsed < 10.0, f"gradient check took {elapsed:.1f}s"


def test_environment_invariants_and_replay():
    # 1e5 random steps across random configurations, every state valid.
    rng = np.random.default_rng(7)
    task = TaskSpec("grasp")
    steps_taken = 0
    while steps_taken < 100_000:
        width = int(rng.integers(3, 7))
        height = int(rng.integers(3, 7))
        n_blocks = int(rng.integers(1, min(4, width * height - 1)))
        config = GridConfig(width, height, n_blocks, int(rng.integers(20, 61)))
        state = reset(config, task, rng)
        validate_state(state, config)
        while state.t < config.horizon and steps_taken < 100_000:
            prev = state
            state = step(state, int(rng.integers(0, 6)), config)
            validate_state(state, config)
            assert state.t == prev.t + 1
            steps_taken += 1
    # determinism: logged episodes replay to identical states
    config = GridConfig(5, 5, 2, 40)
    log = []
    evaluate(None, RandomBuilder(4), config, task, 50, MctsConfig(simulations=1),
             np.random.default_rng(11), log=log)
    assert len(log) == 50
    for entry in log:
        assert replay_episode(entry, config)


def test_cloning_recovers_scripted_policy():
    # 2000 tuples from a deterministic scripted builder, >= 99% argmax
    # accuracy after a standard fit.
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    config = GridConfig(4, 4, 1, 40)
    task = TaskSpec("grasp")
    scripted = ScriptedModel(vocab_size=4)
    records = []
    state = reset(config, task, rng)
    while len(records) < 2000:
        if state.t >= config.horizon or task_success(state, task):
            state = reset(config, task, rng)
        msg = int(rng.integers(0, 4))
        action = scripted.argmax(state, msg)
        records.append(StepRecord(observe(state, config), msg, action, "uniform"))
        state = step(state, action, config)
    model, _ = fit_builder_model(records, config, 4, BcHyper(epochs=50), rng)
    X, y = encode_dataset(records, 4)
    accuracy = float(np.mean(np.argmax(forward_logits(model.params, X), axis=1) == y))
    elapsed = time.perf_counter() - t0
    assert accuracy >= 0.99, f"cloning accuracy {accuracy:.4f}"
    assert elapsed < 30.0, f"cloning test took {elapsed:.1f}s"


def test_planner_matches_exhaustive_enumeration():
    # 50 random 4x4 states, 20000 simulations: the chosen root message
    # must carry the same depth-6 enumeration value as the optimum in at
    # least 48 of 50 (exact float equality, both sides enumerated).
    t0 = time.perf_counter()
    rng = np.random.default_rng(17)
    config = GridConfig(4, 4, 1, 40)
    task = TaskSpec("grasp")
    model = ScriptedModel(vocab_size=4)
    cfg = MctsConfig(simulations=20_000, max_depth=6, uct_c=1.4, gamma=0.95,
                     builder_mode="argmax")
    matches = 0
    for _ in range(50):
        state = reset(config, task, rng)
        values = enumerate_plan_values(state, task, model, config, 6, cfg.gamma)
        chosen = mcts_plan(state, task, model, config, cfg, rng)
        matches += values[chosen] == values.max()
    elapsed = time.perf_counter() - t0
    assert matches >= 48, f"planner matched enumeration on {matches}/50 states"
    assert elapsed < 120.0, f"planner comparison took {elapsed:.1f}s"


def test_value_iteration_matches_bfs_lengths():
    # greedy rollouts from the value function reach success in exactly
    # the breadth-first optimal number of steps, 20 random instances.
    rng = np.random.default_rng(23)
    config = GridConfig(3, 3, 1, 40)
    task = TaskSpec("grasp")
    mdp = build_task_mdp(config, task)
    v = value_iteration(mdp, 0.95)
    policy = greedy_policy(mdp, v, 0.95)
    for _ in range(20):
        state = reset(config, task, rng)
        optimal = bfs_oracle(state, task, config)
        greedy = greedy_episode_length(mdp, policy, state.core(), cap=config.horizon)
        assert greedy == optimal, f"greedy {greedy} vs optimal {optimal} from {state}"


def test_builder_updates_ignore_reward_scale():
    # multiplying every reward by 7 must leave the entire sequence of
    # builder parameters bit-identical: the builder never sees reward,
    # and the planner normalizes returns by the scale.
    def run(scale):
        cfg = TrainConfig(
            env=GridConfig(5, 5, 1, 40),
            task=TaskSpec("grasp", reward_scale=scale),
            vocab_size=6,
            n_iterations=4,
            n_collect=20,
            model_bc=BcHyper(epochs=25),
            builder_bc=BcHyper(epochs=25),
            mcts=MctsConfig(simulations=64, builder_mode="argmax"),
            seed=3,
        )
        return train_guided(cfg)

    base, scaled = run(1.0), run(7.0)
    assert [m.builder_hash for m in base.metrics] == [m.builder_hash for m in scaled.metrics]
    assert hash_params(base.builder) == hash_params(scaled.builder)
    assert [m.model_hash for m in base.metrics] == [m.model_hash for m in scaled.metrics]


def test_repeated_training_runs_are_byte_identical(tmp_path):
    # the same config and seed through the full train command twice
    # produces byte-identical metrics files.
    config_file = tmp_path / "config.yaml"
    config_file.write_text(
        "task: grasp\n"
        "vocab_size: 4\n"
        "n_iterations: 2\n"
        "n_collect: 10\n"
        "model_epochs: 10\n"
        "builder_epochs: 10\n"
        "mcts_simulations: 32\n"
        "eval_simulations: 32\n"
        "eval_episodes: 10\n"
    )
    outs = [tmp_path / "first", tmp_path / "second"]
    for out in outs:
        assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    first = (outs[0] / "metrics.jsonl").read_bytes()
    second = (outs[1] / "metrics.jsonl").read_bytes()
    assert first == second


@pytest.fixture(scope="module")
def ablation_run(tmp_path_factory):
    # the expensive shared run behind the ordering and trend tests:
    # default configuration, 5 seeds, all three variants.
    out = tmp_path_factory.mktemp("ablation")
    cfg = load_config_dict({
        "seeds": [0, 1, 2, 3, 4],
        "out_dir": str(out),
        "run_id": "ablation",
        "log_episodes": False,
    })
    t0 = time.perf_counter()
    result = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    return result, elapsed


def _median_success(rows, variant):
    vals = [float(r["success_rate"]) for r in rows if r["variant"] == variant]
    assert len(vals) == 5
    return float(np.median(vals))


def test_guided_training_beats_both_controls(ablation_run):
    # median final success over 5 seeds: guided training strictly above
    # the random-message control, which sits strictly above the
    # untrained random builder; guided itself reaches 0.9.
    result, elapsed = ablation_run
    guided = _median_success(result.summary_rows, "guided")
    random_messages = _median_success(result.summary_rows, "random_messages")
    random_builder = _median_success(result.summary_rows, "random_builder")
    assert elapsed < 1800.0, f"ablation run took {elapsed / 60:.1f} min"
    assert guided > random_messages > random_builder, (
        f"median ordering violated: guided {guided:.3f}, "
        f"random_messages {random_messages:.3f}, random_builder {random_builder:.3f}")
    # the absolute bar is last so a miss cannot mask ordering or runtime
    # regressions; at the shipped search budget the guided median tops out
    # at 0.82 (see README), so this final assertion is expected to fail.
    assert guided >= 0.9, f"guided median success {guided:.3f}"


def test_guiding_success_improves_over_iterations(ablation_run):
    # the protocol is learned during the run: final-iteration guiding
    # success beats first-iteration success on at least 4 of 5 seeds.
    result, _ = ablation_run
    improved = 0
    for seed in range(5):
        curve = [r["success_rate"] for r in result.metrics_rows
                 if r["variant"] == "guided" and r["seed"] == seed
                 and r["frame"] == "guiding"]
        assert len(curve) == 10
        improved += curve[-1] > curve[0]
    assert improved >= 4, f"guiding success improved on only {improved}/5 seeds"


def test_protocol_transfers_to_harder_task(tmp_path_factory):
    # train on grasp then place in a two-block world, freeze everything,
    # and guide the same builder through the unseen line-building task:
    # median success must be at least three times the random-builder
    # baseline on the identical instance.
    out = tmp_path_factory.mktemp("transfer")
    cfg = load_config_dict({
        "n_blocks": 2,
        "curriculum": ["grasp", "place"],
        "transfer_target": "hline",
        "transfer_episodes": 100,
        "seeds": [0, 1, 2, 3, 4],
        "variants": ["guided"],
        "out_dir": str(out),
        "run_id": "transfer",
        "log_episodes": False,
    })
    run_experiment(cfg)
    rows = run_transfer(str(out))
    guided = [float(r["success_rate"]) for r in rows if r["variant"] == "guided_transfer"]
    baseline = [float(r["success_rate"]) for r in rows if r["variant"] == "random_builder"]
    assert len(guided) == len(baseline) == 5
    med_guided = float(np.median(guided))
    med_baseline = float(np.median(baseline))
    assert med_guided > 0.0
    assert med_guided >= 3.0 * med_baseline, (
        f"transfer median {med_guided:.3f} vs 3x baseline {3.0 * med_baseline:.3f}")
