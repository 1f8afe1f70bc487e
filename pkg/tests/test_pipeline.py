import dataclasses
import math

import numpy as np
import pytest

from pifo.envs.demo_io import DemoSet, read_demos
from pifo.errors import ConfigError, EvaluationError
from pifo.nn.checkpoint import encode, load_checkpoint, save_checkpoint
from pifo.pipeline import evaluate, imitate, normalized_score, read_metrics, record_demos, train_expert
from pifo.pipeline import training
from pifo.pipeline.agents import bundle, fresh_discriminator, fresh_policy, fresh_value, policy_from_params
from pifo.pipeline.evaluate import evaluate_policy
from pifo.pipeline.runs import METRIC_FIELDS
from pifo.rl.config import TrainConfig, load_config

TINY = TrainConfig(rollout_steps=128, minibatch=64, ppo_epochs=1, disc_minibatch=32, disc_epochs=1,
                   iterations=2, eval_every=1, eval_episodes=2, checkpoint_every=1)


def untrained_checkpoint(env_id, path, seed=99):
    params = bundle(env_id, "proprio", fresh_policy(env_id, "proprio", seed).params,
                    fresh_value(env_id, "proprio", seed).params)
    save_checkpoint(params, path)
    return path


@pytest.fixture(scope="module")
def cartpole_demos(tmp_path_factory):
    d = tmp_path_factory.mktemp("demos")
    ck = untrained_checkpoint("cartpole-balance", d / "expert.pifo")
    return record_demos(ck, "cartpole-balance", 3, True, 0, d / "cp.demo"), ck, d / "cp.demo"


def test_normalized_score_examples():
    assert normalized_score(7.0, 2.0, 7.0) == 1.0
    assert normalized_score(2.0, 2.0, 7.0) == 0.0
    assert normalized_score(4.5, 2.0, 7.0) == 0.5
    assert normalized_score(12.0, 2.0, 7.0) == 2.0  # not clamped
    with pytest.raises(EvaluationError):
        normalized_score(1.0, 3.0, 3.0)


def test_record_demos_file_and_bounds(cartpole_demos, tmp_path):
    demos, ck, path = cartpole_demos
    assert len(demos.trajectories) == 3
    assert all(1 <= len(t) <= 200 for t in demos.trajectories)
    back = read_demos(path)
    for a, b in zip(demos.trajectories, back.trajectories):
        np.testing.assert_array_equal(a, b)
    one = record_demos(ck, "cartpole-balance", 1, False, 4, tmp_path / "one.demo")
    assert len(read_demos(tmp_path / "one.demo").trajectories) == 1
    assert len(one.trajectories[0]) <= 200


def test_record_demos_first_frame_is_reset_render(cartpole_demos):
    from pifo.envs.core import reset
    from pifo.envs.render import render_mask
    from pifo.seeding import derive_seed
    demos, _, _ = cartpole_demos
    s0 = reset("cartpole-balance", derive_seed(0, "demo-reset", 0))
    np.testing.assert_array_equal(demos.trajectories[0][0], render_mask("cartpole-balance", s0))


def test_record_demos_env_mismatch(cartpole_demos, tmp_path):
    _, ck, _ = cartpole_demos
    with pytest.raises(ConfigError, match="cartpole-balance"):
        record_demos(ck, "point-mass", 1, True, 0, tmp_path / "x.demo")
    with pytest.raises(ConfigError):
        record_demos(ck, "cartpole-balance", 0, True, 0)


def test_demoset_holds_frames_only():
    assert [f.name for f in dataclasses.fields(DemoSet)] == ["env_id", "trajectories"]


def test_evaluate_self_and_fresh(tmp_path):
    ck = untrained_checkpoint("point-mass", tmp_path / "e.pifo", seed=5)
    assert evaluate(ck, "point-mass", 4, ck, 3).normalized_score == 1.0
    fresh = bundle("point-mass", "proprio", fresh_policy("point-mass", "proprio", 3).params)
    save_checkpoint(fresh, tmp_path / "f.pifo")
    ev = evaluate(tmp_path / "f.pifo", "point-mass", 4, ck, 3)
    assert ev.normalized_score == 0.0
    assert ev.std_error > 0.0
    with pytest.raises(EvaluationError):
        evaluate_policy(policy_from_params(load_checkpoint(ck)), "point-mass", 1, 0)


def test_std_error_shrinks_like_inverse_sqrt():
    policy = fresh_policy("point-mass", "proprio", 1)
    ratios = []
    for s in range(3):
        small = evaluate_policy(policy, "point-mass", 40, 100 + s).std_error
        big = evaluate_policy(policy, "point-mass", 160, 200 + s).std_error
        ratios.append(big / small)
    assert 0.3 < np.mean(ratios) < 0.75


def test_train_expert_zero_iterations_is_init(tmp_path):
    rec = train_expert("point-mass", TINY.with_overrides(iterations=0), run_dir=tmp_path / "run")
    init = bundle("point-mass", "proprio", fresh_policy("point-mass", "proprio", 0).params,
                  fresh_value("point-mass", "proprio", 0).params)
    assert encode(load_checkpoint(tmp_path / "run/checkpoints/best.pifo")) == encode(init)
    assert rec.rows == []
    assert (tmp_path / "run/metrics.csv").read_text() == ",".join(METRIC_FIELDS) + "\n"


def test_train_expert_rows_and_nan_columns(tmp_path):
    rec = train_expert("cartpole-balance", TINY, run_dir=tmp_path / "run")
    rows = read_metrics(tmp_path / "run/metrics.csv")
    assert [r.iteration for r in rows] == [1, 2]
    assert all(math.isnan(r.disc_loss) and math.isnan(r.normalized_score) for r in rows)
    assert all(math.isfinite(r.policy_loss) for r in rows)
    assert (tmp_path / "run/checkpoints/iter_000002.pifo").exists()
    assert load_config(tmp_path / "run/config.txt") == TINY
    assert rec.best_path.exists()


def test_imitate_zero_iterations(cartpole_demos, tmp_path):
    demos, expert, _ = cartpole_demos
    rec = imitate(demos, "cartpole-balance", "proprio", TINY.with_overrides(iterations=0),
                  run_dir=tmp_path / "run")
    assert rec.rows == []
    init = bundle("cartpole-balance", "proprio", fresh_policy("cartpole-balance", "proprio", 0).params,
                  fresh_value("cartpole-balance", "proprio", 0).params, fresh_discriminator(0).params)
    final = load_checkpoint(tmp_path / "run/checkpoints/final.pifo")
    assert encode(final) == encode(init)
    assert evaluate(tmp_path / "run/checkpoints/final.pifo", "cartpole-balance", 4, expert, 0
                    ).normalized_score == 0.0


def test_imitate_rows_and_determinism(cartpole_demos, tmp_path):
    demos, _, _ = cartpole_demos
    outs = []
    for k in range(2):
        rec = imitate(demos, "cartpole-balance", "proprio", TINY, run_dir=tmp_path / f"r{k}",
                      expert_return=150.0)
        assert len(rec.rows) == 2
        outs.append(((tmp_path / f"r{k}/metrics.csv").read_bytes(),
                     (tmp_path / f"r{k}/checkpoints/final.pifo").read_bytes()))
    assert outs[0] == outs[1]
    rows = read_metrics(tmp_path / "r0/metrics.csv")
    for r in rows:
        assert 0 < r.mean_D_imitator < 1 and 0 < r.mean_D_expert < 1
        assert math.isfinite(r.normalized_score)
        assert r.wall_clock_s == 0.0


def test_imitate_rerun_from_config_file(cartpole_demos, tmp_path):
    demos, _, _ = cartpole_demos
    cfg = TINY.with_overrides(seed=3, iterations=1)
    imitate(demos, "cartpole-balance", "proprio", cfg, run_dir=tmp_path / "a")
    again = load_config(tmp_path / "a/config.txt")
    imitate(demos, "cartpole-balance", "proprio", again, run_dir=tmp_path / "b")
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_imitate_validates_inputs(cartpole_demos):
    demos, _, _ = cartpole_demos
    with pytest.raises(ConfigError):
        imitate(demos, "point-mass", "proprio", TINY)
    with pytest.raises(ConfigError):
        imitate(demos, "cartpole-balance", "visual", TINY)


def test_non_finite_reward_aborts_iteration_and_continues(cartpole_demos, tmp_path, monkeypatch):
    demos, _, _ = cartpole_demos
    calls = {"n": 0}
    real = training.reward_from_discriminator

    def flaky(disc, stacks):
        calls["n"] += 1
        r = real(disc, stacks)
        if calls["n"] == 1:
            r[5] = np.nan
        return r

    monkeypatch.setattr(training, "reward_from_discriminator", flaky)
    rec = imitate(demos, "cartpole-balance", "proprio", TINY, run_dir=tmp_path / "run")
    assert [r.aborted for r in rec.rows] == [True, False]
    text = (tmp_path / "run/metrics.csv").read_text().splitlines()
    assert "aborted" in text[1] and "aborted" not in text[2]
    rows = read_metrics(tmp_path / "run/metrics.csv")
    assert rows[0].aborted and math.isnan(rows[0].disc_loss)


def test_vision_imitation_runs(cartpole_demos, tmp_path):
    demos, _, _ = cartpole_demos
    rec = imitate(demos, "cartpole-balance", "vision", TINY.with_overrides(iterations=1),
                  run_dir=tmp_path / "v")
    assert len(rec.rows) == 1
    ck = load_checkpoint(tmp_path / "v/checkpoints/final.pifo")
    assert "policy/conv0/weight" in ck and "meta/kind/vision" in ck
    assert policy_from_params(ck, "cartpole-balance").kind == "vision"
