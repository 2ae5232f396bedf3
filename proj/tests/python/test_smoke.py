# Copyright 2026 the flowplan authors
# SPDX-License-Identifier: Apache-2.0
"""End-to-end smoke of the Python bindings on a tiny model."""

import math

import pytest

import flowplan as fp


def tiny_horizon():
    h = fp.HorizonConfig()
    h.past_steps = 5
    h.future_steps = 16
    h.max_neighbors = 2
    return h


def tiny_model_config():
    cfg = fp.ModelConfig()
    cfg.history = 5
    cfg.horizon = 16
    cfg.max_neighbors = 2
    cfg.point_hidden = 8
    cfg.token_dim = 16
    cfg.attn_heads = 2
    cfg.context_dim = 16
    cfg.time_embed_dim = 8
    cfg.cond_dim = 16
    cfg.unet_base = 8
    cfg.var_layers = 3
    cfg.var_hidden = 16
    return cfg


def make_scenes(first_seed, count):
    h = tiny_horizon()
    return [
        fp.generate_scene("straight-cruise", seed, horizon=h, num_neighbors=2)
        for seed in range(first_seed, first_seed + count)
    ]


def test_scenario_kinds():
    kinds = fp.scenario_kinds()
    assert len(kinds) == 7
    assert "two-goal-fork" in kinds
    with pytest.raises(ValueError):
        fp.generate_scene("warp-drive", 1)


def test_scene_shapes_and_roundtrip(tmp_path):
    scenes = make_scenes(100, 2)
    scene = scenes[0]
    assert len(scene.ego_history) == 5
    assert len(scene.ego_future) == 16
    assert len(scene.neighbor_valid) == 2
    assert all(math.isfinite(s.x) for s in scene.ego_future.states)

    path = tmp_path / "scenes.jsonl"
    fp.write_scenes(str(path), scenes, tiny_horizon())
    loaded = fp.read_scenes(str(path))
    assert loaded.horizon.future_steps == 16
    assert [s.scene_id for s in loaded.scenes] == [s.scene_id for s in scenes]
    got = loaded.scenes[0].ego_future.states[-1]
    want = scene.ego_future.states[-1]
    assert got.x == want.x and got.y == want.y


def test_fork_goals_disagree():
    a, b = fp.fork_goals(2, horizon=tiny_horizon())
    assert math.hypot(a.x - b.x, a.y - b.y) > 1.0


def trained_model():
    cfg = tiny_model_config()
    model = fp.Model(cfg, seed=1)
    tc = fp.TrainConfig()
    tc.batch_size = 4
    tc.total_steps = 8
    tc.eval_interval = 4
    tc.threads = 2
    tc.seed = 3
    report = fp.train(model, make_scenes(200, 6), make_scenes(300, 2), tc)
    return model, report


def test_train_plan_evaluate(tmp_path):
    model, report = trained_model()
    assert len(report.curve) == 8
    assert all(math.isfinite(row.flow_loss) for row in report.curve)
    assert math.isfinite(report.best_val_loss)

    scene = make_scenes(400, 1)[0]
    result = fp.plan(model, scene, euler_steps=5, adaptive=False, seed=7)
    assert result.stats.nfe == 5
    assert len(result.ego) == 16
    assert result.refined and result.refinement.iterations > 0
    assert result.refinement.after.goal_distance <= result.refinement.before.goal_distance

    again = fp.plan(model, scene, euler_steps=5, adaptive=False, seed=7)
    assert [s.x for s in again.ego.states] == [s.x for s in result.ego.states]

    adaptive = fp.plan(model, scene, seed=7)
    assert abs(sum(adaptive.stats.step_sizes) - 1.0) < 1e-9
    assert adaptive.stats.nfe == len(adaptive.stats.sigmas)

    summary = fp.evaluate_split([scene], [[result.ego, adaptive.ego]])
    assert summary.min_ade >= 0.0
    assert len(summary.rows) == 1 and summary.rows[0].scene_id == scene.scene_id

    ckpt = tmp_path / "model.ckpt"
    fp.save_checkpoint(str(ckpt), model)
    reloaded = fp.load_checkpoint(str(ckpt))
    replay = fp.plan(reloaded, scene, euler_steps=5, adaptive=False, seed=7)
    assert [s.x for s in replay.ego.states] == [s.x for s in result.ego.states]
