import numpy as np
import pytest

from datasets.stage_world.constants import *
from datasets.stage_world.env import (EnvState, compute_reward, initial_state, make_registry, object_bounding_box,
                                      render, render_state, rollout, scripted_policy, segment_return, step)


def _task(task_id: str, seed: int = 0):
    return next(t for t in make_registry(seed) if t.task_id == task_id)


def test_registry_split():
    registry = make_registry(0)
    assert len(registry) == 72
    assert sum(t.split == "test" for t in registry) == 30
    assert sum(t.split == "train" for t in registry) == 42
    assert {t.family for t in registry if t.split == "test"} == set(test_families)


def test_registry_seeding():
    assert make_registry(0) == make_registry(0)
    a, b = make_registry(0), make_registry(1)
    assert [(t.family, t.object_color) for t in a] == [(t.family, t.object_color) for t in b]
    assert any(x.goal_params != y.goal_params for x, y in zip(a, b))


def test_reward_at_extremal_flags():
    assert compute_reward((0.5, 0.5), (0.5, 0.5), 1., True) == pytest.approx(1.9, abs=1e-12)


def test_step_reward_matches_formula():
    task = _task("push-red")
    state = initial_state(task, np.random.default_rng(3))
    action = np.array([0.4, -0.2, 0.3])
    next_state, reward = step(task, state, action)
    agent = np.clip(np.asarray(state.agent_pos) + max_step * action[:2], 0., 1.)
    dist = np.hypot(*(agent - np.asarray(next_state.object_pos)))
    expected = w_reach * (1. - dist) + w_act * next_state.object_actuation + success_bonus * next_state.stage_flags[1]
    assert reward == pytest.approx(expected, abs=1e-12)


def test_zero_action_only_advances_time():
    task = _task("press-red")
    state = initial_state(task, np.random.default_rng(0))
    next_state, _ = step(task, state, np.zeros(3))
    assert next_state._replace(t=state.t) == state
    assert next_state.t == state.t + 1


@pytest.mark.parametrize("action", [[1.5, 0., 0.], [0., 0., -1.01], [np.nan, 0., 0.]])
def test_step_rejects_invalid_actions(action):
    task = _task("press-red")
    with pytest.raises(ValueError):
        step(task, initial_state(task, np.random.default_rng(0)), action)


def test_expert_points_at_subgoal_without_noise():
    task = _task("press-red")
    target = np.asarray(task.anchor)
    state = EnvState((float(target[0]) - 0.01, float(target[1]) + 0.02), 0., tuple(task.anchor), 0., (False, False), 5)
    action = scripted_policy(task, state, "expert", np.random.default_rng(0), noise_scale=0.)
    direction = target - np.asarray(state.agent_pos)
    assert np.allclose(action[:2], direction / max_step)


def test_random_policy_is_reproducible():
    task = _task("press-red")
    state = initial_state(task, np.random.default_rng(0))
    a = [scripted_policy(task, state, "random", rng) for rng in [np.random.default_rng(7)] * 5]
    b = [scripted_policy(task, state, "random", rng) for rng in [np.random.default_rng(7)] * 5]
    assert np.array_equal(np.stack(a), np.stack(b))


def test_rollout_shapes_and_determinism():
    task = _task("push-red")
    traj = rollout(task, "expert", 0)
    assert traj.states.shape == (episode_length + 1, state_dim)
    assert traj.actions.shape == (episode_length, action_dim)
    assert len(traj.rewards) == episode_length
    again = rollout(task, "expert", 0)
    assert np.array_equal(traj.states, again.states) and np.array_equal(traj.rewards, again.rewards)


def test_stage_flags_are_monotone():
    task = _task("rotate-blue")
    for level in optimality_levels:
        flags = rollout(task, level, 1).states[:, 6:8]
        assert np.all(np.diff(flags, axis=0) >= 0)
        assert np.all(flags[:, 1] <= flags[:, 0])


@pytest.mark.parametrize("task_id", ["press-red", "close-slide-green", "pull-cyan"])
def test_expert_and_random_success_rates(task_id):
    task = _task(task_id)
    expert = np.mean([rollout(task, "expert", s).success for s in range(32)])
    random = np.mean([rollout(task, "random", s).success for s in range(32)])
    assert expert >= 0.9
    assert random <= 0.05


def test_optimality_ordering_of_returns():
    task = _task("lock-blue")
    means = {level: np.mean([rollout(task, level, s).episode_return for s in range(32)])
             for level in optimality_levels}
    gap = 0.2 * means["expert"]
    assert means["expert"] - means["medium"] >= gap
    assert means["medium"] - means["random"] >= gap


def test_medium_policy_idles_after_reaching():
    task = _task("open-slide-red")
    trajectories = [rollout(task, "medium", s) for s in range(200)]
    reached = np.mean([t.states[-1, 6] >= 0.5 for t in trajectories])
    actuated = np.mean([t.success for t in trajectories])
    assert reached >= 0.9
    assert actuated <= 0.1


def test_render_shape_and_determinism():
    task = _task("press-red")
    traj = rollout(task, "medium", 2)
    video = render(task, traj)
    assert video.shape == (episode_length + 1, frame_size, frame_size, 3)
    assert video.dtype == np.float32
    assert 0. <= video.min() and video.max() <= 1.
    assert np.array_equal(video, render(task, traj))


def _has_pure(frames: np.ndarray, color) -> bool:
    return bool(np.any(np.all(np.isclose(frames, color), axis=-1)))


def test_object_color_is_visible():
    red, blue = _task("press-red"), _task("press-blue")
    red_video = render(red, rollout(red, "expert", 0))
    blue_video = render(blue, rollout(blue, "expert", 0))
    assert _has_pure(red_video, object_colors["red"])
    assert not _has_pure(blue_video, object_colors["red"])


def test_color_change_is_confined_to_object_box():
    red = _task("press-red")
    blue = red._replace(object_color="blue", task_id="press-blue")
    state = rollout(red, "expert", 0).state(30)
    diff = np.any(render_state(red, state) != render_state(blue, state), axis=-1)
    r0, r1, c0, c1 = object_bounding_box(state)
    outside = diff.copy()
    outside[r0:r1 + 1, c0:c1 + 1] = False
    assert diff.any()
    assert not outside.any()


def test_actuation_changes_object_glyph():
    task = _task("press-red")
    traj = rollout(task, "expert", 0)
    first, last = traj.state(0), traj.state(len(traj))
    assert last.object_actuation > first.object_actuation
    assert not np.array_equal(render_state(task, first), render_state(task, last))


def test_segment_return():
    traj = rollout(_task("push-red"), "medium", 4)
    assert segment_return(traj, 3, 1) == traj.rewards[3]
    start, length = 10, 37
    expected = 0.
    for r in traj.rewards[start:start + length]:
        expected += float(r)
    assert segment_return(traj, start, length) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        segment_return(traj, 30, 40)
    with pytest.raises(ValueError):
        segment_return(traj, -1, 5)
