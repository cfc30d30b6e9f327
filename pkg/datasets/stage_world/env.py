"""
StageWorld: a synthetic two-stage manipulation environment.

An agent moves a gripper over the unit square, first reaching an object (stage 0) and then actuating it by
dragging along the object's actuation lane with a closed gripper (stage 1). Trajectories are rendered into small
RGB videos that serve as the preference model's input.
"""
import math
import zlib
from typing import List, NamedTuple, Optional, Sequence, Tuple

import cv2
import numpy as np

from datasets.stage_world.constants import *


class TaskSpec(NamedTuple):
    task_id: str
    family: str
    object_color: str
    stage_count: int
    goal_params: Tuple[float, ...]
    split: str

    @property
    def anchor(self) -> np.ndarray:
        return np.array(self.goal_params[0:2])

    @property
    def target(self) -> np.ndarray:
        return np.array(self.goal_params[2:4])

    @property
    def direction(self) -> np.ndarray:
        return np.array(self.goal_params[4:6])

    @property
    def moving(self) -> bool:
        return self.family in moving_families

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "family": self.family,
            "object_color": self.object_color,
            "stage_count": self.stage_count,
            "goal_params": list(self.goal_params),
            "split": self.split
        }

    @staticmethod
    def from_dict(d: dict) -> "TaskSpec":
        return TaskSpec(d["task_id"], d["family"], d["object_color"], int(d["stage_count"]),
                        tuple(float(x) for x in d["goal_params"]), d["split"])


class EnvState(NamedTuple):
    agent_pos: Tuple[float, float]
    gripper: float
    object_pos: Tuple[float, float]
    object_actuation: float
    stage_flags: Tuple[bool, bool]
    t: int

    def to_vector(self) -> np.ndarray:
        return np.array([*self.agent_pos, self.gripper, *self.object_pos, self.object_actuation,
                         float(self.stage_flags[0]), float(self.stage_flags[1]), float(self.t)], dtype=np.float64)

    @staticmethod
    def from_vector(v: Sequence[float]) -> "EnvState":
        v = [float(x) for x in v]
        return EnvState((v[0], v[1]), v[2], (v[3], v[4]), v[5], (v[6] >= 0.5, v[7] >= 0.5), int(round(v[8])))


class Trajectory:
    """
    A single episode. States are stored as a (T + 1, state_dim) array using the layout of `state_fields`.
    """

    def __init__(self, task_id: str, optimality: str, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
                 seed: Optional[int] = None):
        if len(actions) != len(rewards) or len(states) != len(actions) + 1:
            raise ValueError(f"Inconsistent trajectory lengths: {len(states)} states, {len(actions)} actions, "
                             f"{len(rewards)} rewards")
        self.task_id = task_id
        self.optimality = optimality
        self.states = np.asarray(states)
        self.actions = np.asarray(actions)
        self.rewards = np.asarray(rewards)
        self.seed = seed

    def __len__(self):
        return len(self.actions)

    def state(self, i: int) -> EnvState:
        return EnvState.from_vector(self.states[i])

    @property
    def success(self) -> bool:
        return bool(self.states[-1, 7] >= 0.5)

    @property
    def episode_return(self) -> float:
        return float(np.sum(self.rewards, dtype=np.float64))


def _direction(angle_deg: float) -> np.ndarray:
    rad = math.radians(angle_deg)
    return np.array([math.cos(rad), math.sin(rad)])


def make_registry(seed: int) -> List[TaskSpec]:
    """
    Create the task registry: every (family, color) combination with seeded goal geometry.
    The set of task ids does not depend on the seed, only the goal parameters do.

    :param seed: registry seed
    :return: list of tasks, ordered by family and then by color
    """
    rng = np.random.default_rng(seed)
    registry = []
    for family in task_families:
        split = "test" if family in test_families else "train"
        for color in object_colors:
            anchor = rng.uniform(*anchor_range, size=2)
            angle = actuation_angles[family] + rng.uniform(-angle_jitter, angle_jitter)
            direction = _direction(angle)
            target = anchor + travel_distance * direction
            goal_params = tuple(float(x) for x in (*anchor, *target, *direction))
            registry.append(TaskSpec(f"{family}-{color}", family, color, stage_count, goal_params, split))
    return registry


def initial_state(task: TaskSpec, rng: np.random.Generator) -> EnvState:
    agent = np.array(home_position) + rng.uniform(-home_jitter, home_jitter, size=2)
    return EnvState((float(agent[0]), float(agent[1])), 0., tuple(float(x) for x in task.anchor), 0., (False, False),
                    0)


def compute_reward(agent_pos: Sequence[float], object_pos: Sequence[float], actuation: float, success: bool) -> float:
    dist = float(np.linalg.norm(np.asarray(agent_pos) - np.asarray(object_pos)))
    return w_reach * (1. - dist) + w_act * actuation + success_bonus * float(success)


def step(task: TaskSpec, state: EnvState, action: Sequence[float]) -> Tuple[EnvState, float]:
    """
    Advance the environment by one timestep.

    :param task: task specification
    :param state: current state
    :param action: (dx, dy, grip) with every component in [-1, 1]
    :return: tuple (next state, reward)
    """
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (action_dim,):
        raise ValueError(f"Action must have shape ({action_dim},), got {action.shape}")
    if not np.all(np.isfinite(action)) or np.any(np.abs(action) > 1.):
        raise ValueError(f"Action components must be finite and in [-1, 1], got {action.tolist()}")

    agent = np.clip(np.asarray(state.agent_pos) + max_step * action[:2], 0., 1.)
    gripper = float(np.clip(state.gripper + grip_rate * action[2], 0., 1.))
    reached = state.stage_flags[0] or float(np.linalg.norm(agent - np.asarray(state.object_pos))) < reach_radius

    actuation = state.object_actuation
    if reached and gripper >= grip_threshold:
        offset = agent - task.anchor
        proj = float(offset @ task.direction)
        perp = float(np.linalg.norm(offset - proj * task.direction))
        if perp <= lane_width and proj >= -reach_radius:
            actuation = max(actuation, float(np.clip(proj / travel_distance, 0., 1.)))
    actuated = state.stage_flags[1] or actuation >= 1.

    if task.moving:
        object_pos = np.clip(task.anchor + actuation * travel_distance * task.direction, 0., 1.)
    else:
        object_pos = np.asarray(state.object_pos)

    next_state = EnvState((float(agent[0]), float(agent[1])), gripper, (float(object_pos[0]), float(object_pos[1])),
                          actuation, (bool(reached), bool(actuated)), state.t + 1)
    return next_state, compute_reward(agent, object_pos, actuation, actuated)


def subgoal(task: TaskSpec, state: EnvState) -> np.ndarray:
    if not state.stage_flags[0]:
        return np.asarray(state.object_pos)
    return task.anchor + (travel_distance + subgoal_overshoot) * task.direction


def scripted_policy(task: TaskSpec, state: EnvState, level: str, rng: np.random.Generator,
                    noise_scale: Optional[float] = None) -> np.ndarray:
    """
    Scripted controller at one of three optimality levels.

    :param task: task specification
    :param state: current state
    :param level: expert, medium or random
    :param rng: random generator used for the policy noise
    :param noise_scale: overrides the level's Gaussian noise standard deviation
    :return: action in [-1, 1]^3
    """
    if level not in optimality_levels:
        raise ValueError(f"Unknown optimality level '{level}', expected one of {optimality_levels}")
    if level == "random":
        return rng.uniform(-1., 1., size=action_dim)
    if level == "medium" and state.stage_flags[0]:
        return np.zeros(action_dim)

    move = (subgoal(task, state) - np.asarray(state.agent_pos)) / max_step
    largest = np.max(np.abs(move))
    if largest > 1.:
        move = move / largest
    grip = 1. if state.stage_flags[0] else -1.
    action = np.array([move[0], move[1], grip])

    sigma = policy_noise[level] if noise_scale is None else noise_scale
    if sigma > 0:
        action = action + rng.normal(0., sigma, size=action_dim)
    return np.clip(action, -1., 1.)


def rollout_seed(task_id: str, level: str, seed: int) -> List[int]:
    return [int(seed), zlib.crc32(task_id.encode("utf-8")), optimality_levels.index(level)]


def rollout(task: TaskSpec, level: str, seed: int, length: int = episode_length) -> Trajectory:
    """
    Run the scripted policy for a fixed number of steps.
    """
    rng = np.random.default_rng(rollout_seed(task.task_id, level, seed))
    state = initial_state(task, rng)
    states = [state.to_vector()]
    actions = []
    rewards = []
    for _ in range(length):
        action = scripted_policy(task, state, level, rng)
        state, reward = step(task, state, action)
        states.append(state.to_vector())
        actions.append(action)
        rewards.append(reward)
    return Trajectory(task.task_id, level, np.stack(states), np.stack(actions), np.array(rewards), seed=seed)


def to_pixel(pos: Sequence[float], size: int = frame_size) -> Tuple[int, int]:
    """
    Map a stage position to (column, row) pixel coordinates. The y axis points up.
    """
    col = int(round(float(pos[0]) * (size - 1)))
    row = int(round((1. - float(pos[1])) * (size - 1)))
    return col, row


def object_bounding_box(state: EnvState, size: int = frame_size) -> Tuple[int, int, int, int]:
    """
    :return: (row_min, row_max, col_min, col_max), inclusive and clipped to the frame
    """
    col, row = to_pixel(state.object_pos, size)
    h = object_half_size
    return max(row - h, 0), min(row + h, size - 1), max(col - h, 0), min(col + h, size - 1)


def render_state(task: TaskSpec, state: EnvState, size: int = frame_size) -> np.ndarray:
    """
    Draw a single frame: background, goal cross, object glyph, agent glyph (in this order).

    :return: float32 image of shape (size, size, 3) with values in [0, 1]
    """
    frame = np.empty((size, size, 3), dtype=np.float32)
    frame[:] = background_color

    gc, gr = to_pixel(task.target, size)
    cv2.line(frame, (gc - 1, gr), (gc + 1, gr), goal_color, 1)
    cv2.line(frame, (gc, gr - 1), (gc, gr + 1), goal_color, 1)

    color = object_colors[task.object_color]
    dim = tuple(c * object_dim_factor for c in color)
    oc, orow = to_pixel(state.object_pos, size)
    h = object_half_size
    cv2.rectangle(frame, (oc - h, orow - h), (oc + h, orow + h), dim, -1)
    cv2.rectangle(frame, (oc - h, orow - h), (oc + h, orow + h), color, 1)
    # The interior fills up from the bottom with actuation progress
    inner = 2 * h - 1
    filled = int(round(float(np.clip(state.object_actuation, 0., 1.)) * inner))
    if filled > 0:
        cv2.rectangle(frame, (oc - h + 1, orow + h - filled), (oc + h - 1, orow + h - 1), color, -1)

    ac, ar = to_pixel(state.agent_pos, size)
    cv2.rectangle(frame, (ac - 1, ar - 1), (ac + 1, ar + 1), agent_color, -1)
    if state.gripper < grip_threshold and 0 <= ar < size and 0 <= ac < size:
        frame[ar, ac] = background_color

    return frame


def render(task: TaskSpec, traj: Trajectory, size: int = frame_size) -> np.ndarray:
    """
    Render every state of a trajectory.

    :return: float32 video of shape (len(traj) + 1, size, size, 3)
    """
    if traj.task_id != task.task_id:
        raise ValueError(f"Trajectory of task '{traj.task_id}' cannot be rendered with task '{task.task_id}'")
    return np.stack([render_state(task, traj.state(i), size) for i in range(len(traj.states))])


def segment_return(traj: Trajectory, start: int, length: int) -> float:
    """
    Sum of ground-truth rewards over rewards[start:start + length].
    """
    if int(start) != start or int(length) != length:
        raise ValueError("Segment start and length must be integers")
    if start < 0 or length < 1 or start + length > len(traj.rewards):
        raise ValueError(f"Segment [{start}, {start + length}) is outside of a trajectory with "
                         f"{len(traj.rewards)} rewards")
    return float(np.sum(traj.rewards[start:start + length], dtype=np.float64))


def observations(states: np.ndarray) -> np.ndarray:
    """
    Policy observations: the state vector with the timestep normalized by the episode length.
    """
    obs = np.array(states, dtype=np.float32, copy=True)
    obs[..., -1] /= episode_length
    return obs
