"""
Policy rollouts in the staged environment and the windowed success score of a training run.
"""
from abc import ABC, abstractmethod
from typing import List, Sequence

import numpy as np
import torch
from tqdm import tqdm

from datasets.stage_world.constants import action_dim, episode_length
from datasets.stage_world.env import EnvState, TaskSpec, initial_state, observations, scripted_policy, step
from models.rlhf.networks import GaussianPolicy
from torch_util import make_rng

default_episodes = 25
default_window = 8


class Policy(ABC):
    @abstractmethod
    def act(self, task: TaskSpec, states: Sequence[EnvState], rng: np.random.Generator) -> np.ndarray:
        """
        :return: actions (len(states), 3) in [-1, 1]
        """
        pass


class NetworkPolicy(Policy):
    """
    Mean action of a squashed Gaussian policy network.
    """

    def __init__(self, network: GaussianPolicy, device: torch.device = torch.device("cpu")):
        self.network = network
        self.device = device

    @torch.no_grad()
    def act(self, task: TaskSpec, states: Sequence[EnvState], rng: np.random.Generator) -> np.ndarray:
        self.network.eval()
        obs = observations(np.stack([s.to_vector() for s in states]))
        dtype = next(self.network.parameters()).dtype
        actions = self.network.deterministic(torch.as_tensor(obs, dtype=dtype, device=self.device))
        return np.clip(actions.double().cpu().numpy(), -1., 1.)


class ScriptedExpertPolicy(Policy):
    def act(self, task: TaskSpec, states: Sequence[EnvState], rng: np.random.Generator) -> np.ndarray:
        return np.stack([scripted_policy(task, s, "expert", rng) for s in states])


class RandomPolicy(Policy):
    def act(self, task: TaskSpec, states: Sequence[EnvState], rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1., 1., size=(len(states), action_dim))


def evaluate_policy(policy: Policy, task: TaskSpec, n_episodes: int = default_episodes, seed: int = 0,
                    length: int = episode_length, disable_logging: bool = True) -> float:
    """
    Roll out a policy for `n_episodes` episodes in parallel and count the episodes that complete the task.

    :return: success rate in [0, 1]
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be positive, got {n_episodes}")
    states = [initial_state(task, make_rng(seed, "evaluation", task.task_id, i)) for i in range(n_episodes)]
    rng = make_rng(seed, "evaluation-policy", task.task_id)
    for _ in tqdm(range(length), desc=f"Evaluating on {task.task_id}", disable=disable_logging, leave=False):
        actions = policy.act(task, states, rng)
        states = [step(task, s, a)[0] for s, a in zip(states, actions)]
    return float(np.mean([s.stage_flags[1] for s in states]))


def moving_average(values: Sequence[float], window: int = default_window) -> List[float]:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return [float(values.mean())] if len(values) else []
    return np.convolve(values, np.full(window, 1. / window), mode="valid").tolist()


def window_score(values: Sequence[float], window: int = default_window) -> float:
    """
    Maximum over the moving average of `window` neighboring evaluations. Runs with fewer evaluations than the window
    are scored by the mean of all of them.
    """
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    averages = moving_average(values, window)
    return max(averages) if averages else float("nan")
