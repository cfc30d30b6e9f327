"""
Implicit Q-learning on an offline dataset: expectile regression of V on the target Q, TD regression of twin Q
networks against r + discount * V(s'), and advantage-weighted extraction of a Gaussian policy.
"""
import copy
from typing import Callable, List, NamedTuple, Optional, Tuple

import torch
import torch.nn.functional as F

from datasets.stage_world.env import TaskSpec
from models.rlhf.networks import GaussianPolicy, QNetwork, RewardModel, ValueNetwork
from progress import wrap_info
from rlhf.evaluation import NetworkPolicy, default_episodes, default_window, evaluate_policy, window_score
from rlhf.offline_dataset import OfflineDataset
from rlhf.reward_learning import reward_function
from torch_util import make_rng
from util.errors import DivergenceError


class IQLConfig(NamedTuple):
    discount: float = 0.99
    expectile: float = 0.7
    temperature: float = 0.3333
    target_update_rate: float = 0.005
    max_weight: float = 100.
    batch_size: int = 64
    steps: int = 100000
    lr: float = 3e-4
    hidden_sizes: Tuple[int, ...] = (256, 256)
    dropout: float = 0.25
    eval_interval: int = 5000
    eval_episodes: int = default_episodes
    eval_window: int = default_window
    seed: int = 0

    def validate(self):
        if not 0. < self.expectile < 1.:
            raise ValueError(f"expectile must be in (0, 1), got {self.expectile}")
        if not 0. <= self.discount <= 1.:
            raise ValueError(f"discount must be in [0, 1], got {self.discount}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.steps < 1 or self.batch_size < 1 or self.eval_interval < 1:
            raise ValueError("steps, batch_size and eval_interval must be positive")


class PolicyResult(NamedTuple):
    policy: GaussianPolicy
    evaluations: List[Tuple[int, float]]  # (step, success rate)
    losses: List[dict]
    window: int = default_window

    @property
    def score(self) -> float:
        return window_score([s for _, s in self.evaluations], self.window) if self.evaluations else float("nan")


def expectile_loss(u: torch.Tensor, expectile: float = 0.7) -> torch.Tensor:
    """
    Asymmetric squared loss |expectile - 1[u < 0]| * u^2, element-wise.
    """
    weight = torch.abs(expectile - (u < 0).to(u.dtype))
    return weight * u ** 2


def polyak_update(target: torch.nn.Module, source: torch.nn.Module, rate: float):
    with torch.no_grad():
        for t, s in zip(target.parameters(), source.parameters()):
            t.mul_(1. - rate).add_(s, alpha=rate)


class IQL:
    def __init__(self, observation_dim: int, action_dim: int, config: IQLConfig,
                 device: torch.device = torch.device("cpu"), dtype: torch.dtype = torch.float32):
        torch.manual_seed(config.seed)
        self.config = config
        self.device = device
        self.q = QNetwork(observation_dim, action_dim, config.hidden_sizes).to(device=device, dtype=dtype)
        self.q_target = copy.deepcopy(self.q).requires_grad_(False)
        self.value = ValueNetwork(observation_dim, config.hidden_sizes).to(device=device, dtype=dtype)
        self.policy = GaussianPolicy(observation_dim, action_dim, config.hidden_sizes, config.dropout)
        self.policy = self.policy.to(device=device, dtype=dtype)
        self.q_optimizer = torch.optim.Adam(self.q.parameters(), lr=config.lr)
        self.value_optimizer = torch.optim.Adam(self.value.parameters(), lr=config.lr)
        self.policy_optimizer = torch.optim.Adam(self.policy.parameters(), lr=config.lr)
        self.dtype = dtype

    def update(self, batch: dict, step: int) -> dict:
        obs = batch["observations"].to(self.dtype)
        actions = batch["actions"].to(self.dtype)
        next_obs = batch["next_observations"].to(self.dtype)
        rewards = batch["rewards"].to(self.dtype)
        dones = batch["dones"].to(self.dtype)

        with torch.no_grad():
            target_q = self.q_target.minimum(obs, actions)
        v = self.value(obs)
        value_loss = expectile_loss(target_q - v, self.config.expectile).mean()
        if not torch.isfinite(value_loss):
            raise DivergenceError("value", step, float(value_loss))
        self.value_optimizer.zero_grad()
        value_loss.backward()
        self.value_optimizer.step()

        with torch.no_grad():
            next_v = self.value(next_obs)
            target = rewards + self.config.discount * (1. - dones) * next_v
        q1, q2 = self.q(obs, actions)
        q_loss = F.mse_loss(q1, target) + F.mse_loss(q2, target)
        if not torch.isfinite(q_loss):
            raise DivergenceError("q", step, float(q_loss))
        self.q_optimizer.zero_grad()
        q_loss.backward()
        self.q_optimizer.step()

        with torch.no_grad():
            advantage = target_q - v.detach()
            weights = torch.exp(advantage / self.config.temperature).clamp(max=self.config.max_weight)
        self.policy.train()
        policy_loss = -(weights * self.policy.log_prob(obs, actions)).mean()
        if not torch.isfinite(policy_loss):
            raise DivergenceError("policy", step, float(policy_loss))
        self.policy_optimizer.zero_grad()
        policy_loss.backward()
        self.policy_optimizer.step()

        polyak_update(self.q_target, self.q, self.config.target_update_rate)
        return {"value_loss": float(value_loss), "q_loss": float(q_loss), "policy_loss": float(policy_loss)}


def iql_train(dataset: OfflineDataset, config: IQLConfig = IQLConfig(), task: Optional[TaskSpec] = None,
              device: torch.device = torch.device("cpu"), dtype: torch.dtype = torch.float32,
              disable_logging: bool = True,
              callback: Optional[Callable[[int, IQL], None]] = None) -> PolicyResult:
    """
    Train a policy with implicit Q-learning on a dataset with rewards.

    :param dataset: transitions with rewards (ground-truth or relabeled)
    :param config: hyperparameters
    :param task: task to evaluate the policy on every `eval_interval` steps (no evaluation if None)
    :param callback: called after each step with (step, learner)
    :return: policy, evaluation series and loss records at the evaluation steps
    """
    config.validate()
    if dataset.rewards is None:
        raise ValueError("IQL needs a dataset with rewards, relabel it first")
    learner = IQL(dataset.observations.shape[1], dataset.actions.shape[1], config, device, dtype)
    evaluations, losses = [], []
    for step in range(1, config.steps + 1):
        indices = dataset.sample_indices(make_rng(config.seed, "iql-batch", step), config.batch_size)
        record = learner.update(dataset.batch(indices, device), step)
        if callback is not None:
            callback(step, learner)
        if step % config.eval_interval == 0 or step == config.steps:
            losses.append({"step": step, **record})
            if task is not None:
                success = evaluate_policy(NetworkPolicy(learner.policy, device), task, config.eval_episodes,
                                          config.seed)
                evaluations.append((step, success))
                if not disable_logging:
                    print(wrap_info(f"IQL step {step}/{config.steps}: success {success:.3f}, "
                                    f"value loss {record['value_loss']:.4f}, q loss {record['q_loss']:.4f}"))
    learner.policy.eval()
    return PolicyResult(learner.policy, evaluations, losses, config.eval_window)


def piql_train(dataset: OfflineDataset, reward: RewardModel, config: IQLConfig = IQLConfig(),
               task: Optional[TaskSpec] = None, device: torch.device = torch.device("cpu"),
               dtype: torch.dtype = torch.float32, disable_logging: bool = True) -> PolicyResult:
    """
    Relabel every transition of the dataset with the learned reward, rescaled to [0, 1], and run IQL.
    """
    relabeled = dataset.relabel(reward_function(reward, device))
    return iql_train(relabeled, config, task, device, dtype, disable_logging)

