"""
Reward, value and policy networks for preference-based policy learning on state vectors.
"""
import math
from typing import Optional, Sequence, Tuple

import torch
import torch.nn as nn

from progress import apply_state_dict, load_checkpoint, save_checkpoint

log_std_bounds = (-5., 2.)
squash_eps = 1e-6
policy_checkpoint_kind = "policy"
reward_checkpoint_kind = "reward-model"


def mlp(in_features: int, hidden_sizes: Sequence[int], out_features: int, dropout: float = 0.) -> nn.Sequential:
    layers = []
    for size in hidden_sizes:
        layers.append(nn.Linear(in_features, size))
        if dropout > 0:
            layers.append(nn.Dropout(dropout))
        layers.append(nn.ReLU())
        in_features = size
    layers.append(nn.Linear(in_features, out_features))
    return nn.Sequential(*layers)


class RewardModel(nn.Module):
    """
    r(s, a) -> real
    """

    def __init__(self, observation_dim: int, action_dim: int, hidden_sizes: Sequence[int] = (256, 256),
                 dropout: float = 0.25):
        super().__init__()
        self.config = {"observation_dim": observation_dim, "action_dim": action_dim,
                       "hidden_sizes": list(hidden_sizes), "dropout": dropout}
        self.net = mlp(observation_dim + action_dim, hidden_sizes, 1, dropout)

    def forward(self, observations: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat((observations, actions), dim=-1)).squeeze(-1)


class ValueNetwork(nn.Module):
    def __init__(self, observation_dim: int, hidden_sizes: Sequence[int] = (256, 256)):
        super().__init__()
        self.net = mlp(observation_dim, hidden_sizes, 1)

    def forward(self, observations: torch.Tensor) -> torch.Tensor:
        return self.net(observations).squeeze(-1)


class QNetwork(nn.Module):
    """
    Twin Q(s, a) estimates; `forward` returns both, `minimum` their element-wise minimum.
    """

    def __init__(self, observation_dim: int, action_dim: int, hidden_sizes: Sequence[int] = (256, 256)):
        super().__init__()
        self.q1 = mlp(observation_dim + action_dim, hidden_sizes, 1)
        self.q2 = mlp(observation_dim + action_dim, hidden_sizes, 1)

    def forward(self, observations: torch.Tensor, actions: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        x = torch.cat((observations, actions), dim=-1)
        return self.q1(x).squeeze(-1), self.q2(x).squeeze(-1)

    def minimum(self, observations: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        return torch.min(*self(observations, actions))


class GaussianPolicy(nn.Module):
    """
    Diagonal Gaussian over pre-squash actions; actions are tanh(u) and therefore lie in [-1, 1].
    """

    def __init__(self, observation_dim: int, action_dim: int, hidden_sizes: Sequence[int] = (256, 256),
                 dropout: float = 0.):
        super().__init__()
        self.config = {"observation_dim": observation_dim, "action_dim": action_dim,
                       "hidden_sizes": list(hidden_sizes), "dropout": dropout}
        self.action_dim = action_dim
        self.net = mlp(observation_dim, hidden_sizes, 2 * action_dim, dropout)

    def forward(self, observations: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :return: tuple (mean, log standard deviation) of the pre-squash distribution
        """
        mean, log_std = self.net(observations).chunk(2, dim=-1)
        return mean, log_std.clamp(*log_std_bounds)

    def log_prob(self, observations: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        """
        Log-likelihood of squashed actions, including the tanh change of variables.
        """
        mean, log_std = self(observations)
        actions = actions.clamp(-1. + squash_eps, 1. - squash_eps)
        u = torch.atanh(actions)
        normal = -0.5 * ((u - mean) / log_std.exp()) ** 2 - log_std - 0.5 * math.log(2 * math.pi)
        return (normal - torch.log1p(-actions ** 2 + squash_eps)).sum(dim=-1)

    def sample(self, observations: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        mean, log_std = self(observations)
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
        return torch.tanh(mean + log_std.exp() * noise)

    def deterministic(self, observations: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self(observations)[0])


def save_network(network: nn.Module, out_file: str, kind: str, **extra):
    save_checkpoint(out_file, kind, network.config, network.state_dict(), extra=extra)


def load_policy(in_file: str, device: torch.device = torch.device("cpu")) -> GaussianPolicy:
    header, state_dict = load_checkpoint(in_file, policy_checkpoint_kind)
    policy = GaussianPolicy(**header["config"]).to(device)
    apply_state_dict(policy, state_dict)
    policy.eval()
    return policy


def load_reward_model(in_file: str, device: torch.device = torch.device("cpu")) -> RewardModel:
    header, state_dict = load_checkpoint(in_file, reward_checkpoint_kind)
    reward = RewardModel(**header["config"]).to(device)
    apply_state_dict(reward, state_dict)
    reward.eval()
    return reward
