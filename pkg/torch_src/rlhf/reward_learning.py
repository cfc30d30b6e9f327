"""
Bradley-Terry reward learning from labeled segment pairs: the preference probability of a pair is computed from the
sums of predicted rewards over its two segments.
"""
from typing import Callable, Sequence

import numpy as np
import torch

from labeling.annotation import LabelSet
from labeling.segments import Segment
from models.rlhf.networks import RewardModel
from preference.losses import bt_probability, ce_term
from progress import wrap_info
from rlhf.offline_dataset import OfflineDataset
from torch_util import make_rng
from util.errors import DivergenceError


def segment_sums(reward: RewardModel, dataset: OfflineDataset, segments: Sequence[Segment],
                 device: torch.device = torch.device("cpu")) -> torch.Tensor:
    """
    Sum of r(s_t, a_t) over the transitions of each segment.

    :return: tensor (len(segments),)
    """
    indices = [dataset.segment_indices(s) for s in segments]
    owner = torch.as_tensor(np.repeat(np.arange(len(segments)), [len(i) for i in indices]), device=device)
    flat = np.concatenate(indices)
    dtype = next(reward.parameters()).dtype
    obs = torch.as_tensor(dataset.observations[flat], dtype=dtype, device=device)
    act = torch.as_tensor(dataset.actions[flat], dtype=dtype, device=device)
    rewards = reward(obs, act)
    return torch.zeros(len(segments), dtype=rewards.dtype, device=device).index_add(0, owner, rewards)


def preference_loss(reward: RewardModel, dataset: OfflineDataset, label_set: LabelSet, indices: Sequence[int],
                    device: torch.device = torch.device("cpu")) -> torch.Tensor:
    pairs = [label_set.pairs[i] for i in indices]
    sums = segment_sums(reward, dataset, [p.first for p in pairs] + [p.second for p in pairs], device)
    labels = torch.as_tensor([label_set.labels[i] for i in indices], dtype=sums.dtype, device=device)
    return ce_term(bt_probability(sums[:len(pairs)], sums[len(pairs):]), labels).mean()


@torch.no_grad()
def preference_probabilities(reward: RewardModel, dataset: OfflineDataset, label_set: LabelSet,
                             device: torch.device = torch.device("cpu")) -> np.ndarray:
    """
    Probability that the first segment of each pair is preferred under the reward model.
    """
    reward.eval()
    sums = segment_sums(reward, dataset, [p.first for p in label_set.pairs] + [p.second for p in label_set.pairs],
                        device).double().cpu().numpy()
    n = len(label_set)
    return np.array([bt_probability(float(a), float(b)) for a, b in zip(sums[:n], sums[n:])])


def preference_accuracy(reward: RewardModel, dataset: OfflineDataset, label_set: LabelSet,
                        device: torch.device = torch.device("cpu")) -> float:
    """
    Fraction of non-tie labels the reward model orders correctly.
    """
    decided = label_set.non_ties()
    if len(decided) == 0:
        return float("nan")
    p = preference_probabilities(reward, dataset, decided, device)
    predicted = np.where(p > 0.5, 0., np.where(p < 0.5, 1., 0.5))
    return float(np.mean(predicted == np.asarray(decided.labels)))


def learn_reward(label_set: LabelSet, dataset: OfflineDataset, epochs: int = 30, batch_size: int = 16,
                 lr: float = 3e-4, seed: int = 0, hidden_sizes: Sequence[int] = (256, 256), dropout: float = 0.25,
                 device: torch.device = torch.device("cpu"), dtype: torch.dtype = torch.float32,
                 disable_logging: bool = True) -> RewardModel:
    """
    Fit a reward model to preference labels with the Bradley-Terry cross-entropy. Ties contribute the symmetric
    cross-entropy against 0.5.

    :param label_set: labeled segment pairs of the dataset's task
    :param dataset: offline transitions containing every labeled segment
    :param epochs: passes over the label set
    :param batch_size: pairs per gradient step
    :param lr: Adam learning rate
    :param seed: seed of the initialization and the shuffling
    :return: reward model in evaluation mode
    """
    if len(label_set) == 0:
        raise ValueError("Cannot learn a reward from an empty label set")
    if all(y == 0.5 for y in label_set.labels):
        raise ValueError("All labels are ties, the reward is not identifiable")
    torch.manual_seed(seed)
    reward = RewardModel(dataset.observations.shape[1], dataset.actions.shape[1], hidden_sizes, dropout)
    reward = reward.to(device=device, dtype=dtype)
    optimizer = torch.optim.Adam(reward.parameters(), lr=lr)

    step = 0
    for epoch in range(epochs):
        reward.train()
        order = make_rng(seed, "reward-epoch", epoch).permutation(len(label_set))
        epoch_loss = 0.
        for i in range(0, len(order), batch_size):
            loss = preference_loss(reward, dataset, label_set, order[i:i + batch_size], device)
            if not torch.isfinite(loss):
                raise DivergenceError("reward", step, float(loss))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss) * len(order[i:i + batch_size])
            step += 1
        if not disable_logging:
            print(wrap_info(f"Reward epoch {epoch + 1}/{epochs}: loss {epoch_loss / len(order):.4f}"))
    reward.eval()
    return reward


def reward_function(reward: RewardModel, device: torch.device = torch.device("cpu"),
                    batch_size: int = 4096) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """
    Wrap a reward model as a batched numpy function (observations, actions) -> rewards.
    """
    dtype = next(reward.parameters()).dtype

    @torch.no_grad()
    def fn(observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        reward.eval()
        out = []
        for i in range(0, len(observations), batch_size):
            obs = torch.as_tensor(observations[i:i + batch_size], dtype=dtype, device=device)
            act = torch.as_tensor(actions[i:i + batch_size], dtype=dtype, device=device)
            out.append(reward(obs, act).double().cpu().numpy())
        return np.concatenate(out)

    return fn
