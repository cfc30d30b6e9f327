"""
Contrastive preference learning: the policy is fit directly to segment preferences by treating the discounted,
scaled sum of its log-likelihoods over a segment as that segment's advantage.
"""
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from datasets.stage_world.env import TaskSpec
from labeling.annotation import LabelSet
from labeling.segments import Segment
from models.rlhf.networks import GaussianPolicy
from progress import wrap_info
from rlhf.evaluation import NetworkPolicy, default_episodes, default_window, evaluate_policy
from rlhf.iql import PolicyResult
from rlhf.offline_dataset import OfflineDataset
from torch_util import make_rng
from util.errors import DivergenceError


class CPLConfig(NamedTuple):
    alpha: float = 0.1
    bias: float = 0.5
    discount: float = 1.
    bc_weight: float = 0.
    bc_steps: int = 10000
    bc_batch_size: int = 64
    steps: int = 100000
    batch_size: int = 16
    lr: float = 1e-4
    hidden_sizes: Tuple[int, ...] = (256, 256)
    dropout: float = 0.25
    eval_interval: int = 5000
    eval_episodes: int = default_episodes
    eval_window: int = default_window
    seed: int = 0

    def validate(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.bias <= 0:
            raise ValueError(f"bias must be positive, got {self.bias}")
        if not 0. < self.discount <= 1.:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if self.bc_steps < 0 or self.steps < 1 or self.batch_size < 1 or self.eval_interval < 1:
            raise ValueError("bc_steps must be non-negative, steps, batch_size and eval_interval positive")


def segment_advantages(policy: GaussianPolicy, dataset: OfflineDataset, segments: Sequence[Segment], alpha: float,
                       discount: float = 1., device: torch.device = torch.device("cpu")) -> torch.Tensor:
    """
    alpha * sum_t discount^t log pi(a_t | s_t) for each segment.

    :return: tensor (len(segments),)
    """
    indices = [dataset.segment_indices(s) for s in segments]
    owner = torch.as_tensor(np.repeat(np.arange(len(segments)), [len(i) for i in indices]), device=device)
    offsets = np.concatenate([np.arange(len(i)) for i in indices])
    flat = np.concatenate(indices)
    dtype = next(policy.parameters()).dtype
    obs = torch.as_tensor(dataset.observations[flat], dtype=dtype, device=device)
    actions = torch.as_tensor(dataset.actions[flat], dtype=dtype, device=device)
    weights = torch.as_tensor(discount ** offsets, dtype=dtype, device=device)
    log_probs = policy.log_prob(obs, actions) * weights
    return alpha * torch.zeros(len(segments), dtype=dtype, device=device).index_add(0, owner, log_probs)


def cpl_loss(winner: torch.Tensor, loser: torch.Tensor, bias: float = 0.5) -> torch.Tensor:
    """
    -log(exp(A_w) / (exp(A_w) + exp(bias * A_l))), averaged over pairs.

    :param winner: advantages of the preferred segments
    :param loser: advantages of the other segments
    :param bias: factor applied to the losing advantage
    """
    return F.softplus(bias * loser - winner).mean()


def ordered_segments(label_set: LabelSet) -> Tuple[list, list]:
    """
    (winners, losers) of every non-tie pair.
    """
    winners, losers = [], []
    for pair, y in zip(label_set.pairs, label_set.labels):
        if y == 0.:
            winners.append(pair.first)
            losers.append(pair.second)
        elif y == 1.:
            winners.append(pair.second)
            losers.append(pair.first)
    return winners, losers


def bc_loss(policy: GaussianPolicy, dataset: OfflineDataset, indices: np.ndarray,
            device: torch.device = torch.device("cpu")) -> torch.Tensor:
    batch = dataset.batch(indices, device)
    dtype = next(policy.parameters()).dtype
    return -policy.log_prob(batch["observations"].to(dtype), batch["actions"].to(dtype)).mean()


def cpl_train(label_set: LabelSet, dataset: OfflineDataset, config: CPLConfig = CPLConfig(),
              task: Optional[TaskSpec] = None, device: torch.device = torch.device("cpu"),
              dtype: torch.dtype = torch.float32, disable_logging: bool = True) -> PolicyResult:
    """
    Behavior cloning on all transitions for `bc_steps`, then contrastive training on the non-tie pairs.

    :param label_set: labeled segment pairs of the dataset's task
    :param dataset: transitions containing every labeled segment (rewards are not used)
    :param config: hyperparameters
    :param task: task to evaluate the policy on every `eval_interval` contrastive steps (no evaluation if None)
    :return: policy, evaluation series and loss records at the evaluation steps
    """
    config.validate()
    winners, losers = ordered_segments(label_set)
    if not winners:
        raise ValueError("CPL needs at least one non-tie label")
    torch.manual_seed(config.seed)
    policy = GaussianPolicy(dataset.observations.shape[1], dataset.actions.shape[1], config.hidden_sizes,
                            config.dropout).to(device=device, dtype=dtype)
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.lr)
    policy.train()

    for step in range(1, config.bc_steps + 1):
        loss = bc_loss(policy, dataset, dataset.sample_indices(make_rng(config.seed, "bc-batch", step),
                                                               config.bc_batch_size), device)
        if not torch.isfinite(loss):
            raise DivergenceError("bc", step, float(loss))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    if not disable_logging and config.bc_steps:
        print(wrap_info(f"Behavior cloning finished after {config.bc_steps} steps, loss {float(loss):.4f}"))

    evaluations, losses = [], []
    for step in range(1, config.steps + 1):
        pairs = make_rng(config.seed, "cpl-batch", step).integers(len(winners), size=config.batch_size)
        policy.train()
        advantages = segment_advantages(policy, dataset, [winners[i] for i in pairs] + [losers[i] for i in pairs],
                                        config.alpha, config.discount, device)
        contrastive = cpl_loss(advantages[:len(pairs)], advantages[len(pairs):], config.bias)
        loss = contrastive
        if config.bc_weight > 0:
            loss = loss - config.bc_weight * advantages.mean() / config.alpha
        if not torch.isfinite(loss):
            raise DivergenceError("cpl", step, float(loss))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        if step % config.eval_interval == 0 or step == config.steps:
            losses.append({"step": step, "cpl_loss": float(contrastive), "loss": float(loss)})
            if task is not None:
                success = evaluate_policy(NetworkPolicy(policy, device), task, config.eval_episodes, config.seed)
                evaluations.append((step, success))
                if not disable_logging:
                    print(wrap_info(f"CPL step {step}/{config.steps}: success {success:.3f}, "
                                    f"loss {float(contrastive):.4f}"))
    policy.eval()
    return PolicyResult(policy, evaluations, losses, config.eval_window)
