"""
Transitions of one task pooled from its stored trajectories.
"""
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from datasets.stage_world.env import Trajectory, observations
from datasets.stage_world.io import PreferenceCorpus, TrajectoryRef
from labeling.segments import Segment


class OfflineDataset:
    def __init__(self, task_id: str, trajectories: Dict[TrajectoryRef, Trajectory],
                 rewards: Optional[np.ndarray] = None):
        """
        :param task_id: task all trajectories belong to
        :param trajectories: trajectories by reference, concatenated in key order
        :param rewards: per-transition rewards (None until relabeled)
        """
        if not trajectories:
            raise ValueError("An offline dataset needs at least one trajectory")
        self.task_id = task_id
        self.refs = list(trajectories)
        self.offsets = {}
        obs, actions, next_obs, dones, true_rewards = [], [], [], [], []
        offset = 0
        for ref, traj in trajectories.items():
            if traj.task_id != task_id:
                raise ValueError(f"Trajectory of task '{traj.task_id}' in a dataset of task '{task_id}'")
            states = observations(traj.states)
            n = len(traj)
            obs.append(states[:-1])
            next_obs.append(states[1:])
            actions.append(np.asarray(traj.actions, dtype=np.float32))
            done = np.zeros(n, dtype=np.float32)
            done[-1] = 1.
            dones.append(done)
            true_rewards.append(np.asarray(traj.rewards, dtype=np.float64))
            self.offsets[ref] = (offset, n)
            offset += n
        self.observations = np.concatenate(obs)
        self.actions = np.concatenate(actions)
        self.next_observations = np.concatenate(next_obs)
        self.dones = np.concatenate(dones)
        self.true_rewards = np.concatenate(true_rewards)
        if rewards is not None and len(rewards) != len(self.observations):
            raise ValueError(f"Got {len(rewards)} rewards for {len(self.observations)} transitions")
        self.rewards = rewards
        self._trajectories = trajectories

    def __len__(self):
        return len(self.observations)

    @staticmethod
    def from_corpus(corpus: PreferenceCorpus, task_id: str,
                    refs: Optional[Sequence[TrajectoryRef]] = None) -> "OfflineDataset":
        refs = corpus.refs(task_id) if refs is None else refs
        return OfflineDataset(task_id, {r: corpus.trajectory(*r) for r in refs})

    def with_rewards(self, rewards: np.ndarray) -> "OfflineDataset":
        return OfflineDataset(self.task_id, self._trajectories, np.asarray(rewards, dtype=np.float64))

    def with_true_rewards(self) -> "OfflineDataset":
        return self.with_rewards(self.true_rewards)

    def segment_indices(self, segment: Segment) -> np.ndarray:
        if segment.ref not in self.offsets:
            raise KeyError(f"Trajectory {tuple(segment.ref)} is not part of the dataset")
        offset, n = self.offsets[segment.ref]
        if segment.start < 0 or segment.start + segment.length > n:
            raise ValueError(f"Segment [{segment.start}, {segment.start + segment.length}) exceeds a trajectory "
                             f"with {n} transitions")
        return np.arange(offset + segment.start, offset + segment.start + segment.length)

    def sample_indices(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        return rng.integers(len(self), size=batch_size)

    def batch(self, indices: np.ndarray, device: torch.device = torch.device("cpu")) -> Dict[str, torch.Tensor]:
        out = {
            "observations": torch.as_tensor(self.observations[indices], device=device),
            "actions": torch.as_tensor(self.actions[indices], device=device),
            "next_observations": torch.as_tensor(self.next_observations[indices], device=device),
            "dones": torch.as_tensor(self.dones[indices], device=device)
        }
        if self.rewards is not None:
            out["rewards"] = torch.as_tensor(self.rewards[indices], dtype=torch.float32, device=device)
        return out

    def relabel(self, reward_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "OfflineDataset":
        """
        Replace rewards by reward_fn(observations, actions) rescaled affinely to [0, 1] over the dataset.
        """
        return self.with_rewards(rescale_rewards(reward_fn(self.observations, self.actions)))


def rescale_rewards(rewards: np.ndarray) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    low, high = float(rewards.min()), float(rewards.max())
    if high - low <= 0:
        return np.zeros_like(rewards)
    return (rewards - low) / (high - low)


def labeled_refs(pairs) -> List[TrajectoryRef]:
    return sorted({s.ref for p in pairs for s in (p.first, p.second)})
