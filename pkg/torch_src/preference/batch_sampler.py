"""
Minibatches of intra-task (ITP), inter-language (ILP) and inter-video (IVP) preference relations.
"""
from typing import List, NamedTuple, Sequence

import numpy as np
import torch

from datasets.stage_world.constants import optimality_levels
from datasets.stage_world.io import PreferenceCorpus, TrajectoryRef
from models.vlp.frames import sample_frames


class RelationBatch(NamedTuple):
    """
    Unique videos and instructions of a batch plus the indices that combine them into relations.
    Element b compares videos[first[b]] and videos[second[b]] of task tasks[b] under tokens[instruction[b]].
    """
    videos: np.ndarray  # (V, K, H, W, 3)
    tokens: np.ndarray  # (L, N)
    first: np.ndarray  # (B,)
    second: np.ndarray  # (B,)
    instruction: np.ndarray  # (B,)
    video_negatives: np.ndarray  # (B, num_negatives)
    language_negatives: np.ndarray  # (B, num_negatives)
    itp_labels: np.ndarray  # (B,), 0 if the first video is preferred
    tasks: List[str]
    video_refs: List[TrajectoryRef]
    instruction_tasks: List[str]

    def __len__(self):
        return len(self.first)

    def to_tensors(self, device: torch.device, dtype: torch.dtype = torch.float32) -> dict:
        return {
            "videos": torch.as_tensor(self.videos, dtype=dtype, device=device),
            "tokens": torch.as_tensor(self.tokens, dtype=torch.long, device=device),
            "first": torch.as_tensor(self.first, dtype=torch.long, device=device),
            "second": torch.as_tensor(self.second, dtype=torch.long, device=device),
            "instruction": torch.as_tensor(self.instruction, dtype=torch.long, device=device),
            "video_negatives": torch.as_tensor(self.video_negatives, dtype=torch.long, device=device),
            "language_negatives": torch.as_tensor(self.language_negatives, dtype=torch.long, device=device),
            "itp_labels": torch.as_tensor(self.itp_labels, dtype=dtype, device=device)
        }


def itp_label(first_level: str, second_level: str) -> float:
    """
    0 if the first level is more optimal (expert > medium > random), 1 otherwise.
    """
    if first_level == second_level:
        raise ValueError(f"No intra-task preference between two '{first_level}' trajectories")
    return 0. if optimality_levels.index(first_level) < optimality_levels.index(second_level) else 1.


class RelationSampler:
    def __init__(self, corpus: PreferenceCorpus, task_ids: Sequence[str], num_frames: int = 8,
                 num_negatives: int = 4, clip_length: int = 0, data_fraction: float = 1.):
        """
        :param corpus: dataset
        :param task_ids: tasks to sample from (the training split)
        :param num_frames: frames sampled per video (K)
        :param num_negatives: negative videos and instructions per element
        :param clip_length: length of a random contiguous crop before frame sampling (0 = whole video)
        :param data_fraction: fraction of trajectories per optimality level that are used
        """
        if len(task_ids) < 2:
            raise ValueError(f"At least two tasks are required for relation sampling, got {len(task_ids)}")
        self.corpus = corpus
        self.task_ids = list(task_ids)
        self.num_frames = num_frames
        self.num_negatives = num_negatives
        self.clip_length = clip_length
        self.pools = {}
        self.tokens = {}
        for task_id in self.task_ids:
            refs = corpus.refs(task_id, fraction=data_fraction)
            pool = {level: [r for r in refs if r.level == level] for level in corpus.levels}
            pool = {level: p for level, p in pool.items() if p}
            if len(pool) < 2:
                raise ValueError(f"Task '{task_id}' needs trajectories of at least two optimality levels")
            instructions = corpus.instructions(task_id)
            if not instructions:
                raise ValueError(f"Task '{task_id}' has no instructions")
            self.pools[task_id] = pool
            self.tokens[task_id] = np.array([i.tokens for i in instructions], dtype=np.int64)

    def _random_ref(self, task_id: str, rng: np.random.Generator, level: str = None) -> TrajectoryRef:
        pool = self.pools[task_id]
        if level is None:
            levels = list(pool)
            level = levels[rng.integers(len(levels))]
        return pool[level][rng.integers(len(pool[level]))]

    def _other_task(self, task_id: str, rng: np.random.Generator) -> str:
        others = [t for t in self.task_ids if t != task_id]
        return others[rng.integers(len(others))]

    def video(self, ref: TrajectoryRef, rng: np.random.Generator) -> np.ndarray:
        frames = self.corpus.frames(*ref)
        transitions = len(frames) - 1
        if 0 < self.clip_length < transitions:
            start = int(rng.integers(transitions - self.clip_length + 1))
            frames = frames[start:start + self.clip_length + 1]
        return sample_frames(frames, self.num_frames)

    def sample(self, rng: np.random.Generator, batch_size: int) -> RelationBatch:
        videos, video_refs = [], []
        tokens, instruction_tasks = [], []

        def add_video(ref: TrajectoryRef) -> int:
            videos.append(self.video(ref, rng))
            video_refs.append(ref)
            return len(videos) - 1

        def add_instruction(task_id: str) -> int:
            table = self.tokens[task_id]
            tokens.append(table[rng.integers(len(table))])
            instruction_tasks.append(task_id)
            return len(tokens) - 1

        tasks, first, second, instruction, labels = [], [], [], [], []
        video_negatives, language_negatives = [], []
        for _ in range(batch_size):
            task_id = self.task_ids[rng.integers(len(self.task_ids))]
            levels = list(self.pools[task_id])
            i, j = rng.choice(len(levels), size=2, replace=False)
            tasks.append(task_id)
            first.append(add_video(self._random_ref(task_id, rng, levels[i])))
            second.append(add_video(self._random_ref(task_id, rng, levels[j])))
            labels.append(itp_label(levels[i], levels[j]))
            instruction.append(add_instruction(task_id))
            video_negatives.append([add_video(self._random_ref(self._other_task(task_id, rng), rng))
                                    for _ in range(self.num_negatives)])
            language_negatives.append([add_instruction(self._other_task(task_id, rng))
                                       for _ in range(self.num_negatives)])

        return RelationBatch(np.stack(videos), np.stack(tokens), np.array(first), np.array(second),
                             np.array(instruction), np.array(video_negatives), np.array(language_negatives),
                             np.array(labels), tasks, video_refs, instruction_tasks)


def sample_batch(corpus: PreferenceCorpus, config, rng: np.random.Generator, task_ids: Sequence[str] = None):
    """
    Sample one relation minibatch from the training tasks.

    :param corpus: dataset
    :param config: TrainConfig
    :param rng: random generator
    :param task_ids: tasks to sample from, all training tasks if None
    :return: RelationBatch
    """
    if task_ids is None:
        task_ids = [t.task_id for t in corpus.train_tasks]
    sampler = RelationSampler(corpus, task_ids, config.num_frames, config.num_negatives, config.clip_length,
                              config.data_fraction)
    return sampler.sample(rng, config.batch_size)
