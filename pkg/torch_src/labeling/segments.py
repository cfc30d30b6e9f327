"""
Trajectory segments and scorers that assign a preference score f(segment | instruction).
"""
from abc import ABC, abstractmethod
from typing import Callable, Dict, NamedTuple, Sequence, Tuple

import numpy as np
import torch

from datasets.stage_world.env import segment_return
from datasets.stage_world.instructions import Instruction
from datasets.stage_world.io import PreferenceCorpus, TrajectoryRef
from models.vlp.frames import sample_frames
from models.vlp.vlp import Model, score_videos


class Segment(NamedTuple):
    """
    A contiguous slice of `length` transitions starting at `start`. Its video holds the length + 1 rendered states.
    """
    ref: TrajectoryRef
    start: int
    length: int

    def to_dict(self) -> dict:
        return {**self.ref.to_dict(), "start": self.start, "length": self.length}

    @staticmethod
    def from_dict(d: dict) -> "Segment":
        return Segment(TrajectoryRef.from_dict(d), int(d["start"]), int(d["length"]))


Query = Tuple[Segment, Instruction]


def full_segment(corpus: PreferenceCorpus, ref: TrajectoryRef) -> Segment:
    return Segment(ref, 0, len(corpus.trajectory(*ref)))


def segment_video(corpus: PreferenceCorpus, segment: Segment) -> np.ndarray:
    frames = corpus.frames(*segment.ref)
    if segment.start < 0 or segment.start + segment.length + 1 > len(frames):
        raise ValueError(f"Segment [{segment.start}, {segment.start + segment.length}] is outside of a video with "
                         f"{len(frames)} frames")
    return frames[segment.start:segment.start + segment.length + 1]


def ground_truth_return(corpus: PreferenceCorpus, segment: Segment) -> float:
    return segment_return(corpus.trajectory(*segment.ref), segment.start, segment.length)


class Scorer(ABC):
    @abstractmethod
    def score(self, queries: Sequence[Query]) -> np.ndarray:
        """
        :param queries: (segment, instruction) tuples
        :return: float64 scores, one per query
        """
        pass


class ModelScorer(Scorer):
    """
    Scores queries with a frozen preference model. Sampled segment videos are cached.
    """

    def __init__(self, model: Model, corpus: PreferenceCorpus, device: torch.device = torch.device("cpu"),
                 batch_size: int = 64):
        self.model = model
        self.corpus = corpus
        self.device = device
        self.batch_size = batch_size
        self._videos: Dict[Segment, np.ndarray] = {}

    def video(self, segment: Segment) -> np.ndarray:
        if segment not in self._videos:
            self._videos[segment] = sample_frames(segment_video(self.corpus, segment), self.model.num_frames)
        return self._videos[segment]

    def score(self, queries: Sequence[Query]) -> np.ndarray:
        videos = [self.video(segment) for segment, _ in queries]
        tokens = [instruction.tokens for _, instruction in queries]
        return score_videos(self.model, videos, tokens, self.device, self.batch_size)


class FunctionScorer(Scorer):
    def __init__(self, fn: Callable[[Segment, Instruction], float]):
        self.fn = fn

    def score(self, queries: Sequence[Query]) -> np.ndarray:
        return np.array([self.fn(segment, instruction) for segment, instruction in queries], dtype=np.float64)
