"""
Segment pairs for downstream preference learning and their labels, predicted by a preference model or computed
from ground-truth rewards.
"""
import json
import os
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from datasets.stage_world.instructions import Instruction
from datasets.stage_world.io import PreferenceCorpus, TrajectoryRef
from labeling.relations import preference_label
from labeling.segments import Scorer, Segment, ground_truth_return
from torch_util import make_rng
from util.errors import DatasetIntegrityError, MissingArtifactError
from util.preprocessing.data_writer import atomic_write

default_segment_length = 50
model_tie_eps = 1e-6
scripted_tie_eps = 1e-9
label_sources = ("model", "scripted")


class SegmentPair(NamedTuple):
    task_id: str
    first: Segment  # drawn from cluster 0
    second: Segment  # drawn from cluster 1
    instruction: Instruction

    def swapped(self) -> "SegmentPair":
        return SegmentPair(self.task_id, self.second, self.first, self.instruction)


class LabelSet:
    """
    Labels y in {0, 0.5, 1} of segment pairs: 0 if the first segment is preferred.
    """

    def __init__(self, pairs: Sequence[SegmentPair], labels: Sequence[float], source: str,
                 scores: Optional[Sequence[Tuple[float, float]]] = None):
        if len(pairs) != len(labels):
            raise ValueError(f"Got {len(pairs)} pairs but {len(labels)} labels")
        if any(y not in (0., 0.5, 1.) for y in labels):
            raise ValueError("Labels must be in {0, 0.5, 1}")
        if source not in label_sources:
            raise ValueError(f"Unknown label source '{source}', expected one of {label_sources}")
        if scores is not None and len(scores) != len(pairs):
            raise ValueError(f"Got {len(pairs)} pairs but {len(scores)} score tuples")
        self.pairs = list(pairs)
        self.labels = [float(y) for y in labels]
        self.source = source
        self.scores = None if scores is None else [(float(a), float(b)) for a, b in scores]

    def __len__(self):
        return len(self.pairs)

    @property
    def task_ids(self) -> List[str]:
        return sorted({p.task_id for p in self.pairs})

    def non_ties(self) -> "LabelSet":
        keep = [i for i, y in enumerate(self.labels) if y != 0.5]
        return LabelSet([self.pairs[i] for i in keep], [self.labels[i] for i in keep], self.source,
                        None if self.scores is None else [self.scores[i] for i in keep])

    def to_jsonl(self) -> bytes:
        lines = []
        for i, (pair, label) in enumerate(zip(self.pairs, self.labels)):
            record = {
                "task_id": pair.task_id,
                "first": pair.first.to_dict(),
                "second": pair.second.to_dict(),
                "instruction": pair.instruction.text,
                "tokens": list(pair.instruction.tokens),
                "template_id": pair.instruction.template_id,
                "style": pair.instruction.style,
                "label": label,
                "source": self.source
            }
            if self.scores is not None:
                record["first_score"], record["second_score"] = self.scores[i]
            lines.append(json.dumps(record, sort_keys=True))
        return "".join(line + "\n" for line in lines).encode("utf-8")

    @staticmethod
    def from_jsonl(data: bytes, file_name: str = "labels.jsonl") -> "LabelSet":
        pairs, labels, scores, sources = [], [], [], set()
        try:
            for line in data.decode("utf-8").splitlines():
                if not line.strip():
                    continue
                r = json.loads(line)
                instruction = Instruction(r["instruction"], tuple(r["tokens"]), r["task_id"], r["template_id"],
                                          r["style"])
                pairs.append(SegmentPair(r["task_id"], Segment.from_dict(r["first"]), Segment.from_dict(r["second"]),
                                         instruction))
                labels.append(float(r["label"]))
                sources.add(r["source"])
                if "first_score" in r:
                    scores.append((r["first_score"], r["second_score"]))
        except (ValueError, KeyError, TypeError) as e:
            raise DatasetIntegrityError(file_name, f"malformed label record ({e})")
        if len(sources) > 1:
            raise DatasetIntegrityError(file_name, f"mixed label sources {sorted(sources)}")
        if scores and len(scores) != len(pairs):
            raise DatasetIntegrityError(file_name, "scores are missing for some pairs")
        try:
            return LabelSet(pairs, labels, sources.pop() if sources else "scripted", scores or None)
        except ValueError as e:
            raise DatasetIntegrityError(file_name, str(e))


def save_label_set(out_file: str, label_set: LabelSet):
    os.makedirs(os.path.dirname(os.path.abspath(out_file)), exist_ok=True)
    atomic_write(out_file, label_set.to_jsonl())


def load_label_set(in_file: str) -> LabelSet:
    if not os.path.isfile(in_file):
        raise MissingArtifactError(f"Label set not found: '{in_file}'")
    with open(in_file, "rb") as f:
        return LabelSet.from_jsonl(f.read(), in_file)


def sample_pairs(corpus: PreferenceCorpus, clusters: Sequence[Sequence[TrajectoryRef]],
                 instructions: Sequence[Instruction],
                 n: int = 100, length: int = default_segment_length, seed: int = 0) -> List[SegmentPair]:
    """
    Sample n segment pairs, the first segment from cluster 0 and the second from cluster 1, uniformly over
    (trajectory, start). Trajectories shorter than `length` are excluded. Every pair is tagged with an instruction
    drawn uniformly from `instructions`.

    :param corpus: dataset
    :param clusters: two groups of trajectories of one task
    :param instructions: instruction set of the task
    :param n: number of pairs
    :param length: segment length (transitions)
    :param seed: sampling seed
    :return: list of pairs
    """
    if len(clusters) != 2:
        raise ValueError(f"Pairs are drawn from exactly two clusters, got {len(clusters)}")
    if not instructions:
        raise ValueError("At least one instruction is required")
    if length < 1:
        raise ValueError(f"Segment length must be positive, got {length}")

    starts = []
    for c, cluster in enumerate(clusters):
        if not cluster:
            raise ValueError(f"Cluster {c} is empty")
        options = [(ref, s) for ref in cluster for s in range(len(corpus.trajectory(*ref)) - length + 1)]
        if not options:
            raise ValueError(f"Every trajectory of cluster {c} is shorter than the segment length {length}")
        starts.append(options)

    task_ids = {ref.task_id for cluster in clusters for ref in cluster}
    if len(task_ids) != 1:
        raise ValueError(f"Pairs must come from a single task, got {sorted(task_ids)}")
    task_id = task_ids.pop()

    rng = make_rng(seed, "segment-pairs", task_id)
    pairs = []
    for _ in range(n):
        segments = []
        for options in starts:
            ref, start = options[rng.integers(len(options))]
            segments.append(Segment(ref, start, length))
        instruction = instructions[rng.integers(len(instructions))]
        pairs.append(SegmentPair(task_id, segments[0], segments[1], instruction))
    return pairs


def annotate(pairs: Sequence[SegmentPair], scorer: Scorer, tie_eps: float = model_tie_eps) -> LabelSet:
    """
    Label pairs with a frozen preference model: y = 0 if f(first | l) - f(second | l) > tie_eps, y = 1 if it is
    below -tie_eps and 0.5 otherwise.
    """
    queries = [q for p in pairs for q in ((p.first, p.instruction), (p.second, p.instruction))]
    scores = scorer.score(queries).reshape(-1, 2) if queries else np.zeros((0, 2))
    labels = [preference_label(float(a - b), tie_eps) for a, b in scores]
    return LabelSet(pairs, labels, "model", [tuple(s) for s in scores])


def scripted_labels(pairs: Sequence[SegmentPair], corpus: PreferenceCorpus = None, tie_eps: float = scripted_tie_eps,
                    return_fn: Callable[[Segment], float] = None) -> LabelSet:
    """
    Label pairs by comparing the ground-truth segment returns.

    :param pairs: segment pairs
    :param corpus: dataset holding the rewards
    :param tie_eps: return difference treated as a tie
    :param return_fn: replaces the corpus lookup of segment returns
    """
    if return_fn is None:
        if corpus is None:
            raise ValueError("Either a corpus or a return function is required")

        def return_fn(segment: Segment) -> float:
            return ground_truth_return(corpus, segment)

    scores = [(return_fn(p.first), return_fn(p.second)) for p in pairs]
    labels = [preference_label(a - b, tie_eps) for a, b in scores]
    return LabelSet(pairs, labels, "scripted", scores)
