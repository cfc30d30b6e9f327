"""
Evaluation of the three preference relations on a set of tasks.
"""
import math
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from datasets.stage_world.constants import optimality_levels
from datasets.stage_world.instructions import Instruction, gen_instructions, grammar_capacity
from datasets.stage_world.io import PreferenceCorpus
from labeling.segments import Scorer, Segment, full_segment
from preference.batch_sampler import itp_label
from preference.losses import bt_probability, ce_term
from torch_util import make_rng

relation_kinds = ("itp", "ivp", "ilp")
generated_instructions = 16
ilp_loss_floor = math.log(2.)


class RelationPair(NamedTuple):
    kind: str
    first: Segment
    second: Segment
    instruction: Instruction
    label: float


def preference_label(delta: float, tie_eps: float) -> float:
    """
    :param delta: score(first) - score(second)
    :return: 0 if the first is preferred, 1 if the second is preferred, 0.5 within the tie threshold
    """
    if delta > tie_eps:
        return 0.
    if delta < -tie_eps:
        return 1.
    return 0.5


def task_instructions(corpus: PreferenceCorpus, task_id: str, style: str, seed: int) -> List[Instruction]:
    if style == "imperative":
        return corpus.instructions(task_id)
    task = corpus.task(task_id)
    n = min(generated_instructions, grammar_capacity(task.family, style, task.object_color))
    return gen_instructions(task, n, seed, corpus.vocab, style)


def sample_relation_pairs(corpus: PreferenceCorpus, task_ids: Sequence[str], pairs_per_task: int, seed: int,
                          kinds: Sequence[str] = relation_kinds,
                          instruction_style: str = "imperative") -> List[RelationPair]:
    """
    Fixed evaluation pairs over whole trajectories.
      itp: two trajectories of a task with different optimality under one of its instructions
      ivp: a trajectory of the task against one of another task under the task's instruction (label 0)
      ilp: two trajectories of a task with different optimality under another task's instruction (label 0.5)
    Other tasks are drawn from `task_ids` if it holds more than one task, from the whole corpus otherwise.
    """
    other_pool = list(task_ids) if len(task_ids) > 1 else [t.task_id for t in corpus.tasks]
    instructions = {}

    def instructions_of(task_id: str) -> List[Instruction]:
        if task_id not in instructions:
            instructions[task_id] = task_instructions(corpus, task_id, instruction_style, seed)
        return instructions[task_id]

    pairs = []
    for task_id in task_ids:
        refs = corpus.refs(task_id)
        by_level = {level: [r for r in refs if r.level == level] for level in optimality_levels}
        levels = [level for level in optimality_levels if by_level[level]]
        others = [t for t in other_pool if t != task_id]
        if len(levels) < 2 or not others:
            raise ValueError(f"Task '{task_id}' cannot form relation pairs")
        rng = make_rng(seed, "relations", task_id)

        def pick(pool):
            return pool[rng.integers(len(pool))]

        def ranked_pair():
            i, j = rng.choice(len(levels), size=2, replace=False)
            return pick(by_level[levels[i]]), pick(by_level[levels[j]])

        for kind in kinds:
            for _ in range(pairs_per_task):
                if kind == "itp":
                    a, b = ranked_pair()
                    pairs.append(RelationPair(kind, full_segment(corpus, a), full_segment(corpus, b),
                                              pick(instructions_of(task_id)), itp_label(a.level, b.level)))
                elif kind == "ilp":
                    a, b = ranked_pair()
                    pairs.append(RelationPair(kind, full_segment(corpus, a), full_segment(corpus, b),
                                              pick(instructions_of(pick(others))), 0.5))
                elif kind == "ivp":
                    a = pick(refs)
                    b = pick(corpus.refs(pick(others)))
                    pairs.append(RelationPair(kind, full_segment(corpus, a), full_segment(corpus, b),
                                              pick(instructions_of(task_id)), 0.))
                else:
                    raise ValueError(f"Unknown relation '{kind}', expected one of {relation_kinds}")
    return pairs


def score_relation_pairs(scorer: Scorer, pairs: Sequence[RelationPair]) -> np.ndarray:
    """
    :return: (P, 2) scores of the first and second segment of each pair
    """
    queries = [q for p in pairs for q in ((p.first, p.instruction), (p.second, p.instruction))]
    return scorer.score(queries).reshape(-1, 2) if queries else np.zeros((0, 2))


def relation_metrics(pairs: Sequence[RelationPair], scores: np.ndarray, tie_eps: float = 1e-6) -> Dict[str, float]:
    """
    itp_acc / ivp_acc: fraction of pairs whose predicted label equals the relation label (ties count as wrong);
    ilp_loss: mean cross-entropy against 0.5, bounded below by ln 2.
    """
    out = {}
    for kind in relation_kinds:
        idx = [i for i, p in enumerate(pairs) if p.kind == kind]
        if not idx:
            continue
        if kind == "ilp":
            out["ilp_loss"] = float(np.mean([ce_term(bt_probability(float(scores[i, 0]), float(scores[i, 1])), 0.5)
                                             for i in idx]))
        else:
            correct = [preference_label(float(scores[i, 0] - scores[i, 1]), tie_eps) == pairs[i].label for i in idx]
            out[f"{kind}_acc"] = float(np.mean(correct))
        out[f"{kind}_pairs"] = len(idx)
    return out


def evaluate_relations(scorer: Scorer, corpus: PreferenceCorpus, task_ids: Sequence[str], pairs_per_task: int = 32,
                       seed: int = 0, instruction_style: str = "imperative", tie_eps: float = 1e-6,
                       kinds: Optional[Sequence[str]] = None) -> Dict[str, float]:
    """
    ITP accuracy, IVP accuracy and ILP loss of a scorer on held-out tasks.

    :param scorer: frozen scorer
    :param corpus: dataset
    :param task_ids: evaluated tasks (usually the test split)
    :param pairs_per_task: pairs per task and relation
    :param seed: pair sampling seed
    :param instruction_style: instruction style used for the queries
    :param tie_eps: score difference treated as a tie
    :param kinds: subset of relations to evaluate
    :return: dictionary with itp_acc, ivp_acc, ilp_loss and the pair counts
    """
    pairs = sample_relation_pairs(corpus, task_ids, pairs_per_task, seed, kinds or relation_kinds,
                                  instruction_style)
    return relation_metrics(pairs, score_relation_pairs(scorer, pairs), tie_eps)

