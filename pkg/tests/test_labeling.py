import itertools
import math

import numpy as np
import pytest

from datasets.stage_world.constants import optimality_levels
from datasets.stage_world.io import TrajectoryRef
from labeling.annotation import (LabelSet, SegmentPair, annotate, load_label_set, sample_pairs, save_label_set,
                                 scripted_labels)
from labeling.clustering import cluster_trajectories, kmeans
from labeling.relations import (RelationPair, evaluate_relations, preference_label, relation_metrics,
                                sample_relation_pairs)
from labeling.segments import FunctionScorer, Segment, ground_truth_return
from metrics import label_accuracy, label_correlation
from util.errors import DatasetIntegrityError, MissingArtifactError


def _exhaustive_inertia(points: np.ndarray) -> float:
    best = math.inf
    n = len(points)
    for mask in itertools.product((0, 1), repeat=n):
        mask = np.array(mask)
        if mask.all() or not mask.any():
            continue
        inertia = sum(float(np.sum((points[mask == c] - points[mask == c].mean(axis=0)) ** 2)) for c in (0, 1))
        best = min(best, inertia)
    return best


def test_kmeans_recovers_blobs():
    result = kmeans(np.array([0.0, 0.1, 0.9, 1.0]), 2, seed=0)
    assert result.labels[0] == result.labels[1] != result.labels[2] == result.labels[3]


@pytest.mark.parametrize("seed", range(10))
def test_kmeans_matches_exhaustive_partition(seed):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(int(rng.integers(3, 9)), 2))
    result = kmeans(points, 2, seed=seed)
    assert result.inertia == pytest.approx(_exhaustive_inertia(points), abs=1e-9)


def test_kmeans_degenerate_inputs():
    single = kmeans(np.random.default_rng(0).normal(size=(5, 3)), 1)
    assert np.all(single.labels == 0)
    duplicates = np.ones((4, 2))
    a, b = kmeans(duplicates, 2, seed=3), kmeans(duplicates, 2, seed=3)
    assert set(a.labels.tolist()) == {0, 1}
    assert np.array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        kmeans(np.zeros((1, 2)), 2)


def test_cluster_trajectories(corpus):
    refs = corpus.refs("press-red")
    clusters = cluster_trajectories(corpus, refs, seed=0)
    assert len(clusters) == 2
    assert all(clusters)
    assert sorted(clusters[0] + clusters[1]) == sorted(refs)


def _clusters(corpus, task_id: str = "press-red"):
    refs = corpus.refs(task_id)
    return [[r for r in refs if r.level == "expert"], [r for r in refs if r.level != "expert"]]


def test_sample_pairs_bounds_and_determinism(corpus):
    clusters = _clusters(corpus)
    instructions = corpus.instructions("press-red")
    pairs = sample_pairs(corpus, clusters, instructions, n=100, length=50, seed=0)
    assert len(pairs) == 100
    for p in pairs:
        assert p.first.ref in clusters[0] and p.second.ref in clusters[1]
        assert 0 <= p.first.start <= 14 and 0 <= p.second.start <= 14
        assert p.first.length == p.second.length == 50
        assert p.instruction in instructions
    assert pairs == sample_pairs(corpus, clusters, instructions, n=100, length=50, seed=0)


def test_sample_pairs_rejects_short_trajectories(corpus):
    with pytest.raises(ValueError):
        sample_pairs(corpus, _clusters(corpus), corpus.instructions("press-red"), n=5, length=65)
    with pytest.raises(ValueError):
        sample_pairs(corpus, [_clusters(corpus)[0], []], corpus.instructions("press-red"), n=5)


def _random_pairs(corpus, n: int, seed: int = 0):
    return sample_pairs(corpus, _clusters(corpus), corpus.instructions("press-red"), n=n, length=17, seed=seed)


def test_annotate_convention():
    instruction = None
    ref = TrajectoryRef("press-red", "expert", 0)
    pair = SegmentPair("press-red", Segment(ref, 0, 5), Segment(ref, 1, 5), instruction)
    scores = {0: 2., 1: 1.}
    labels = annotate([pair], FunctionScorer(lambda s, _: scores[s.start]))
    assert labels.labels == [0.]
    assert labels.scores == [(2., 1.)]
    assert annotate([pair], FunctionScorer(lambda s, _: 1.)).labels == [0.5]
    assert annotate([pair.swapped()], FunctionScorer(lambda s, _: scores[s.start])).labels == [1.]


def test_annotate_antisymmetry_and_shift_invariance(corpus):
    pairs = _random_pairs(corpus, 1000, seed=1)
    rng = np.random.default_rng(0)
    table = {}

    def fn(segment, _):
        if segment not in table:
            table[segment] = float(rng.normal())
        return table[segment]

    labels = annotate(pairs, FunctionScorer(fn)).labels
    swapped = annotate([p.swapped() for p in pairs], FunctionScorer(fn)).labels
    shifted = annotate(pairs, FunctionScorer(lambda s, i: fn(s, i) + 12.5)).labels
    assert all(a == 1. - b for a, b in zip(labels, swapped))
    assert labels == shifted


def test_scripted_labels_match_summation_oracle(corpus):
    pairs = _random_pairs(corpus, 200, seed=2)
    labels = scripted_labels(pairs, corpus)
    assert labels.source == "scripted"
    for pair, y in zip(pairs, labels.labels):
        returns = []
        for segment in (pair.first, pair.second):
            rewards = corpus.trajectory(*segment.ref).rewards
            total = 0.
            for t in range(segment.start, segment.start + segment.length):
                total += float(rewards[t])
            returns.append(total)
        assert y == preference_label(returns[0] - returns[1], 1e-9)


def test_scripted_label_ties():
    ref = TrajectoryRef("press-red", "expert", 0)
    pair = SegmentPair("press-red", Segment(ref, 0, 5), Segment(ref, 1, 5), None)
    assert scripted_labels([pair], return_fn=lambda s: 10. if s.start == 0 else 5.).labels == [0.]
    assert scripted_labels([pair], return_fn=lambda s: 3.).labels == [0.5]
    with pytest.raises(ValueError):
        scripted_labels([pair])


def test_label_set_file_round_trip(tmp_path, corpus):
    pairs = _random_pairs(corpus, 20)
    labels = scripted_labels(pairs, corpus)
    file_name = str(tmp_path / "labels" / "press-red.scripted.jsonl")
    save_label_set(file_name, labels)
    loaded = load_label_set(file_name)
    assert loaded.pairs == labels.pairs
    assert loaded.labels == labels.labels
    assert loaded.source == "scripted"
    with pytest.raises(MissingArtifactError):
        load_label_set(str(tmp_path / "missing.jsonl"))
    with open(file_name, "a") as f:
        f.write("{not json\n")
    with pytest.raises(DatasetIntegrityError):
        load_label_set(file_name)


def test_label_set_validation(corpus):
    pairs = _random_pairs(corpus, 2)
    with pytest.raises(ValueError):
        LabelSet(pairs, [0.], "model")
    with pytest.raises(ValueError):
        LabelSet(pairs, [0., 0.3], "model")
    with pytest.raises(ValueError):
        LabelSet(pairs, [0., 1.], "crowd")
    assert len(LabelSet(pairs, [0.5, 1.], "model").non_ties()) == 1


def test_label_accuracy_and_correlation():
    assert label_accuracy([0., 1., 0.5, 1.], [0., 1., 1., 1.]) == 0.75
    assert label_correlation([0., 1., 0., 1.], [0., 1., 0., 1.]) == pytest.approx(1.)
    assert label_correlation([0., 1., 0., 1.], [1., 0., 1., 0.]) == pytest.approx(-1.)
    assert math.isnan(label_correlation([0.5, 0.5, 0.5], [0., 1., 0.]))
    with pytest.raises(ValueError):
        label_accuracy([0., 1.], [0.])
    with pytest.raises(ValueError):
        label_accuracy([], [])
    with pytest.raises(ValueError):
        label_accuracy([0.2], [0.])


def _perfect_scorer(corpus):
    def fn(segment, instruction):
        if instruction.task_id != segment.ref.task_id:
            return -1e3
        return ground_truth_return(corpus, segment) + 1.

    return FunctionScorer(fn)


def test_relation_pairs(corpus, test_ids):
    pairs = sample_relation_pairs(corpus, test_ids, 6, seed=0)
    assert len(pairs) == 3 * 6 * len(test_ids)
    for p in pairs:
        if p.kind == "ilp":
            assert p.label == 0.5
            assert p.instruction.task_id != p.first.ref.task_id
        elif p.kind == "ivp":
            assert p.label == 0.
            assert p.first.ref.task_id != p.second.ref.task_id
        else:
            assert p.first.ref.level != p.second.ref.level
            expected = 0. if optimality_levels.index(p.first.ref.level) < optimality_levels.index(
                p.second.ref.level) else 1.
            assert p.label == expected


def test_perfect_scorer_relations(corpus, test_ids):
    metrics = evaluate_relations(_perfect_scorer(corpus), corpus, test_ids, pairs_per_task=8, seed=0)
    assert metrics["ivp_acc"] == 1.
    assert metrics["itp_acc"] >= 0.9
    assert metrics["ilp_loss"] >= math.log(2.) - 1e-9


def test_constant_scorer_relations(corpus, test_ids):
    metrics = evaluate_relations(FunctionScorer(lambda s, i: 0.), corpus, test_ids, pairs_per_task=8, seed=0)
    assert metrics["ilp_loss"] == pytest.approx(math.log(2.), abs=1e-12)
    assert metrics["itp_acc"] == 0.
    assert metrics["ivp_acc"] == 0.


def test_relation_metrics_subset():
    ref = TrajectoryRef("press-red", "expert", 0)
    pairs = [RelationPair("itp", Segment(ref, 0, 5), Segment(ref, 0, 5), None, 0.)]
    metrics = relation_metrics(pairs, np.array([[1., 0.]]))
    assert metrics == {"itp_acc": 1., "itp_pairs": 1}
