import math

import numpy as np
import pytest
import torch

from datasets.stage_world.constants import episode_length
from labeling.annotation import LabelSet, sample_pairs, scripted_labels
from labeling.segments import Segment
from models.rlhf.networks import (GaussianPolicy, RewardModel, load_policy, load_reward_model,
                                  policy_checkpoint_kind, reward_checkpoint_kind, save_network)
from preference.losses import bt_probability
from rlhf.cpl import CPLConfig, cpl_loss, cpl_train, ordered_segments, segment_advantages
from rlhf.evaluation import (RandomPolicy, ScriptedExpertPolicy, evaluate_policy, moving_average,
                             window_score)
from rlhf.iql import IQLConfig, PolicyResult, expectile_loss, iql_train, piql_train, polyak_update
from rlhf.offline_dataset import OfflineDataset, labeled_refs, rescale_rewards
from rlhf.reward_learning import learn_reward, preference_accuracy, preference_probabilities, reward_function
from util.errors import DivergenceError

task_id = "press-red"
tiny_iql = IQLConfig(batch_size=16, steps=20, hidden_sizes=(16, 16), eval_interval=10, eval_episodes=2)
tiny_cpl = CPLConfig(bc_steps=5, bc_batch_size=16, steps=20, batch_size=4, hidden_sizes=(16, 16), eval_interval=10,
                     eval_episodes=2)


@pytest.fixture(scope="module")
def dataset(corpus):
    return OfflineDataset.from_corpus(corpus, task_id)


@pytest.fixture(scope="module")
def labels(corpus):
    refs = corpus.refs(task_id)
    clusters = [[r for r in refs if r.level == "expert"], [r for r in refs if r.level != "expert"]]
    pairs = sample_pairs(corpus, clusters, corpus.instructions(task_id), n=60, length=50, seed=0)
    return scripted_labels(pairs, corpus)


def test_expectile_loss_values():
    u = torch.tensor([1., -1., 0.])
    assert expectile_loss(u, 0.7).tolist() == pytest.approx([0.7, 0.3, 0.])
    assert expectile_loss(torch.tensor([2.]), 0.5).item() == pytest.approx(2.)


def test_polyak_update():
    source, target = torch.nn.Linear(2, 1), torch.nn.Linear(2, 1)
    with torch.no_grad():
        source.weight.fill_(1.)
        target.weight.fill_(0.)
    polyak_update(target, source, 0.005)
    assert torch.allclose(target.weight, torch.full_like(target.weight, 0.005))


def test_cpl_loss_values():
    x = torch.tensor([0.3, -2., 5.], dtype=torch.float64)
    assert cpl_loss(x, x, bias=1.).item() == pytest.approx(math.log(2.), abs=1e-12)
    assert cpl_loss(torch.tensor([2.]), torch.tensor([-1.]), bias=0.5).item() < math.log(2.)
    assert cpl_loss(torch.tensor([0.]), torch.tensor([0.]), bias=0.5).item() == pytest.approx(math.log(2.))


@pytest.mark.gradient
def test_cpl_gradient(dataset):
    winner = torch.randn(3, dtype=torch.float64, requires_grad=True)
    loser = torch.randn(3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda w, l: cpl_loss(w, l, 0.5), (winner, loser), eps=1e-6, atol=1e-6)

    torch.manual_seed(0)
    policy = GaussianPolicy(dataset.observations.shape[1], dataset.actions.shape[1], (8,)).double()
    segments = [Segment(dataset.refs[0], 0, 4), Segment(dataset.refs[0], 10, 4)]
    advantages = segment_advantages(policy, dataset, segments, alpha=0.1, discount=0.9)
    cpl_loss(advantages[:1], advantages[1:], 0.5).backward()
    assert all(p.grad is not None and torch.isfinite(p.grad).all() for p in policy.parameters())


def test_segment_advantages_match_loop(dataset):
    torch.manual_seed(1)
    policy = GaussianPolicy(dataset.observations.shape[1], dataset.actions.shape[1], (8,)).double().eval()
    segments = [Segment(dataset.refs[0], 3, 5), Segment(dataset.refs[2], 0, 7)]
    with torch.no_grad():
        advantages = segment_advantages(policy, dataset, segments, alpha=0.1, discount=0.9)
        for a, segment in zip(advantages, segments):
            idx = dataset.segment_indices(segment)
            expected = 0.
            for t, i in enumerate(idx):
                obs = torch.as_tensor(dataset.observations[i:i + 1], dtype=torch.float64)
                act = torch.as_tensor(dataset.actions[i:i + 1], dtype=torch.float64)
                expected += 0.9 ** t * float(policy.log_prob(obs, act))
            assert float(a) == pytest.approx(0.1 * expected, rel=1e-9)


def test_ordered_segments_skip_ties(labels):
    with_tie = LabelSet(labels.pairs[:3], [0., 0.5, 1.], "scripted")
    winners, losers = ordered_segments(with_tie)
    assert winners == [labels.pairs[0].first, labels.pairs[2].second]
    assert losers == [labels.pairs[0].second, labels.pairs[2].first]


def test_window_score():
    values = [i / 20 for i in range(20)]
    assert len(moving_average(values, 8)) == 13
    assert window_score(values, 8) == pytest.approx(np.mean(values[-8:]))
    assert window_score([0.2, 0.4], 8) == pytest.approx(0.3)
    assert math.isnan(window_score([], 8))
    with pytest.raises(ValueError):
        window_score(values, 0)


def test_policy_result_score():
    result = PolicyResult(None, [(10, 0.5), (20, 1.)], [], window=2)
    assert result.score == pytest.approx(0.75)
    assert math.isnan(PolicyResult(None, [], []).score)


def test_reference_policies(corpus):
    task = corpus.task(task_id)
    expert = evaluate_policy(ScriptedExpertPolicy(), task, n_episodes=25, seed=0)
    random = evaluate_policy(RandomPolicy(), task, n_episodes=25, seed=0)
    assert expert >= 0.9
    assert random <= 0.1
    assert evaluate_policy(RandomPolicy(), task, n_episodes=25, seed=0) == random
    with pytest.raises(ValueError):
        evaluate_policy(RandomPolicy(), task, n_episodes=0)


def test_offline_dataset_layout(corpus, dataset):
    assert len(dataset) == 9 * episode_length
    assert dataset.dones.sum() == 9
    assert dataset.rewards is None
    offset, n = dataset.offsets[dataset.refs[1]]
    assert (offset, n) == (episode_length, episode_length)
    assert np.array_equal(dataset.observations[offset + 1], dataset.next_observations[offset])
    assert dataset.segment_indices(Segment(dataset.refs[1], 4, 3)).tolist() == [offset + 4, offset + 5, offset + 6]
    with pytest.raises(ValueError):
        dataset.segment_indices(Segment(dataset.refs[1], 60, 5))
    with pytest.raises(KeyError):
        dataset.segment_indices(Segment(corpus.refs("rotate-blue")[0], 0, 5))
    with pytest.raises(ValueError):
        OfflineDataset.from_corpus(corpus, task_id, refs=[])


def test_rescale_and_relabel(dataset):
    assert rescale_rewards(np.array([2., 4., 3.])).tolist() == [0., 1., 0.5]
    assert rescale_rewards(np.array([1., 1.])).tolist() == [0., 0.]
    relabeled = dataset.relabel(lambda obs, act: obs[:, 0] * 3. - 1.)
    assert relabeled.rewards.min() == 0. and relabeled.rewards.max() == 1.
    batch = relabeled.batch(np.array([0, 5]))
    assert set(batch) == {"observations", "actions", "next_observations", "dones", "rewards"}


def test_labeled_refs(labels):
    refs = labeled_refs(labels.pairs)
    assert refs == sorted(set(refs))
    assert all(r.task_id == task_id for r in refs)


def test_segment_sum_probability_consistency(dataset, labels):
    torch.manual_seed(0)
    reward = RewardModel(dataset.observations.shape[1], dataset.actions.shape[1], (8,), 0.).double().eval()
    probabilities = preference_probabilities(reward, dataset, labels)
    for pair, p in zip(labels.pairs[:10], probabilities):
        sums = []
        for segment in (pair.first, pair.second):
            idx = dataset.segment_indices(segment)
            with torch.no_grad():
                r = reward(torch.as_tensor(dataset.observations[idx], dtype=torch.float64),
                           torch.as_tensor(dataset.actions[idx], dtype=torch.float64))
            sums.append(float(r.sum()))
        assert abs(p - bt_probability(sums[0], sums[1])) <= 1e-12


def test_learn_reward_orders_segments(dataset, labels):
    reward = learn_reward(labels, dataset, epochs=30, batch_size=16, lr=1e-3, hidden_sizes=(32, 32), dropout=0.)
    assert not reward.training
    assert preference_accuracy(reward, dataset, labels) >= 0.75
    rewards = reward_function(reward)(dataset.observations[:10], dataset.actions[:10])
    assert rewards.shape == (10,) and rewards.dtype == np.float64


def test_learn_reward_needs_decided_labels(dataset, labels):
    with pytest.raises(ValueError):
        learn_reward(LabelSet([], [], "scripted"), dataset)
    with pytest.raises(ValueError):
        learn_reward(LabelSet(labels.pairs[:4], [0.5] * 4, "scripted"), dataset)


def test_iql_short_run(corpus, dataset):
    result = iql_train(dataset.with_rewards(rescale_rewards(dataset.true_rewards)), tiny_iql,
                       task=corpus.task(task_id))
    assert [s for s, _ in result.evaluations] == [10, 20]
    assert all(0. <= v <= 1. for _, v in result.evaluations)
    assert all(np.isfinite(r["q_loss"]) and np.isfinite(r["value_loss"]) for r in result.losses)
    assert not result.policy.training
    with pytest.raises(ValueError):
        iql_train(dataset, tiny_iql)
    with pytest.raises(ValueError):
        iql_train(dataset.with_true_rewards(), tiny_iql._replace(expectile=1.))


def test_iql_divergence(dataset):
    rewards = np.full(len(dataset), np.nan)
    with pytest.raises(DivergenceError) as e:
        iql_train(dataset.with_rewards(rewards), tiny_iql)
    assert e.value.term == "q"
    assert e.value.step == 1


def test_piql_short_run(dataset, labels):
    reward = learn_reward(labels, dataset, epochs=2, hidden_sizes=(16,), dropout=0.)
    result = piql_train(dataset, reward, tiny_iql)
    assert result.evaluations == []
    assert len(result.losses) == 2


def test_cpl_is_label_source_agnostic(dataset, labels):
    as_model = LabelSet(labels.pairs, labels.labels, "model")
    a = cpl_train(labels, dataset, tiny_cpl)
    b = cpl_train(as_model, dataset, tiny_cpl)
    assert all(np.isfinite(r["loss"]) for r in a.losses + b.losses)
    for p, q in zip(a.policy.parameters(), b.policy.parameters()):
        assert torch.equal(p, q)


def test_cpl_with_bc_term(corpus, dataset, labels):
    result = cpl_train(labels, dataset, tiny_cpl._replace(bc_weight=0.5), task=corpus.task(task_id))
    assert [s for s, _ in result.evaluations] == [10, 20]
    with pytest.raises(ValueError):
        cpl_train(LabelSet(labels.pairs[:2], [0.5, 0.5], "model"), dataset, tiny_cpl)
    with pytest.raises(ValueError):
        cpl_train(labels, dataset, tiny_cpl._replace(alpha=0.))


def test_network_checkpoints(tmp_path, dataset):
    policy = GaussianPolicy(dataset.observations.shape[1], dataset.actions.shape[1], (8,))
    reward = RewardModel(dataset.observations.shape[1], dataset.actions.shape[1], (8,))
    save_network(policy, str(tmp_path / "policy.ckpt"), policy_checkpoint_kind, steps=3)
    save_network(reward, str(tmp_path / "reward.ckpt"), reward_checkpoint_kind)
    obs = torch.as_tensor(dataset.observations[:5])
    loaded = load_policy(str(tmp_path / "policy.ckpt"))
    assert torch.allclose(loaded.deterministic(obs), policy.eval().deterministic(obs))
    assert isinstance(load_reward_model(str(tmp_path / "reward.ckpt")), RewardModel)
