"""
Bradley-Terry preference probability, the preference cross-entropy and the relation loss over ITP, ILP and IVP
pairs. Label convention: y = 0 means the first item is preferred, y = 1 the second one and y = 0.5 indifference.
"""
import math
from typing import NamedTuple, Union

import torch

from util.errors import DivergenceError

probability_clamp = 1e-7

Number = Union[float, torch.Tensor]


def _check_finite(*values: Number):
    for v in values:
        if isinstance(v, torch.Tensor):
            if not torch.all(torch.isfinite(v)):
                raise ValueError("Scores must be finite")
        elif not math.isfinite(v):
            raise ValueError(f"Scores must be finite, got {v}")


def bt_probability(f1: Number, f2: Number) -> Number:
    """
    P[first > second] = exp(f1) / (exp(f1) + exp(f2)) in the shifted form 1 / (1 + exp(f2 - f1)).

    :param f1: score(s) of the first item
    :param f2: score(s) of the second item
    :return: probability with the type of the inputs (float for two floats)
    """
    _check_finite(f1, f2)
    if isinstance(f1, torch.Tensor) or isinstance(f2, torch.Tensor):
        return torch.sigmoid(torch.as_tensor(f1) - torch.as_tensor(f2))
    d = f1 - f2
    if d >= 0:
        return 1. / (1. + math.exp(-d))
    e = math.exp(d)
    return e / (1. + e)


def ce_term(p: Number, y: Number) -> Number:
    """
    Preference cross-entropy -[(1 - y) log p + y log(1 - p)] with p clamped to [1e-7, 1 - 1e-7].

    :param p: predicted probability that the first item is preferred
    :param y: label in {0, 0.5, 1}
    """
    if isinstance(p, torch.Tensor):
        p = p.clamp(probability_clamp, 1. - probability_clamp)
        return -((1. - y) * torch.log(p) + y * torch.log1p(-p))
    p = min(max(p, probability_clamp), 1. - probability_clamp)
    return -((1. - y) * math.log(p) + y * math.log1p(-p))


def pair_loss(f1: torch.Tensor, f2: torch.Tensor, y: Number) -> torch.Tensor:
    return ce_term(bt_probability(f1, f2), y)


class RelationScores(NamedTuple):
    first: torch.Tensor  # (B,) f(v1 | l)
    second: torch.Tensor  # (B,) f(v2 | l)
    first_other_language: torch.Tensor  # (B, N) f(v1 | l_neg)
    second_other_language: torch.Tensor  # (B, N) f(v2 | l_neg)
    other_video: torch.Tensor  # (B, N) f(v_neg | l)


class RelationLoss(NamedTuple):
    total: torch.Tensor
    itp: torch.Tensor  # term (a)
    ilp: torch.Tensor  # term (b), unweighted
    ivp: torch.Tensor  # term (c), unweighted

    def as_dict(self) -> dict:
        return {"loss": self.total, "loss_a": self.itp, "loss_b": self.ilp, "loss_c": self.ivp}


def relation_loss(scores: RelationScores, itp_labels: torch.Tensor, lambda1: float,
                  lambda2: float) -> RelationLoss:
    """
    Per element: ITP cross-entropy + lambda1 * ILP term + lambda2 * IVP term, where the ILP and IVP terms are
    averaged over the negatives. The result is averaged over the batch.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(f"Relation weights must be non-negative, got lambda1={lambda1}, lambda2={lambda2}")
    a = pair_loss(scores.first, scores.second, itp_labels)
    b = pair_loss(scores.first_other_language, scores.second_other_language, 0.5).mean(dim=1)
    c = (pair_loss(scores.first[:, None], scores.other_video, 0.) +
         pair_loss(scores.second[:, None], scores.other_video, 0.)).mean(dim=1)
    total = (a + lambda1 * b + lambda2 * c).mean()
    return RelationLoss(total, a.mean(), b.mean(), c.mean())


def check_finite_loss(loss: RelationLoss, step: int):
    for term, value in loss.as_dict().items():
        if not torch.isfinite(value):
            raise DivergenceError(term, step, value.item())


def relation_scores(model, batch: dict) -> RelationScores:
    """
    Score every relation of a batch. Each unique video and instruction is self-attended once, the
    (video, instruction) combinations are fused in one pass.

    :param model: preference model (models.vlp.vlp.Model)
    :param batch: tensors of a RelationBatch (see RelationBatch.to_tensors)
    """
    video = model.contextualize_video(model.encode_video(batch["videos"]))
    language = model.contextualize_language(*model.encode_language(batch["tokens"]))

    first, second, instruction = batch["first"], batch["second"], batch["instruction"]
    video_neg, language_neg = batch["video_negatives"], batch["language_negatives"]
    b, n = video_neg.shape
    video_index = torch.cat((first, second, first.repeat_interleave(n), second.repeat_interleave(n),
                             video_neg.reshape(-1)))
    language_index = torch.cat((instruction, instruction, language_neg.reshape(-1), language_neg.reshape(-1),
                                instruction.repeat_interleave(n)))
    scores = model.score_pairs(video, language, video_index, language_index)
    s1, s2, s1_neg, s2_neg, s_vid = torch.split(scores, [b, b, b * n, b * n, b * n])
    return RelationScores(s1, s2, s1_neg.reshape(b, n), s2_neg.reshape(b, n), s_vid.reshape(b, n))


def total_loss(batch: dict, model, lambda1: float = 0.1, lambda2: float = 0.5) -> RelationLoss:
    return relation_loss(relation_scores(model, batch), batch["itp_labels"], lambda1, lambda2)
