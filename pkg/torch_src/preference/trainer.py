"""
Optimization loop of the language-conditioned preference model.
"""
import os
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader

import session_helper
import torch_util
from dataset import RelationBatchDataset, keep_batch
from datasets.stage_world.io import PreferenceCorpus
from labeling.relations import sample_relation_pairs, score_relation_pairs
from labeling.segments import ModelScorer
from metrics import Mean, MetricsContainer, PairwiseAccuracy, SimpleMetric
from models.vlp.vlp import Model, build_model, checkpoint_kind
from preference.batch_sampler import RelationSampler
from preference.config import TrainConfig
from preference.losses import check_finite_loss, relation_loss, relation_scores
from progress import CheckpointManager, JsonLinesLog, ProgressLogger


class TrainResult(NamedTuple):
    model: Model
    best_epoch: int
    best_score: float
    train_tasks: List[str]
    val_tasks: List[str]


def split_validation_tasks(task_ids: List[str], val_fraction: float, seed: int) -> Tuple[List[str], List[str]]:
    """
    Hold out round(val_fraction * n) (at least one) training tasks for checkpoint selection. With fewer than three
    tasks, or val_fraction = 0, nothing is held out and validation runs on the training tasks.

    :return: tuple (tasks to train on, tasks to validate on)
    """
    task_ids = sorted(task_ids)
    n_val = max(1, int(round(val_fraction * len(task_ids)))) if len(task_ids) >= 3 and val_fraction > 0 else 0
    if n_val == 0:
        return task_ids, task_ids
    order = torch_util.make_rng(seed, "validation-split").permutation(len(task_ids))
    val = sorted(task_ids[i] for i in order[:n_val])
    return [t for t in task_ids if t not in val], val


def build_metrics() -> MetricsContainer:
    return MetricsContainer([
        Mean("training_loss"),
        Mean("training_loss_a"),
        Mean("training_loss_b"),
        Mean("training_loss_c"),
        PairwiseAccuracy("training_itp_accuracy"),
        Mean("validation_loss"),
        PairwiseAccuracy("validation_itp_accuracy"),
        SimpleMetric("lr")
    ])


def _json_value(x: float) -> Optional[float]:
    return None if x is None or not np.isfinite(x) else float(x)


def train(corpus: PreferenceCorpus, config: TrainConfig, out_path: str, disable_logging: bool = False,
          tensorboard: bool = False) -> TrainResult:
    """
    Train a preference model on the training tasks of a corpus.

    Writes into out_path: metrics.jsonl (one record per epoch with the loss terms a, b, c), checkpoints/best.ckpt
    (best validation ITP accuracy) and checkpoints/final.ckpt.

    :param corpus: dataset
    :param config: training configuration
    :param out_path: run directory
    :param disable_logging: do not print progress
    :param tensorboard: additionally write TensorBoard summaries to out_path/logs
    :return: TrainResult
    """
    config.validate()
    os.makedirs(out_path, exist_ok=True)
    torch_util.set_seed(config.seed)
    device = torch_util.get_device(config.device)

    train_ids, val_ids = split_validation_tasks([t.task_id for t in corpus.train_tasks], config.val_fraction,
                                                config.seed)
    sampler = RelationSampler(corpus, train_ids, config.num_frames, config.num_negatives, config.clip_length,
                              config.data_fraction)
    val_pairs = sample_relation_pairs(corpus, val_ids, config.val_pairs, config.seed, kinds=("itp",))
    val_labels = torch.tensor([p.label for p in val_pairs], dtype=torch.float64)

    model = build_model(len(corpus.vocab), **config.model_args()).to(device)
    optimizer = session_helper.create_optimizer(config.optimizer, model, config.lr, weight_decay=config.weight_decay)
    scheduler_args = session_helper.prepare_learning_rate_scheduler_args(config.lr_scheduler, config.epochs)
    lr_scheduler = session_helper.create_learning_rate_scheduler(config.lr_scheduler, optimizer, **scheduler_args)
    scorer = ModelScorer(model, corpus, device)

    num_batches = len(train_ids)
    metrics = build_metrics()
    log = JsonLinesLog(os.path.join(out_path, "metrics.jsonl"))
    cp_manager = CheckpointManager(os.path.join(out_path, "checkpoints"), checkpoint_kind, model.config,
                                   corpus.manifest.vocab_hash)
    progress = None if disable_logging else ProgressLogger(os.path.join(out_path, "logs"), config.epochs, modes=[
        ("training", num_batches),
        ("validation", 1)
    ], tensorboard=tensorboard)

    if progress:
        print(f"Preference model - Trainable parameters: {model.num_parameters():n}")
        print(f"Training tasks: {len(train_ids)}, validation tasks: {len(val_ids)}")
        progress.begin_session("train-pref")

    best_epoch = -1
    step = 0
    for epoch in range(config.epochs):
        lr = optimizer.param_groups[0]["lr"]
        metrics["lr"].update(lr)
        if progress:
            progress.begin_epoch(epoch)
            progress.begin_epoch_mode(0)

        model.train()
        loader = DataLoader(RelationBatchDataset(sampler, config.batch_size, config.seed, epoch, num_batches),
                            batch_size=None, shuffle=False, num_workers=config.num_workers, collate_fn=keep_batch)
        for relation_batch in loader:
            batch = relation_batch.to_tensors(device)
            scores = relation_scores(model, batch)
            loss = relation_loss(scores, batch["itp_labels"], config.lambda1, config.lambda2)
            check_finite_loss(loss, step)

            optimizer.zero_grad()
            loss.total.backward()
            optimizer.step()
            step += 1

            metrics.update_training(loss.as_dict(), ((scores.first - scores.second).detach(), batch["itp_labels"]))
            if progress:
                progress.update_epoch_mode(0, metrics=metrics.format_training())

        validate = (epoch + 1) % config.val_interval == 0 or epoch + 1 == config.epochs
        if validate:
            if progress:
                progress.begin_epoch_mode(1)
            scores = torch.as_tensor(score_relation_pairs(scorer, val_pairs))
            diff = scores[:, 0] - scores[:, 1]
            ce = torch.nn.functional.binary_cross_entropy_with_logits(-diff, val_labels).item()
            metrics.update_validation({"loss": ce}, (diff, val_labels))
            if progress:
                progress.update_epoch_mode(1, metrics=metrics.format_validation())
            if cp_manager.save_best(model, metrics["validation_itp_accuracy"].value, epoch):
                best_epoch = epoch

        if progress:
            progress.end_epoch(metrics)
        if lr_scheduler:
            lr_scheduler.step()

        values = metrics.values()
        log.write(epoch=epoch, lr=lr, lambda1=config.lambda1, lambda2=config.lambda2,
                  loss=_json_value(values["training_loss"]), loss_a=_json_value(values["training_loss_a"]),
                  loss_b=_json_value(values["training_loss_b"]), loss_c=_json_value(values["training_loss_c"]),
                  train_itp_acc=_json_value(values["training_itp_accuracy"]),
                  val_loss=_json_value(values["validation_loss"]) if validate else None,
                  val_itp_acc=_json_value(values["validation_itp_accuracy"]) if validate else None)
        metrics.reset_all()

    if cp_manager.best_score is None:
        cp_manager.save_weights(model, "best", epoch=-1, score=None)
    cp_manager.save_weights(model, "final", epoch=config.epochs - 1)

    if progress:
        progress.end_session()
    return TrainResult(model, best_epoch, cp_manager.best_score, train_ids, val_ids)
