import os

import numpy as np
from tqdm import tqdm

from labeling.annotation import annotate, sample_pairs, save_label_set, scripted_labels
from labeling.clustering import cluster_trajectories
from labeling.segments import ModelScorer
from metrics import label_accuracy, label_correlation
from models.vlp.vlp import load_model
from session.session import Session, dump_results
from torch_util import get_device
from util.errors import ConfigurationError

labels_dir = "labels"


def label_file(run_path: str, task_id: str, source: str) -> str:
    return os.path.join(run_path, labels_dir, f"{task_id}.{source}.jsonl")


def checkpoint_file(pref_path: str, name: str) -> str:
    return os.path.join(pref_path, "checkpoints", f"{name}.ckpt")


class AnnotateSession(Session):
    """
    Label segment pairs of unseen tasks with a trained preference model, next to the scripted reference labels.
    """

    def __init__(self, base_config):
        super().__init__(base_config, "annotate")

    def start(self, config: dict = None, **kwargs):
        if config["num_pairs"] < 1 or config["segment_length"] < 1:
            raise ConfigurationError("num_pairs and segment_length must be positive")
        corpus = self.load_corpus(config)
        device = get_device(config["device"])
        model = load_model(checkpoint_file(self.upstream_path(config, "train-pref", "pref_run"), config["checkpoint"]),
                           corpus.manifest.vocab_hash, device)
        task_ids = self.select_tasks(corpus, config["task_ids"])
        scorer = ModelScorer(model, corpus, device, config["batch_size"])

        self.print_summary(config, model)
        with self.open_run(config) as run_path:
            rows = []
            for task_id in tqdm(task_ids, desc="Annotating", disable=config["disable_logging"]):
                clusters = cluster_trajectories(corpus, corpus.refs(task_id), 2, config["seed"])
                pairs = sample_pairs(corpus, clusters, corpus.instructions(task_id), config["num_pairs"],
                                     config["segment_length"], config["seed"])
                predicted = annotate(pairs, scorer, config["tie_eps"])
                reference = scripted_labels(pairs, corpus, config["scripted_tie_eps"])
                save_label_set(label_file(run_path, task_id, "model"), predicted)
                save_label_set(label_file(run_path, task_id, "scripted"), reference)
                rows.append({
                    "task_id": task_id,
                    "num_pairs": len(pairs),
                    "cluster_sizes": [len(c) for c in clusters],
                    "label_accuracy": label_accuracy(predicted, reference),
                    "label_correlation": label_correlation(predicted, reference),
                    "model_ties": predicted.labels.count(0.5),
                    "scripted_ties": reference.labels.count(0.5)
                })

            accuracies = [r["label_accuracy"] for r in rows]
            correlations = [r["label_correlation"] for r in rows if np.isfinite(r["label_correlation"])]
            dump_results(os.path.join(run_path, "label_quality.json"), {
                "tasks": rows,
                "mean_accuracy": float(np.mean(accuracies)),
                "mean_correlation": float(np.mean(correlations)) if correlations else None,
                "undefined_correlations": len(rows) - len(correlations)
            })
        self.log(config, f"Mean label accuracy {np.mean(accuracies):.3f} over {len(rows)} tasks")
