import os

import numpy as np
import torch

from datasets.stage_world.env import object_bounding_box
from datasets.stage_world.io import TrajectoryRef
from labeling.relations import evaluate_relations
from labeling.segments import ModelScorer, full_segment
from models.vlp.frames import sample_frame_indices
from models.vlp.inspection import attention_mass_ratio, frame_order_sensitivity
from models.vlp.vlp import Model, load_model
from session.annotate import checkpoint_file
from session.session import Session, dump_results
from torch_util import get_device
from util.errors import ConfigurationError
from util.visualization.model_visualization import create_attention_grid, save_image


@torch.no_grad()
def frame_attention(model: Model, frames: np.ndarray, tokens, device: torch.device) -> np.ndarray:
    """
    Cross-attention of all instruction tokens to the patches of each sampled frame.

    :return: (K, g, g), every grid sums to 1
    """
    model.eval()
    dtype = next(model.parameters()).dtype
    maps = model.attention_maps(torch.as_tensor(frames, dtype=dtype, device=device),
                                torch.as_tensor(np.asarray(tokens), dtype=torch.long, device=device)).mean(axis=0)
    return maps / maps.sum(axis=(1, 2), keepdims=True)


class EvalRelationsSession(Session):
    """
    Relation metrics of a trained preference model on held-out tasks for every instruction style, plus temporal and
    spatial diagnostics.
    """

    def __init__(self, base_config):
        super().__init__(base_config, "eval-relations")

    def start(self, config: dict = None, **kwargs):
        if config["pairs_per_task"] < 1 or not config["instruction_styles"]:
            raise ConfigurationError("pairs_per_task must be positive and instruction_styles non-empty")
        corpus = self.load_corpus(config)
        device = get_device(config["device"])
        model = load_model(checkpoint_file(self.upstream_path(config, "train-pref", "pref_run"), config["checkpoint"]),
                           corpus.manifest.vocab_hash, device)
        task_ids = self.select_tasks(corpus, config["task_ids"])
        scorer = ModelScorer(model, corpus, device, config["batch_size"])

        self.print_summary(config, model)
        with self.open_run(config) as run_path:
            styles = {}
            for style in config["instruction_styles"]:
                styles[style] = evaluate_relations(scorer, corpus, task_ids, config["pairs_per_task"], config["seed"],
                                                   style, config["tie_eps"])
                self.log(config, f"{style}: " + ", ".join(f"{k} {v:.3f}" for k, v in sorted(styles[style].items())
                                                          if not k.endswith("_pairs")))

            videos, tokens = [], []
            for task_id in task_ids:
                refs = corpus.refs(task_id)
                picks = np.linspace(0, len(refs) - 1, min(config["probes_per_task"], len(refs))).round().astype(int)
                for i in picks:
                    videos.append(scorer.video(full_segment(corpus, refs[i])))
                    tokens.append(corpus.instructions(task_id)[0].tokens)
            sensitivity = frame_order_sensitivity(model, videos, tokens, device) if videos else float("nan")

            ratios = []
            frame_size, patch_size = model.config["frame_size"], model.config["patch_size"]
            for task_id in task_ids[:config["attention_examples"]]:
                ref = TrajectoryRef(task_id, "expert", 0)
                frames = corpus.frames(*ref)
                indices = sample_frame_indices(len(frames), model.num_frames)
                sampled = np.asarray(frames[indices], dtype=np.float32)
                maps = frame_attention(model, sampled, corpus.instructions(task_id)[0].tokens, device)
                traj = corpus.trajectory(*ref)
                boxes = [object_bounding_box(traj.state(i), frame_size) for i in indices]
                ratios.append({"task_id": task_id, "ratio": attention_mass_ratio(maps, boxes, frame_size, patch_size)})
                save_image(os.path.join(run_path, "attention", f"{task_id}.png"), create_attention_grid(sampled, maps))

            dump_results(os.path.join(run_path, "relations.json"), {
                "tasks": task_ids,
                "styles": styles,
                "frame_order_sensitivity": sensitivity,
                "attention_mass_ratio": ratios,
                "mean_attention_mass_ratio": float(np.mean([r["ratio"] for r in ratios])) if ratios else None
            })
