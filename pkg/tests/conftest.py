import numpy as np
import pytest
import torch

from datasets.stage_world.env import make_registry
from datasets.stage_world.io import load_dataset
from datasets.stage_world.preprocess_data import build_dataset
from models.vlp.vlp import Model

train_task_ids = ("push-red", "pull-green", "lock-blue", "lift-cyan")
test_task_ids = ("press-red", "rotate-blue")

tiny_model_config = {
    "num_frames": 4,
    "patch_size": 8,
    "video_dim": 16,
    "language_dim": 16,
    "num_layers": 1,
    "num_heads": 2,
    "head_sizes": [16],
    "dropout": 0.
}


@pytest.fixture(scope="session")
def registry():
    wanted = set(train_task_ids + test_task_ids)
    return [t for t in make_registry(0) if t.task_id in wanted]


@pytest.fixture(scope="session")
def corpus_path(tmp_path_factory, registry):
    path = str(tmp_path_factory.mktemp("corpus"))
    build_dataset(path, registry, trajs_per_level=3, instr_per_task=4, seed=0, registry_seed=0, show_progress=False)
    return path


@pytest.fixture(scope="session")
def corpus(corpus_path):
    return load_dataset(corpus_path)


@pytest.fixture
def tiny_model(corpus):
    torch.manual_seed(0)
    model = Model(len(corpus.vocab), **tiny_model_config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def train_ids():
    return list(train_task_ids)


@pytest.fixture(scope="session")
def test_ids():
    return list(test_task_ids)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
