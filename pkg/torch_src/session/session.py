import abc
import json
import os
from contextlib import contextmanager
from typing import Iterator, List, Optional

import numpy as np
import torch

from config import command_line, save_configuration
from datasets.stage_world.io import PreferenceCorpus, load_dataset
from progress import wrap_info
from util.errors import ConfigurationError, MissingArtifactError, OutputLockedError
from util.preprocessing.data_writer import atomic_write

lock_file = ".lock"
dataset_dir = "dataset"


def dump_results(out_file: str, results: dict):
    """
    Write a JSON artifact with sorted keys. Non-finite floats are written as null.
    """
    def _clean(x):
        if isinstance(x, dict):
            return {str(k): _clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [_clean(v) for v in x]
        if isinstance(x, (float, np.floating)):
            return float(x) if np.isfinite(x) else None
        if isinstance(x, np.integer):
            return int(x)
        return x

    atomic_write(out_file, (json.dumps(_clean(results), sort_keys=True, indent=1) + "\n").encode("utf-8"))


def load_results(in_file: str) -> dict:
    if not os.path.isfile(in_file):
        raise MissingArtifactError(f"Result file not found: '{in_file}'")
    with open(in_file) as f:
        return json.load(f)


class Session:
    """
    Session is the base class of all commands. A session writes its artifacts into <out>/<command>/<run_name>/ together
    with the resolved configuration (config.yaml) and the producing command line (command.txt).
    """

    def __init__(self, base_config, session_type: str):
        self._base_config = base_config
        self.session_type = session_type

    def run_path(self, config: dict) -> str:
        return os.path.join(config["out"], self.session_type, config["run_name"])

    @staticmethod
    def upstream_path(config: dict, command: str, key: str) -> str:
        """
        Directory of an upstream run referenced by name, e.g. upstream_path(config, "build-data", "data_run").
        """
        path = os.path.join(config["out"], command, config[key])
        if not os.path.isdir(path):
            raise MissingArtifactError(f"No '{command}' run found at '{path}' (set '{key}')")
        return path

    def load_corpus(self, config: dict) -> PreferenceCorpus:
        path = os.path.join(self.upstream_path(config, "build-data", "data_run"), dataset_dir)
        return load_dataset(path, in_memory=config.get("in_memory", False))

    @staticmethod
    def select_tasks(corpus: PreferenceCorpus, task_ids: List[str]) -> List[str]:
        """
        Requested task ids, defaulting to the test split.
        """
        if not task_ids:
            return [t.task_id for t in corpus.test_tasks]
        known = {t.task_id for t in corpus.tasks}
        unknown = [t for t in task_ids if t not in known]
        if unknown:
            raise ConfigurationError(f"Unknown task ids {unknown}, valid ids: {sorted(known)}")
        return list(task_ids)

    @contextmanager
    def open_run(self, config: dict) -> Iterator[str]:
        """
        Create and lock the run directory, then write config.yaml and command.txt.

        :return: run directory
        """
        path = self.run_path(config)
        os.makedirs(path, exist_ok=True)
        lock = os.path.join(path, lock_file)
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLockedError(f"Run directory '{path}' is locked by another process (remove '{lock}' if stale)")
        try:
            save_configuration(config, os.path.join(path, "config.yaml"))
            atomic_write(os.path.join(path, "command.txt"),
                         command_line(getattr(self._base_config, "argv", [self.session_type])).encode("utf-8"))
            yield path
        finally:
            os.close(fd)
            os.remove(lock)

    @abc.abstractmethod
    def start(self, config: dict = None, **kwargs):
        """
        Start the session using the given config.

        :param config: resolved command configuration
        :param kwargs: additional arguments
        """
        pass

    def print_summary(self, config: dict, model: Optional[torch.nn.Module] = None):
        """
        Print session and model related information if given a model.
        """
        if config["disable_logging"]:
            return

        print("PyTorch", torch.version.__version__, "CUDA", torch.version.cuda)
        print("Command:", self.session_type)
        print("Run:", self.run_path(config))
        print("Seed:", config["seed"])
        if model is not None:
            num_trainable_params = sum(p.numel() for p in model.parameters() if p.requires_grad)
            print(f"Model - Trainable parameters: {num_trainable_params:n}")

    def log(self, config: dict, msg: str):
        if not config["disable_logging"]:
            print(wrap_info(msg))

    def __str__(self):
        return self.session_type
