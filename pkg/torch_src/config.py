import argparse
import os
import shlex
import sys
from typing import Optional, Sequence

import yaml

from preference.config import TrainConfig
from rlhf.cpl import CPLConfig
from rlhf.iql import IQLConfig
from util.errors import ConfigurationError
from util.merge import deep_merge_dictionary, parse_overrides
from util.preprocessing.data_writer import atomic_write

common_defaults = {
    "seed": 0,
    "out": "../experiments",
    "run_name": None,
    "disable_logging": False
}


def _prefixed(prefix: str, defaults: dict, exclude: Sequence[str]) -> dict:
    return {f"{prefix}_{k}": list(v) if isinstance(v, tuple) else v for k, v in defaults.items() if k not in exclude}


_policy_shared = ("seed", "eval_interval", "eval_episodes", "eval_window")

command_defaults = {
    "build-data": {
        "registry_seed": 0,
        "trajs_per_level": 8,
        "instr_per_task": 40,
        "task_ids": [],
        "num_workers": 0
    },
    "train-pref": {
        "data_run": "seed-0",
        "tensorboard": False,
        "in_memory": False,
        **{k: v for k, v in TrainConfig._field_defaults.items() if k != "seed"}
    },
    "annotate": {
        "data_run": "seed-0",
        "pref_run": "seed-{seed}",
        "checkpoint": "best",
        "task_ids": [],
        "num_pairs": 100,
        "segment_length": 50,
        "tie_eps": 1e-6,
        "scripted_tie_eps": 1e-9,
        "batch_size": 64,
        "device": "cpu"
    },
    "train-rlhf": {
        "data_run": "seed-0",
        "label_run": "seed-{seed}",
        "label_source": "model",
        "algorithms": ["iql", "piql", "cpl"],
        "task_ids": [],
        "references": True,
        "reward_epochs": 30,
        "reward_batch_size": 16,
        "reward_lr": 3e-4,
        "reward_dropout": 0.25,
        "reward_hidden_sizes": [256, 256],
        "eval_interval": 5000,
        "eval_episodes": 25,
        "eval_window": 8,
        "device": "cpu",
        **_prefixed("iql", IQLConfig._field_defaults, _policy_shared),
        **_prefixed("cpl", CPLConfig._field_defaults, _policy_shared)
    },
    "eval-relations": {
        "data_run": "seed-0",
        "pref_run": "seed-{seed}",
        "checkpoint": "best",
        "task_ids": [],
        "pairs_per_task": 32,
        "instruction_styles": ["imperative", "phrase", "description", "correct-color", "wrong-color"],
        "tie_eps": 1e-6,
        "probes_per_task": 4,
        "attention_examples": 4,
        "batch_size": 64,
        "device": "cpu"
    },
    "report": {
        "heatmaps": True
    }
}


def get_configuration(commands: Sequence[str], argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    Parse the command line.

    :return: Namespace with command, config, set, seed, out and disable_logging
    """
    parser = argparse.ArgumentParser("Vision-language preference learning")
    parser.add_argument("command", type=str, choices=commands, help="Pipeline stage to run.")
    parser.add_argument("-c", "--config", type=str, help="Path to a yaml configuration file.")
    parser.add_argument("--set", type=str, action="append", default=[], metavar="KEY=VALUE",
                        help="Override a single configuration key, takes precedence over the configuration file.")
    parser.add_argument("--seed", type=int, help="Global seed.")
    parser.add_argument("-o", "--out", type=str, help="Experiment root directory.")
    parser.add_argument("--disable_logging", action="store_true", help="Disable printing status to console.")
    config = parser.parse_args(argv)
    config.argv = list(sys.argv[1:] if argv is None else argv)
    return config


def valid_keys(command: str) -> list:
    return sorted({**common_defaults, **command_defaults[command]})


def load_configuration_file(in_path: str) -> dict:
    if not os.path.isfile(in_path):
        raise ConfigurationError(f"Configuration file not found: '{in_path}'")
    with open(in_path) as f:
        try:
            file_config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Malformed configuration file '{in_path}': {e}")
    if file_config is None:
        return {}
    if type(file_config) is not dict:
        raise ConfigurationError(f"Configuration file '{in_path}' must contain a mapping of keys to values")
    return file_config


def _check_types(config: dict, defaults: dict):
    for key, default in defaults.items():
        value = config[key]
        if default is None:
            continue
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if ok:
                config[key] = float(value)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, list):
            ok = isinstance(value, list)
        else:
            ok = isinstance(value, type(default))
        if not ok:
            raise ConfigurationError(f"Invalid value for '{key}': {value!r} (expected {type(default).__name__})")


def make_command_config(base_config: argparse.Namespace) -> dict:
    """
    Resolve the configuration of a command: defaults < configuration file < --set overrides < --seed / --out.

    :param base_config: parsed command line
    :return: flat configuration dictionary
    """
    command = base_config.command
    defaults = {**common_defaults, **command_defaults[command]}
    file_config = load_configuration_file(base_config.config) if base_config.config else {}
    try:
        overrides = parse_overrides(base_config.set)
    except ValueError as e:
        raise ConfigurationError(str(e))
    unknown = (set(file_config) | set(overrides)) - set(defaults)
    if unknown:
        raise ConfigurationError(f"Unknown keys {sorted(unknown)} for command '{command}', "
                                 f"valid keys: {valid_keys(command)}")

    config = deep_merge_dictionary([defaults, file_config, overrides])
    if base_config.seed is not None:
        config["seed"] = base_config.seed
    if base_config.out is not None:
        config["out"] = base_config.out
    if base_config.disable_logging:
        config["disable_logging"] = True
    _check_types(config, defaults)
    if config["run_name"] is None:
        config["run_name"] = "seed-{seed}"
    for key in [k for k in config if k == "run_name" or k.endswith("_run")]:
        try:
            config[key] = str(config[key]).format(seed=config["seed"])
        except (KeyError, IndexError, ValueError) as e:
            raise ConfigurationError(f"Invalid placeholder in '{key}': {e}")
    if not config["run_name"] or os.sep in config["run_name"] or config["run_name"] in (".", ".."):
        raise ConfigurationError(f"Invalid run_name '{config['run_name']}'")
    return config


def save_configuration(config: dict, out_file: str):
    """
    Save the resolved configuration as yaml file with sorted keys.
    """
    atomic_write(out_file, yaml.safe_dump(config, sort_keys=True, default_flow_style=False).encode("utf-8"))


def command_line(argv: Sequence[str]) -> str:
    return " ".join(["main.py"] + [shlex.quote(a) for a in argv]) + "\n"
