from typing import TYPE_CHECKING, Dict

import torch

from config import make_command_config
from util.dynamic_import import import_class

if TYPE_CHECKING:
    from session.session import Session


class SessionType:
    """
    Class that describes the type of a session, i.e. one command like 'train-pref', 'annotate', etc.
    """

    def __init__(self, class_name: str, make_config_fn):
        self.class_name = class_name
        self.make_config_fn = make_config_fn

    def instantiate(self, base_config) -> "Session":
        """
        Instantiate the session using the given base configuration

        :param base_config: base config read from command line
        :return: The instantiated (but not yet started) session
        """
        session_type_class = import_class(self.class_name)
        return session_type_class(base_config)

    def create_config(self, base_config) -> dict:
        """
        Resolve the command configuration that is fed to the 'start' method of the instantiated session.

        :param base_config: base config read from command line
        :return: A dictionary of command-specific configuration
        """
        return self.make_config_fn(base_config)


session_types: Dict[str, SessionType] = {
    "build-data": SessionType("session.build_data.BuildDataSession", make_command_config),
    "train-pref": SessionType("session.train_pref.TrainPreferenceSession", make_command_config),
    "annotate": SessionType("session.annotate.AnnotateSession", make_command_config),
    "train-rlhf": SessionType("session.train_rlhf.TrainRlhfSession", make_command_config),
    "eval-relations": SessionType("session.eval_relations.EvalRelationsSession", make_command_config),
    "report": SessionType("session.report.ReportSession", make_command_config)
}

available_optimizers = {
    "SGD": torch.optim.SGD,
    "ADAM": torch.optim.Adam,
    "ADAMW": torch.optim.AdamW
}

# noinspection PyUnresolvedReferences
available_lr_schedulers = {
    "step": torch.optim.lr_scheduler.StepLR,
    "exp": torch.optim.lr_scheduler.ExponentialLR,
    "ca": torch.optim.lr_scheduler.CosineAnnealingLR
}


def create_session(base_config) -> SessionType:
    """
    Based on the given configuration create a SessionType object.

    :param base_config: base config read from command line
    :return: A SessionType that can be used to instantiate the associated session
    """
    if base_config.command not in session_types:
        raise ValueError("Unsupported command: " + base_config.command)
    return session_types[base_config.command]


def create_optimizer(name: str, model: torch.nn.Module, lr: float, **optimizer_args) -> torch.optim.Optimizer:
    name = name.upper()
    if name in available_optimizers:
        return available_optimizers[name](model.parameters(), lr, **optimizer_args)
    raise ValueError("Unsupported optimizer: " + name)


def create_learning_rate_scheduler(name: str, optimizer: torch.optim.Optimizer, **scheduler_args):
    name = name.lower() if name else ""
    if name in available_lr_schedulers:
        return available_lr_schedulers[name](optimizer, **scheduler_args)
    return None


def prepare_learning_rate_scheduler_args(name: str, epochs: int, **scheduler_args) -> dict:
    if name == "ca" and "T_max" not in scheduler_args:
        scheduler_args["T_max"] = max(epochs, 1)
    elif name == "step" and "step_size" not in scheduler_args:
        scheduler_args["step_size"] = max(epochs // 3, 1)
    elif name == "exp" and "gamma" not in scheduler_args:
        scheduler_args["gamma"] = 0.999
    return scheduler_args
