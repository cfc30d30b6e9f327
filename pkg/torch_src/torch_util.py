import hashlib
import random
from typing import Union

import numpy as np
import torch
import torch.backends.cudnn as cudnn


def set_seed(seed: int):
    """
    Set seed for reproducibility.
    :param seed: seed
    """
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.cuda.manual_seed_all(seed)
    random.seed(seed)
    cudnn.deterministic = True
    cudnn.benchmark = False
    torch.use_deterministic_algorithms(True, warn_only=True)


def make_rng(*keys: Union[int, str]) -> np.random.Generator:
    """
    Create a numpy generator from a tuple of integer / string keys, e.g. make_rng(seed, "val", epoch).
    Strings are hashed with SHA-256 so streams do not depend on Python's hash salt.
    :return: generator
    """
    entropy = []
    for k in keys:
        if isinstance(k, str):
            entropy.append(int.from_bytes(hashlib.sha256(k.encode("utf-8")).digest()[:8], "little"))
        else:
            entropy.append(int(k))
    return np.random.default_rng(entropy)


def get_device(name: str = "cpu") -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)
