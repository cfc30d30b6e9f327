import abc
import inspect

import torch


class Fusion:
    @abc.abstractmethod
    def combine(self, *tensors: torch.Tensor) -> torch.Tensor:
        pass

    @abc.abstractmethod
    def output_dim(self, *dims: int) -> int:
        pass


class ConcatenateFusion(Fusion):
    def __init__(self, concatenate_dim: int = -1):
        self._dim = concatenate_dim

    def combine(self, *tensors: torch.Tensor) -> torch.Tensor:
        return torch.cat(tensors, dim=self._dim)

    def output_dim(self, *dims: int) -> int:
        return sum(dims)


fusion_types = {
    "concatenate": ConcatenateFusion
}


def get_fusion(fusion_type: str, **kwargs) -> Fusion:
    if fusion_type not in fusion_types:
        raise ValueError("Unsupported fusion: " + fusion_type)

    args = inspect.getfullargspec(fusion_types[fusion_type].__init__).args
    kwargs = {k: v for k, v in kwargs.items() if k in args}

    return fusion_types[fusion_type](**kwargs)
