from typing import List, NamedTuple

from util.errors import ConfigurationError


class TrainConfig(NamedTuple):
    """
    Settings of a preference model training run. Model dimensions are passed on to models.vlp.vlp.Model.
    """
    lambda1: float = 0.1
    lambda2: float = 0.5
    optimizer: str = "ADAM"
    lr: float = 3e-5
    lr_scheduler: str = "ca"
    weight_decay: float = 0.1
    dropout: float = 0.1
    epochs: int = 2000
    seed: int = 0
    batch_size: int = 16
    num_negatives: int = 4
    num_frames: int = 8
    clip_length: int = 50
    data_fraction: float = 1.0
    val_fraction: float = 0.1
    val_pairs: int = 32
    val_interval: int = 10
    num_workers: int = 0
    device: str = "cpu"
    video_dim: int = 64
    language_dim: int = 64
    patch_size: int = 8
    num_layers: int = 2
    num_heads: int = 16
    head_sizes: List[int] = [512, 256]

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        unknown = set(d) - set(TrainConfig._fields)
        if unknown:
            raise ConfigurationError(f"Unknown training keys {sorted(unknown)}, valid keys: "
                                     f"{sorted(TrainConfig._fields)}")
        config = TrainConfig(**d)
        config.validate()
        return config

    def validate(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError(f"lambda1 and lambda2 must be >= 0, got {self.lambda1} and {self.lambda2}")
        if self.batch_size < 1 or self.num_negatives < 1 or self.num_frames < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size, num_negatives and num_frames must be positive and epochs >= 0")
        if not 0. < self.data_fraction <= 1.:
            raise ConfigurationError(f"data_fraction must be in (0, 1], got {self.data_fraction}")
        if not 0. <= self.val_fraction < 1.:
            raise ConfigurationError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.clip_length < 0:
            raise ConfigurationError(f"clip_length must be >= 0, got {self.clip_length}")
        if self.val_interval < 1:
            raise ConfigurationError(f"val_interval must be >= 1, got {self.val_interval}")

    def model_args(self) -> dict:
        return {
            "num_frames": self.num_frames,
            "patch_size": self.patch_size,
            "video_dim": self.video_dim,
            "language_dim": self.language_dim,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "head_sizes": list(self.head_sizes),
            "dropout": self.dropout
        }
