"""
Language-conditioned preference model f(v | l): video encoder, language encoder, bidirectional cross-attention and a
scalar scoring head.
"""
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from models.vlp.cross_modal import CrossModalEncoder
from models.vlp.encoders import LanguageEncoder, VideoEncoder
from models.vlp.fusion import get_fusion
from progress import apply_state_dict, load_checkpoint, save_checkpoint

checkpoint_kind = "preference-model"

default_model_config = {
    "frame_size": 32,
    "num_frames": 8,
    "patch_size": 8,
    "video_dim": 64,
    "language_dim": 64,
    "max_length": 16,
    "num_layers": 2,
    "num_heads": 16,
    "head_sizes": [512, 256],
    "dropout": 0.1
}


class VideoContext(NamedTuple):
    tokens: torch.Tensor  # (B, K * M, D_v)


class LanguageContext(NamedTuple):
    tokens: torch.Tensor  # (B, N, D_l)
    mask: torch.Tensor  # (B, N), True at pad positions


class Model(nn.Module):
    def __init__(self, vocab_size: int, **kwargs):
        super().__init__()
        unknown = set(kwargs) - set(default_model_config)
        if unknown:
            raise ValueError(f"Unknown model arguments: {sorted(unknown)}")
        self.config = {**default_model_config, **kwargs, "vocab_size": vocab_size}
        self.config["head_sizes"] = [int(h) for h in self.config["head_sizes"]]
        c = self.config

        self.video_encoder = VideoEncoder(c["frame_size"], c["num_frames"], c["patch_size"], c["video_dim"],
                                          c["num_heads"], c["num_layers"], c["dropout"])
        self.language_encoder = LanguageEncoder(vocab_size, c["max_length"], c["language_dim"], c["num_heads"],
                                                c["num_layers"], c["dropout"])
        self.cross_modal = CrossModalEncoder(c["video_dim"], c["language_dim"], c["num_heads"], c["dropout"])
        self.fusion = get_fusion("concatenate", concatenate_dim=-1)
        self.fused_dim = self.fusion.output_dim(c["video_dim"], c["language_dim"])

        layers = []
        in_features = self.fused_dim
        for size in c["head_sizes"]:
            layers.extend((nn.Linear(in_features, size), nn.ReLU(), nn.Dropout(c["dropout"])))
            in_features = size
        layers.append(nn.Linear(in_features, 1))
        self.head = nn.Sequential(*layers)

    @property
    def num_frames(self) -> int:
        return self.config["num_frames"]

    def encode_video(self, frames: torch.Tensor) -> torch.Tensor:
        """
        :param frames: (B, K, H, W, 3)
        :return: video tokens z (B, K, M, D_v)
        """
        return self.video_encoder.embed(frames)

    def encode_language(self, tokens: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :param tokens: (B, N)
        :return: tuple (language tokens u (B, N, D_l), pad mask (B, N))
        """
        return self.language_encoder.embed(tokens)

    def contextualize_video(self, z: torch.Tensor) -> VideoContext:
        return VideoContext(self.video_encoder.contextualize(z))

    def contextualize_language(self, u: torch.Tensor, mask: torch.Tensor) -> LanguageContext:
        return LanguageContext(self.language_encoder.contextualize(u, mask), mask)

    def fuse_context(self, video: VideoContext, language: LanguageContext,
                     need_weights: bool = False) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        video_mean, language_mean, weights = self.cross_modal(video.tokens, language.tokens, language.mask,
                                                              need_weights)
        return self.fusion.combine(video_mean, language_mean), weights

    def cross_modal_fuse(self, z: torch.Tensor, u: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """
        Self-attention per modality followed by cross-attention and pooling.

        :param z: (B, K, M, D_v)
        :param u: (B, N, D_l)
        :param mask: (B, N), True at pad positions
        :return: fused feature w (B, D_w)
        """
        if z.shape[0] != u.shape[0]:
            raise ValueError(f"Batch size mismatch: {z.shape[0]} videos, {u.shape[0]} instructions")
        w, _ = self.fuse_context(self.contextualize_video(z), self.contextualize_language(u, mask))
        return w

    def score_fused(self, w: torch.Tensor) -> torch.Tensor:
        return self.head(w).squeeze(-1)

    def forward(self, frames: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """
        :param frames: (B, K, H, W, 3)
        :param tokens: (B, N)
        :return: scores (B,)
        """
        u, mask = self.encode_language(tokens)
        return self.score_fused(self.cross_modal_fuse(self.encode_video(frames), u, mask))

    def score_pairs(self, video: VideoContext, language: LanguageContext, video_index: torch.Tensor,
                    language_index: torch.Tensor) -> torch.Tensor:
        """
        Score (video, instruction) combinations whose modalities were contextualized once.

        :param video: contexts of V videos
        :param language: contexts of L instructions
        :param video_index: (P,) indices into the videos
        :param language_index: (P,) indices into the instructions
        :return: scores (P,)
        """
        v = VideoContext(video.tokens[video_index])
        lang = LanguageContext(language.tokens[language_index], language.mask[language_index])
        w, _ = self.fuse_context(v, lang)
        return self.score_fused(w)

    @torch.no_grad()
    def attention_maps(self, frames: torch.Tensor, tokens: torch.Tensor) -> np.ndarray:
        """
        Language -> video cross-attention weights, averaged over heads and renormalized per frame.

        :param frames: (K, H, W, 3) sampled frames of one video
        :param tokens: (N,) instruction tokens
        :return: (num content tokens, K, H / p, W / p); every grid sums to 1
        """
        u, mask = self.encode_language(tokens[None])
        video = self.contextualize_video(self.encode_video(frames[None]))
        _, weights = self.fuse_context(video, self.contextualize_language(u, mask), need_weights=True)
        g = self.video_encoder.grid_size
        weights = weights[0][~mask[0]].reshape(-1, self.num_frames, g * g).double()
        weights = weights / weights.sum(dim=-1, keepdim=True)
        return weights.reshape(-1, self.num_frames, g, g).cpu().numpy()

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def build_model(vocab_size: int, **kwargs) -> Model:
    return Model(vocab_size, **{k: v for k, v in kwargs.items() if k in default_model_config})


def save_model(model: Model, out_file: str, vocab_hash: Optional[str], **extra):
    save_checkpoint(out_file, checkpoint_kind, model.config, model.state_dict(), vocab_hash, extra)


def load_model(in_file: str, vocab_hash: Optional[str] = None, device: torch.device = torch.device("cpu")) -> Model:
    """
    Rebuild a preference model from its checkpoint and switch it to evaluation mode.
    """
    header, state_dict = load_checkpoint(in_file, checkpoint_kind, vocab_hash)
    config = dict(header["config"])
    model = Model(config.pop("vocab_size"), **config).to(device)
    apply_state_dict(model, state_dict)
    model.eval()
    return model


@torch.no_grad()
def score_videos(model: Model, videos: Sequence[np.ndarray], tokens: Sequence[Sequence[int]],
                 device: torch.device = torch.device("cpu"), batch_size: int = 64) -> np.ndarray:
    """
    Score already sampled videos (each (K, H, W, 3)) against instructions in evaluation mode.

    :return: float64 scores
    """
    model.eval()
    dtype = next(model.parameters()).dtype
    scores = []
    for i in range(0, len(videos), batch_size):
        frames = torch.as_tensor(np.stack(videos[i:i + batch_size]), dtype=dtype, device=device)
        t = torch.as_tensor(np.asarray(tokens[i:i + batch_size]), dtype=torch.long, device=device)
        scores.append(model(frames, t).double().cpu().numpy())
    return np.concatenate(scores) if scores else np.zeros(0)
