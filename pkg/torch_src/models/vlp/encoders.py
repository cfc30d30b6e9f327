from typing import Tuple

import torch
import torch.nn as nn


class PatchEmbed(nn.Module):
    """
    Image to Patch Embedding
    """

    def __init__(self, patch_size: int = 8, in_chans: int = 3, embed_dim: int = 64):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv2d(in_chans, embed_dim, kernel_size=patch_size, stride=patch_size)

    def forward(self, x):
        # x: (B, C, H, W) -> (B, M, D)
        return self.proj(x).flatten(2).transpose(1, 2)


def _self_attention_stack(dim: int, num_heads: int, num_layers: int, dropout: float) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(dim, num_heads, dim_feedforward=4 * dim, dropout=dropout, activation="gelu",
                                       batch_first=True, norm_first=True)
    return nn.TransformerEncoder(layer, num_layers, norm=nn.LayerNorm(dim), enable_nested_tensor=False)


class VideoEncoder(nn.Module):
    """
    Patch tokens per sampled frame plus a spatial position embedding and a learned per-frame-slot embedding,
    followed by joint self-attention over all K * M tokens.
    """

    def __init__(self, frame_size: int, num_frames: int, patch_size: int, dim: int, num_heads: int, num_layers: int,
                 dropout: float):
        super().__init__()
        if frame_size % patch_size != 0:
            raise ValueError(f"Frame size {frame_size} is not divisible by patch size {patch_size}")
        self.frame_size = frame_size
        self.num_frames = num_frames
        self.patch_size = patch_size
        self.grid_size = frame_size // patch_size
        self.num_patches = self.grid_size ** 2
        self.dim = dim

        self.patch_embed = PatchEmbed(patch_size, 3, dim)
        self.spatial_pos = nn.Parameter(torch.zeros(self.num_patches, dim))
        self.frame_slot = nn.Parameter(torch.zeros(num_frames, dim))
        nn.init.trunc_normal_(self.spatial_pos, std=0.02)
        nn.init.trunc_normal_(self.frame_slot, std=0.02)
        self.self_attention = _self_attention_stack(dim, num_heads, num_layers, dropout)

    def embed(self, frames: torch.Tensor) -> torch.Tensor:
        """
        :param frames: (B, K, H, W, 3) with values in [0, 1]
        :return: video tokens z of shape (B, K, M, D_v)
        """
        if frames.dim() != 5 or frames.shape[-1] != 3:
            raise ValueError(f"Expected frames of shape (B, K, H, W, 3), got {tuple(frames.shape)}")
        b, k, h, w, _ = frames.shape
        if h % self.patch_size != 0 or w % self.patch_size != 0:
            raise ValueError(f"Frame size {h}x{w} is not divisible by patch size {self.patch_size}")
        if h != self.frame_size or w != self.frame_size:
            raise ValueError(f"Model expects {self.frame_size}x{self.frame_size} frames, got {h}x{w}")
        if k != self.num_frames:
            raise ValueError(f"Model expects {self.num_frames} frames per video, got {k}")
        x = frames.reshape(b * k, h, w, 3).permute(0, 3, 1, 2)
        x = self.patch_embed(x).reshape(b, k, self.num_patches, self.dim)
        return x + self.spatial_pos[None, None] + self.frame_slot[None, :, None]

    def contextualize(self, z: torch.Tensor) -> torch.Tensor:
        """
        :param z: (B, K, M, D_v)
        :return: (B, K * M, D_v)
        """
        if z.dim() != 4 or z.shape[1:] != (self.num_frames, self.num_patches, self.dim):
            raise ValueError(f"Expected video tokens of shape (B, {self.num_frames}, {self.num_patches}, {self.dim}), "
                             f"got {tuple(z.shape)}")
        return self.self_attention(z.flatten(1, 2))


class LanguageEncoder(nn.Module):
    def __init__(self, vocab_size: int, max_length: int, dim: int, num_heads: int, num_layers: int, dropout: float,
                 pad_id: int = 0):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_length = max_length
        self.dim = dim
        self.pad_id = pad_id
        self.token_embed = nn.Embedding(vocab_size, dim, padding_idx=pad_id)
        self.position_embed = nn.Embedding(max_length, dim)
        self.self_attention = _self_attention_stack(dim, num_heads, num_layers, dropout)

    def embed(self, tokens: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :param tokens: (B, N) token ids
        :return: tuple (u of shape (B, N, D_l), pad mask of shape (B, N) with True at pad positions)
        """
        if tokens.dim() != 2 or tokens.shape[1] > self.max_length:
            raise ValueError(f"Expected tokens of shape (B, <= {self.max_length}), got {tuple(tokens.shape)}")
        if tokens.dtype.is_floating_point:
            raise ValueError("Token ids must be integers")
        if torch.any(tokens < 0) or torch.any(tokens >= self.vocab_size):
            raise ValueError(f"Token ids must be in [0, {self.vocab_size})")
        mask = tokens == self.pad_id
        if torch.any(mask.all(dim=1)):
            raise ValueError("Instruction without content tokens")
        positions = torch.arange(tokens.shape[1], device=tokens.device)
        u = self.token_embed(tokens) + self.position_embed(positions)[None]
        return u, mask

    def contextualize(self, u: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if u.dim() != 3 or u.shape[-1] != self.dim or mask.shape != u.shape[:2]:
            raise ValueError(f"Expected language tokens (B, N, {self.dim}) and mask (B, N), "
                             f"got {tuple(u.shape)} and {tuple(mask.shape)}")
        return self.self_attention(u, src_key_padding_mask=mask)
