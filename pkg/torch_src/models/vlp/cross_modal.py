from typing import Optional, Tuple

import torch
import torch.nn as nn


class CrossAttentionBlock(nn.Module):
    """
    Pre-norm residual cross-attention: queries from one modality attend to the tokens of the other.
    With a zero output projection the block is the identity.
    """

    def __init__(self, query_dim: int, context_dim: int, num_heads: int, dropout: float = 0.1):
        super().__init__()
        self.norm_query = nn.LayerNorm(query_dim)
        self.norm_context = nn.LayerNorm(context_dim)
        self.attention = nn.MultiheadAttention(query_dim, num_heads, dropout=dropout, kdim=context_dim,
                                               vdim=context_dim, batch_first=True)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query: torch.Tensor, context: torch.Tensor, context_padding_mask: Optional[torch.Tensor] = None,
                need_weights: bool = False) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        context = self.norm_context(context)
        out, weights = self.attention(self.norm_query(query), context, context, key_padding_mask=context_padding_mask,
                                      need_weights=need_weights, average_attn_weights=True)
        return query + self.dropout(out), weights


def masked_mean(x: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    """
    :param x: (B, N, D)
    :param mask: (B, N), True marks positions to exclude
    :return: (B, D)
    """
    if mask is None:
        return x.mean(dim=1)
    keep = (~mask).to(x.dtype).unsqueeze(-1)
    return (x * keep).sum(dim=1) / keep.sum(dim=1)


class CrossModalEncoder(nn.Module):
    """
    One cross-attention block per direction: video tokens query the language tokens (language-related video
    features) and language tokens query the video tokens (video-related language features).
    """

    def __init__(self, video_dim: int, language_dim: int, num_heads: int, dropout: float = 0.1):
        super().__init__()
        self.video_dim = video_dim
        self.language_dim = language_dim
        self.video_to_language = CrossAttentionBlock(video_dim, language_dim, num_heads, dropout)
        self.language_to_video = CrossAttentionBlock(language_dim, video_dim, num_heads, dropout)

    def forward(self, video: torch.Tensor, language: torch.Tensor, language_mask: torch.Tensor,
                need_weights: bool = False):
        """
        :param video: (B, K * M, D_v) contextualized video tokens
        :param language: (B, N, D_l) contextualized language tokens
        :param language_mask: (B, N), True at pad positions
        :param need_weights: also return the language -> video attention weights (B, N, K * M)
        :return: tuple (pooled video (B, D_v), pooled language (B, D_l), weights or None)
        """
        if video.dim() != 3 or language.dim() != 3 or video.shape[0] != language.shape[0] \
                or video.shape[-1] != self.video_dim or language.shape[-1] != self.language_dim \
                or language_mask.shape != language.shape[:2]:
            raise ValueError(f"Shape mismatch in cross-modal fusion: video {tuple(video.shape)}, "
                             f"language {tuple(language.shape)}, mask {tuple(language_mask.shape)}")
        video_out, _ = self.video_to_language(video, language, language_mask)
        language_out, weights = self.language_to_video(language, video, None, need_weights)
        return video_out.mean(dim=1), masked_mean(language_out, language_mask), weights
