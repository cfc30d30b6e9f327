"""
Diagnostics of a trained preference model: temporal sensitivity and spatial attention concentration.
"""
from typing import Sequence, Tuple

import numpy as np
import torch

from models.vlp.vlp import Model, score_videos


def frame_order_sensitivity(model: Model, videos: Sequence[np.ndarray], tokens: Sequence[Sequence[int]],
                            device: torch.device = torch.device("cpu"), tolerance: float = 1e-6) -> float:
    """
    Fraction of probe inputs whose score changes when the sampled frames are reversed.

    :param model: preference model
    :param videos: sampled videos, each (K, H, W, 3)
    :param tokens: one instruction per video
    :param device: device
    :param tolerance: absolute score difference counted as a change
    :return: fraction in [0, 1]
    """
    if len(videos) == 0:
        raise ValueError("At least one probe input is required")
    forward = score_videos(model, videos, tokens, device)
    backward = score_videos(model, [np.ascontiguousarray(v[::-1]) for v in videos], tokens, device)
    return float(np.mean(np.abs(forward - backward) > tolerance))


def patch_box_mask(box: Tuple[int, int, int, int], frame_size: int, patch_size: int) -> np.ndarray:
    """
    Per-patch fraction of pixels covered by a pixel box.

    :param box: (row_min, row_max, col_min, col_max), inclusive
    :return: (frame_size / patch_size, frame_size / patch_size) coverage in [0, 1]
    """
    pixels = np.zeros((frame_size, frame_size))
    pixels[box[0]:box[1] + 1, box[2]:box[3] + 1] = 1.
    g = frame_size // patch_size
    return pixels.reshape(g, patch_size, g, patch_size).mean(axis=(1, 3))


def attention_mass_ratio(maps: np.ndarray, boxes: Sequence[Tuple[int, int, int, int]], frame_size: int,
                         patch_size: int) -> float:
    """
    Attention mass inside the object box divided by the box's area fraction, averaged over frames. Patch weights are
    spread uniformly over their pixels. A value of 1 means no concentration on the object.

    :param maps: (K, g, g) per-frame attention grids, each summing to 1
    :param boxes: one object box per frame
    :param frame_size: frame side in pixels
    :param patch_size: patch side in pixels
    :return: mean ratio over frames
    """
    if len(maps) != len(boxes):
        raise ValueError(f"Got {len(maps)} attention grids but {len(boxes)} boxes")
    ratios = []
    for grid, box in zip(maps, boxes):
        coverage = patch_box_mask(box, frame_size, patch_size)
        area = (box[1] - box[0] + 1) * (box[3] - box[2] + 1) / frame_size ** 2
        ratios.append(float(np.sum(grid * coverage)) / area)
    return float(np.mean(ratios))
