from typing import Sequence

import numpy as np


def sample_frame_indices(length: int, num_frames: int) -> np.ndarray:
    """
    Evenly spaced frame indices over [0, length - 1] (first and last frame included for num_frames >= 2).
    Videos shorter than num_frames repeat frames.

    :param length: number of frames of the video
    :param num_frames: number of frames to sample (K)
    :return: int64 array of K indices
    """
    if num_frames <= 0:
        raise ValueError(f"Number of sampled frames must be positive, got {num_frames}")
    if length < 1:
        raise ValueError("Cannot sample frames from an empty video")
    return np.round(np.linspace(0, length - 1, num_frames)).astype(np.int64)


def sample_frames(video: Sequence[np.ndarray], num_frames: int) -> np.ndarray:
    """
    :param video: array-like of shape (T, H, W, 3), e.g. a memory mapped frames container
    :param num_frames: K
    :return: float32 array (K, H, W, 3)
    """
    indices = sample_frame_indices(len(video), num_frames)
    return np.asarray(video[indices] if isinstance(video, np.ndarray) else [video[i] for i in indices],
                      dtype=np.float32)
