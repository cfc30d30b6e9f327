import os
from typing import Optional

import cv2
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sn


def attention_overlay(frame: np.ndarray, grid: np.ndarray, scale: int = 4, alpha: float = 0.5) -> np.ndarray:
    """
    Blend a per-patch attention grid over an RGB frame.

    :param frame: (H, W, 3) frame with values in [0, 255]
    :param grid: (g, g) attention weights
    :param scale: upscaling factor of the output image
    :param alpha: weight of the heat map
    :return: (scale * H, scale * W, 3) uint8 RGB image
    """
    h, w = frame.shape[:2]
    size = (w * scale, h * scale)
    image = cv2.resize(np.asarray(frame, dtype=np.uint8), size, interpolation=cv2.INTER_NEAREST)
    peak = float(grid.max())
    heat = (255 * grid / peak).astype(np.uint8) if peak > 0 else np.zeros_like(grid, dtype=np.uint8)
    heat = cv2.resize(heat, size, interpolation=cv2.INTER_NEAREST)
    heat = cv2.cvtColor(cv2.applyColorMap(heat, cv2.COLORMAP_JET), cv2.COLOR_BGR2RGB)
    return cv2.addWeighted(image, 1. - alpha, heat, alpha, 0.)


def create_attention_grid(frames: np.ndarray, maps: np.ndarray, scale: int = 4) -> np.ndarray:
    """
    Two rows: the sampled frames and the same frames with their attention overlay.

    :param frames: (K, H, W, 3)
    :param maps: (K, g, g)
    :return: uint8 RGB image
    """
    if len(frames) != len(maps):
        raise ValueError(f"Got {len(frames)} frames but {len(maps)} attention grids")
    h, w = frames.shape[1:3]
    plain = [cv2.resize(np.asarray(f, dtype=np.uint8), (w * scale, h * scale), interpolation=cv2.INTER_NEAREST)
             for f in frames]
    overlays = [attention_overlay(f, m, scale) for f, m in zip(frames, maps)]
    return cv2.vconcat([cv2.hconcat(plain), cv2.hconcat(overlays)])


def save_image(out_file: str, image: np.ndarray):
    os.makedirs(os.path.dirname(os.path.abspath(out_file)), exist_ok=True)
    if not cv2.imwrite(out_file, cv2.cvtColor(image, cv2.COLOR_RGB2BGR)):
        raise IOError(f"Could not write image '{out_file}'")


def create_heatmap(mat: pd.DataFrame, title: Optional[str] = None, fmt: str = ".3f", cmap=None) -> plt.Figure:
    """
    Annotated heat map of a table, e.g. an ablation grid with one row / column per setting.
    """
    fig = plt.figure(figsize=(2 + 1.5 * len(mat.columns), 1.5 + 1. * len(mat)))
    # noinspection PyUnresolvedReferences
    sn.heatmap(mat.astype(float), annot=True, fmt=fmt, cmap=cmap or plt.cm.Blues, cbar=False)
    ax = fig.get_axes()[0]
    ax.set_ylabel(mat.index.name or "")
    ax.set_xlabel(mat.columns.name or "")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def save_figure(fig: plt.Figure, out_file: str):
    os.makedirs(os.path.dirname(os.path.abspath(out_file)), exist_ok=True)
    fig.savefig(out_file, metadata={"Software": None})
    plt.close(fig)
