"""
Upstream image/audio fusion.

All class tensors are laid out ``(K, rows, cols)``; row ``i`` (1-based in the
public helpers) is the time axis, column ``j`` the horizontal image axis.
The fused input for one detected box is

    mF = F * (1 + V) * M

with F the squeezed, normalised and K-times repeated detector features, V
the audio tensor built from analyser events and M the box mask.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from railfuse.errors import ShapeError
from railfuse.scene import BoundingBox, Scene


def squeeze_features(features: np.ndarray) -> np.ndarray:
    """Mean over the channel axis of a (C, rows, cols) tensor."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[0] < 1:
        raise ShapeError(f"expected (C, rows, cols) features, got {features.shape}")
    return features.mean(axis=0)


def normalize01(fmap: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    fmap = np.asarray(fmap, dtype=np.float64)
    lo, hi = fmap.min(), fmap.max()
    if hi == lo:
        return np.zeros_like(fmap)
    return (fmap - lo) / (hi - lo)


def repeat_k(fmap: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("K must be at least 1")
    return np.repeat(np.asarray(fmap, dtype=np.float64)[None], k, axis=0)


def image_tensor(features: np.ndarray, k: int) -> np.ndarray:
    return repeat_k(normalize01(squeeze_features(features)), k)


def quantize_window(t_start: float, t_end: float, duration: float, n_rows: int) -> list[int]:
    """1-based feature rows touched by the closed window [t_start, t_end].

    Each row covers ``duration / n_rows`` seconds; ``t = duration`` clamps to
    the last row.
    """
    if not (0.0 <= t_start < t_end <= duration):
        raise ValueError(f"invalid window [{t_start}, {t_end}] for duration {duration}")
    first = math.floor(t_start * n_rows / duration) + 1
    last = math.floor(t_end * n_rows / duration) + 1
    first = min(max(first, 1), n_rows)
    last = min(max(last, 1), n_rows)
    return list(range(first, last + 1))


def weighted_peak(peak: float, probs: Sequence[float]) -> np.ndarray:
    return peak * np.asarray(probs, dtype=np.float64)


def build_audio_tensor(events: Iterable, k: int, width: int, height: int, duration: float) -> np.ndarray:
    """(K, rows, cols) tensor holding each event's weighted peak on its rows.

    Overlapping events combine by elementwise maximum.
    """
    v = np.zeros((k, height, width))
    for ev in events:
        gp = weighted_peak(ev.peak, ev.probs)
        if gp.shape != (k,):
            raise ShapeError(f"event has {gp.size} class probabilities, expected {k}")
        rows = np.asarray(quantize_window(ev.t_start, ev.t_end, duration, height)) - 1
        v[:, rows, :] = np.maximum(v[:, rows, :], gp[:, None, None])
    return v


def build_mask(
    box: BoundingBox,
    image_width: float,
    image_height: float,
    width: int,
    height: int,
    k: int = 1,
) -> np.ndarray:
    """Binary (K, rows, cols) mask of grid cells whose centres fall in the box.

    The box is scaled to grid units; a box too small to contain any cell
    centre marks the single cell holding its own centre.
    """
    if box.area <= 0:
        raise ValueError("zero-area box")
    # centre of cell j in pixels is (2j+1) * image_width / (2 * width); cross-multiplied so
    # integer geometry compares exactly
    rows = (2 * np.arange(height) + 1) * image_height
    cols = (2 * np.arange(width) + 1) * image_width
    in_rows = (rows >= 2 * height * box.y_min) & (rows < 2 * height * box.y_max)
    in_cols = (cols >= 2 * width * box.x_min) & (cols < 2 * width * box.x_max)
    m = (in_rows[:, None] & in_cols[None, :]).astype(np.float64)
    if not m.any():
        r = min(max(int(math.floor((box.y_min + box.y_max) * height / (2 * image_height))), 0), height - 1)
        c = min(max(int(math.floor((box.x_min + box.x_max) * width / (2 * image_width))), 0), width - 1)
        m[r, c] = 1.0
    return np.repeat(m[None], k, axis=0)


def fuse(f: np.ndarray, v: np.ndarray, m: np.ndarray) -> np.ndarray:
    if not (f.shape == v.shape == m.shape):
        raise ShapeError(f"fuse: shapes differ {f.shape}, {v.shape}, {m.shape}")
    return f * (1.0 + v) * m


class SceneFusion:
    """Per-scene cache of F and V so each detection only needs its mask."""

    def __init__(self, scene: Scene):
        self.scene = scene
        k = scene.taxonomy.K
        layer = scene.layer
        self.f = image_tensor(scene.features, k)
        self.v = build_audio_tensor(scene.events, k, layer.width, layer.height, scene.duration)

    def fused(self, box: BoundingBox) -> np.ndarray:
        s = self.scene
        m = build_mask(box, s.image_width, s.image_height, s.layer.width, s.layer.height, s.taxonomy.K)
        return fuse(self.f, self.v, m)
