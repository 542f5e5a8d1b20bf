"""Two-view video augmentation: temporal trim, scale/crop, stochastic operators.

Clips are numpy float32 arrays of shape (T, H, W, 3). Pixel values live in
[0, 1] throughout the pipeline; normalization to [-1, 1] (x -> 2x - 1) is the
final step before a clip is handed to the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np


@dataclass(frozen=True)
class AugmentConfig:
    clip_len: int = 16
    scale_short_edge: int = 128
    crop_size: int = 112
    op_probability: float = 0.5
    brightness_delta: tuple[float, float] = (-0.25, 0.25)
    contrast_range: tuple[float, float] = (0.6, 1.4)
    hue_range: tuple[float, float] = (-0.1, 0.1)  # fraction of the hue circle
    blur_sigma: tuple[float, float] = (0.1, 2.0)

    def __post_init__(self):
        if self.crop_size > self.scale_short_edge:
            raise ValueError("crop_size must not exceed scale_short_edge")
        if not 0.0 <= self.op_probability <= 1.0:
            raise ValueError("op_probability must be in [0, 1]")


@dataclass
class ViewPair:
    """Two independently augmented, normalized clips sharing one label."""

    x1: np.ndarray  # (T, 112, 112, 3) in [-1, 1]
    x2: np.ndarray
    label: np.ndarray  # one-hot, length K


def trim_clip(frames: np.ndarray, clip_len: int, rng: np.random.Generator) -> np.ndarray:
    """Pick `clip_len` consecutive frames; loop cyclically if the video is shorter."""
    n = frames.shape[0]
    if n == 0:
        raise ValueError("empty video")
    if n < clip_len:
        idx = np.arange(clip_len) % n
        return frames[idx]
    start = int(rng.integers(0, n - clip_len + 1))
    return frames[start : start + clip_len]


def _scaled_dims(h: int, w: int, short_edge: int) -> tuple[int, int]:
    if h <= w:
        return short_edge, int(round(w * short_edge / h))
    return int(round(h * short_edge / w)), short_edge


def _resize_clip(frames: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    t = frames.shape[0]
    out = np.empty((t, new_h, new_w, 3), dtype=np.float32)
    for i in range(t):
        out[i] = cv2.resize(frames[i], (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    return out


def scale_and_crop(
    frames: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    """Shorter edge to `scale_short_edge` (bilinear), one random crop per clip."""
    h, w = frames.shape[1:3]
    new_h, new_w = _scaled_dims(h, w, cfg.scale_short_edge)
    if (new_h, new_w) != (h, w):
        frames = _resize_clip(frames, new_h, new_w)
    top = int(rng.integers(0, new_h - cfg.crop_size + 1))
    left = int(rng.integers(0, new_w - cfg.crop_size + 1))
    return frames[:, top : top + cfg.crop_size, left : left + cfg.crop_size, :]


def center_scale_and_crop(frames: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    """Deterministic center crop, used at evaluation time."""
    h, w = frames.shape[1:3]
    new_h, new_w = _scaled_dims(h, w, cfg.scale_short_edge)
    if (new_h, new_w) != (h, w):
        frames = _resize_clip(frames, new_h, new_w)
    top = (new_h - cfg.crop_size) // 2
    left = (new_w - cfg.crop_size) // 2
    return frames[:, top : top + cfg.crop_size, left : left + cfg.crop_size, :]


def _flip(clip: np.ndarray) -> np.ndarray:
    return clip[:, :, ::-1, :]


def _contrast(clip: np.ndarray, factor: float) -> np.ndarray:
    mean = clip.mean()
    return mean + factor * (clip - mean)


def _hue_shift(clip: np.ndarray, shift: float) -> np.ndarray:
    t, h, w, _ = clip.shape
    flat = np.ascontiguousarray(clip.reshape(t * h, w, 3))
    hsv = cv2.cvtColor(flat, cv2.COLOR_RGB2HSV)  # float32: H in [0, 360)
    hsv[..., 0] = (hsv[..., 0] + shift * 360.0) % 360.0
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB).reshape(t, h, w, 3)


def _gaussian_blur(clip: np.ndarray, sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    ksize = 2 * radius + 1
    out = np.empty_like(clip)
    for i in range(clip.shape[0]):
        out[i] = cv2.GaussianBlur(clip[i], (ksize, ksize), sigmaX=sigma, sigmaY=sigma)
    return out


def _channel_split(clip: np.ndarray, channel: int) -> np.ndarray:
    return np.repeat(clip[..., channel : channel + 1], 3, axis=-1)


def apply_photometric(
    clip: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    """Each of the six operators fires independently with `op_probability`.

    One parameter is sampled per applied operator and shared by every frame
    of the clip. Output is clamped back to [0, 1].
    """
    p = cfg.op_probability
    if rng.random() < p:
        clip = _flip(clip)
    if rng.random() < p:
        clip = _contrast(clip, float(rng.uniform(*cfg.contrast_range)))
    if rng.random() < p:
        clip = clip + float(rng.uniform(*cfg.brightness_delta))
    if rng.random() < p:
        clip = np.clip(clip, 0.0, 1.0)
        clip = _hue_shift(clip, float(rng.uniform(*cfg.hue_range)))
    if rng.random() < p:
        clip = _gaussian_blur(clip, float(rng.uniform(*cfg.blur_sigma)))
    if rng.random() < p:
        clip = _channel_split(clip, int(rng.integers(0, 3)))
    return np.clip(clip, 0.0, 1.0).astype(np.float32)


def normalize(clip: np.ndarray) -> np.ndarray:
    """Affine map [0, 1] -> [-1, 1]."""
    return (2.0 * clip - 1.0).astype(np.float32)


def augment_view(
    frames: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    clip = trim_clip(frames, cfg.clip_len, rng)
    clip = scale_and_crop(clip, cfg, rng)
    clip = apply_photometric(clip, cfg, rng)
    return normalize(clip)


def center_view(frames: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    """Deterministic evaluation view: center temporal window, center crop."""
    n = frames.shape[0]
    if n < cfg.clip_len:
        idx = np.arange(cfg.clip_len) % n
        clip = frames[idx]
    else:
        start = (n - cfg.clip_len) // 2
        clip = frames[start : start + cfg.clip_len]
    return normalize(center_scale_and_crop(clip, cfg))


def two_views(
    frames: np.ndarray,
    cfg: AugmentConfig,
    rng: np.random.Generator,
    label: np.ndarray | None = None,
) -> ViewPair:
    """Run the full pipeline twice with independent draws from `rng`."""
    x1 = augment_view(frames, cfg, rng)
    x2 = augment_view(frames, cfg, rng)
    return ViewPair(x1=x1, x2=x2, label=label)
