"""OneEuro temporal filtering of per-frame joint estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .body_model import BodyParams, forward
from .metrics import accel_error, mpjpe


@dataclass(frozen=True)
class OneEuroConfig:
    min_cutoff: float = 1.0   # Hz
    beta: float = 0.5
    d_cutoff: float = 1.0     # Hz
    fps: float = 30.0

    def __post_init__(self):
        for name in ("min_cutoff", "d_cutoff", "fps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be >= 0, got {self.beta}")


def smoothing_factor(cutoff, fps):
    r = 2.0 * math.pi * cutoff / fps
    return r / (r + 1.0)


def oneeuro_filter(sequence, config: OneEuroConfig = OneEuroConfig()) -> np.ndarray:
    """Filter a sequence along its first axis; every other axis is an independent channel."""
    x = np.asarray(sequence, dtype=float)
    if len(x) == 0:
        raise ValueError("sequence is empty")
    out = np.empty_like(x)
    out[0] = x[0]
    a_d = smoothing_factor(config.d_cutoff, config.fps)
    dx_hat = np.zeros_like(x[0])
    for t in range(1, len(x)):
        dx = (x[t] - out[t - 1]) * config.fps
        dx_hat = a_d * dx + (1.0 - a_d) * dx_hat
        cutoff = config.min_cutoff + config.beta * np.abs(dx_hat)
        a = smoothing_factor(cutoff, config.fps)
        out[t] = out[t - 1] + a * (x[t] - out[t - 1])
    return out


@dataclass
class SmoothResult:
    raw: np.ndarray          # (T, k, 3) root-relative joints
    smoothed: np.ndarray
    accel_before: Optional[float] = None   # mm/s^2, needs ground truth
    accel_after: Optional[float] = None
    mpjpe_before: Optional[float] = None   # mm, mean over frames
    mpjpe_after: Optional[float] = None

    def to_dict(self) -> dict:
        return {"accel_before": self.accel_before, "accel_after": self.accel_after,
                "mpjpe_before": self.mpjpe_before, "mpjpe_after": self.mpjpe_after,
                "smoothed": self.smoothed.tolist()}


def _joints(frame) -> np.ndarray:
    if isinstance(frame, BodyParams):
        return forward(frame)[0].joints
    params = getattr(frame, "params", None)
    if isinstance(params, BodyParams):
        return forward(params)[0].joints
    return np.asarray(frame, dtype=float)


def smooth_sequence(frames: Sequence, config: OneEuroConfig = OneEuroConfig(),
                    gt: Optional[Sequence] = None) -> SmoothResult:
    """Filter each joint coordinate over time.

    ``frames`` holds per-frame ``BodyParams``, fit reports, or (k, 3) joint
    arrays. With ``gt`` the result also carries acceleration error and MPJPE
    before and after filtering.
    """
    raw = np.stack([_joints(f) for f in frames])
    smoothed = oneeuro_filter(raw, config)
    res = SmoothResult(raw, smoothed)
    if gt is not None:
        g = np.stack([_joints(f) for f in gt])
        if g.shape != raw.shape:
            raise ValueError(f"ground truth shape {g.shape} differs from {raw.shape}")
        if len(raw) >= 3:
            res.accel_before = accel_error(raw, g, config.fps)
            res.accel_after = accel_error(smoothed, g, config.fps)
        res.mpjpe_before = float(np.mean([mpjpe(p, q) for p, q in zip(raw, g)]))
        res.mpjpe_after = float(np.mean([mpjpe(p, q) for p, q in zip(smoothed, g)]))
    return res
