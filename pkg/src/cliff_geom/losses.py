"""Training objectives: parameter, 3D joint and 2D reprojection losses.

Every term is a mean of squared residuals. The 2D terms weight each
keypoint by its confidence and divide by the keypoint count, so a fully
masked observation contributes zero. The ``*_term`` kernels broadcast over
leading batch dimensions and are complex-step safe; the typed wrappers
validate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .body_model import BodyParams, JointSet, forward, rodrigues_array
from .camera import (
    BBox, F_HMR, PerspectiveCamera, WeakPerspective, check_in_front,
    crop_to_full_array, project_array, weak_to_crop_array,
)

TERM_NAMES = ("smpl", "j3d", "kp2d_crop", "kp2d_full")
MODES = ("crop", "full")


@dataclass(frozen=True)
class LossWeights:
    smpl: float = 1.0
    j3d: float = 1.0
    kp2d: float = 0.01

    def __post_init__(self):
        for name in ("smpl", "j3d", "kp2d"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class Observation:
    """Ground truth available for one person.

    2D keypoints are center-relative: full-image pixels for ``kp2d_full``,
    resized-crop pixels for ``kp2d_crop``. ``conf`` applies to both.
    """

    bbox: BBox
    camera: PerspectiveCamera
    gt_params: Optional[BodyParams] = None
    gt_joints3d: Optional[JointSet] = None
    kp2d_full: Optional[np.ndarray] = None
    kp2d_crop: Optional[np.ndarray] = None
    conf: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.gt_params is None and self.gt_joints3d is None
                and self.kp2d_full is None and self.kp2d_crop is None):
            raise ValueError("observation carries no ground truth")
        for name in ("kp2d_full", "kp2d_crop"):
            kp = getattr(self, name)
            if kp is not None:
                kp = np.array(kp, dtype=float)
                if kp.ndim != 2 or kp.shape[1] != 2:
                    raise ValueError(f"{name} must be k x 2")
                kp.setflags(write=False)
                object.__setattr__(self, name, kp)
        if self.conf is not None:
            c = np.array(self.conf, dtype=float)
            if np.any(c < 0) or np.any(c > 1):
                raise ValueError("confidences must lie in [0, 1]")
            c.setflags(write=False)
            object.__setattr__(self, "conf", c)

    def confidences(self, k: int) -> np.ndarray:
        return np.ones(k) if self.conf is None else self.conf


# ---------------------------------------------------------------------------
# array kernels

def smpl_term(rots, shape, gt_rots, gt_shape):
    """Mean squared rotation-matrix difference plus mean squared shape difference."""
    dr = rots - gt_rots
    ds = shape - gt_shape
    return (np.mean((dr * dr).reshape(dr.shape[:-3] + (-1,)), axis=-1)
            + np.mean(ds * ds, axis=-1))


def j3d_term(joints, gt_joints):
    rel = (joints - joints[..., :1, :]) - (gt_joints - gt_joints[..., :1, :])
    return np.mean(np.sum(rel * rel, axis=-1), axis=-1)


def _kp_residual(pred2d, gt2d, conf):
    d = pred2d - gt2d
    return np.sum(conf * np.sum(d * d, axis=-1), axis=-1) / pred2d.shape[-2]


def crop_points(joints, weak):
    return joints + weak_to_crop_array(weak)[..., None, :]


def full_points(joints, weak, bbox, focal):
    return joints + crop_to_full_array(weak, bbox, focal)[..., None, :]


def kp2d_crop_term(joints, weak, gt2d, conf):
    return _kp_residual(project_array(crop_points(joints, weak), F_HMR), gt2d, conf)


def kp2d_full_term(joints, weak, bbox, focal, gt2d, conf, px=0.0, py=0.0):
    return _kp_residual(project_array(full_points(joints, weak, bbox, focal), focal, px, py),
                        gt2d, conf)


# ---------------------------------------------------------------------------
# typed API

def loss_smpl(pred: BodyParams, gt: BodyParams) -> float:
    return float(smpl_term(rodrigues_array(pred.pose), pred.shape,
                           rodrigues_array(gt.pose), gt.shape))


def loss_3d(pred: JointSet, gt: JointSet) -> float:
    if pred.frame != gt.frame:
        raise ValueError(f"frame mismatch: {pred.frame} vs {gt.frame}")
    if len(pred) != len(gt):
        raise ValueError("joint count mismatch")
    return float(j3d_term(pred.joints, gt.joints))


def _conf(conf, k):
    return np.ones(k) if conf is None else np.asarray(conf, dtype=float)


def loss_2d_crop(pred_joints: JointSet, weak: WeakPerspective, gt_kp, conf=None) -> float:
    pts = crop_points(pred_joints.joints, weak.as_array())
    check_in_front(pts)
    gt_kp = np.asarray(gt_kp, dtype=float)
    return float(_kp_residual(project_array(pts, F_HMR), gt_kp, _conf(conf, len(gt_kp))))


def loss_2d_full(pred_joints: JointSet, weak: WeakPerspective, bbox: BBox,
                 camera: PerspectiveCamera, gt_kp, conf=None) -> float:
    pts = full_points(pred_joints.joints, weak.as_array(), bbox.as_array(), camera.focal)
    check_in_front(pts)
    gt_kp = np.asarray(gt_kp, dtype=float)
    proj = project_array(pts, camera.focal, camera.px, camera.py)
    return float(_kp_residual(proj, gt_kp, _conf(conf, len(gt_kp))))


def total_loss(mode: str, weights: LossWeights, params: BodyParams, weak: WeakPerspective,
               obs: Observation, template=None):
    """Weighted sum of the terms that have ground truth.

    Returns ``(total, breakdown)`` where ``breakdown`` maps term names to
    unweighted values.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    joints, _ = forward(params, template)
    breakdown = {}
    if obs.gt_params is not None:
        breakdown["smpl"] = loss_smpl(params, obs.gt_params)
    if obs.gt_joints3d is not None:
        breakdown["j3d"] = loss_3d(joints, obs.gt_joints3d)
    if mode == "crop" and obs.kp2d_crop is not None:
        k = len(obs.kp2d_crop)
        breakdown["kp2d_crop"] = loss_2d_crop(joints, weak, obs.kp2d_crop, obs.confidences(k))
    if mode == "full" and obs.kp2d_full is not None:
        k = len(obs.kp2d_full)
        breakdown["kp2d_full"] = loss_2d_full(joints, weak, obs.bbox, obs.camera,
                                              obs.kp2d_full, obs.confidences(k))
    if not breakdown:
        raise ValueError(f"no applicable loss term for mode {mode!r}")
    scale = {"smpl": weights.smpl, "j3d": weights.j3d,
             "kp2d_crop": weights.kp2d, "kp2d_full": weights.kp2d}
    total = sum(scale[name] * v for name, v in breakdown.items())
    return total, breakdown
