"""Evaluation metrics. Inputs in meters, outputs in millimeters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body_model import JointSet, VertexSet

M_TO_MM = 1000.0
PELVIS = 0


class DegenerateConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        r = np.asarray(self.rotation, dtype=float)
        if not (np.allclose(r @ r.T, np.eye(3), atol=1e-8) and np.linalg.det(r) > 0):
            raise ValueError("rotation must be proper orthonormal")

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def _points(x):
    if isinstance(x, JointSet):
        return x.joints
    if isinstance(x, VertexSet):
        return x.vertices
    return np.asarray(x, dtype=float)


def _same_count(a, b):
    if a.shape != b.shape:
        raise ValueError(f"point sets differ in shape: {a.shape} vs {b.shape}")


def mpjpe(pred, gt) -> float:
    """Mean joint distance after aligning both sets at the pelvis."""
    p, g = _points(pred), _points(gt)
    _same_count(p, g)
    d = (p - p[PELVIS]) - (g - g[PELVIS])
    return float(np.mean(np.linalg.norm(d, axis=-1)) * M_TO_MM)


def procrustes_align(pred, gt):
    """Least-squares similarity transform mapping ``pred`` onto ``gt``.

    Returns the transform and the aligned prediction. Reflections are
    excluded by the determinant correction.
    """
    p, g = _points(pred), _points(gt)
    _same_count(p, g)
    if len(p) < 3:
        raise DegenerateConfigurationError("need at least 3 points")
    mp, mg = p.mean(axis=0), g.mean(axis=0)
    p0, g0 = p - mp, g - mg
    sv = np.linalg.svd(p0, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateConfigurationError("prediction points are collinear or coincident")
    u, sig, vt = np.linalg.svd(g0.T @ p0)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(u @ vt)) or 1.0
    rot = u @ np.diag(d) @ vt
    scale = float(np.sum(sig * d) / np.sum(p0 * p0))
    trans = mg - scale * mp @ rot.T
    tf = SimilarityTransform(scale, rot, trans)
    return tf, tf.apply(p)


def pa_mpjpe(pred, gt) -> float:
    if np.array_equal(_points(pred), _points(gt)):
        return 0.0   # skip the SVD round-off on identical inputs
    _, aligned = procrustes_align(pred, gt)
    g = _points(gt)
    return float(np.mean(np.linalg.norm(aligned - g, axis=-1)) * M_TO_MM)


def pve(pred, gt, pred_root=None, gt_root=None) -> float:
    """Mean vertex distance after aligning the root joints.

    ``pred_root``/``gt_root`` are the root-joint positions of each mesh; when
    omitted the meshes are assumed to already share a root at the origin.
    """
    p, g = _points(pred), _points(gt)
    _same_count(p, g)
    pr = np.zeros(3) if pred_root is None else np.asarray(pred_root, float)
    gr = np.zeros(3) if gt_root is None else np.asarray(gt_root, float)
    d = (p - pr) - (g - gr)
    return float(np.mean(np.linalg.norm(d, axis=-1)) * M_TO_MM)


def _sequence(seq):
    if isinstance(seq, np.ndarray):
        return np.asarray(seq, dtype=float)
    return np.stack([_points(s) for s in seq])


def accel_error(pred_seq, gt_seq, fps: float = 30.0) -> float:
    """Mean norm of the second-difference discrepancy, mm/s^2."""
    p, g = _sequence(pred_seq), _sequence(gt_seq)
    _same_count(p, g)
    if len(p) < 3:
        raise ValueError("acceleration needs at least 3 frames")
    acc_p = p[2:] - 2.0 * p[1:-1] + p[:-2]
    acc_g = g[2:] - 2.0 * g[1:-1] + g[:-2]
    return float(np.mean(np.linalg.norm(acc_p - acc_g, axis=-1)) * fps * fps * M_TO_MM)


def geodesic_deg(r1, r2) -> float:
    """Angle of the relative rotation between two rotation matrices, degrees."""
    r = np.asarray(r1).T @ np.asarray(r2)
    # atan2 of sine (skew part) and cosine (trace) stays accurate near 0 and 180 deg
    sin = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    cos = (np.trace(r) - 1.0) / 2.0
    return float(np.degrees(np.arctan2(sin, cos)))
