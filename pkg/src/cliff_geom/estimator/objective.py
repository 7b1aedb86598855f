"""Batched objective over the 85 free values and its central-difference gradient.

Layout of a parameter vector: 72 pose values (24 axis-angle rotations),
10 shape values, then the weak-perspective ``(s, tx, ty)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..body_model import (
    N_JOINTS, N_POSE, N_SHAPE, BodyParams, BodyTemplate, default_template,
    forward_kinematics, rodrigues_array,
)
from ..camera import F_HMR, R_CROP, WeakPerspective, project_array
from ..losses import (
    LossWeights, Observation, crop_points, full_points,
)

N_PARAMS = N_POSE + N_SHAPE + 3
SHAPE_SLICE = slice(N_POSE, N_POSE + N_SHAPE)
WEAK_SLICE = slice(N_POSE + N_SHAPE, N_PARAMS)

H_ROT = 1e-5
H_SHAPE = 1e-5
H_WEAK = 1e-6


def fd_steps() -> np.ndarray:
    h = np.full(N_PARAMS, H_ROT)
    h[SHAPE_SLICE] = H_SHAPE
    h[WEAK_SLICE] = H_WEAK
    return h


def pack(params: BodyParams, weak: WeakPerspective) -> np.ndarray:
    return np.concatenate([params.pose.ravel(), params.shape, weak.as_array()])


def unpack(x) -> tuple[BodyParams, WeakPerspective]:
    x = np.asarray(x, dtype=float)
    return BodyParams.from_vector(x[:N_POSE + N_SHAPE]), WeakPerspective(*x[WEAK_SLICE])


@dataclass
class Features:
    """Quantities the loss terms read; arrays carry batch dims (B, P)."""

    rots: np.ndarray     # (..., 24, 3, 3) local rotations
    joints: np.ndarray   # (..., 24, 3) root-relative
    shape: np.ndarray    # (..., 10)
    weak: np.ndarray     # (..., 3)


def features(x, template: BodyTemplate) -> Features:
    x = np.asarray(x)
    pose = x[..., :N_POSE].reshape(x.shape[:-1] + (N_JOINTS, 3))
    shape = x[..., SHAPE_SLICE]
    joints, _ = forward_kinematics(pose, shape, template)
    return Features(rodrigues_array(pose), joints, shape, x[..., WEAK_SLICE])


def _descendants(parents) -> np.ndarray:
    n = len(parents)
    desc = np.eye(n, dtype=bool)
    for j in range(n - 1, 0, -1):
        desc[parents[j]] |= desc[j]
    return desc


def perturbed_features(x, template: BodyTemplate, h=None) -> Features:
    """Features at ``x +- h_i e_i`` for every coordinate, shape (B, 2 * 85, ...).

    Index ``2 i`` holds the plus step of coordinate ``i``, ``2 i + 1`` the
    minus step. Changing one local rotation moves that joint's subtree
    rigidly about the joint, and joints are linear in shape, so the
    perturbed joints come out exactly without re-running the chain.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = fd_steps() if h is None else np.asarray(h, dtype=float)
    nb = x.shape[0]
    pose = x[:, :N_POSE].reshape(nb, N_JOINTS, 3)
    shape = x[:, SHAPE_SLICE]
    weak = x[:, WEAK_SLICE]
    local = rodrigues_array(pose)
    joints, grot = forward_kinematics(pose, shape, template)
    parents = np.array(template.parents)
    desc = _descendants(template.parents)

    sign = np.array([1.0, -1.0])
    # pose: (B, 24 joints, 3 comps, 2 signs, 3)
    step = np.einsum("jc,s,cd->jcsd", h[:N_POSE].reshape(N_JOINTS, 3), sign, np.eye(3))
    vp = pose[:, :, None, None, :] + step[None]
    rp = rodrigues_array(vp)
    gpar = np.empty_like(grot)
    gpar[:, 0] = np.eye(3)
    gpar[:, 1:] = grot[:, parents[1:]]
    gnew = np.einsum("bjxy,bjcsyz->bjcsxz", gpar, rp)
    delta = np.einsum("bjcsxy,bjzy->bjcsxz", gnew, grot)
    rel = joints[:, None, :, :] - joints[:, :, None, :]              # (B, j, d, 3)
    moved = joints[:, :, None, None, None, :] + np.einsum("bjcsxy,bjdy->bjcsdx", delta, rel)
    mask = desc[None, :, None, None, :, None]
    jp = np.where(mask, moved, joints[:, None, None, None, :, :])
    jp = jp.reshape(nb, 2 * N_POSE, N_JOINTS, 3)

    rots_p = np.broadcast_to(local[:, None], (nb, 2 * N_POSE, N_JOINTS, 3, 3)).copy()
    r6 = rots_p.reshape(nb, N_JOINTS, 6, N_JOINTS, 3, 3)
    ar = np.arange(N_JOINTS)
    r6[:, ar, :, ar] = rp.reshape(nb, N_JOINTS, 6, 3, 3).transpose(1, 0, 2, 3, 4)

    # shape: joints are linear in beta
    w = np.einsum("bjxy,kjy->bkjx", gpar, template.shape_basis)
    w[:, :, 0] = 0.0
    dj = np.einsum("da,bkax->bkdx", desc.T.astype(float), w)       # (B, 10, 24, 3)
    hs = h[SHAPE_SLICE]
    js = joints[:, None, None] + sign[None, None, :, None, None] * hs[None, :, None, None, None] \
        * dj[:, :, None]
    js = js.reshape(nb, 2 * N_SHAPE, N_JOINTS, 3)
    shape_s = shape[:, None, None, :] + np.einsum("k,s,kl->ksl", hs, sign, np.eye(N_SHAPE))[None]
    shape_s = shape_s.reshape(nb, 2 * N_SHAPE, N_SHAPE)

    hw = h[WEAK_SLICE]
    weak_w = (weak[:, None, None, :] + np.einsum("k,s,kl->ksl", hw, sign, np.eye(3))[None])
    weak_w = weak_w.reshape(nb, 6, 3)

    n_other = 2 * N_SHAPE + 6
    rots = np.concatenate([rots_p, np.broadcast_to(local[:, None], (nb, n_other, N_JOINTS, 3, 3))],
                          axis=1)
    all_joints = np.concatenate([jp, js, np.broadcast_to(joints[:, None], (nb, 6, N_JOINTS, 3))],
                                axis=1)
    all_shape = np.concatenate([np.broadcast_to(shape[:, None], (nb, 2 * N_POSE, N_SHAPE)),
                                shape_s, np.broadcast_to(shape[:, None], (nb, 6, N_SHAPE))], axis=1)
    all_weak = np.concatenate([np.broadcast_to(weak[:, None], (nb, 2 * (N_POSE + N_SHAPE), 3)),
                               weak_w], axis=1)
    return Features(rots, all_joints, all_shape, all_weak)


def _param_block(rots, shape, ref_rots, ref_shape, lead):
    dr = (rots - ref_rots).reshape(lead + (-1,))
    ds = shape - ref_shape
    return np.concatenate([dr / np.sqrt(dr.shape[-1]), ds / np.sqrt(ds.shape[-1])], axis=-1)


def _stack(items, shape):
    present = [i is not None for i in items]
    if not any(present):
        return None
    if not all(present):
        raise ValueError("ground truth presence must agree across a batch")
    return np.stack([np.asarray(i, dtype=float).reshape(shape) for i in items])


class Objective:
    """Loss of a batch of observations plus an optional prior term.

    ``mode`` selects the 2D reprojection term: ``"crop"`` projects with the
    crop camera, ``"full"`` with the full camera after the crop-to-full root
    conversion. In crop mode nothing about the crop location is read.
    With ``crop_units`` the full-frame residuals are scaled by ``R_CROP / b``
    so both frames measure 2D error in resized-crop pixels.
    """

    def __init__(self, observations: Sequence[Observation], mode: str,
                 weights: LossWeights = LossWeights(), prior: Optional[Sequence[BodyParams]] = None,
                 prior_weight: float = 0.0, prior_root: bool = True,
                 template: Optional[BodyTemplate] = None, crop_units: bool = False):
        if mode not in ("crop", "full"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.weights = weights
        self.template = template or default_template()
        self.n = len(observations)
        obs = observations
        self.gt_rots = _stack([None if o.gt_params is None else rodrigues_array(o.gt_params.pose)
                               for o in obs], (N_JOINTS, 3, 3))
        self.gt_shape = _stack([None if o.gt_params is None else o.gt_params.shape for o in obs],
                               (N_SHAPE,))
        self.gt_joints = _stack([None if o.gt_joints3d is None else o.gt_joints3d.joints
                                 for o in obs], (N_JOINTS, 3))
        key = "kp2d_crop" if mode == "crop" else "kp2d_full"
        self.kp = _stack([getattr(o, key) for o in obs], (-1, 2))
        if self.kp is not None:
            k = self.kp.shape[1]
            self.conf = np.stack([o.confidences(k) for o in obs])
        if mode == "full":
            self.bbox = np.stack([o.bbox.as_array() for o in obs])
            self.focal = np.array([o.camera.focal for o in obs])
            self.pp = np.array([[o.camera.px, o.camera.py] for o in obs])
            self.kp_scale = R_CROP / self.bbox[:, 2] if crop_units else np.ones(self.n)
        self.prior_weight = float(prior_weight)
        self.prior_root = prior_root
        self.prior_rots = self.prior_shape = None
        if prior is not None and self.prior_weight > 0:
            self.prior_rots = np.stack([rodrigues_array(p.pose) for p in prior])
            self.prior_shape = np.stack([p.shape for p in prior])
        if (self.gt_rots is None and self.gt_joints is None and self.kp is None
                and self.prior_rots is None):
            raise ValueError(f"no applicable loss term for mode {mode!r}")

    # arrays broadcast as (B, P, ...) against targets (B, ...)
    def residual_blocks(self, f: Features) -> dict:
        """Unweighted residuals per term; each term equals the sum of squares of its block."""
        out = {}
        lead = f.weak.shape[:-1]
        if self.gt_rots is not None:
            out["smpl"] = _param_block(f.rots, f.shape, self.gt_rots[:, None],
                                       self.gt_shape[:, None], lead)
        if self.gt_joints is not None:
            rel = (f.joints - f.joints[..., :1, :]) - (self.gt_joints - self.gt_joints[:, :1])[:, None]
            out["j3d"] = rel.reshape(lead + (-1,)) / np.sqrt(N_JOINTS)
        if self.kp is not None:
            k = self.kp.shape[1]
            if self.mode == "crop":
                pts = crop_points(f.joints, f.weak)
                proj = project_array(pts, F_HMR)
                kp = self.kp
            else:
                focal = self.focal[:, None]
                pts = full_points(f.joints, f.weak, self.bbox[:, None], focal)
                proj = project_array(pts, focal[..., None], self.pp[:, None, None, 0],
                                     self.pp[:, None, None, 1])
                proj = proj * self.kp_scale[:, None, None, None]
                kp = self.kp * self.kp_scale[:, None, None]
            d = (proj - kp[:, None]) * np.sqrt(self.conf / k)[:, None, :, None]
            bad = (np.real(f.weak[..., 0]) <= 0) | np.any(np.real(pts[..., 2]) <= 0, axis=-1)
            out["kp2d_" + self.mode] = np.where(bad[..., None], np.inf, d.reshape(lead + (-1,)))
        if self.prior_rots is not None:
            lo = 0 if self.prior_root else 1
            out["prior"] = _param_block(f.rots[..., lo:, :, :], f.shape,
                                        self.prior_rots[:, None, lo:], self.prior_shape[:, None],
                                        lead)
        return out

    def terms(self, f: Features) -> dict:
        return {k: np.sum(b * b, axis=-1) for k, b in self.residual_blocks(f).items()}

    def _scale(self, name):
        return {"smpl": self.weights.smpl, "j3d": self.weights.j3d,
                "kp2d_crop": self.weights.kp2d, "kp2d_full": self.weights.kp2d,
                "prior": self.prior_weight}[name]

    def combine(self, terms: dict):
        return sum(self._scale(k) * v for k, v in terms.items())

    def residuals(self, f: Features):
        """Weighted residual vector whose squared norm is the objective."""
        blocks = self.residual_blocks(f)
        return np.concatenate([np.sqrt(self._scale(k)) * b for k, b in blocks.items()], axis=-1)

    def values(self, x) -> np.ndarray:
        """Objective for x of shape (B, P, 85) or (B, 85)."""
        x = np.asarray(x)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[:, None]
        v = self.combine(self.terms(features(x, self.template)))
        return v[:, 0] if squeeze else v

    def breakdown(self, x) -> list:
        t = self.terms(features(np.asarray(x)[:, None], self.template))
        return [{k: float(v[b, 0]) for k, v in t.items()} for b in range(self.n)]

    def value_and_grad(self, x):
        """Per-sample objective (B,) and central-difference gradients (B, 85)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = fd_steps()
        base = self.values(x)
        vals = self.combine(self.terms(perturbed_features(x, self.template, h)))
        grad = (vals[:, 0::2] - vals[:, 1::2]) / (2.0 * h)
        return base, grad

    def residuals_and_jacobian(self, x):
        """Weighted residuals (B, m) and their central-difference Jacobian (B, m, 85)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = fd_steps()
        r = self.residuals(features(x[:, None], self.template))[:, 0]
        rp = self.residuals(perturbed_features(x, self.template, h))
        jac = (rp[:, 0::2] - rp[:, 1::2]) / (2.0 * h)[None, :, None]
        return r, np.swapaxes(jac, 1, 2)
