"""Camera algebra: weak-perspective and perspective crop/full-frame conversion.

Image coordinates are pixels relative to the image center (x right, y
down). The crop camera is a virtual perspective camera with a large fixed
focal length looking through the center of a square crop that was resized
to ``R_CROP`` pixels; the full camera is the camera of the original frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

R_CROP = 224
F_HMR = 5000.0


class BehindCameraError(ValueError):
    def __init__(self, index, depth):
        super().__init__(f"point {index} is not in front of the camera (Z={depth:g})")
        self.index = index


@dataclass(frozen=True)
class CropConstants:
    r: int = R_CROP
    f_hmr: float = F_HMR


CROP = CropConstants()


@dataclass(frozen=True)
class PerspectiveCamera:
    focal: float
    width: float
    height: float
    px: float = 0.0
    py: float = 0.0

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    def scaled(self, factor: float) -> "PerspectiveCamera":
        return PerspectiveCamera(self.focal * factor, self.width, self.height, self.px, self.py)


@dataclass(frozen=True)
class WeakPerspective:
    s: float
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"weak-perspective scale must be positive, got {self.s}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.tx, self.ty])


@dataclass(frozen=True)
class BBox:
    """Square crop: center offset from the image center and side length, pixels."""

    cx: float
    cy: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"bbox size must be positive, got {self.b}")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.b])


@dataclass(frozen=True)
class RootTranslation:
    tX: float
    tY: float
    tZ: float
    frame: str = "full-camera"

    def __post_init__(self):
        if self.frame not in ("crop-camera", "full-camera"):
            raise ValueError(f"bad frame tag {self.frame!r}")
        if not self.tZ > 0:
            raise ValueError(f"root must be in front of the camera, got tZ={self.tZ}")

    def as_array(self) -> np.ndarray:
        return np.array([self.tX, self.tY, self.tZ])


def estimate_focal(width: float, height: float) -> float:
    """Focal length equal to the image diagonal."""
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    return math.hypot(width, height)


def weak_to_persp_crop(weak: WeakPerspective) -> RootTranslation:
    if not weak.s > 0:
        raise ValueError("weak-perspective scale must be positive")
    return RootTranslation(weak.tx, weak.ty, 2.0 * F_HMR / (R_CROP * weak.s), "crop-camera")


def bbox_info(bbox: BBox, focal: float) -> np.ndarray:
    if not focal > 0:
        raise ValueError("focal must be positive")
    return np.array([bbox.cx / focal, bbox.cy / focal, bbox.b / focal])


def gamma_angles(bbox: BBox, focal: float) -> tuple[float, float]:
    if not focal > 0:
        raise ValueError("focal must be positive")
    return math.atan2(bbox.cx, focal), math.atan2(bbox.cy, focal)


def _yaw(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _pitch(a):
    # positive angle tilts the optical axis towards +Y (down in the image)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def crop_rotation(gamma_x: float, gamma_y: float) -> np.ndarray:
    """Rotation taking crop-camera coordinates to full-camera coordinates.

    Yaw by ``gamma_x``, then pitch by the elevation of the ray through the
    crop center, ``atan(tan(gamma_y) cos(gamma_x))``. No roll, so the crop
    camera's X axis stays horizontal and the rotated optical axis passes
    exactly through ``(f tan gamma_x, f tan gamma_y)``.
    """
    if not (abs(gamma_x) < math.pi / 2 and abs(gamma_y) < math.pi / 2):
        raise ValueError("crop angles must lie in (-pi/2, pi/2)")
    elevation = math.atan(math.tan(gamma_y) * math.cos(gamma_x))
    return _yaw(gamma_x) @ _pitch(elevation)


def bbox_rotation(bbox: BBox, focal: float) -> np.ndarray:
    return crop_rotation(*gamma_angles(bbox, focal))


def crop_to_full_array(weak, bbox, focal):
    """Vectorized crop-to-full root translation.

    ``weak`` (..., 3) holds (s, tx, ty), ``bbox`` (..., 3) holds (cx, cy, b);
    returns (..., 3). Complex-step safe.
    """
    s, tx, ty = weak[..., 0], weak[..., 1], weak[..., 2]
    cx, cy, b = bbox[..., 0], bbox[..., 1], bbox[..., 2]
    bs = b * s
    return np.stack([tx + 2.0 * cx / bs, ty + 2.0 * cy / bs, 2.0 * focal / bs], axis=-1)


def weak_to_crop_array(weak):
    s = weak[..., 0]
    return np.stack([weak[..., 1], weak[..., 2], 2.0 * F_HMR / (R_CROP * s)], axis=-1)


def crop_to_full_translation(weak: WeakPerspective, bbox: BBox, focal: float) -> RootTranslation:
    if not (weak.s > 0 and bbox.b > 0 and focal > 0):
        raise ValueError("s, b and focal must all be positive")
    t = crop_to_full_array(weak.as_array(), bbox.as_array(), focal)
    return RootTranslation(*t.tolist(), frame="full-camera")


def crop_to_full_via_crop_depth(weak: WeakPerspective, bbox: BBox, focal: float) -> RootTranslation:
    """Same conversion routed through the crop-camera depth.

    Scales ``tZ`` of :func:`weak_to_persp_crop` by ``(f / f_HMR) (r / b)``.
    """
    t_crop = weak_to_persp_crop(weak)
    bs = bbox.b * weak.s
    return RootTranslation(
        t_crop.tX + 2.0 * bbox.cx / bs,
        t_crop.tY + 2.0 * bbox.cy / bs,
        t_crop.tZ * (focal / F_HMR) * (R_CROP / bbox.b),
    )


def full_to_weak(t_full, bbox: BBox, focal: float) -> WeakPerspective:
    """Invert the crop-to-full conversion for a known root translation."""
    t = np.asarray(t_full.as_array() if isinstance(t_full, RootTranslation) else t_full, float)
    if not t[2] > 0:
        raise ValueError("root must be in front of the camera")
    s = 2.0 * focal / (bbox.b * t[2])
    bs = bbox.b * s
    return WeakPerspective(s, t[0] - 2.0 * bbox.cx / bs, t[1] - 2.0 * bbox.cy / bs)


def project_array(points, focal, px=0.0, py=0.0):
    """Pinhole projection of (..., 3) to (..., 2); no depth checks."""
    z = points[..., 2]
    return np.stack([focal * points[..., 0] / z + px, focal * points[..., 1] / z + py], axis=-1)


def check_in_front(points) -> None:
    z = np.real(np.asarray(points)[..., 2]).reshape(-1)
    bad = np.flatnonzero(~(z > 0))
    if bad.size:
        raise BehindCameraError(int(bad[0]), float(z[bad[0]]))


def project(points, camera: PerspectiveCamera) -> np.ndarray:
    """Perspective projection to center-relative pixels."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None]
    check_in_front(points)
    return project_array(points, camera.focal, camera.px, camera.py)


def weak_project_to_full(weak: WeakPerspective, bbox: BBox) -> np.ndarray:
    """Full-image location of the root under the weak-perspective crop model."""
    half = bbox.b * weak.s / 2.0
    return np.array([half * weak.tx + bbox.cx, half * weak.ty + bbox.cy])


def full_to_crop_points(points_full, bbox: BBox, focal: float) -> np.ndarray:
    """Express full-camera 3D points in the rotated crop camera frame."""
    r = bbox_rotation(bbox, focal)
    return np.asarray(points_full, dtype=float) @ r


def crop_view_pixels(points_full, bbox: BBox, focal: float) -> np.ndarray:
    """Resized-crop pixels of 3D points seen by the rotated crop camera.

    The crop camera shares the optical center and focal length of the full
    camera; resizing the ``b``-pixel crop to ``R_CROP`` scales its focal
    length by ``R_CROP / b``.
    """
    pc = full_to_crop_points(points_full, bbox, focal)
    check_in_front(pc)
    return project_array(pc, focal * R_CROP / bbox.b)


def full_pixels_to_crop(kp_full, bbox: BBox, camera: PerspectiveCamera) -> np.ndarray:
    """Map full-image pixels to resized-crop pixels through the rotated crop camera."""
    kp = np.asarray(kp_full, dtype=float)
    rays = np.concatenate([
        (kp[..., :1] - camera.px) / camera.focal,
        (kp[..., 1:2] - camera.py) / camera.focal,
        np.ones(kp.shape[:-1] + (1,)),
    ], axis=-1)
    return crop_view_pixels(rays, bbox, camera.focal)
