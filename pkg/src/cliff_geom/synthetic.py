"""Synthetic scenes: people placed in front of a full-frame camera.

Crop keypoints are rendered by the rotated crop camera (same optical
center and focal length as the full camera, optical axis through the crop
center, crop resized to ``R_CROP`` pixels). Under this convention two people
related by a rotation about the optical center produce identical crops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .body_model import (
    N_JOINTS, N_SHAPE, BodyParams, default_template, forward,
    forward_kinematics, rodrigues, rotation_to_axis_angle,
)
from .camera import (
    BBox, PerspectiveCamera, RootTranslation, WeakPerspective, crop_rotation,
    crop_view_pixels, estimate_focal, full_pixels_to_crop, full_to_weak,
    project,
)
from .losses import Observation

BBOX_INFLATE = 1.1
MAX_ATTEMPTS = 100
# joints whose rotation moves no other joint
LEAF_JOINTS = (10, 11, 15, 22, 23)

# Mean articulation added to sampled poses: thighs forward, knees back, arms
# lowered, elbows bent forward. Limbs that only ever bend one way give 2D
# views a preferred depth order, which a planar rest skeleton lacks.
STANCE = np.zeros((N_JOINTS, 3))
STANCE[[1, 2], 0] = -0.3
STANCE[[4, 5], 0] = 0.6
STANCE[16, 2], STANCE[17, 2] = 1.0, -1.0
STANCE[18, 1], STANCE[19, 1] = 1.0, -1.0


class FrustumError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    n_persons: int = 1
    pose_std: float = 0.2            # articulated local rotations, rad
    yaw_range: float = 60.0          # root yaw drawn from +-yaw_range, deg
    tilt_std: float = 0.08           # root pitch/roll, rad
    stance: float = 1.0              # multiplier on STANCE; 0 gives the rest pose mean
    shape_std: float = 0.5
    depth_range: tuple = (4.0, 9.0)  # meters
    x_band: tuple = (0.0, 0.8)       # |root x| as a fraction of half the width
    y_band: tuple = (0.0, 0.3)
    width: int = 1920
    height: int = 1080
    focal: Optional[float] = None

    def __post_init__(self):
        lo, hi = self.depth_range
        if not (0 < lo <= hi):
            raise ValueError("depth_range must satisfy 0 < lo <= hi")
        for band in (self.x_band, self.y_band):
            if not (0 <= band[0] <= band[1]):
                raise ValueError("bands must satisfy 0 <= lo <= hi")
        if self.n_persons < 1:
            raise ValueError("need at least one person")

    def camera(self) -> PerspectiveCamera:
        f = self.focal if self.focal is not None else estimate_focal(self.width, self.height)
        return PerspectiveCamera(f, self.width, self.height)


@dataclass
class Person:
    params: BodyParams
    t_full: RootTranslation
    bbox: BBox
    weak: WeakPerspective


@dataclass
class Rendered:
    kp3d_full: np.ndarray   # (k, 3), meters, full camera frame
    kp2d_full: np.ndarray   # (k, 2), full-image pixels, center-relative
    kp2d_crop: np.ndarray   # (k, 2), resized-crop pixels, center-relative
    conf: np.ndarray        # (k,)


@dataclass
class Scene:
    camera: PerspectiveCamera
    persons: list
    rendered: list
    seed: int
    pseudo_gt: Optional[list] = None

    def observation(self, i: int, with_3d: bool = True) -> Observation:
        p, r = self.persons[i], self.rendered[i]
        joints, _ = forward(p.params)
        return Observation(
            bbox=p.bbox, camera=self.camera,
            gt_params=p.params if with_3d else None,
            gt_joints3d=joints if with_3d else None,
            kp2d_full=r.kp2d_full, kp2d_crop=r.kp2d_crop, conf=r.conf,
        )

    def observations(self, with_3d: bool = True) -> list:
        return [self.observation(i, with_3d) for i in range(len(self.persons))]


@dataclass
class AmbiguityPair:
    scene_center: Scene
    scene_offset: Scene
    gamma: tuple


def _euler_yxz(yaw, pitch, roll):
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return ry @ rx @ rz


def sample_params(rng: np.random.Generator, config: SceneConfig) -> BodyParams:
    pose = config.stance * STANCE + rng.normal(0.0, config.pose_std, size=(N_JOINTS, 3))
    yaw = math.radians(rng.uniform(-config.yaw_range, config.yaw_range))
    pitch, roll = rng.normal(0.0, config.tilt_std, size=2)
    pose[0] = rotation_to_axis_angle(_euler_yxz(yaw, pitch, roll))
    shape = rng.normal(0.0, config.shape_std, size=N_SHAPE)
    return BodyParams(pose, shape)


def tight_bbox(kp2d, center=None) -> BBox:
    """Square box around ``kp2d`` inflated by 10%; optionally with a fixed center."""
    kp2d = np.asarray(kp2d, dtype=float)
    if center is None:
        lo, hi = kp2d.min(axis=0), kp2d.max(axis=0)
        c = (lo + hi) / 2.0
        side = float(np.max(hi - lo))
    else:
        c = np.asarray(center, dtype=float)
        side = 2.0 * float(np.max(np.abs(kp2d - c)))
    return BBox(float(c[0]), float(c[1]), side * BBOX_INFLATE)


def render_keypoints(person: Person, camera: PerspectiveCamera) -> Rendered:
    joints, _ = forward(person.params)
    kp3d = joints.joints + person.t_full.as_array()
    kp2d = project(kp3d, camera)
    crop = crop_view_pixels(kp3d, person.bbox, camera.focal)
    return Rendered(kp3d, kp2d, crop, np.ones(len(kp3d)))


def _in_image(kp2d, camera):
    return bool(np.all(np.abs(kp2d[:, 0]) < camera.width / 2)
                and np.all(np.abs(kp2d[:, 1]) < camera.height / 2))


def _place_person(rng, config, camera, params):
    joints, _ = forward_kinematics(params.pose, params.shape, default_template())
    for _ in range(MAX_ATTEMPTS):
        z = rng.uniform(*config.depth_range)
        u = rng.uniform(*config.x_band) * rng.choice([-1.0, 1.0]) * camera.width / 2
        v = rng.uniform(*config.y_band) * rng.choice([-1.0, 1.0]) * camera.height / 2
        t = np.array([u * z / camera.focal, v * z / camera.focal, z])
        pts = joints + t
        if np.any(pts[:, 2] <= 0.1):
            continue
        kp2d = project(pts, camera)
        if _in_image(kp2d, camera):
            return t, kp2d
    raise FrustumError(f"person left the frustum after {MAX_ATTEMPTS} attempts")


def make_person(params: BodyParams, t_full, camera: PerspectiveCamera, bbox: BBox = None) -> Person:
    t = RootTranslation(*np.asarray(t_full, dtype=float).tolist())
    if bbox is None:
        joints, _ = forward(params)
        bbox = tight_bbox(project(joints.joints + t.as_array(), camera))
    return Person(params, t, bbox, full_to_weak(t, bbox, camera.focal))


def gen_scene(seed, config: SceneConfig = SceneConfig()) -> Scene:
    """Deterministic scene for ``seed`` (an int or a sequence of ints)."""
    rng = np.random.default_rng(seed)
    camera = config.camera()
    persons, rendered = [], []
    for _ in range(config.n_persons):
        params = sample_params(rng, config)
        t, _ = _place_person(rng, config, camera, params)
        person = make_person(params, t, camera)
        persons.append(person)
        rendered.append(render_keypoints(person, camera))
    return Scene(camera, persons, rendered, _seed_int(seed))


def _seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int(np.random.SeedSequence(list(seed)).generate_state(1)[0])


def scene_seed(seed: int, index: int) -> int:
    """Per-scene seed, so parallel and serial generation agree."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def gen_dataset(seed: int, n: int, config: SceneConfig = SceneConfig()) -> list:
    return [gen_scene(scene_seed(seed, i), config) for i in range(n)]


def gen_ambiguity_pair(seed, gamma_x: float, config: SceneConfig = SceneConfig()) -> AmbiguityPair:
    """Two scenes whose crops are identical but whose global rotations differ.

    The first person stands on the optical axis. The second is the first
    rotated about the camera center by the crop rotation for ``gamma_x``,
    which carries the body, its root and its crop camera together.
    """
    if not abs(gamma_x) < math.pi / 3:
        raise ValueError("|gamma_x| must be below pi/3")
    rng = np.random.default_rng(seed)
    camera = config.camera()
    f = camera.focal
    params = sample_params(rng, config)
    depth = rng.uniform(*config.depth_range)
    rot = crop_rotation(gamma_x, 0.0)

    center_root = np.array([0.0, 0.0, depth])
    offset_root = rot @ center_root
    offset_params = params.with_root(rotation_to_axis_angle(rot @ params.root_rotation))

    joints_c, _ = forward(params)
    joints_o, _ = forward(offset_params)
    kp_c = project(joints_c.joints + center_root, camera)
    kp_o = project(joints_o.joints + offset_root, camera)
    cx = f * math.tan(gamma_x)
    side = max(tight_bbox(kp_c, (0.0, 0.0)).b, tight_bbox(kp_o, (cx, 0.0)).b)

    center = make_person(params, center_root, camera, BBox(0.0, 0.0, side))
    offset = make_person(offset_params, offset_root, camera, BBox(cx, 0.0, side))
    r_center = render_keypoints(center, camera)
    r_offset = render_keypoints(offset, camera)
    gap = np.max(np.abs(r_center.kp2d_crop - r_offset.kp2d_crop))
    if gap > 1e-9:
        raise AssertionError(f"ambiguity construction broke: crop gap {gap:g} px")
    # identical by construction; share the exact values
    r_offset.kp2d_crop = r_center.kp2d_crop.copy()
    sid = _seed_int(seed)
    return AmbiguityPair(
        Scene(camera, [center], [r_center], sid),
        Scene(camera, [offset], [r_offset], sid),
        (gamma_x, 0.0),
    )


def add_noise(scene: Scene, sigma: float, drop_prob: float, seed) -> Scene:
    """Gaussian pixel noise on full-image keypoints plus random dropout.

    Crop keypoints are re-derived from the noisy full-image keypoints, so
    both views stay geometrically consistent.
    """
    if sigma < 0 or not 0 <= drop_prob <= 1:
        raise ValueError("need sigma >= 0 and drop_prob in [0, 1]")
    rng = np.random.default_rng(seed)
    rendered = []
    for person, r in zip(scene.persons, scene.rendered):
        noise = rng.normal(0.0, 1.0, size=r.kp2d_full.shape) * sigma
        keep = rng.uniform(size=len(r.conf)) >= drop_prob
        if sigma == 0:
            kp_full, kp_crop = r.kp2d_full.copy(), r.kp2d_crop.copy()
        else:
            kp_full = r.kp2d_full + noise
            kp_crop = full_pixels_to_crop(kp_full, person.bbox, scene.camera)
        rendered.append(Rendered(r.kp3d_full.copy(), kp_full, kp_crop, r.conf * keep))
    return replace(scene, rendered=rendered)


def perturb_params(params: BodyParams, angle_deg: float, rng: np.random.Generator,
                   shape_std: float = 0.0) -> BodyParams:
    """Compose every joint rotation with a random rotation of fixed angle."""
    pose = np.empty((N_JOINTS, 3))
    angle = math.radians(angle_deg)
    for j in range(N_JOINTS):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pose[j] = rotation_to_axis_angle(rodrigues(axis * angle) @ rodrigues(params.pose[j]))
    shape = params.shape + rng.normal(0.0, shape_std, size=N_SHAPE) if shape_std else params.shape
    return BodyParams(pose, shape)


@dataclass
class Sequence:
    """Smooth motion of one person, for temporal smoothing experiments."""

    params: list
    t_full: np.ndarray
    fps: float

    def joints(self) -> np.ndarray:
        return np.stack([forward(p)[0].joints for p in self.params])


def gen_sequence(seed, n_frames: int, fps: float = 30.0, config: SceneConfig = SceneConfig(),
                 amplitude: float = 0.3, freq_range=(0.2, 0.8)) -> Sequence:
    """Sinusoidal joint-angle trajectories around a random base pose."""
    rng = np.random.default_rng(seed)
    base = sample_params(rng, config)
    t = np.arange(n_frames) / fps
    freq = rng.uniform(*freq_range, size=(N_JOINTS, 3))
    phase = rng.uniform(0, 2 * math.pi, size=(N_JOINTS, 3))
    amp = amplitude * rng.uniform(0.3, 1.0, size=(N_JOINTS, 3))
    amp[0] *= 0.3
    params = []
    for ti in t:
        pose = base.pose + amp * np.sin(2 * math.pi * freq * ti + phase)
        params.append(BodyParams(pose, base.shape))
    depth = rng.uniform(*config.depth_range)
    drift = np.outer(t, rng.normal(0, 0.2, size=3)) * np.array([1.0, 0.2, 0.5])
    t_full = np.array([0.0, 0.0, depth]) + drift
    return Sequence(params, t_full, fps)


# ---------------------------------------------------------------------------
# serialization

def _person_to_dict(p: Person) -> dict:
    return {
        "pose": p.params.pose.ravel().tolist(),
        "shape": p.params.shape.tolist(),
        "t_full": p.t_full.as_array().tolist(),
        "bbox": {"cx": p.bbox.cx, "cy": p.bbox.cy, "b": p.bbox.b},
        "weak": {"s": p.weak.s, "tx": p.weak.tx, "ty": p.weak.ty},
    }


def _person_from_dict(d: dict) -> Person:
    return Person(
        BodyParams(d["pose"], d["shape"]),
        RootTranslation(*d["t_full"]),
        BBox(d["bbox"]["cx"], d["bbox"]["cy"], d["bbox"]["b"]),
        WeakPerspective(d["weak"]["s"], d["weak"]["tx"], d["weak"]["ty"]),
    )


def scene_to_dict(scene: Scene) -> dict:
    cam = scene.camera
    d = {
        "camera": {"width": cam.width, "height": cam.height, "focal": cam.focal},
        "persons": [_person_to_dict(p) for p in scene.persons],
        "rendered": {
            "kp3d_full": [r.kp3d_full.tolist() for r in scene.rendered],
            "kp2d_full": [r.kp2d_full.tolist() for r in scene.rendered],
            "kp2d_crop": [r.kp2d_crop.tolist() for r in scene.rendered],
            "conf": [r.conf.tolist() for r in scene.rendered],
        },
        "seed": scene.seed,
    }
    if scene.pseudo_gt is not None:
        d["pseudo_gt"] = scene.pseudo_gt
    return d


def scene_from_dict(d: dict) -> Scene:
    cam = d["camera"]
    camera = PerspectiveCamera(cam["focal"], cam["width"], cam["height"])
    rd = d["rendered"]
    rendered = [
        Rendered(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float),
                 np.asarray(w, float))
        for a, b, c, w in zip(rd["kp3d_full"], rd["kp2d_full"], rd["kp2d_crop"], rd["conf"])
    ]
    return Scene(camera, [_person_from_dict(p) for p in d["persons"]], rendered,
                 d["seed"], d.get("pseudo_gt"))
