"""Simplified 24-joint parametric body with the SMPL parameter interface.

Pose is 24 axis-angle vectors (root first), shape is 10 scalars. The
template is procedurally generated from a fixed seed and shipped as JSON;
surface points are rigidly bound to joints, so there is no skinning.

Coordinates follow the camera convention used everywhere in the package:
X right, Y down, Z forward. The rest pose stands upright (head towards -Y)
and faces the camera (towards -Z).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

N_JOINTS = 24
N_SHAPE = 10
N_POSE = 3 * N_JOINTS
TEMPLATE_VERSION = 1
TEMPLATE_SEED = 20220722

FRAMES = ("root-relative", "crop-camera", "full-camera")

# SMPL kinematic tree
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)

# Mean-shape bone offsets in a Y-up, +Z-facing body frame (meters).
_BASE_OFFSETS_YUP = np.array([
    [0.000, 0.000, 0.000],
    [0.060, -0.090, 0.000],
    [-0.060, -0.090, 0.000],
    [0.000, 0.110, -0.020],
    [0.040, -0.380, 0.000],
    [-0.040, -0.380, 0.000],
    [0.000, 0.130, 0.010],
    [-0.010, -0.400, -0.040],
    [0.010, -0.400, -0.040],
    [0.000, 0.060, 0.020],
    [0.020, -0.060, 0.120],
    [-0.020, -0.060, 0.120],
    [0.000, 0.210, -0.030],
    [0.080, 0.110, -0.010],
    [-0.080, 0.110, -0.010],
    [0.000, 0.090, 0.050],
    [0.110, 0.040, -0.010],
    [-0.110, 0.040, -0.010],
    [0.260, 0.000, -0.010],
    [-0.260, 0.000, -0.010],
    [0.250, 0.010, 0.000],
    [-0.250, 0.010, 0.000],
    [0.080, -0.010, 0.000],
    [-0.080, -0.010, 0.000],
])

# Rough limb radius per joint, used to scatter surface points (meters).
_RADII = np.array([
    0.10, 0.08, 0.08, 0.10, 0.06, 0.06, 0.11, 0.05, 0.05, 0.11, 0.04, 0.04,
    0.06, 0.06, 0.06, 0.09, 0.05, 0.05, 0.04, 0.04, 0.03, 0.03, 0.04, 0.04,
])
POINTS_PER_JOINT = 5


class TemplateError(ValueError):
    pass


def _readonly(a, shape=None, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    if shape is not None and a.shape != shape:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BodyParams:
    """Pose (24 axis-angle rotations, root first) and shape (10 scalars)."""

    pose: np.ndarray
    shape: np.ndarray = field(default_factory=lambda: np.zeros(N_SHAPE))

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=float)
        shape = np.asarray(self.shape, dtype=float)
        if pose.size != N_POSE:
            raise ValueError(f"pose needs {N_POSE} entries, got {pose.size}")
        if shape.size != N_SHAPE:
            raise ValueError(f"shape needs {N_SHAPE} entries, got {shape.size}")
        if not (np.all(np.isfinite(pose)) and np.all(np.isfinite(shape))):
            raise ValueError("non-finite body parameters")
        object.__setattr__(self, "pose", _readonly(pose, (N_JOINTS, 3)))
        object.__setattr__(self, "shape", _readonly(shape, (N_SHAPE,)))

    @classmethod
    def zeros(cls) -> "BodyParams":
        return cls(np.zeros((N_JOINTS, 3)), np.zeros(N_SHAPE))

    @classmethod
    def from_vector(cls, vec) -> "BodyParams":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:N_POSE], vec[N_POSE:N_POSE + N_SHAPE])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.pose.ravel(), self.shape])

    @property
    def root_rotation(self) -> np.ndarray:
        return rodrigues(self.pose[0])

    def with_root(self, axis_angle) -> "BodyParams":
        pose = self.pose.copy()
        pose[0] = axis_angle
        return BodyParams(pose, self.shape)

    def __eq__(self, other):
        if not isinstance(other, BodyParams):
            return NotImplemented
        return np.array_equal(self.pose, other.pose) and np.array_equal(self.shape, other.shape)

    def __hash__(self):
        return hash((self.pose.tobytes(), self.shape.tobytes()))


def _check_frame(frame):
    if frame not in FRAMES:
        raise ValueError(f"unknown frame tag {frame!r}; expected one of {FRAMES}")


@dataclass(frozen=True)
class JointSet:
    joints: np.ndarray
    frame: str = "root-relative"

    def __post_init__(self):
        _check_frame(self.frame)
        j = np.asarray(self.joints, dtype=float)
        if j.ndim != 2 or j.shape[1] != 3:
            raise ValueError(f"joints must be k x 3, got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("non-finite joint coordinates")
        object.__setattr__(self, "joints", _readonly(j))

    def __len__(self):
        return len(self.joints)


@dataclass(frozen=True)
class VertexSet:
    vertices: np.ndarray
    frame: str = "root-relative"

    def __post_init__(self):
        _check_frame(self.frame)
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be n x 3, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex coordinates")
        object.__setattr__(self, "vertices", _readonly(v))

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class BodyTemplate:
    parents: tuple
    rest_offsets: np.ndarray        # (24, 3)
    shape_basis: np.ndarray         # (10, 24, 3), meters per unit beta
    point_joint: np.ndarray         # (n,) joint each surface point is bound to
    point_offsets: np.ndarray       # (n, 3) offset in the bound joint's frame
    joint_regressor: np.ndarray     # (24, n)
    seed: int = TEMPLATE_SEED
    version: int = TEMPLATE_VERSION

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "rest_offsets", _readonly(self.rest_offsets))
        object.__setattr__(self, "shape_basis", _readonly(self.shape_basis))
        object.__setattr__(self, "point_joint", _readonly(self.point_joint, dtype=np.int64))
        object.__setattr__(self, "point_offsets", _readonly(self.point_offsets))
        object.__setattr__(self, "joint_regressor", _readonly(self.joint_regressor))
        validate_template(self)

    @property
    def n_points(self) -> int:
        return len(self.point_joint)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "parents": list(self.parents),
            "rest_offsets": self.rest_offsets.tolist(),
            "shape_basis": self.shape_basis.tolist(),
            "surface_points": [
                {"joint": int(j), "offset": o.tolist()}
                for j, o in zip(self.point_joint, self.point_offsets)
            ],
            "joint_regressor": self.joint_regressor.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BodyTemplate":
        if d.get("version") != TEMPLATE_VERSION:
            raise TemplateError(f"unsupported template version {d.get('version')!r}")
        pts = d["surface_points"]
        return cls(
            parents=d["parents"],
            rest_offsets=d["rest_offsets"],
            shape_basis=d["shape_basis"],
            point_joint=[p["joint"] for p in pts],
            point_offsets=[p["offset"] for p in pts],
            joint_regressor=d["joint_regressor"],
            seed=d.get("seed", TEMPLATE_SEED),
        )


def validate_template(t: BodyTemplate) -> None:
    parents = t.parents
    if len(parents) != N_JOINTS or parents[0] != -1:
        raise TemplateError("tree must have 24 joints with the root first")
    for j, p in enumerate(parents[1:], start=1):
        # parents precede children, so the tree is acyclic with a single root
        if not 0 <= p < j:
            raise TemplateError(f"joint {j} has invalid parent {p}")
    if t.rest_offsets.shape != (N_JOINTS, 3):
        raise TemplateError("rest_offsets must be 24 x 3")
    if t.shape_basis.shape != (N_SHAPE, N_JOINTS, 3):
        raise TemplateError("shape_basis must be 10 x 24 x 3")
    n = len(t.point_joint)
    if t.point_offsets.shape != (n, 3) or t.joint_regressor.shape != (N_JOINTS, n):
        raise TemplateError("surface point / regressor dimensions disagree")
    m = t.joint_regressor
    if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-12):
        raise TemplateError("joint regressor must be row-stochastic")
    joints = _rest_joints(t.rest_offsets, parents)
    pts = joints[t.point_joint] + t.point_offsets
    if np.any(np.ptp(pts, axis=0)[:2] > 2.0):
        raise TemplateError("rest pose does not fit in a 2 m x 2 m box")


def _rest_joints(offsets, parents):
    joints = np.zeros((len(parents), 3))
    for j in range(1, len(parents)):
        joints[j] = joints[parents[j]] + offsets[j]
    return joints


def build_template(seed: int = TEMPLATE_SEED) -> BodyTemplate:
    """Generate the procedural template deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    # Y-up/+Z-facing to camera convention: rotate by pi about X.
    base = _BASE_OFFSETS_YUP * np.array([1.0, -1.0, -1.0])
    jitter = rng.uniform(-0.005, 0.005, size=base.shape)
    jitter[0] = 0.0
    offsets = base + jitter

    lengths = np.linalg.norm(offsets, axis=1)
    dirs = np.zeros_like(offsets)
    dirs[1:] = offsets[1:] / lengths[1:, None]
    coeff = rng.uniform(-1.0, 1.0, size=(N_SHAPE, N_JOINTS))
    shape_basis = 0.05 * coeff[:, :, None] * dirs[None]

    point_joint = np.repeat(np.arange(N_JOINTS), POINTS_PER_JOINT)
    point_offsets = np.empty((N_JOINTS * POINTS_PER_JOINT, 3))
    for j in range(N_JOINTS):
        d = rng.normal(size=(POINTS_PER_JOINT, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d *= _RADII[j] * rng.uniform(0.7, 1.0, size=(POINTS_PER_JOINT, 1))
        # zero-mean cluster: the joint is the centroid of its bound points
        d -= d.mean(axis=0)
        point_offsets[j * POINTS_PER_JOINT:(j + 1) * POINTS_PER_JOINT] = d

    regressor = (point_joint[None, :] == np.arange(N_JOINTS)[:, None]).astype(float)
    regressor /= regressor.sum(axis=1, keepdims=True)
    return BodyTemplate(PARENTS, offsets, shape_basis, point_joint, point_offsets,
                        regressor, seed=seed)


def save_template(template: BodyTemplate, path) -> None:
    Path(path).write_text(json.dumps(template.to_dict(), indent=1) + "\n")


def load_template(path) -> BodyTemplate:
    return BodyTemplate.from_dict(json.loads(Path(path).read_text()))


@lru_cache(maxsize=1)
def default_template() -> BodyTemplate:
    """The template shipped with the package."""
    text = resources.files("cliff_geom").joinpath("data/template.json").read_text()
    return BodyTemplate.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# array kernels: arbitrary leading batch dims, complex-step safe

def rodrigues_array(v):
    """Axis-angle (..., 3) to rotation matrices (..., 3, 3)."""
    v = np.asarray(v)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    theta2 = x * x + y * y + z * z
    small = np.real(theta2) < 1e-10
    safe2 = np.where(small, 1.0, theta2)
    theta = np.sqrt(safe2)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(theta) / theta)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(theta)) / safe2)
    # R = I + a K + b K^2 with K^2 = v v^T - theta^2 I
    c = 1.0 - b * theta2
    r = np.empty(v.shape + (3,), dtype=np.result_type(v, 1.0))
    bx, by = b * x, b * y
    r[..., 0, 0] = c + bx * x
    r[..., 1, 1] = c + by * y
    r[..., 2, 2] = c + b * z * z
    r[..., 0, 1] = bx * y - a * z
    r[..., 1, 0] = bx * y + a * z
    r[..., 0, 2] = bx * z + a * y
    r[..., 2, 0] = bx * z - a * y
    r[..., 1, 2] = by * z - a * x
    r[..., 2, 1] = by * z + a * x
    return r


def rodrigues(axis_angle) -> np.ndarray:
    """Exponential map of a single axis-angle 3-vector."""
    v = np.asarray(axis_angle, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError("axis-angle must be a finite 3-vector")
    return rodrigues_array(v)


def rotation_to_axis_angle(r) -> np.ndarray:
    """Inverse of :func:`rodrigues` for a single rotation (angle in [0, pi])."""
    r = np.asarray(r, dtype=float)
    cos = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-8:
        return 0.5 * w
    if np.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        m = (r + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(m)))
        axis = m[:, i] / np.sqrt(m[i, i])
        return axis * angle
    return w * (angle / (2.0 * np.sin(angle)))


def shaped_offsets(shape, template: BodyTemplate):
    """Bone offsets (..., 24, 3) for shape coefficients (..., 10)."""
    return template.rest_offsets + np.einsum("...k,kjd->...jd", shape, template.shape_basis)


def forward_kinematics(pose, shape, template: BodyTemplate, with_points: bool = False):
    """Batched forward kinematics.

    pose (..., 24, 3), shape (..., 10) -> joints (..., 24, 3), global
    rotations (..., 24, 3, 3) and, if requested, surface points (..., n, 3).
    Output is root-relative: the root joint sits at the origin.
    """
    local = rodrigues_array(pose)
    offsets = shaped_offsets(shape, template)
    parents = template.parents
    batch = local.shape[:-3]
    dtype = np.result_type(local, offsets)
    joints = np.zeros(batch + (N_JOINTS, 3), dtype=dtype)
    rots = np.empty(batch + (N_JOINTS, 3, 3), dtype=dtype)
    rots[..., 0, :, :] = local[..., 0, :, :]
    for j in range(1, N_JOINTS):
        p = parents[j]
        joints[..., j, :] = joints[..., p, :] + np.einsum(
            "...ab,...b->...a", rots[..., p, :, :], offsets[..., j, :])
        rots[..., j, :, :] = rots[..., p, :, :] @ local[..., j, :, :]
    if not with_points:
        return joints, rots
    pj = template.point_joint
    points = joints[..., pj, :] + np.einsum(
        "...nab,nb->...na", rots[..., pj, :, :], template.point_offsets)
    return joints, rots, points


def forward(params: BodyParams, template: BodyTemplate | None = None):
    """Posed joints and surface points, both root-relative."""
    template = template or default_template()
    joints, _, points = forward_kinematics(params.pose, params.shape, template, with_points=True)
    return JointSet(joints, "root-relative"), VertexSet(points, "root-relative")


def regress_joints(vertices: VertexSet, template: BodyTemplate | None = None) -> JointSet:
    """Linear joint regression ``J = M V``."""
    template = template or default_template()
    m = template.joint_regressor
    if len(vertices) != m.shape[1]:
        raise ValueError(f"regressor expects {m.shape[1]} vertices, got {len(vertices)}")
    return JointSet(m @ vertices.vertices, vertices.frame)
