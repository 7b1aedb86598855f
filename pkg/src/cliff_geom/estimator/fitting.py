"""Per-sample fitting of body and weak-perspective parameters to keypoints."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..body_model import BodyParams, default_template, forward_kinematics
from ..camera import R_CROP, RootTranslation, WeakPerspective, crop_to_full_translation
from ..losses import LossWeights, Observation
from .objective import WEAK_SLICE, Objective, features, pack, unpack

INITS = ("zero-pose", "prior", "given")


@dataclass(frozen=True)
class FitConfig:
    loss_frame: str = "full"          # "crop" or "full"
    use_bbox_input: bool = False      # lifter only
    weights: LossWeights = LossWeights()
    prior_weight: float = 0.1
    prior_root: bool = True           # whether the prior also pulls the root rotation
    max_iters: int = 200
    damping: float = 1e-3             # initial Levenberg damping
    tol: float = 1e-8                 # relative objective change
    init: str = "zero-pose"
    warmup_2d: float = 1e-4           # 2D weight multiplier of the warm-up stage; 1 skips it

    def __post_init__(self):
        if self.loss_frame not in ("crop", "full"):
            raise ValueError(f"loss_frame must be crop or full, got {self.loss_frame!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.prior_weight < 0:
            raise ValueError("prior_weight must be >= 0")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if not 0 < self.warmup_2d <= 1:
            raise ValueError("warmup_2d must lie in (0, 1]")


@dataclass
class FitReport:
    params: BodyParams
    weak: WeakPerspective
    t_full: Optional[RootTranslation]
    loss_trace: list
    breakdown: dict
    converged: bool
    n_iters: int
    warmup_iters: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "pose": self.params.pose.ravel().tolist(),
            "shape": self.params.shape.tolist(),
            "weak": {"s": self.weak.s, "tx": self.weak.tx, "ty": self.weak.ty},
            "t_full": None if self.t_full is None else self.t_full.as_array().tolist(),
            "loss_trace": list(self.loss_trace),
            "breakdown": dict(self.breakdown),
            "converged": self.converged,
            "n_iters": self.n_iters,
            "warmup_iters": self.warmup_iters,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class OptimizeResult:
    x: np.ndarray
    trace: list
    converged: bool
    n_iters: int


def minimize(residuals, residuals_and_jacobian, x0, max_iters=500, tol=1e-8, damping=1e-3,
             c1=1e-4, shrink=0.5, max_backtracks=30, ftol_abs=1e-14):
    """Damped Gauss-Newton descent on ``|r(x)|^2`` with Armijo backtracking.

    The direction solves ``(J^T J + mu D) d = -J^T r`` with the Jacobian from
    central differences. A step is accepted only if it meets the Armijo
    condition on the objective, so the returned trace never increases.
    """
    x = np.asarray(x0, dtype=float).copy()
    r, jac = residuals_and_jacobian(x)
    f = float(r @ r)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the initial point")
    trace = [f]
    mu = damping
    for it in range(max_iters):
        if f <= ftol_abs:
            return OptimizeResult(x, trace, True, it)
        if not np.all(np.isfinite(jac)):
            return OptimizeResult(x, trace, False, it)
        jtr = jac.T @ r
        grad = 2.0 * jtr
        if not np.any(grad):
            return OptimizeResult(x, trace, True, it)
        a = jac.T @ jac
        diag = np.diag(a) + 1e-9 * np.max(np.diag(a))
        accepted = False
        for _ in range(8):
            d = np.linalg.solve(a + mu * np.diag(diag), -jtr)
            slope = grad @ d
            if not slope < 0:
                mu *= 10.0
                continue
            t = 1.0
            for _ in range(max_backtracks):
                r_new = residuals(x + t * d)
                f_new = float(r_new @ r_new)
                if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                    accepted = True
                    break
                t *= shrink
            if accepted:
                mu = max(mu / 3.0, 1e-12) if t == 1.0 else mu * 2.0
                break
            mu *= 10.0
        if not accepted:
            return OptimizeResult(x, trace, True, it)
        x = x + t * d
        rel = (f - f_new) / max(f, 1e-300)
        r, jac = residuals_and_jacobian(x)
        f = float(r @ r)
        trace.append(f)
        if rel < tol:
            return OptimizeResult(x, trace, True, it + 1)
    return OptimizeResult(x, trace, False, max_iters)


def initial_weak(obs: Observation, mode: str) -> WeakPerspective:
    """Scale and offset that line the mean-shape rest pose up with the keypoints."""
    if mode == "crop" and obs.kp2d_crop is not None:
        kp = obs.kp2d_crop
    elif obs.kp2d_full is not None:
        kp = (obs.kp2d_full - [obs.bbox.cx, obs.bbox.cy]) * (R_CROP / obs.bbox.b)
    else:
        return WeakPerspective(0.9, 0.0, 0.0)
    conf = obs.confidences(len(kp))
    if np.sum(conf > 0) < 2:
        return WeakPerspective(0.9, 0.0, 0.0)
    w = conf / conf.sum()
    rest, _ = forward_kinematics(np.zeros((24, 3)), np.zeros(10), default_template())
    rest_xy = rest[:, :2]
    kc = w @ kp
    rc = w @ rest_xy
    spread_kp = np.sqrt(w @ np.sum((kp - kc) ** 2, axis=1))
    spread_rest = np.sqrt(w @ np.sum((rest_xy - rc) ** 2, axis=1))
    s = 2.0 * spread_kp / (R_CROP * spread_rest)
    t = 2.0 * kc / (R_CROP * s) - rc
    return WeakPerspective(float(s), float(t[0]), float(t[1]))


def fit_sample(obs: Observation, config: FitConfig = FitConfig(),
               prior: Optional[BodyParams] = None, init: Optional[tuple] = None) -> FitReport:
    """Fit one observation.

    The objective is the total loss in ``config.loss_frame`` plus
    ``config.prior_weight`` times the parameter loss against ``prior``.
    ``init`` is a ``(BodyParams, WeakPerspective)`` pair used when
    ``config.init == "given"``.
    """
    key = "kp2d_crop" if config.loss_frame == "crop" else "kp2d_full"
    if getattr(obs, key) is None:
        raise ValueError(f"observation lacks {key} needed for {config.loss_frame} fitting")
    start = time.perf_counter()
    if config.init == "given":
        if init is None:
            raise ValueError("init='given' needs an init pair")
        x0 = pack(*init)
    else:
        if config.init == "prior":
            if prior is None:
                raise ValueError("init='prior' needs a prior")
            body = prior
        else:
            body = BodyParams.zeros()
        x0 = pack(body, initial_weak(obs, config.loss_frame))
        x0 = _in_front(_objective(obs, config, prior, config.weights), x0)

    warmup_iters = 0
    if config.warmup_2d < 1:
        # 2D keypoints leave limb depth ambiguous; settle the pose on the other
        # terms first so the 2D term refines rather than flips it
        w = config.weights
        weak_2d = LossWeights(w.smpl, w.j3d, w.kp2d * config.warmup_2d)
        res = _run(_objective(obs, config, prior, weak_2d), x0, config)
        x0, warmup_iters = res.x, res.n_iters
    objective = _objective(obs, config, prior, config.weights)
    res = _run(objective, x0, config)
    params, weak = unpack(res.x)
    breakdown = objective.breakdown(res.x[None])[0]
    t_full = crop_to_full_translation(weak, obs.bbox, obs.camera.focal)
    return FitReport(params, weak, t_full, res.trace, breakdown, res.converged, res.n_iters,
                     warmup_iters, time.perf_counter() - start)


def _in_front(objective, x0, tries: int = 40):
    """Halve the scale (push the body away) until every joint is in front of the camera."""
    x = x0.copy()
    for _ in range(tries):
        if np.isfinite(objective.values(x[None])[0]):
            return x
        x[WEAK_SLICE.start] *= 0.5
    return x0


def _objective(obs, config, prior, weights):
    return Objective([obs], config.loss_frame, weights,
                     prior=None if prior is None else [prior],
                     prior_weight=config.prior_weight if prior is not None else 0.0,
                     prior_root=config.prior_root)


def _run(objective, x0, config) -> OptimizeResult:
    def residuals(x):
        return objective.residuals(features(x[None, None], objective.template))[0, 0]

    def residuals_and_jacobian(x):
        r, jac = objective.residuals_and_jacobian(x[None])
        return r[0], jac[0]

    return minimize(residuals, residuals_and_jacobian, x0, max_iters=config.max_iters,
                    tol=config.tol, damping=config.damping)
