"""A small keypoint lifter: crop keypoints (and optionally bbox info) to 85 values.

The network is a plain two-hidden-layer MLP written out in numpy so its
backward pass can be checked against finite differences. Training takes
the gradient of the loss with respect to the 85 decoded values by central
differences through the body model and projection, then backpropagates it
exactly through the layers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..body_model import N_POSE, N_SHAPE, BodyParams, forward
from ..camera import R_CROP, bbox_info, crop_to_full_translation
from ..losses import Observation
from ..metrics import geodesic_deg, mpjpe, pa_mpjpe
from .fitting import FitConfig, initial_weak
from .objective import N_PARAMS, Objective, unpack

HIDDEN = 256
KP_SCALE = R_CROP / 2.0
DIVERGENCE = 1e6
S_INDEX = N_POSE + N_SHAPE


class DivergenceError(RuntimeError):
    def __init__(self, epoch, loss, history):
        super().__init__(f"training diverged at epoch {epoch}: loss {loss:g}")
        self.epoch = epoch
        self.loss = loss
        self.history = history


def layer_shapes(n_in: int) -> dict:
    return {"w1": (n_in, HIDDEN), "b1": (HIDDEN,), "w2": (HIDDEN, HIDDEN), "b2": (HIDDEN,),
            "w3": (HIDDEN, N_PARAMS), "b3": (N_PARAMS,)}


def input_width(n_keypoints: int, use_bbox_input: bool) -> int:
    return 2 * n_keypoints + (3 if use_bbox_input else 0)


def encode(obs: Observation, use_bbox_input: bool) -> np.ndarray:
    """Network input for one observation: normalized crop keypoints, then I_bbox."""
    if obs.kp2d_crop is None:
        raise ValueError("lifter input needs crop keypoints")
    kp = obs.kp2d_crop * obs.confidences(len(obs.kp2d_crop))[:, None]
    x = kp.ravel() / KP_SCALE
    if use_bbox_input:
        x = np.concatenate([x, bbox_info(obs.bbox, obs.camera.focal)])
    return x


def decode(out):
    """Map raw outputs to the parameter vector; the scale goes through exp."""
    x = np.array(out, dtype=float, copy=True)
    x[..., S_INDEX] = np.exp(x[..., S_INDEX])
    return x


@dataclass
class LifterModel:
    n_keypoints: int
    use_bbox_input: bool
    weights: dict = field(repr=False)

    def __post_init__(self):
        shapes = layer_shapes(input_width(self.n_keypoints, self.use_bbox_input))
        if set(self.weights) != set(shapes):
            raise ValueError(f"weights must have keys {sorted(shapes)}")
        for k, shp in shapes.items():
            w = np.asarray(self.weights[k], dtype=float)
            if w.shape != shp:
                raise ValueError(f"{k} has shape {w.shape}, expected {shp}")
            self.weights[k] = w

    @classmethod
    def init(cls, n_keypoints: int, use_bbox_input: bool, rng: np.random.Generator,
             s0: float = 1.0) -> "LifterModel":
        shapes = layer_shapes(input_width(n_keypoints, use_bbox_input))
        w = {}
        for k, shp in shapes.items():
            if k.startswith("w"):
                w[k] = rng.normal(0.0, 1.0 / np.sqrt(shp[0]), size=shp)
            else:
                w[k] = np.zeros(shp)
        w["w3"] *= 0.1
        w["b3"][S_INDEX] = np.log(s0)
        return cls(n_keypoints, use_bbox_input, w)

    @property
    def n_in(self) -> int:
        return input_width(self.n_keypoints, self.use_bbox_input)

    def forward(self, inputs, cache: bool = False):
        w = self.weights
        h1 = np.tanh(inputs @ w["w1"] + w["b1"])
        h2 = np.tanh(h1 @ w["w2"] + w["b2"])
        out = h2 @ w["w3"] + w["b3"]
        if cache:
            return out, (inputs, h1, h2)
        return out

    def backward(self, cache, d_out) -> dict:
        """Gradients of ``sum(d_out * out)`` with respect to every weight."""
        inputs, h1, h2 = cache
        w = self.weights
        g = {"w3": h2.T @ d_out, "b3": d_out.sum(axis=0)}
        d2 = (d_out @ w["w3"].T) * (1.0 - h2 * h2)
        g["w2"] = h1.T @ d2
        g["b2"] = d2.sum(axis=0)
        d1 = (d2 @ w["w2"].T) * (1.0 - h1 * h1)
        g["w1"] = inputs.T @ d1
        g["b1"] = d1.sum(axis=0)
        return g

    def encode(self, observations: Sequence[Observation]) -> np.ndarray:
        return np.stack([encode(o, self.use_bbox_input) for o in observations])

    def predict_vectors(self, observations: Sequence[Observation]) -> np.ndarray:
        return decode(self.forward(self.encode(observations)))

    def predict(self, observations: Sequence[Observation]) -> list:
        """``(BodyParams, WeakPerspective, RootTranslation)`` per observation."""
        out = []
        for obs, x in zip(observations, self.predict_vectors(observations)):
            params, weak = unpack(x)
            out.append((params, weak, crop_to_full_translation(weak, obs.bbox, obs.camera.focal)))
        return out

    def to_dict(self) -> dict:
        return {"n_keypoints": self.n_keypoints, "use_bbox_input": self.use_bbox_input,
                "weights": {k: v.tolist() for k, v in self.weights.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "LifterModel":
        return cls(int(d["n_keypoints"]), bool(d["use_bbox_input"]),
                   {k: np.asarray(v, dtype=float) for k, v in d["weights"].items()})


class Adam:
    def __init__(self, shapes: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def step(self, weights: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            weights[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def batch_loss_and_grad(model: LifterModel, inputs, objective: Objective):
    """Mean objective over a batch and its gradient with respect to every weight."""
    out, cache = model.forward(inputs, cache=True)
    # a body pushed behind the camera makes the loss infinite; the caller sees it
    with np.errstate(over="ignore", invalid="ignore"):
        x = decode(out)
        values, grad_x = objective.value_and_grad(x)
        n = len(values)
        d_out = grad_x / n
        d_out[:, S_INDEX] *= x[:, S_INDEX]
        return float(np.mean(values)), model.backward(cache, d_out)


@dataclass
class TrainReport:
    model: LifterModel
    epoch_loss: list


def train_lifter(observations: Sequence[Observation], config: FitConfig = FitConfig(),
                 epochs: int = 100, seed: int = 0, batch_size: int = 25, lr: float = 1e-3,
                 min_samples: int = 50) -> TrainReport:
    """Fit the lifter by mini-batch Adam on the total loss in ``config.loss_frame``.

    ``config.use_bbox_input`` switches the bbox input on; ``config.weights``
    sets the loss weights. Returns the model and the mean loss of each epoch.
    """
    obs = list(observations)
    if len(obs) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(obs)}")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.default_rng(seed)
    k = len(obs[0].kp2d_crop)
    s0 = float(np.median([_weak_scale(o) for o in obs]))
    model = LifterModel.init(k, config.use_bbox_input, rng, s0)
    inputs = model.encode(obs)
    opt = Adam({key: w.shape for key, w in model.weights.items()}, lr)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(obs))
        total = 0.0
        for start in range(0, len(obs), batch_size):
            idx = order[start:start + batch_size]
            objective = Objective([obs[i] for i in idx], config.loss_frame, config.weights,
                                  crop_units=True)
            loss, grads = batch_loss_and_grad(model, inputs[idx], objective)
            finite = all(np.all(np.isfinite(g)) for g in grads.values())
            if not (np.isfinite(loss) and finite) or loss > DIVERGENCE:
                raise DivergenceError(epoch, loss, history)
            opt.step(model.weights, grads)
            total += loss * len(idx)
        history.append(total / len(obs))
    return TrainReport(model, history)


def _weak_scale(obs: Observation) -> float:
    """Scale a crop of the rest body needs to span the visible keypoints."""
    return initial_weak(obs, "crop").s


def evaluate_lifter(model: LifterModel, observations: Sequence[Observation],
                    gt_params: Sequence[BodyParams]) -> dict:
    """Mean MPJPE, PA-MPJPE and yaw error (deg) of the model's predictions."""
    errs = {"mpjpe": [], "pa_mpjpe": [], "yaw": []}
    for (params, _, _), gt in zip(model.predict(observations), gt_params):
        pj, gj = forward(params)[0], forward(gt)[0]
        errs["mpjpe"].append(mpjpe(pj, gj))
        errs["pa_mpjpe"].append(pa_mpjpe(pj, gj))
        errs["yaw"].append(geodesic_deg(params.root_rotation, gt.root_rotation))
    return {k: float(np.mean(v)) for k, v in errs.items()}
