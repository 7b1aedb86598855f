"""Experiments: crop ambiguity, lifter and fitter ablations, focal sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..body_model import BodyParams, forward
from ..io import parallel_map
from ..losses import LossWeights
from ..metrics import geodesic_deg, mpjpe, pa_mpjpe
from ..synthetic import (
    SceneConfig, add_noise, gen_ambiguity_pair, gen_dataset, perturb_params, scene_seed,
)
from .fitting import FitConfig, fit_sample
from .lifter import evaluate_lifter, train_lifter

# the three lifter configurations of the ablation: (loss frame, bbox input)
LIFTER_CONFIGS = {
    "neither": ("crop", False),
    "cs_only": ("full", False),
    "ci_cs": ("full", True),
}
LIFTER_WEIGHTS = LossWeights(smpl=1.0, j3d=1.0, kp2d=1e-3)
HELD_OUT = SceneConfig(x_band=(0.5, 0.8))
HELD_OUT_SEED = 9001
METRICS = ("mpjpe", "pa_mpjpe", "yaw")


def yaw_error(pred: BodyParams, gt: BodyParams) -> float:
    """Geodesic angle between root rotations, degrees."""
    return geodesic_deg(pred.root_rotation, gt.root_rotation)


def pose_errors(pred: BodyParams, gt: BodyParams) -> dict:
    pj, gj = forward(pred)[0], forward(gt)[0]
    return {"mpjpe": mpjpe(pj, gj), "pa_mpjpe": pa_mpjpe(pj, gj), "yaw": yaw_error(pred, gt)}


def summarize(values: Sequence[float]) -> tuple:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std())


# ---------------------------------------------------------------------------
# crop ambiguity

AMBIGUITY_FIT = FitConfig(prior_root=False, init="prior")


@dataclass
class PairResult:
    gamma_deg: float
    mode: str
    identical: bool                # both members got bit-identical parameters
    errors: tuple                  # pose_errors for (center, offset)

    def worst(self, key: str) -> float:
        return max(e[key] for e in self.errors)


def _fit_pair(args) -> list:
    seed, gamma, prior_noise_deg, config = args
    pair = gen_ambiguity_pair(seed, gamma)
    center = pair.scene_center.persons[0].params
    prior = perturb_params(center, prior_noise_deg, np.random.default_rng([seed, 1]))
    out = []
    for mode in ("crop", "full"):
        cfg = replace(config, loss_frame=mode)
        reports = [fit_sample(sc.observation(0, with_3d=False), cfg, prior=prior)
                   for sc in (pair.scene_center, pair.scene_offset)]
        same = all(np.array_equal(a, b) for a, b in zip(
            (reports[0].params.pose, reports[0].params.shape, reports[0].weak.as_array()),
            (reports[1].params.pose, reports[1].params.shape, reports[1].weak.as_array())))
        errs = tuple(pose_errors(r.params, sc.persons[0].params)
                     for r, sc in zip(reports, (pair.scene_center, pair.scene_offset)))
        out.append(PairResult(math.degrees(gamma), mode, same, errs))
    return out


def ambiguity_experiment(n_pairs: int, seed: int, gamma_range=(5.0, 30.0),
                         prior_noise_deg: float = 3.0,
                         config: FitConfig = AMBIGUITY_FIT) -> dict:
    """Fit both members of ``n_pairs`` ambiguity pairs in crop and full mode.

    Both members share one prior: the center person's parameters with every
    rotation jittered by ``prior_noise_deg``. The prior leaves the root free,
    so the global rotation comes from the keypoints alone. A pair's yaw error
    is that of its worse member.
    """
    rng = np.random.default_rng(seed)
    gammas = np.radians(rng.uniform(*gamma_range, size=n_pairs))
    jobs = [(scene_seed(seed, i), float(g), prior_noise_deg, config) for i, g in enumerate(gammas)]
    results = [r for rs in parallel_map(_fit_pair, jobs) for r in rs]
    summary = {"mean_gamma": float(np.degrees(gammas).mean())}
    for mode in ("crop", "full"):
        rows = [r for r in results if r.mode == mode]
        summary[mode] = {k: summarize([r.worst(k) for r in rows])[0] for k in METRICS}
        summary[mode]["all_identical"] = all(r.identical for r in rows)
    return {"pairs": results, "summary": summary}


# ---------------------------------------------------------------------------
# lifter ablation

def held_out_set(n: int = 100, seed: int = HELD_OUT_SEED, config: SceneConfig = HELD_OUT) -> list:
    """Scenes with people well away from the image center, where crops mislead most."""
    return gen_dataset(seed, n, config)


def _train_eval(args) -> dict:
    name, train_scenes, eval_scenes, seed, epochs, weights = args
    frame, bbox_input = LIFTER_CONFIGS[name]
    cfg = FitConfig(loss_frame=frame, use_bbox_input=bbox_input, weights=weights)
    train = [o for s in train_scenes for o in s.observations()]
    report = train_lifter(train, cfg, epochs=epochs, seed=seed)
    obs = [o for s in eval_scenes for o in s.observations()]
    gts = [p.params for s in eval_scenes for p in s.persons]
    return evaluate_lifter(report.model, obs, gts)


def ablate_lifter(train_scenes: Sequence, eval_scenes: Sequence, seeds: Sequence[int],
                  epochs: int = 100, weights: LossWeights = LIFTER_WEIGHTS) -> dict:
    """Train every lifter configuration once per seed and evaluate on ``eval_scenes``.

    Returns ``{"per_seed": {config: [metrics per seed]}, "table": {config: {metric: (mean, std)}}}``.
    """
    jobs = [(name, list(train_scenes), list(eval_scenes), int(s), epochs, weights)
            for name in LIFTER_CONFIGS for s in seeds]
    results = parallel_map(_train_eval, jobs)
    per_seed = {name: [] for name in LIFTER_CONFIGS}
    for (name, *_), res in zip(jobs, results):
        per_seed[name].append(res)
    table = {name: {k: summarize([r[k] for r in rs]) for k in METRICS}
             for name, rs in per_seed.items()}
    return {"per_seed": per_seed, "table": table}


def ablate_fitter(n_pairs: int, seeds: Sequence[int], **kwargs) -> dict:
    """Crop versus full fitting on ambiguity pairs, one batch of pairs per seed."""
    per_seed = {"crop": [], "full": []}
    for s in seeds:
        summary = ambiguity_experiment(n_pairs, s, **kwargs)["summary"]
        for mode in per_seed:
            per_seed[mode].append({k: summary[mode][k] for k in METRICS})
    table = {mode: {k: summarize([r[k] for r in rs]) for k in METRICS}
             for mode, rs in per_seed.items()}
    return {"per_seed": per_seed, "table": table}


# ---------------------------------------------------------------------------
# focal sweep

FOCAL_FACTORS = (0.05, 0.2, 0.4, 0.6, 0.8, 1.0, 1.25, 1.5, 2.0, 3.0)
SWEEP_FIT = FitConfig(prior_root=True, init="prior")


def _sweep_sample(args) -> list:
    scene, index, factors, sigma, prior_noise_deg, seed, config = args
    noisy = add_noise(scene, sigma, 0.0, [seed, index, 0]) if sigma > 0 else scene
    errs = []
    for person in range(len(scene.persons)):
        gt = scene.persons[person].params
        prior = perturb_params(gt, prior_noise_deg, np.random.default_rng([seed, index, person]))
        obs = noisy.observation(person, with_3d=False)
        row = []
        for factor in factors:
            o = replace(obs, camera=obs.camera.scaled(factor))
            row.append(mpjpe(forward(fit_sample(o, config, prior=prior).params)[0], forward(gt)[0]))
        errs.append(row)
    return errs


def focal_sweep(scenes: Sequence, factors: Sequence[float] = FOCAL_FACTORS, sigma: float = 2.0,
                prior_noise_deg: float = 10.0, seed: int = 0,
                config: FitConfig = SWEEP_FIT) -> dict:
    """Fit every person with the focal length scaled by each factor; MPJPE per factor.

    Keypoints carry ``sigma`` pixels of noise and the prior is the ground
    truth with every rotation jittered by ``prior_noise_deg``, so the error
    at the true focal is not zero.
    """
    factors = [float(f) for f in factors]
    if not factors or any(f <= 0 for f in factors):
        raise ValueError("factors must be positive")
    jobs = [(s, i, factors, sigma, prior_noise_deg, seed, config) for i, s in enumerate(scenes)]
    rows = [r for rs in parallel_map(_sweep_sample, jobs) for r in rs]
    errs = np.asarray(rows)
    return {"factors": factors, "mpjpe": errs.mean(axis=0).tolist()}


# ---------------------------------------------------------------------------
# annotator benefit

def _annotate_sample(args) -> dict:
    scene, index, sigma, prior_noise_deg, seed, config = args
    from .annotate import PerturbedGroundTruth

    noisy = add_noise(scene, sigma, 0.0, [seed, index, 1])
    provider = PerturbedGroundTruth(prior_noise_deg, seed)
    gt = scene.persons[0].params
    prior = provider(scene, 0, index)
    obs = noisy.observation(0, with_3d=False)
    with_prior = fit_sample(obs, config, prior=prior).params
    without = fit_sample(obs, replace(config, prior_weight=0.0), prior=prior).params
    gj = forward(gt)[0]
    return {k: mpjpe(forward(p)[0], gj)
            for k, p in (("prior", prior), ("annotated", with_prior), ("no_prior", without))}


def annotator_experiment(scenes: Sequence, sigma: float = 2.0, prior_noise_deg: float = 10.0,
                         seed: int = 0, config: Optional[FitConfig] = None) -> dict:
    """MPJPE of the prior, of the prior-regularized fit and of the same fit without prior.

    The keypoints carry ``sigma`` pixels of noise; the prior is the ground
    truth with every rotation jittered by ``prior_noise_deg``. The fit without
    prior starts from the prior too, so the regularizer is the only difference.
    """
    from .annotate import ANNOTATE_CONFIG

    config = ANNOTATE_CONFIG if config is None else config
    jobs = [(s, i, sigma, prior_noise_deg, seed, config) for i, s in enumerate(scenes)]
    rows = parallel_map(_annotate_sample, jobs)
    return {k: float(np.mean([r[k] for r in rows])) for k in ("prior", "annotated", "no_prior")}
