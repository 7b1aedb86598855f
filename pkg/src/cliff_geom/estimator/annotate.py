"""Pseudo ground truth for 2D-only data: a prior prediction refined by fitting.

A prior provider proposes parameters for each person; the fitter then
refines them against the 2D keypoints with the prior as a regularizer.
Providers are plain callables ``provider(scene, person, index)`` that
return ``BodyParams``; their ``name`` attribute ends up in the provenance.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..body_model import BodyParams
from ..camera import BehindCameraError
from ..synthetic import Scene, perturb_params
from .fitting import FitConfig, FitReport, fit_sample

log = logging.getLogger(__name__)

ANNOTATE_CONFIG = FitConfig(prior_root=True, init="prior")


@dataclass(frozen=True)
class PriorParams:
    """Prior parameters, one entry per annotated person, plus where they came from."""

    params: tuple
    source: str

    def __post_init__(self):
        if not all(isinstance(p, BodyParams) for p in self.params):
            raise TypeError("prior entries must be BodyParams")


class PerturbedGroundTruth:
    """Stand-in for a trained regressor: ground truth with every rotation jittered."""

    def __init__(self, angle_deg: float = 10.0, seed: int = 0, shape_std: float = 0.0):
        self.angle_deg, self.seed, self.shape_std = angle_deg, seed, shape_std
        self.name = f"perturbed-gt(angle={angle_deg:g},seed={seed},shape_std={shape_std:g})"

    def __call__(self, scene: Scene, person: int, index: int) -> BodyParams:
        rng = np.random.default_rng([self.seed, index, person])
        return perturb_params(scene.persons[person].params, self.angle_deg, rng, self.shape_std)


class FitPrior:
    """Prior from an unregularized fit of the same keypoints."""

    def __init__(self, config: FitConfig = FitConfig(prior_weight=0.0)):
        self.config = config
        self.name = f"fit(frame={config.loss_frame})"

    def __call__(self, scene: Scene, person: int, index: int) -> BodyParams:
        return fit_sample(scene.observation(person, with_3d=False), self.config).params


class LifterPrior:
    """Prior from a trained lifter."""

    def __init__(self, model, name: str = "lifter"):
        self.model = model
        self.name = name

    def __call__(self, scene: Scene, person: int, index: int) -> BodyParams:
        return self.model.predict([scene.observation(person, with_3d=False)])[0][0]


@dataclass
class Annotation:
    index: int
    person: int
    params: Optional[BodyParams]
    prior: Optional[BodyParams]
    report: Optional[FitReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class AnnotationResult:
    annotations: list
    provenance: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [a for a in self.annotations if not a.ok]

    def priors(self) -> PriorParams:
        return PriorParams(tuple(a.prior for a in self.annotations if a.prior is not None),
                           self.provenance.get("prior", ""))


def annotate_dataset(scenes: Sequence[Scene], prior_provider,
                     config: FitConfig = ANNOTATE_CONFIG) -> AnnotationResult:
    """Annotate every person of every scene from its 2D keypoints.

    A failure on one person is recorded on its ``Annotation`` and the
    pipeline moves on.
    """
    name = getattr(prior_provider, "name", None) or getattr(
        prior_provider, "__name__", type(prior_provider).__name__)
    out = []
    for index, scene in enumerate(scenes):
        for person in range(len(scene.persons)):
            prior = None
            try:
                prior = prior_provider(scene, person, index)
                obs = scene.observation(person, with_3d=False)
                report = fit_sample(obs, config, prior=prior)
                out.append(Annotation(index, person, report.params, prior, report))
            except (ValueError, FloatingPointError, BehindCameraError, np.linalg.LinAlgError) as e:
                log.warning("annotation of scene %d person %d failed: %s", index, person, e)
                out.append(Annotation(index, person, None, prior, None, f"{type(e).__name__}: {e}"))
    cfg = asdict(config)
    provenance = {"prior": name, "config": cfg, "n": len(out),
                  "n_failed": sum(not a.ok for a in out)}
    return AnnotationResult(out, provenance)


def with_pseudo_gt(scene: Scene, annotations: Sequence[Annotation], prior_name: str) -> Scene:
    """Copy of ``scene`` with its ``pseudo_gt`` entries filled from ``annotations``."""
    entries = [None] * len(scene.persons)
    for a in annotations:
        if a.ok:
            entries[a.person] = {
                "pose": a.params.pose.ravel().tolist(),
                "shape": a.params.shape.tolist(),
                "t_full": a.report.t_full.as_array().tolist(),
                "prior": prior_name,
            }
    return replace(scene, pseudo_gt=entries)
