import numpy as np
import pytest

from cliff_geom.body_model import BodyParams
from cliff_geom.estimator.annotate import (
    ANNOTATE_CONFIG, FitPrior, LifterPrior, PerturbedGroundTruth, PriorParams,
    annotate_dataset, with_pseudo_gt,
)
from cliff_geom.estimator.experiments import annotator_experiment
from cliff_geom.estimator.fitting import FitConfig
from cliff_geom.estimator.lifter import LifterModel
from cliff_geom.losses import loss_smpl
from cliff_geom.synthetic import add_noise, gen_dataset, scene_from_dict, scene_to_dict


@pytest.fixture(scope="module")
def scenes():
    return gen_dataset(77, 3)


def exact_gt(scene, person, index):
    return scene.persons[person].params


def test_default_lambda():
    assert ANNOTATE_CONFIG.prior_weight == 0.1 and ANNOTATE_CONFIG.init == "prior"


def test_exact_prior_with_large_weight_is_kept(scenes):
    noisy = [add_noise(s, 2.0, 0.0, i) for i, s in enumerate(scenes)]
    cfg = FitConfig(init="prior", prior_weight=1e6)
    res = annotate_dataset(noisy, exact_gt, cfg)
    for a, s in zip(res.annotations, scenes):
        assert loss_smpl(a.params, s.persons[0].params) < 1e-6


def test_no_visible_keypoints_returns_prior(scenes):
    blind = [add_noise(s, 0.0, 1.0, i) for i, s in enumerate(scenes)]
    provider = PerturbedGroundTruth(10.0, seed=4)
    res = annotate_dataset(blind, provider)
    for a in res.annotations:
        assert a.ok and a.params == a.prior


def test_failures_are_recorded_and_pipeline_continues(scenes):
    def flaky(scene, person, index):
        if index == 1:
            raise ValueError("no prior for this one")
        return scene.persons[person].params

    res = annotate_dataset(scenes, flaky)
    assert [a.ok for a in res.annotations] == [True, False, True]
    assert "no prior" in res.failures[0].error
    assert res.provenance["n_failed"] == 1 and res.provenance["n"] == 3
    assert res.provenance["prior"] == "flaky"
    priors = res.priors()
    assert isinstance(priors, PriorParams) and len(priors.params) == 2


def test_prior_params_type_check():
    with pytest.raises(TypeError):
        PriorParams((np.zeros(3),), "x")


def test_providers_are_deterministic_and_named(scenes, rng):
    p = PerturbedGroundTruth(10.0, seed=1)
    assert p(scenes[0], 0, 0) == p(scenes[0], 0, 0)
    assert p(scenes[0], 0, 0) != p(scenes[0], 0, 1)
    assert "angle=10" in p.name
    assert FitPrior().name == "fit(frame=full)"
    fitted = FitPrior()(scenes[0], 0, 0)
    assert isinstance(fitted, BodyParams)
    model = LifterModel.init(24, True, rng, 0.9)
    assert isinstance(LifterPrior(model)(scenes[0], 0, 0), BodyParams)


def test_pseudo_gt_written_into_scene(scenes):
    res = annotate_dataset(scenes[:1], PerturbedGroundTruth(10.0))
    scene = with_pseudo_gt(scenes[0], res.annotations, "perturbed")
    entry = scene.pseudo_gt[0]
    assert len(entry["pose"]) == 72 and len(entry["t_full"]) == 3
    assert entry["prior"] == "perturbed"
    back = scene_from_dict(scene_to_dict(scene))
    assert back.pseudo_gt == scene.pseudo_gt


def test_annotator_direction_small():
    res = annotator_experiment(gen_dataset(5, 6), sigma=2.0, prior_noise_deg=10.0)
    assert res["annotated"] < res["prior"]
    assert res["annotated"] < res["no_prior"]
