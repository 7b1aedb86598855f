import numpy as np
import pytest

from cliff_geom.camera import bbox_info
from cliff_geom.estimator.fitting import FitConfig
from cliff_geom.estimator.lifter import (
    DivergenceError, KP_SCALE, LifterModel, S_INDEX, batch_loss_and_grad, decode, encode,
    evaluate_lifter, input_width, layer_shapes, train_lifter,
)
from cliff_geom.estimator.objective import Objective
from cliff_geom.losses import LossWeights
from cliff_geom.synthetic import gen_dataset

WEIGHTS = LossWeights(1.0, 1.0, 1e-3)


@pytest.fixture(scope="module")
def scenes():
    return gen_dataset(31, 60)


@pytest.fixture(scope="module")
def observations(scenes):
    return [o for s in scenes for o in s.observations()]


def jittered_model(rng, use_bbox, s0=0.9):
    m = LifterModel.init(24, use_bbox, rng, s0)
    for k in m.weights:
        m.weights[k] = m.weights[k] + rng.normal(0, 0.02, m.weights[k].shape)
    return m


def test_shapes():
    assert input_width(24, False) == 48 and input_width(24, True) == 51
    assert layer_shapes(51)["w1"] == (51, 256)
    assert layer_shapes(48)["w3"] == (256, 85)
    with pytest.raises(ValueError):
        LifterModel(24, True, {k: np.zeros(s) for k, s in layer_shapes(48).items()})


def test_encode(observations):
    obs = observations[0]
    plain = encode(obs, False)
    assert np.allclose(plain, obs.kp2d_crop.ravel() / KP_SCALE)
    withbox = encode(obs, True)
    assert np.array_equal(withbox[:48], plain)
    assert np.array_equal(withbox[48:], bbox_info(obs.bbox, obs.camera.focal))


def test_decode_scale_positive():
    out = np.zeros((2, 85))
    out[:, S_INDEX] = [-3.0, 2.0]
    x = decode(out)
    assert np.allclose(x[:, S_INDEX], np.exp([-3.0, 2.0]))
    assert np.array_equal(out[:, S_INDEX], [-3.0, 2.0])


@pytest.mark.parametrize("use_bbox", [False, True])
def test_backward_matches_finite_differences(use_bbox, rng, observations):
    m = jittered_model(rng, use_bbox)
    x = m.encode(observations[:8])
    d_out = rng.normal(size=(8, 85))
    _, cache = m.forward(x, cache=True)
    grads = m.backward(cache, d_out)

    def f(weights):
        return float(np.sum(d_out * LifterModel(24, use_bbox, weights).forward(x)))

    h = 1e-6
    for key, w in m.weights.items():
        for idx in [tuple(rng.integers(0, n) for n in w.shape) for _ in range(4)]:
            plus = {k: v.copy() for k, v in m.weights.items()}
            minus = {k: v.copy() for k, v in m.weights.items()}
            plus[key][idx] += h
            minus[key][idx] -= h
            fd = (f(plus) - f(minus)) / (2 * h)
            assert abs(fd - grads[key][idx]) <= 1e-4 * abs(grads[key][idx]) + 1e-8


@pytest.mark.parametrize("mode,use_bbox", [("crop", False), ("full", False), ("full", True)])
def test_batch_gradient_matches_finite_differences(mode, use_bbox, rng, observations):
    m = jittered_model(rng, use_bbox)
    batch = observations[:10]
    x = m.encode(batch)
    obj = Objective(batch, mode, WEIGHTS, crop_units=True)
    _, grads = batch_loss_and_grad(m, x, obj)
    d = {k: rng.normal(size=v.shape) for k, v in m.weights.items()}
    analytic = sum(float(np.sum(grads[k] * d[k])) for k in d)

    def f(t):
        mm = LifterModel(24, use_bbox, {k: m.weights[k] + t * d[k] for k in d})
        return float(np.mean(obj.values(decode(mm.forward(x)))))

    h = 1e-6
    fd = (f(h) - f(-h)) / (2 * h)
    assert abs(fd - analytic) <= 1e-4 * abs(fd)


def test_training_makes_progress_and_is_deterministic(observations):
    cfg = FitConfig(loss_frame="full", use_bbox_input=True, weights=WEIGHTS)
    a = train_lifter(observations, cfg, epochs=4, seed=3)
    b = train_lifter(observations, cfg, epochs=4, seed=3)
    assert a.epoch_loss == b.epoch_loss
    assert all(np.array_equal(a.model.weights[k], b.model.weights[k]) for k in a.model.weights)
    assert a.epoch_loss[-1] < a.epoch_loss[0]


def test_training_validation(observations):
    with pytest.raises(ValueError):
        train_lifter(observations[:10], FitConfig())
    with pytest.raises(ValueError):
        train_lifter(observations, FitConfig(), epochs=0)


def test_divergence_aborts_with_history(observations):
    cfg = FitConfig(loss_frame="full", weights=LossWeights(1, 1, 1.0))
    with pytest.raises(DivergenceError) as err:
        train_lifter(observations, cfg, epochs=20, lr=5.0)
    assert 0 <= err.value.epoch < 20
    assert isinstance(err.value.history, list)


def test_model_round_trip_and_prediction(rng, observations, scenes):
    m = jittered_model(rng, True)
    again = LifterModel.from_dict(m.to_dict())
    assert np.array_equal(again.predict_vectors(observations[:5]), m.predict_vectors(observations[:5]))
    params, weak, t_full = m.predict(observations[:1])[0]
    assert weak.s > 0 and t_full.tZ > 0
    gts = [p.params for s in scenes[:5] for p in s.persons]
    res = evaluate_lifter(m, observations[:5], gts)
    assert set(res) == {"mpjpe", "pa_mpjpe", "yaw"}
