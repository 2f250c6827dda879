from __future__ import annotations

import numpy as np
import pytest

from gazepipe.regressors import AdamState, TrainConfig, adam_step, learning_rate_at


def test_defaults():
    c = TrainConfig()
    assert (c.learning_rate, c.beta1, c.beta2, c.eps) == (1e-5, 0.9, 0.95, 1e-8)
    assert (c.batch_size, c.lr_step, c.lr_gamma, c.iterations) == (256, 5000, 0.1, 15000)


@pytest.mark.parametrize("b1,b2", [(0.0, 0.9), (0.9, 1.0), (1.2, 0.5)])
def test_beta_validation(b1, b2):
    with pytest.raises(ValueError):
        TrainConfig(beta1=b1, beta2=b2)


def hand_adam(g, lr, b1=0.9, b2=0.95, eps=1e-8):
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    mh, vh = m / (1 - b1), v / (1 - b2)
    return -lr * mh / (np.sqrt(vh) + eps)


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_first_step_matches_hand_computation(dtype):
    w = {"w": np.zeros(1, dtype)}
    adam_step(w, {"w": np.ones(1, dtype)}, AdamState(), TrainConfig(dtype=np.dtype(dtype).name), 1)
    want = hand_adam(1.0, 1e-5)
    assert want == pytest.approx(-1e-5 / (1 + 1e-8), rel=1e-12)
    assert w["w"][0] == pytest.approx(want, rel=1e-6 if dtype == np.float32 else 1e-12)


def test_multi_step_matches_reference(rng):
    cfg = TrainConfig(learning_rate=1e-2, dtype="float64")
    w = {"a": rng.normal(size=5)}
    ref = w["a"].copy()
    m = np.zeros(5)
    v = np.zeros(5)
    state = AdamState()
    for t in range(1, 8):
        g = rng.normal(size=5)
        adam_step(w, {"a": g}, state, cfg, t)
        m = 0.9 * m + 0.1 * g
        v = 0.95 * v + 0.05 * g * g
        ref -= 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.95**t)) + 1e-8)
    np.testing.assert_allclose(w["a"], ref, rtol=1e-12)
    assert state.t == 7


def test_zero_gradient_fresh_state_no_update():
    w = {"w": np.array([0.5, -2.0])}
    adam_step(w, {"w": np.zeros(2)}, AdamState(), TrainConfig(), 1)
    np.testing.assert_array_equal(w["w"], [0.5, -2.0])


def test_schedule():
    c = TrainConfig()
    assert learning_rate_at(c, 1) == 1e-5
    assert learning_rate_at(c, 5000) == 1e-5
    assert learning_rate_at(c, 5001) == pytest.approx(1e-6, rel=1e-12)
    assert learning_rate_at(c, 10001) == pytest.approx(1e-7, rel=1e-12)


def test_iteration_is_one_based():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, AdamState(), TrainConfig(), 0)
