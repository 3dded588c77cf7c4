import numpy as np
import pytest
from gradcheck import REDUCED

from nbaiot_ids.errors import NumericError
from nbaiot_ids.nn import ModelConfig, init_model
from nbaiot_ids.trainer import AdamState, TrainConfig, adam_step, evaluate, fit, one_hot

SMALL = ModelConfig(seq_len=115, conv_filters=4, convnext_blocks=1, dense1_units=8, dense2_units=4, num_classes=3)


def _toy(n=90, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 3
    x = rng.normal(size=(n, 115)) * 0.5 + (y[:, None] - 1) * 1.5
    return x, y


def test_one_hot():
    assert one_hot(2, 4).tolist() == [0, 0, 1, 0]
    assert one_hot(0, 1).tolist() == [1]
    assert np.all(one_hot(np.arange(5) % 3, 3).sum(axis=1) == 1)
    with pytest.raises(ValueError):
        one_hot(3, 3)


def _single_param_model(theta):
    model = init_model(REDUCED, dtype=np.float64)
    for p in model.params.values():
        p[...] = theta
    return model


def test_adam_first_step():
    model = _single_param_model(0.0)
    grads = {k: np.full_like(v, 2.0) for k, v in model.params.items()}
    adam_step(model, grads, AdamState.zeros_like(model), lr=0.001)
    for p in model.params.values():
        np.testing.assert_allclose(p, -0.001, atol=1e-6)


def test_adam_zero_gradient_is_noop():
    model = _single_param_model(0.7)
    zeros = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_step(model, zeros, AdamState.zeros_like(model), lr=0.001)
    assert all(np.all(p == 0.7) for p in model.params.values())


def test_adam_matches_textbook_recursion():
    rng = np.random.default_rng(0)
    model = _single_param_model(0.0)
    state = AdamState.zeros_like(model)
    theta, m, v = 0.0, 0.0, 0.0
    for t in range(1, 6):
        g = float(rng.normal())
        adam_step(model, {k: np.full_like(p, g) for k, p in model.params.items()}, state, lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(model.params["conv.bias"], theta, rtol=1e-12)
    assert state.t == 5


def test_adam_rejects_mismatched_grads():
    model = _single_param_model(0.0)
    with pytest.raises(ValueError):
        adam_step(model, {}, AdamState.zeros_like(model), 0.001)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_fit_learns_and_is_deterministic():
    x, y = _toy()
    cfg = TrainConfig(epochs=5, batch_size=16, learning_rate=0.01, seed=4)
    a, hist_a = fit(init_model(SMALL, seed=1), x, y, x[:30], y[:30], cfg)
    b, hist_b = fit(init_model(SMALL, seed=1), x, y, x[:30], y[:30], cfg)
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()
    strip = lambda h: [(r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc) for r in h]  # noqa: E731
    assert strip(hist_a) == strip(hist_b)
    assert len(hist_a) == 5 and hist_a[-1].train_loss < hist_a[0].train_loss
    assert hist_a[-1].val_acc > 0.9
    assert all(r.seconds > 0 and r.ms_per_step > 0 for r in hist_a)


def test_validation_data_does_not_affect_parameters():
    x, y = _toy()
    cfg = TrainConfig(epochs=2, batch_size=32)
    a, _ = fit(init_model(SMALL), x, y, None, None, cfg)
    b, _ = fit(init_model(SMALL), x, y, x[:9], y[:9], cfg)
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_early_stopping_restores_best():
    x, y = _toy()
    seen = []
    cfg = TrainConfig(epochs=8, batch_size=16, learning_rate=0.05, early_stop_patience=1)
    model, hist = fit(init_model(SMALL), x, y, x, y, cfg, on_epoch=seen.append)
    assert seen == hist
    best = min(r.val_loss for r in hist)
    assert evaluate(model, x, y).loss == pytest.approx(best, rel=1e-5)
    with pytest.raises(ValueError):
        fit(init_model(SMALL), x, y, config=cfg)


def test_nan_loss_raises():
    x, y = _toy(30)
    x = x.copy()
    x[0, 0] = np.nan
    with pytest.raises(NumericError):
        fit(init_model(SMALL), x, y, config=TrainConfig(epochs=1, batch_size=200, shuffle_each_epoch=False))


def test_evaluate_contract():
    x, y = _toy(50)
    model = init_model(SMALL, seed=3)
    r1 = evaluate(model, x, y, batch_size=16)
    r2 = evaluate(model, x, y, batch_size=16)
    assert r1.probabilities.tobytes() == r2.probabilities.tobytes()
    assert r1.steps == 4 and r1.seconds > 0 and r1.ms_per_step > 0
    assert 0 <= r1.accuracy <= 1
    assert np.isnan(evaluate(model, x).loss)
    with pytest.raises(ValueError):
        evaluate(model, x[:0])
