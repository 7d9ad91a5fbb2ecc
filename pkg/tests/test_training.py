"""Loss, optimizer, training loop, splitting and scoring."""

import math

import numpy as np
import pytest

from churnvision import nn, training
from churnvision.training import (TrainConfig, adadelta_step, bce_loss,
                                  init_adadelta, predict, stratified_split, train)


# ---------------------------------------------------------------------------
# binary cross-entropy

def test_bce_clamped_certainty_is_near_zero():
    loss, _ = bce_loss(np.array([1.0]), np.array([1]))
    assert 0.0 <= loss <= 1.1e-7


def test_bce_half_probability_is_ln_two():
    loss, _ = bce_loss(np.array([0.5]), np.array([1]))
    assert abs(loss - math.log(2.0)) < 1e-15


def test_bce_symmetric_batch_gradients_cancel():
    loss, dlogits = bce_loss(np.array([0.5, 0.5]), np.array([1, 0]))
    assert abs(loss - math.log(2.0)) < 1e-15
    assert np.array_equal(dlogits.sum(axis=0), np.zeros(2))
    # fused form: (p - onehot) / batch
    assert np.allclose(dlogits, [[0.25, -0.25], [-0.25, 0.25]])


def test_bce_rejects_bad_labels():
    with pytest.raises(ValueError, match="labels"):
        bce_loss(np.array([0.5]), np.array([2]))


# ---------------------------------------------------------------------------
# adadelta

def scalar_adadelta_reference(gradients, rho=0.95, eps=1e-6):
    """Independent scalar transcription of the update recurrence."""
    eg = ex = 0.0
    x = 0.0
    steps = []
    for g in gradients:
        eg = rho * eg + (1 - rho) * g * g
        dx = -math.sqrt((ex + eps) / (eg + eps)) * g
        ex = rho * ex + (1 - rho) * dx * dx
        x += dx
        steps.append(dx)
    return x, steps


def single_param_setup():
    spec = nn.make_network((1, 1, 1), [nn.flatten(), nn.dense(1)])
    params = nn.init_parameters(spec, np.random.default_rng(0))
    params[1].weights[...] = 0.0
    params[1].biases[...] = 0.0
    return spec, params


def test_adadelta_zero_gradient_is_identity():
    _, params = single_param_setup()
    grads = [None, nn.LayerParams(np.zeros((1, 1)), np.zeros(1))]
    state = init_adadelta(params)
    before = nn.flatten_parameters(params).copy()
    adadelta_step(params, grads, state)
    assert np.array_equal(nn.flatten_parameters(params), before)
    assert not state.sq_grad[1].weights.any() and not state.sq_step[1].weights.any()


def test_adadelta_first_step_pinned_value():
    _, params = single_param_setup()
    grads = [None, nn.LayerParams(np.array([[1.0]]), np.zeros(1))]
    state = init_adadelta(params, rho=0.95, epsilon=1e-6)
    adadelta_step(params, grads, state)
    expected = -math.sqrt(1e-6 / (0.05 + 1e-6))  # -0.00447213...
    assert abs(params[1].weights[0, 0] - expected) < 1e-6
    assert abs(expected + 0.00447213) < 1e-6


def test_adadelta_matches_scalar_reference_over_steps():
    _, params = single_param_setup()
    state = init_adadelta(params, rho=0.95, epsilon=1e-6)
    gradient_stream = [1.0, 1.0, -0.5, 2.0, 0.0, -1.0, 0.25]
    for g in gradient_stream:
        adadelta_step(params, [None, nn.LayerParams(np.array([[g]]), np.zeros(1))], state)
    expected_x, expected_steps = scalar_adadelta_reference(gradient_stream)
    assert abs(params[1].weights[0, 0] - expected_x) < 1e-15
    # the recurrence itself says the second unit step is slightly LARGER
    assert abs(expected_steps[1]) > abs(expected_steps[0])


def test_adadelta_rejects_non_finite_gradient():
    _, params = single_param_setup()
    state = init_adadelta(params, names=["flatten", "head"])
    bad = [None, nn.LayerParams(np.array([[np.nan]]), np.zeros(1))]
    with pytest.raises(ValueError, match="head"):
        adadelta_step(params, bad, state)


# ---------------------------------------------------------------------------
# training loop

def tiny_spec():
    return nn.make_network((4, 2, 1), [nn.flatten(), nn.dense(2), nn.softmax()])


def tiny_data(n=12, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([i % 2 for i in range(n)])
    x = rng.random((n, 4, 2, 1)) * 0.25
    x[y == 1, :2] += 0.75  # separable signal in the first rows
    return x, y


def test_single_batch_single_epoch_is_one_optimizer_step():
    spec = tiny_spec()
    x, y = tiny_data()
    config = TrainConfig(epochs=1, batch_size=100, seed=5, shuffle=True)
    params, history = train(spec, x, y, config)
    assert len(history) == 1

    # replay by hand: init, one forward/backward, one adadelta step
    rng = np.random.default_rng(5)
    manual = nn.init_parameters(spec, rng)
    state = init_adadelta(manual, config.rho, config.epsilon)
    order = rng.permutation(len(x))
    out, caches = nn.network_forward(spec, manual, x[order], training=True, rng=rng)
    _, dlogits = bce_loss(out[:, 1], y[order])
    grads = nn.network_backward(spec, manual, caches, dlogits, from_logits=True)
    adadelta_step(manual, grads, state)
    assert nn.flatten_parameters(params).tobytes() == nn.flatten_parameters(manual).tobytes()


def test_training_is_bitwise_reproducible():
    spec = tiny_spec()
    x, y = tiny_data()
    config = TrainConfig(epochs=4, batch_size=5, seed=7)
    params1, hist1 = train(spec, x, y, config)
    params2, hist2 = train(spec, x, y, config)
    assert nn.flatten_parameters(params1).tobytes() == nn.flatten_parameters(params2).tobytes()
    assert [h.loss for h in hist1] == [h.loss for h in hist2]


def test_loss_decreases_over_first_five_full_batch_steps():
    spec = tiny_spec()
    x, y = tiny_data(n=20, seed=1)
    config = TrainConfig(epochs=5, batch_size=20, seed=11, shuffle=False)
    _, history = train(spec, x, y, config)
    losses = [h.loss for h in history]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_train_rejects_mismatched_shapes():
    spec = tiny_spec()
    x = np.zeros((3, 5, 2, 1))
    with pytest.raises(ValueError, match="shape"):
        train(spec, x, np.array([0, 1, 0]), TrainConfig(epochs=1))


def test_eval_cadence_records_training_auc():
    spec = tiny_spec()
    x, y = tiny_data()
    config = TrainConfig(epochs=4, batch_size=6, seed=3, eval_every=2)
    _, history = train(spec, x, y, config)
    assert [h.train_auc is not None for h in history] == [False, True, False, True]
    assert all(0.0 <= h.train_auc <= 1.0 for h in history if h.train_auc is not None)


# ---------------------------------------------------------------------------
# predict

def test_predict_zero_weights_gives_half():
    spec = tiny_spec()
    params = nn.init_parameters(spec, np.random.default_rng(0))
    params[1].weights[...] = 0.0
    params[1].biases[...] = 0.0
    scores = predict(spec, params, np.random.default_rng(1).random((5, 4, 2, 1)))
    assert np.array_equal(scores, np.full(5, 0.5))


def test_predict_singleton_equals_batch_entry():
    spec = tiny_spec()
    params = nn.init_parameters(spec, np.random.default_rng(2))
    x = np.random.default_rng(3).random((6, 4, 2, 1))
    batch = predict(spec, params, x)
    solo = predict(spec, params, x[4])
    assert batch[4].tobytes() == solo[0].tobytes()


def test_predict_equals_training_mode_with_dropout_disabled():
    # same parameters on two specs that differ only in the dropout rate
    def spec_with_rate(rate):
        return nn.make_network((4, 2, 1), [nn.flatten(), nn.dropout(rate),
                                           nn.dense(2), nn.softmax()])

    active = spec_with_rate(0.5)
    disabled = spec_with_rate(0.0)
    params = nn.init_parameters(active, np.random.default_rng(4))
    x = np.random.default_rng(5).random((8, 4, 2, 1))
    inference = predict(active, params, x)
    out, _ = nn.network_forward(disabled, params, x, training=True,
                                rng=np.random.default_rng(6))
    assert inference.tobytes() == out[:, 1].copy().tobytes()


# ---------------------------------------------------------------------------
# stratified split

class Item:
    def __init__(self, key, label):
        self.key = key
        self.label = label

    def __repr__(self):
        return f"Item({self.key}, {self.label})"


def test_split_proportional_rounding_example():
    items = [Item(i, 1 if i < 2 else 0) for i in range(10)]  # 2 churn, 8 keep
    train_side, test_side = stratified_split(items, 0.8, seed=0)
    assert len(train_side) == 8 and len(test_side) == 2
    assert sum(i.label for i in train_side) == 2  # round(0.8 * 2) = round(1.6) = 2
    assert sum(i.label for i in test_side) == 0


def test_split_balanced_set_stays_balanced():
    items = [Item(i, i % 2) for i in range(20)]
    a, b = stratified_split(items, 0.5, seed=1)
    assert len(a) == len(b) == 10
    assert sum(i.label for i in a) == 5 and sum(i.label for i in b) == 5


def test_split_partitions_without_loss_or_duplication():
    rng = np.random.default_rng(2)
    items = [Item(i, int(rng.random() < 0.3)) for i in range(57)]
    a, b = stratified_split(items, 0.7, seed=3)
    assert sorted(i.key for i in a + b) == list(range(57))


def test_split_deterministic_under_seed():
    items = [Item(i, i % 2) for i in range(30)]
    a1, b1 = stratified_split(items, 0.8, seed=9)
    a2, b2 = stratified_split(items, 0.8, seed=9)
    assert [i.key for i in a1] == [i.key for i in a2]
    assert [i.key for i in b1] == [i.key for i in b2]


def test_split_rejects_bad_ratio_and_warns_on_single_class():
    items = [Item(i, 0) for i in range(4)]
    with pytest.raises(ValueError, match="ratio"):
        stratified_split(items, 1.0, seed=0)
    with pytest.warns(UserWarning, match="single class"):
        stratified_split(items, 0.5, seed=0)


def test_split_accepts_external_labels():
    rows = list(range(10))
    labels = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0]
    a, b = stratified_split(rows, 0.8, seed=4, labels=labels)
    assert len(a) == 8 and len(b) == 2
