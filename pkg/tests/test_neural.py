"""From-scratch network layers: gradients, training, serialization."""
import numpy as np
import pytest

import voxground.neural as nn

EPS = 1e-5
TOL = 1e-4


def check(net, in_shape, n_out, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2,) + in_shape)
    t = np.eye(n_out)[rng.integers(n_out, size=2)]
    err = nn.gradient_check(net, x, t, epsilon=EPS)
    assert err <= TOL, err


def test_gradient_check_dense():
    net = nn.Network.build([
        {"kind": "dense", "in": 9, "out": 6, "activation": "tanh"},
        {"kind": "dense", "in": 6, "out": 4, "activation": "linear"}], seed=1)
    check(net, (9,), 4)


def test_gradient_check_conv1d():
    net = nn.Network.build([
        {"kind": "conv1d", "in": 1, "out": 3, "kernel": 3, "activation": "relu"},
        {"kind": "flatten"},
        {"kind": "dense", "in": 30, "out": 4, "activation": "linear"}], seed=2)
    check(net, (12, 1), 4)


def test_gradient_check_conv2d():
    net = nn.Network.build([
        {"kind": "conv2d", "in": 1, "out": 2, "kernel": 3, "activation": "relu"},
        {"kind": "flatten"},
        {"kind": "dense", "in": 32, "out": 3, "activation": "linear"}], seed=3)
    check(net, (6, 6, 1), 3)


def test_gradient_check_lstm():
    net = nn.Network.build([
        {"kind": "lstm", "in": 5, "hidden": 8},
        {"kind": "dense", "in": 8, "out": 4, "activation": "linear"}], seed=4)
    check(net, (7, 5), 4)


def test_xor_learned_exactly():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([[1, 0], [0, 1], [0, 1], [1, 0]], dtype=float)
    net = nn.Network.build([
        {"kind": "dense", "in": 2, "out": 8, "activation": "tanh"},
        {"kind": "dense", "in": 8, "out": 2, "activation": "linear"}], seed=0)
    nn.train_classifier(net, x, y,
                        nn.TrainConfig(epochs=2000, learning_rate=0.05,
                                       batch_size=4, seed=0))
    preds = np.argmax(net.forward(x), axis=-1)
    assert list(preds) == [0, 1, 1, 0]


def test_softmax_properties():
    z = np.array([1.0, 2.0, 3.0])
    p = nn.softmax(z)
    assert np.isclose(p.sum(), 1.0)
    assert np.all(np.diff(p) > 0)
    # shift invariance
    assert np.allclose(nn.softmax(z + 100.0), p)


def test_shape_mismatch_raises():
    net = nn.Network.build([
        {"kind": "dense", "in": 4, "out": 2, "activation": "linear"}], seed=0)
    with pytest.raises(nn.ShapeMismatch):
        net.forward(np.zeros((1, 7)))


def test_save_load_round_trip(tmp_path):
    net = nn.Network.build([
        {"kind": "dense", "in": 3, "out": 5, "activation": "tanh"},
        {"kind": "dense", "in": 5, "out": 2, "activation": "linear"}], seed=9)
    x = np.array([[0.1, -0.2, 0.7]])
    before = net.forward(x)
    path = tmp_path / "net.json"
    net.save(str(path))
    loaded = nn.Network.load(str(path))
    assert np.allclose(loaded.forward(x), before)


def test_training_loss_decreases():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 6))
    labels = (x[:, 0] > 0).astype(int)
    y = np.eye(2)[labels]
    net = nn.Network.build([
        {"kind": "dense", "in": 6, "out": 8, "activation": "tanh"},
        {"kind": "dense", "in": 8, "out": 2, "activation": "linear"}], seed=0)
    losses = nn.train_classifier(net, x, y,
                                 nn.TrainConfig(epochs=50, learning_rate=0.01,
                                                batch_size=16, seed=0))
    assert losses[-1] < losses[0]
