"""Unit tests for the convolutional-recurrent estimator."""
import numpy as np
import pytest

from paeekit.config import CnnLstmConfig, TrainConfig
from paeekit.errors import DivergedLoss, EmptyDataset, ShapeMismatch
from paeekit.features import WindowSet
from paeekit.models import CnnLstmWeights, cnn_lstm_forward, cnn_lstm_train, gradient_check, init_cnn_lstm
from paeekit.models.cnn_lstm import PARAM_NAMES, cnn_lstm_backward


def _small_config(channels: int) -> CnnLstmConfig:
    return CnnLstmConfig(in_channels=channels, conv_channels=(4, 5), kernel_size=3, lstm_hidden=6, seed=3)


def _linear_task(n: int = 512, channels: int = 3, window: int = 12, seed: int = 0) -> WindowSet:
    """Targets are a fixed linear function of each window's channel means."""
    rng = np.random.default_rng(seed)
    tensors = rng.normal(size=(n, channels, window))
    coef = np.linspace(0.5, 1.5, channels)
    targets = tensors.mean(axis=2) @ coef + 2.0
    times = np.arange(n, dtype=np.float64)
    return WindowSet(
        tensors=tensors,
        iaa=np.abs(tensors).sum(axis=(1, 2))[:, np.newaxis],
        targets=targets,
        end_times=times,
        target_times=times + 1,
        subject_ids=np.full(n, "S01", dtype=object),
    )


@pytest.mark.unit
def test_init_shapes_and_determinism():
    """Test parameter shapes and seeded initialisation."""
    cfg = CnnLstmConfig(in_channels=9)
    weights = init_cnn_lstm(cfg)
    assert weights.conv1_w.shape == (16, 9, 3)
    assert weights.conv2_w.shape == (32, 16, 3)
    assert weights.lstm_wx.shape == (128, 32)
    assert weights.lstm_wh.shape == (128, 32)
    assert weights.head_b.shape == (1,)
    again = init_cnn_lstm(cfg)
    for name in PARAM_NAMES:
        np.testing.assert_array_equal(getattr(weights, name), getattr(again, name))


@pytest.mark.unit
def test_weights_validate_shapes():
    """Test inconsistent parameter shapes are rejected."""
    params = init_cnn_lstm(_small_config(3)).as_dict()
    params["lstm_wh"] = np.zeros((24, 5))
    with pytest.raises(ShapeMismatch):
        CnnLstmWeights.from_dict(params)


@pytest.mark.unit
def test_forward_shape():
    """Test one scalar output per window of any length."""
    weights = init_cnn_lstm(_small_config(3))
    out = cnn_lstm_forward(weights, np.random.default_rng(0).normal(size=(7, 3, 30)))
    assert out.shape == (7,)
    assert np.all(np.isfinite(out))


@pytest.mark.unit
@pytest.mark.parametrize("channels", [3, 9])
def test_gradient_check(channels: int):
    """Test analytic gradients agree with central differences on every parameter."""
    weights = init_cnn_lstm(_small_config(channels))
    tensor = np.random.default_rng(channels).normal(size=(channels, 10))
    assert gradient_check(weights, tensor, target=1.5, n_params=None) < 1e-4


@pytest.mark.unit
def test_gradient_check_catches_broken_backward():
    """Test a backward pass that drops the output bias gradient is detected."""
    weights = init_cnn_lstm(_small_config(3))
    tensor = np.random.default_rng(5).normal(size=(3, 10))

    def broken(w, cache, dy):
        grads = cnn_lstm_backward(w, cache, dy)
        grads["head_b"] = np.zeros_like(grads["head_b"])
        return grads

    assert gradient_check(weights, tensor, target=1.5, n_params=None, backward=broken) > 1e-2


@pytest.mark.unit
def test_training_is_reproducible():
    """Test identical seeds give bit-identical weights."""
    windows = _linear_task(n=128)
    cfg = _small_config(3)
    tcfg = TrainConfig(epochs=2, batch_size=32, seed=9)
    first = cnn_lstm_train(windows, cfg, tcfg)
    second = cnn_lstm_train(windows, cfg, tcfg)
    for name in PARAM_NAMES:
        np.testing.assert_array_equal(getattr(first.weights, name), getattr(second.weights, name))
    assert first.history.losses == second.history.losses


@pytest.mark.unit
def test_training_loss_decreases_on_linear_task():
    """Test the full-data loss falls over the first three epochs."""
    windows = _linear_task()
    tcfg = TrainConfig(epochs=3, batch_size=32, learning_rate=1e-2, seed=1)
    model = cnn_lstm_train(windows, _small_config(3), tcfg)
    losses = model.history.losses
    assert len(losses) == 4
    assert losses[1] < losses[0]
    assert losses[3] < losses[0]
    assert model.predict(windows).shape == (len(windows),)


@pytest.mark.unit
def test_divergence_is_reported():
    """Test an absurd learning rate raises DivergedLoss."""
    windows = _linear_task(n=128)
    tcfg = TrainConfig(epochs=2, batch_size=32, learning_rate=1e3)
    with pytest.raises(DivergedLoss) as excinfo:
        cnn_lstm_train(windows, _small_config(3), tcfg)
    assert excinfo.value.epoch >= 1


@pytest.mark.unit
def test_training_input_checks():
    """Test empty data and channel mismatches."""
    windows = _linear_task(n=16)
    with pytest.raises(ShapeMismatch):
        cnn_lstm_train(windows, _small_config(9), TrainConfig(epochs=1))
    with pytest.raises(EmptyDataset):
        cnn_lstm_train(windows.subset(np.zeros(len(windows), dtype=bool)), _small_config(3), TrainConfig(epochs=1))


@pytest.mark.unit
def test_init_bounds_follow_fan_in():
    """Test every tensor is drawn within 1/sqrt(fan_in) and fills most of that range."""
    cfg = CnnLstmConfig(in_channels=9, conv_channels=(16, 32), kernel_size=3, lstm_hidden=32)
    weights = init_cnn_lstm(cfg)
    fan_in = {
        "conv1_w": 9 * 3, "conv1_b": 9 * 3,
        "conv2_w": 16 * 3, "conv2_b": 16 * 3,
        "lstm_wx": 32 + 32, "lstm_wh": 32 + 32, "lstm_b": 32 + 32,
        "head_w": 32,
    }
    for name, fan in fan_in.items():
        values = np.abs(getattr(weights, name))
        bound = 1.0 / np.sqrt(fan)
        assert values.max() <= bound, name
        if values.size >= 100:
            assert values.max() > 0.8 * bound, name
