"""Convolutional-recurrent PAEE estimator with hand-written backpropagation.

Network: conv(F1, K) -> ReLU -> conv(F2, K) -> ReLU -> LSTM(H) -> affine head on
the last hidden state. Convolutions use same padding along time; LSTM gates are
stacked in the order input, forget, output, candidate.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..config import CnnLstmConfig, TrainConfig
from ..errors import DivergedLoss, EmptyDataset, ShapeMismatch
from ..features import WindowSet
from ..logging import get_logger

logger = get_logger(__name__)

PARAM_NAMES = (
    "conv1_w", "conv1_b",
    "conv2_w", "conv2_b",
    "lstm_wx", "lstm_wh", "lstm_b",
    "head_w", "head_b",
)

PREDICT_CHUNK = 1024
MIN_STD = 1e-12


@dataclass(eq=False)
class CnnLstmWeights:
    conv1_w: np.ndarray  # (F1, C, K)
    conv1_b: np.ndarray  # (F1,)
    conv2_w: np.ndarray  # (F2, F1, K)
    conv2_b: np.ndarray  # (F2,)
    lstm_wx: np.ndarray  # (4H, F2)
    lstm_wh: np.ndarray  # (4H, H)
    lstm_b: np.ndarray   # (4H,)
    head_w: np.ndarray   # (H,)
    head_b: np.ndarray   # (1,)

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        f1, _, k = self.conv1_w.shape
        f2 = self.conv2_w.shape[0]
        h = self.head_w.shape[0]
        expected = {
            "conv1_b": (f1,),
            "conv2_w": (f2, f1, k),
            "conv2_b": (f2,),
            "lstm_wx": (4 * h, f2),
            "lstm_wh": (4 * h, h),
            "lstm_b": (4 * h,),
            "head_w": (h,),
            "head_b": (1,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if k % 2 == 0:
            raise ShapeMismatch(f"kernel size must be odd, got {k}")

    @property
    def in_channels(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.conv1_w.shape[2]

    @property
    def hidden(self) -> int:
        return self.head_w.shape[0]

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, params: Dict[str, np.ndarray]) -> "CnnLstmWeights":
        return cls(**{name: np.array(params[name], dtype=np.float64) for name in PARAM_NAMES})

    def copy(self) -> "CnnLstmWeights":
        return CnnLstmWeights.from_dict(self.as_dict())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.as_dict().values())

    @property
    def size(self) -> int:
        return sum(p.size for p in self.as_dict().values())


def init_cnn_lstm(cfg: CnnLstmConfig) -> CnnLstmWeights:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, drawn in parameter order.

    The LSTM gates see F2 inputs plus H recurrent inputs, so their fan-in is F2 + H.
    """
    rng = np.random.default_rng(cfg.seed)
    f1, f2 = cfg.conv_channels
    k, h, c = cfg.kernel_size, cfg.lstm_hidden, cfg.in_channels

    def uniform(shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return CnnLstmWeights(
        conv1_w=uniform((f1, c, k), c * k),
        conv1_b=uniform((f1,), c * k),
        conv2_w=uniform((f2, f1, k), f1 * k),
        conv2_b=uniform((f2,), f1 * k),
        lstm_wx=uniform((4 * h, f2), f2 + h),
        lstm_wh=uniform((4 * h, h), f2 + h),
        lstm_b=uniform((4 * h,), f2 + h),
        head_w=uniform((h,), h),
        head_b=uniform((1,), h),
    )


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _conv_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Same-padded 1-D convolution (cross-correlation). Returns output and im2col columns."""
    pad = w.shape[2] // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = np.ascontiguousarray(sliding_window_view(padded, w.shape[2], axis=2))  # (B, C, T, K)
    z = np.tensordot(cols, w, axes=([1, 3], [1, 2]))  # (B, T, F)
    return z.transpose(0, 2, 1) + b[np.newaxis, :, np.newaxis], cols


def _conv_same_backward(dz: np.ndarray, cols: np.ndarray, w: np.ndarray, need_dx: bool = True):
    dw = np.tensordot(dz, cols, axes=([0, 2], [0, 2]))
    db = dz.sum(axis=(0, 2))
    if not need_dx:
        return None, dw, db
    k = w.shape[2]
    pad = k // 2
    t = dz.shape[2]
    dcols = np.tensordot(dz, w, axes=([1], [0]))  # (B, T, C, K)
    dpadded = np.zeros((dz.shape[0], w.shape[1], t + 2 * pad))
    for j in range(k):
        dpadded[:, :, j:j + t] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dpadded[:, :, pad:pad + t], dw, db


def _forward(weights: CnnLstmWeights, x: np.ndarray, keep_cache: bool = False):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"batch must have shape (B, C, T), got {x.shape}")
    if x.shape[1] != weights.in_channels:
        raise ShapeMismatch(f"network expects {weights.in_channels} channels, batch has {x.shape[1]}")
    batch, _, steps = x.shape
    h_size = weights.hidden

    z1, cols1 = _conv_same(x, weights.conv1_w, weights.conv1_b)
    a1 = np.maximum(z1, 0.0)
    z2, cols2 = _conv_same(a1, weights.conv2_w, weights.conv2_b)
    a2 = np.maximum(z2, 0.0)

    h = np.zeros((batch, h_size))
    c = np.zeros((batch, h_size))
    steps_cache: List[tuple] = []
    for t in range(steps):
        xt = a2[:, :, t]
        gates = xt @ weights.lstm_wx.T + h @ weights.lstm_wh.T + weights.lstm_b
        i = expit(gates[:, :h_size])
        f = expit(gates[:, h_size:2 * h_size])
        o = expit(gates[:, 2 * h_size:3 * h_size])
        g = np.tanh(gates[:, 3 * h_size:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        if keep_cache:
            steps_cache.append((xt, h_prev, c_prev, i, f, o, g, tanh_c))

    y = h @ weights.head_w + weights.head_b[0]
    if not keep_cache:
        return y, None
    cache = {"cols1": cols1, "z1": z1, "cols2": cols2, "z2": z2, "steps": steps_cache, "h_last": h}
    return y, cache


def cnn_lstm_forward(weights: CnnLstmWeights, batch: np.ndarray) -> np.ndarray:
    """One prediction per window of a (B, C, T) batch."""
    y, _ = _forward(weights, batch)
    return y


def cnn_lstm_backward(weights: CnnLstmWeights, cache: dict, dy: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss given ``dy = dL/dy`` for every batch element."""
    grads = {
        "head_w": cache["h_last"].T @ dy,
        "head_b": np.array([dy.sum()]),
    }
    dh = np.outer(dy, weights.head_w)
    dc = np.zeros_like(dh)
    dwx = np.zeros_like(weights.lstm_wx)
    dwh = np.zeros_like(weights.lstm_wh)
    db = np.zeros_like(weights.lstm_b)
    steps = cache["steps"]
    da2 = np.zeros(cache["z2"].shape)
    for t in range(len(steps) - 1, -1, -1):
        xt, h_prev, c_prev, i, f, o, g, tanh_c = steps[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dgates = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g ** 2),
        ], axis=1)
        dwx += dgates.T @ xt
        dwh += dgates.T @ h_prev
        db += dgates.sum(axis=0)
        da2[:, :, t] = dgates @ weights.lstm_wx
        dh = dgates @ weights.lstm_wh
        dc = dc * f
    grads["lstm_wx"], grads["lstm_wh"], grads["lstm_b"] = dwx, dwh, db

    dz2 = da2 * (cache["z2"] > 0)
    da1, grads["conv2_w"], grads["conv2_b"] = _conv_same_backward(dz2, cache["cols2"], weights.conv2_w)
    dz1 = da1 * (cache["z1"] > 0)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_same_backward(dz1, cache["cols1"], weights.conv1_w, need_dx=False)
    return grads


BackwardFn = Callable[[CnnLstmWeights, dict, np.ndarray], Dict[str, np.ndarray]]


def mse_loss(weights: CnnLstmWeights, x: np.ndarray, targets: np.ndarray) -> float:
    y, _ = _forward(weights, x)
    return float(np.mean((y - targets) ** 2))


def loss_and_grads(
    weights: CnnLstmWeights,
    x: np.ndarray,
    targets: np.ndarray,
    backward: BackwardFn = cnn_lstm_backward,
) -> Tuple[float, Dict[str, np.ndarray]]:
    y, cache = _forward(weights, x, keep_cache=True)
    residual = y - targets
    loss = float(np.mean(residual ** 2))
    dy = 2.0 * residual / len(targets)
    return loss, backward(weights, cache, dy)


def gradient_check(
    weights: CnnLstmWeights,
    tensor: np.ndarray,
    target: float,
    eps: float = 1e-5,
    n_params: Optional[int] = 500,
    seed: int = 0,
    backward: BackwardFn = cnn_lstm_backward,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    With ``n_params`` set, a seeded subsample of at least that many parameters
    is checked (every tensor contributes at least min(size, 8) entries);
    ``None`` checks every parameter.
    """
    x = np.asarray(tensor, dtype=np.float64)[np.newaxis]
    t = np.array([target], dtype=np.float64)
    _, analytic = loss_and_grads(weights, x, t, backward=backward)

    rng = np.random.default_rng(seed)
    perturbed = weights.copy()
    total = weights.size
    worst = 0.0
    for name in PARAM_NAMES:
        param = getattr(perturbed, name)
        flat = param.reshape(-1)
        if n_params is None or n_params >= total:
            chosen = np.arange(flat.size)
        else:
            quota = max(min(flat.size, 8), int(np.ceil(n_params * flat.size / total)))
            chosen = np.sort(rng.choice(flat.size, size=min(quota, flat.size), replace=False))
        grad = analytic[name].reshape(-1)
        for index in chosen:
            original = flat[index]
            flat[index] = original + eps
            plus = mse_loss(perturbed, x, t)
            flat[index] = original - eps
            minus = mse_loss(perturbed, x, t)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            error = abs(grad[index] - numeric) / max(abs(grad[index]) + abs(numeric), 1e-8)
            worst = max(worst, error)
    return worst


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, params: Dict[str, np.ndarray], tcfg: TrainConfig):
        self.lr = tcfg.learning_rate
        self.beta1 = tcfg.beta1
        self.beta2 = tcfg.beta2
        self.eps = tcfg.eps
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """In-place update of ``params``."""
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2) + self.eps)


@dataclass
class TrainHistory:
    """Full training-set loss before training (index 0) and after each epoch."""
    losses: List[float] = field(default_factory=list)

    @property
    def initial(self) -> float:
        return self.losses[0]

    @property
    def final(self) -> float:
        return self.losses[-1]


@dataclass(eq=False)
class CnnLstmModel:
    weights: CnnLstmWeights
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: float
    target_std: float
    history: TrainHistory = field(default_factory=TrainHistory)

    def standardize(self, tensors: np.ndarray) -> np.ndarray:
        return (tensors - self.input_mean[:, np.newaxis]) / self.input_std[:, np.newaxis]

    def predict(self, windows) -> np.ndarray:
        """Predictions in W/kg for a WindowSet or a (N, C, T) array."""
        tensors = windows.tensors if isinstance(windows, WindowSet) else np.asarray(windows, dtype=np.float64)
        out = [
            cnn_lstm_forward(self.weights, self.standardize(tensors[start:start + PREDICT_CHUNK]))
            for start in range(0, tensors.shape[0], PREDICT_CHUNK)
        ]
        scaled = np.concatenate(out) if out else np.zeros(0)
        return scaled * self.target_std + self.target_mean


def _safe_std(values: np.ndarray, axis=None) -> np.ndarray:
    std = np.std(values, axis=axis)
    return np.where(std < MIN_STD, 1.0, std)


def _full_loss(weights: CnnLstmWeights, x: np.ndarray, targets: np.ndarray) -> float:
    total = 0.0
    for start in range(0, x.shape[0], PREDICT_CHUNK):
        y = cnn_lstm_forward(weights, x[start:start + PREDICT_CHUNK])
        total += float(np.sum((y - targets[start:start + PREDICT_CHUNK]) ** 2))
    return total / x.shape[0]


def cnn_lstm_train(windows: WindowSet, cfg: CnnLstmConfig, tcfg: TrainConfig) -> CnnLstmModel:
    """Mini-batch Adam on MSE with seeded shuffling.

    Input channels and targets are standardized with statistics of ``windows``.
    Raises DivergedLoss when a loss turns non-finite or exceeds
    ``tcfg.divergence_factor`` times the initial loss.
    """
    if len(windows) == 0:
        raise EmptyDataset("no training windows")
    if windows.channels != cfg.in_channels:
        raise ShapeMismatch(f"config expects {cfg.in_channels} channels, windows have {windows.channels}")

    input_mean = windows.tensors.mean(axis=(0, 2))
    input_std = _safe_std(np.transpose(windows.tensors, (1, 0, 2)).reshape(windows.channels, -1), axis=1)
    target_mean = float(np.mean(windows.targets))
    target_std = float(_safe_std(windows.targets))

    model = CnnLstmModel(
        weights=init_cnn_lstm(cfg),
        input_mean=input_mean,
        input_std=input_std,
        target_mean=target_mean,
        target_std=target_std,
    )
    x = model.standardize(windows.tensors)
    y = (windows.targets - target_mean) / target_std

    params = model.weights.as_dict()
    optimizer = Adam(params, tcfg)
    rng = np.random.default_rng(tcfg.seed)
    history = model.history
    history.losses.append(_full_loss(model.weights, x, y))
    ceiling = tcfg.divergence_factor * max(history.initial, MIN_STD)
    logger.debug(f"CNN-LSTM training on {len(windows)} windows, initial loss {history.initial:.4f}")

    def check(loss: float, epoch: int, step: int) -> None:
        if not np.isfinite(loss) or loss > ceiling:
            raise DivergedLoss(
                f"training diverged at epoch {epoch}, step {step} (loss {loss:.4g}, initial {history.initial:.4g})",
                epoch=epoch,
                step=step,
            )

    n = len(windows)
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(n)
        for step, start in enumerate(range(0, n, tcfg.batch_size)):
            batch = order[start:start + tcfg.batch_size]
            loss, grads = loss_and_grads(model.weights, x[batch], y[batch])
            check(loss, epoch, step)
            optimizer.step(params, grads)
        epoch_loss = _full_loss(model.weights, x, y)
        check(epoch_loss, epoch, -1)
        history.losses.append(epoch_loss)
        logger.debug(f"epoch {epoch}/{tcfg.epochs}: loss {epoch_loss:.5f}")
    return model
