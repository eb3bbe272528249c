"""Dual-branch convolutional classifier for fixed-length breath windows.

The 2-D branch convolves each variable separately in time (preserving the
variable axis), the 1-D branch convolves both variables jointly; their
single-channel projections are concatenated along the variable axis and
fused by a final time convolution, global average pooling, and a dense
softmax head. All convolutions are stride-1 same-padding, so every feature
map keeps the input's time length and explanation heatmaps align with the
input without upsampling.
"""
from __future__ import annotations

import io as _io
import json
import struct
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .io import BreathClass, N_CLASSES, SplitDataset
from .nn import CacheMismatch, ShapeMismatch
from .nn import layers as L
from .nn.optim import Adam, AdamHyper
from .segmentation import (
    DEFAULT_WINDOW_SAMPLES,
    N_VARIABLES,
    BreathSegment,
    SampleWindow,
    fixed_length,
)

# 344 ms of data at 125 Hz
DEFAULT_KERNEL_SAMPLES = 43

MODEL_MAGIC = b"XCM1"
MODEL_VERSION = 1


class InvalidConfig(Exception):
    pass


class EmptyDataset(Exception):
    pass


class MissingClassWarning(UserWarning):
    pass


class ModelFileError(Exception):
    pass


class BadMagic(ModelFileError):
    pass


class VersionMismatch(ModelFileError):
    pass


class TruncatedFile(ModelFileError):
    pass


@dataclass(frozen=True)
class XcmConfig:
    n_variables: int = N_VARIABLES
    window_samples: int = DEFAULT_WINDOW_SAMPLES
    kernel_samples: int = DEFAULT_KERNEL_SAMPLES
    filters_2d: int = 16
    filters_1d: int = 16
    filters_final: int = 32
    n_classes: int = N_CLASSES
    batch_size: int = 32
    epochs: int = 100
    folds: int = 5
    seed: int = 0
    lr: float = 1e-3
    class_weighting: bool = False

    def __post_init__(self):
        if self.kernel_samples % 2 == 0:
            raise InvalidConfig(f"kernel_samples must be odd, got {self.kernel_samples}")
        if self.kernel_samples > self.window_samples:
            raise InvalidConfig("kernel_samples must not exceed window_samples")
        if self.n_classes != N_CLASSES:
            raise InvalidConfig(f"n_classes must be {N_CLASSES}")
        if min(self.n_variables, self.window_samples, self.filters_2d, self.filters_1d,
               self.filters_final, self.batch_size, self.folds) < 1:
            raise InvalidConfig("all size parameters must be positive")
        if self.epochs < 0 or self.lr <= 0:
            raise InvalidConfig("epochs must be >= 0 and lr positive")


@dataclass(frozen=True)
class Classification:
    label: BreathClass
    confidence: float
    distribution: np.ndarray  # (n_classes,)


@dataclass
class ForwardCache:
    """Activations retained for backprop and for the two explanation layers."""

    model_id: int
    train: bool
    x: np.ndarray  # (N, D, T)
    b2_conv_in: np.ndarray  # (N, 1, D, T)
    b2_bn_cache: L.BatchNormCache
    b2_norm: np.ndarray  # (N, F2, D, T) pre-ReLU
    b2_act: np.ndarray  # (N, F2, D, T) post-ReLU: variable-wise explanation layer
    b2_squeeze_pre: np.ndarray  # (N, 1, D, T)
    b2_squeeze_act: np.ndarray  # (N, 1, D, T)
    b1_bn_cache: L.BatchNormCache
    b1_norm: np.ndarray  # (N, F1, T) pre-ReLU
    b1_act: np.ndarray  # (N, F1, T)
    b1_squeeze_pre: np.ndarray  # (N, 1, T)
    b1_squeeze_act: np.ndarray  # (N, 1, T)
    concat: np.ndarray  # (N, D+1, T)
    trunk_bn_cache: L.BatchNormCache
    trunk_norm: np.ndarray  # (N, Ff, T) pre-ReLU
    trunk_act: np.ndarray  # (N, Ff, T) post-ReLU: combined explanation layer
    pooled: np.ndarray  # (N, Ff)
    logits: np.ndarray  # (N, n_classes)

    def relu_preactivations(self) -> list[np.ndarray]:
        """Inputs of every ReLU, in forward order."""
        return [self.b2_norm, self.b2_squeeze_pre, self.b1_norm,
                self.b1_squeeze_pre, self.trunk_norm]


class XcmModel:
    """Parameters plus architecture configuration of the dual-branch CNN."""

    def __init__(self, config: XcmConfig, seed: Optional[int] = None):
        self.config = config
        rng = np.random.default_rng(config.seed if seed is None else seed)
        k = config.kernel_samples
        # the 1x1 projections carry a small positive bias so branches whose
        # filters all start ReLU-dead at a position still pass gradient
        self.b2_conv = L.Conv1dParams.init(rng, 1, config.filters_2d, k)
        self.b2_bn = L.BatchNormParams.init(config.filters_2d)
        self.b2_squeeze = L.Conv1dParams.init(rng, config.filters_2d, 1, 1, bias_fill=0.05)
        self.b1_conv = L.Conv1dParams.init(rng, config.n_variables, config.filters_1d, k)
        self.b1_bn = L.BatchNormParams.init(config.filters_1d)
        self.b1_squeeze = L.Conv1dParams.init(rng, config.filters_1d, 1, 1, bias_fill=0.05)
        self.trunk_conv = L.Conv1dParams.init(
            rng, config.n_variables + 1, config.filters_final, k
        )
        self.trunk_bn = L.BatchNormParams.init(config.filters_final)
        self.head = L.DenseParams.init(rng, config.filters_final, config.n_classes)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable parameters, in a fixed order."""
        return {
            "b2_conv.weights": self.b2_conv.weights,
            "b2_conv.bias": self.b2_conv.bias,
            "b2_bn.gamma": self.b2_bn.gamma,
            "b2_bn.beta": self.b2_bn.beta,
            "b2_squeeze.weights": self.b2_squeeze.weights,
            "b2_squeeze.bias": self.b2_squeeze.bias,
            "b1_conv.weights": self.b1_conv.weights,
            "b1_conv.bias": self.b1_conv.bias,
            "b1_bn.gamma": self.b1_bn.gamma,
            "b1_bn.beta": self.b1_bn.beta,
            "b1_squeeze.weights": self.b1_squeeze.weights,
            "b1_squeeze.bias": self.b1_squeeze.bias,
            "trunk_conv.weights": self.trunk_conv.weights,
            "trunk_conv.bias": self.trunk_conv.bias,
            "trunk_bn.gamma": self.trunk_bn.gamma,
            "trunk_bn.beta": self.trunk_bn.beta,
            "head.weights": self.head.weights,
            "head.bias": self.head.bias,
        }

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state (batch-norm running statistics)."""
        return {
            "b2_bn.running_mean": self.b2_bn.running_mean,
            "b2_bn.running_var": self.b2_bn.running_var,
            "b1_bn.running_mean": self.b1_bn.running_mean,
            "b1_bn.running_var": self.b1_bn.running_var,
            "trunk_bn.running_mean": self.trunk_bn.running_mean,
            "trunk_bn.running_var": self.trunk_bn.running_var,
        }


def build_model(config: XcmConfig, seed: Optional[int] = None) -> XcmModel:
    """Deterministic He-uniform initialization from the seed."""
    return XcmModel(config, seed=seed)


def _check_input(model: XcmModel, x: np.ndarray) -> None:
    cfg = model.config
    if x.ndim != 3 or x.shape[1:] != (cfg.n_variables, cfg.window_samples):
        raise ShapeMismatch(
            f"expected (N, {cfg.n_variables}, {cfg.window_samples}) input, got {x.shape}"
        )


def forward_batch(
    model: XcmModel, x: np.ndarray, train: bool = False, update_running: bool = True
) -> ForwardCache:
    """Full forward pass over a batch, retaining every activation needed for
    backprop and explanation."""
    _check_input(model, x)
    x = np.ascontiguousarray(x, dtype=np.float64)
    x4 = x[:, None, :, :]  # (N, 1, D, T)

    b2_pre = L.conv2d_forward(x4, model.b2_conv)
    b2_norm, b2_bn_cache = L.batchnorm_forward(
        b2_pre, model.b2_bn, train, update_running=update_running
    )
    b2_act = L.relu(b2_norm)
    b2_squeeze_pre = L.conv2d_forward(b2_act, model.b2_squeeze)  # (N,1,D,T)
    b2_squeeze_act = L.relu(b2_squeeze_pre)

    b1_pre = L.conv1d_forward(x, model.b1_conv)
    b1_norm, b1_bn_cache = L.batchnorm_forward(
        b1_pre, model.b1_bn, train, update_running=update_running
    )
    b1_act = L.relu(b1_norm)
    b1_squeeze_pre = L.conv1d_forward(b1_act, model.b1_squeeze)  # (N,1,T)
    b1_squeeze_act = L.relu(b1_squeeze_pre)

    # variable axis: D per-variable rows from the 2-D branch, then the joint row
    concat = np.concatenate([b2_squeeze_act[:, 0, :, :], b1_squeeze_act], axis=1)

    trunk_pre = L.conv1d_forward(concat, model.trunk_conv)
    trunk_norm, trunk_bn_cache = L.batchnorm_forward(
        trunk_pre, model.trunk_bn, train, update_running=update_running
    )
    trunk_act = L.relu(trunk_norm)
    pooled = L.global_avg_pool(trunk_act)
    logits = L.dense_forward(pooled, model.head)


    return ForwardCache(
        model_id=id(model),
        train=train,
        x=x,
        b2_conv_in=x4,
        b2_bn_cache=b2_bn_cache,
        b2_norm=b2_norm,
        b2_act=b2_act,
        b2_squeeze_pre=b2_squeeze_pre,
        b2_squeeze_act=b2_squeeze_act,
        b1_bn_cache=b1_bn_cache,
        b1_norm=b1_norm,
        b1_act=b1_act,
        b1_squeeze_pre=b1_squeeze_pre,
        b1_squeeze_act=b1_squeeze_act,
        concat=concat,
        trunk_bn_cache=trunk_bn_cache,
        trunk_norm=trunk_norm,
        trunk_act=trunk_act,
        pooled=pooled,
        logits=logits,
    )


def backward_batch(
    model: XcmModel, cache: ForwardCache, grad_logits: np.ndarray
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Exact reverse-mode gradients.

    Returns (parameter gradients, activation gradients); the latter carries
    d(objective)/d(activation) for the two explanation layers and the input.
    """
    if cache.model_id != id(model):
        raise CacheMismatch("cache was produced by a different model")
    if grad_logits.shape != cache.logits.shape:
        raise CacheMismatch(
            f"grad_logits shape {grad_logits.shape} != logits {cache.logits.shape}"
        )
    grads: dict[str, np.ndarray] = {}

    g_pooled, grads["head.weights"], grads["head.bias"] = L.dense_backward(
        cache.pooled, model.head, grad_logits
    )
    g_trunk_act = L.global_avg_pool_backward(cache.trunk_act.shape, g_pooled)
    g_trunk_norm = L.relu_backward(cache.trunk_act, g_trunk_act)
    g_trunk_pre, grads["trunk_bn.gamma"], grads["trunk_bn.beta"] = L.batchnorm_backward(
        cache.trunk_bn_cache, model.trunk_bn, g_trunk_norm
    )
    g_concat, grads["trunk_conv.weights"], grads["trunk_conv.bias"] = L.conv1d_backward(
        cache.concat, model.trunk_conv, g_trunk_pre
    )

    n_vars = model.config.n_variables
    g_b2_squeeze_act = g_concat[:, None, :n_vars, :]  # (N,1,D,T)
    g_b1_squeeze_act = g_concat[:, n_vars : n_vars + 1, :]  # (N,1,T)

    g_b2_squeeze_pre = L.relu_backward(cache.b2_squeeze_act, g_b2_squeeze_act)
    g_b2_act, grads["b2_squeeze.weights"], grads["b2_squeeze.bias"] = L.conv2d_backward(
        cache.b2_act, model.b2_squeeze, g_b2_squeeze_pre
    )
    g_b2_norm = L.relu_backward(cache.b2_act, g_b2_act)
    g_b2_pre, grads["b2_bn.gamma"], grads["b2_bn.beta"] = L.batchnorm_backward(
        cache.b2_bn_cache, model.b2_bn, g_b2_norm
    )
    g_x4, grads["b2_conv.weights"], grads["b2_conv.bias"] = L.conv2d_backward(
        cache.b2_conv_in, model.b2_conv, g_b2_pre
    )

    g_b1_squeeze_pre = L.relu_backward(cache.b1_squeeze_act, g_b1_squeeze_act)
    g_b1_act, grads["b1_squeeze.weights"], grads["b1_squeeze.bias"] = L.conv1d_backward(
        cache.b1_act, model.b1_squeeze, g_b1_squeeze_pre
    )
    g_b1_norm = L.relu_backward(cache.b1_act, g_b1_act)
    g_b1_pre, grads["b1_bn.gamma"], grads["b1_bn.beta"] = L.batchnorm_backward(
        cache.b1_bn_cache, model.b1_bn, g_b1_norm
    )
    g_x_b1, grads["b1_conv.weights"], grads["b1_conv.bias"] = L.conv1d_backward(
        cache.x, model.b1_conv, g_b1_pre
    )

    activation_grads = {
        "b2_act": g_b2_act,
        "trunk_act": g_trunk_act,
        "input": g_x4[:, 0, :, :] + g_x_b1,
    }
    return grads, activation_grads


def _classification_from_probs(probs: np.ndarray) -> Classification:
    label = int(np.argmax(probs))  # ties resolve to the lowest class index
    return Classification(
        label=BreathClass(label),
        confidence=float(probs[label]),
        distribution=probs,
    )


def forward_with_cache(
    model: XcmModel, window: SampleWindow | np.ndarray
) -> tuple[Classification, ForwardCache]:
    """Classify one window (inference mode), retaining the explanation cache."""
    values = window.values if isinstance(window, SampleWindow) else np.asarray(window)
    if values.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D (D, T) window, got shape {values.shape}")
    cache = forward_batch(model, values[None, :, :], train=False)
    probs = L.softmax(cache.logits[0])
    return _classification_from_probs(probs), cache


def classify(model: XcmModel, window: SampleWindow | np.ndarray) -> Classification:
    classification, _ = forward_with_cache(model, window)
    return classification


def classify_batch(model: XcmModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels and probabilities for a stack of windows (inference mode)."""
    cache = forward_batch(model, x, train=False)
    probs = L.softmax(cache.logits)
    return np.argmax(probs, axis=1), probs


@dataclass
class TrainReport:
    config: XcmConfig
    fold_loss_histories: list[list[float]] = field(default_factory=list)
    fold_val_accuracies: list[float] = field(default_factory=list)
    fold_best_epochs: list[int] = field(default_factory=list)
    selected_fold: Optional[int] = None
    final_epochs: int = 0
    final_loss_history: list[float] = field(default_factory=list)
    validation_accuracy: Optional[float] = None
    missing_classes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = asdict(self)
        payload["config"] = asdict(self.config)
        return json.dumps(payload, indent=2)


def windows_from_segments(
    segments: list[BreathSegment], window_samples: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack labeled segments as (X, y) network inputs."""
    xs = np.empty((len(segments), N_VARIABLES, window_samples))
    ys = np.empty(len(segments), dtype=np.int64)
    for i, seg in enumerate(segments):
        if seg.label is None:
            raise EmptyDataset("training segments must be labeled")
        xs[i] = fixed_length(seg, window_samples).values
        ys[i] = int(seg.label)
    return xs, ys


def _epoch_order(seed: int, fold: int, epoch: int, n: int) -> np.ndarray:
    # independent, reproducible shuffle stream per (seed, fold, epoch)
    return np.random.default_rng([seed, fold, epoch]).permutation(n)


def _run_epochs(
    model: XcmModel,
    x: np.ndarray,
    y: np.ndarray,
    config: XcmConfig,
    n_epochs: int,
    fold_tag: int,
    class_weights: Optional[np.ndarray],
    held_x: Optional[np.ndarray] = None,
    held_y: Optional[np.ndarray] = None,
) -> tuple[list[float], list[float]]:
    """Train in place; returns (per-epoch mean loss, per-epoch held accuracy)."""
    optimizer = Adam(hyper=AdamHyper(lr=config.lr))
    params = model.parameters()
    losses: list[float] = []
    held_acc: list[float] = []
    for epoch in range(n_epochs):
        order = _epoch_order(config.seed, fold_tag, epoch, len(x))
        total_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            cache = forward_batch(model, x[batch], train=True)
            loss, _, grad_logits = L.softmax_cross_entropy_batch(
                cache.logits, y[batch], class_weights
            )
            grads, _ = backward_batch(model, cache, grad_logits)
            optimizer.step(params, grads)
            total_loss += loss * len(batch)
        losses.append(total_loss / len(order))
        if held_x is not None and held_y is not None:
            pred, _ = classify_batch(model, held_x)
            held_acc.append(float(np.mean(pred == held_y)))
    return losses, held_acc


def train(dataset: SplitDataset, config: XcmConfig) -> tuple[XcmModel, TrainReport]:
    """K-fold cross-validation over the train partition, then a final model
    retrained on all training windows for the best fold's epoch count and
    scored on the validation partition. Deterministic for a fixed seed."""
    if not dataset.train:
        raise EmptyDataset("train partition is empty")
    x, y = windows_from_segments(dataset.train, config.window_samples)
    report = TrainReport(config=config)

    present = set(int(v) for v in np.unique(y))
    missing = [c.label for c in BreathClass if int(c) not in present]
    if missing:
        report.missing_classes = missing
        warnings.warn(
            f"classes missing from training data: {', '.join(missing)}",
            MissingClassWarning,
        )

    class_weights = None
    if config.class_weighting:
        counts = np.bincount(y, minlength=config.n_classes).astype(np.float64)
        class_weights = len(y) / (config.n_classes * np.maximum(counts, 1.0))

    if config.epochs == 0:
        model = build_model(config)
        if dataset.validation:
            vx, vy = windows_from_segments(dataset.validation, config.window_samples)
            pred, _ = classify_batch(model, vx)
            report.validation_accuracy = float(np.mean(pred == vy))
        return model, report

    n_folds = min(config.folds, len(x))
    if n_folds < 2:
        # too few windows to hold anything out; train directly
        model = build_model(config)
        report.final_epochs = config.epochs
        report.final_loss_history, _ = _run_epochs(
            model, x, y, config, config.epochs, fold_tag=0,
            class_weights=class_weights,
        )
        if dataset.validation:
            vx, vy = windows_from_segments(dataset.validation, config.window_samples)
            pred, _ = classify_batch(model, vx)
            report.validation_accuracy = float(np.mean(pred == vy))
        return model, report

    fold_of = np.random.default_rng([config.seed, 0xF01D]).permutation(len(x)) % n_folds
    for fold in range(n_folds):
        held = fold_of == fold
        fold_model = build_model(config, seed=config.seed + fold + 1)
        losses, held_acc = _run_epochs(
            fold_model,
            x[~held],
            y[~held],
            config,
            config.epochs,
            fold_tag=fold + 1,
            class_weights=class_weights,
            held_x=x[held],
            held_y=y[held],
        )
        best_epoch = int(np.argmax(held_acc))  # ties -> earliest epoch
        report.fold_loss_histories.append(losses)
        report.fold_val_accuracies.append(held_acc[best_epoch])
        report.fold_best_epochs.append(best_epoch)

    best = np.asarray(report.fold_val_accuracies)
    report.selected_fold = int(np.argmax(best))  # ties -> lowest fold index
    report.final_epochs = report.fold_best_epochs[report.selected_fold] + 1

    # the selected fold's settings carry over: its epoch count and its init
    model = build_model(config, seed=config.seed + report.selected_fold + 1)
    final_losses, _ = _run_epochs(
        model, x, y, config, report.final_epochs, fold_tag=0,
        class_weights=class_weights,
    )
    report.final_loss_history = final_losses

    if dataset.validation:
        vx, vy = windows_from_segments(dataset.validation, config.window_samples)
        pred, _ = classify_batch(model, vx)
        report.validation_accuracy = float(np.mean(pred == vy))
    return model, report


def _tensor_entries(model: XcmModel) -> dict[str, np.ndarray]:
    entries = dict(model.parameters())
    entries.update(model.buffers())
    return entries


def save_model(model: XcmModel, path) -> None:
    """Binary format: magic, version byte, JSON config block, then tensors as
    little-endian float32 with shape headers. Bit-exact across round-trips."""
    buf = _io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<B", MODEL_VERSION))
    config_blob = json.dumps(asdict(model.config), sort_keys=True).encode()
    buf.write(struct.pack("<I", len(config_blob)))
    buf.write(config_blob)
    entries = _tensor_entries(model)
    buf.write(struct.pack("<H", len(entries)))
    for name, tensor in entries.items():
        name_b = name.encode()
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", tensor.ndim))
        buf.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        buf.write(tensor.astype("<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise TruncatedFile(f"{self.path}: file ends mid-record")
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path) -> XcmModel:
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise BadMagic(f"{path}: not a model file")
    (version,) = reader.unpack("<B")
    if version != MODEL_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {MODEL_VERSION}")
    (config_len,) = reader.unpack("<I")
    config = XcmConfig(**json.loads(reader.take(config_len)))
    model = XcmModel(config)
    entries = _tensor_entries(model)
    (n_tensors,) = reader.unpack("<H")
    if n_tensors != len(entries):
        raise TruncatedFile(f"{path}: expected {len(entries)} tensors, header says {n_tensors}")
    for _ in range(n_tensors):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode()
        if name not in entries:
            raise ModelFileError(f"{path}: unknown tensor {name!r}")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        target = entries[name]
        if shape != target.shape:
            raise ModelFileError(f"{path}: tensor {name} has shape {shape}, expected {target.shape}")
        data = np.frombuffer(reader.take(4 * int(np.prod(shape))), dtype="<f4")
        target[...] = data.reshape(shape).astype(np.float64)
    return model
