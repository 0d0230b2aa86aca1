"""Classifier and autoencoder architectures trained with a composite loss.

The composite objective is the primary loss (cross-entropy or binary
cross-entropy reconstruction) plus ``alpha`` times the soft nearest neighbor
loss summed over the network's tapped layers. ``alpha > 0`` disentangles the
tapped representations, ``alpha < 0`` entangles them, ``alpha = 0`` is the
plain baseline.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted

from . import nn
from ._validation import as_float_matrix, as_label_vector, check_positive_int
from .data import EmbeddedDataset
from .snnl import SNNLWarning, TemperatureSchedule, annealing_temperature, snnl

MODES = ("baseline", "all_hidden", "latent_partial")
CONV_CHANNELS = 128
CONV_KERNEL_WIDTH = 5
CONV_STRIDE = 1
# hidden activations can be exactly zero after ReLU; floor their norm
TAP_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 30
    alpha: float = 0.0
    schedule: TemperatureSchedule = TemperatureSchedule()
    mode: str = "all_hidden"
    latent_tap_width: int = 100
    seed: int = 42
    dtype: str = "float64"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class EpochRecord:
    epoch: int
    temperature: float
    primary_loss: float
    snnl: dict = field(default_factory=dict)
    train_accuracy: float = None

    def to_dict(self):
        out = asdict(self)
        if out["train_accuracy"] is None:
            del out["train_accuracy"]
        return out


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def temperatures(self):
        return [r.temperature for r in self.records]

    def snnl_series(self, name):
        return [r.snnl[name] for r in self.records]

    def to_jsonl(self):
        return "".join(
            json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records
        )

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read_jsonl(cls, path):
        with open(path) as fh:
            return cls([EpochRecord(**json.loads(line)) for line in fh if line.strip()])


def _rng(seed):
    return np.random.default_rng(seed)


def build_ffn_classifier(d, k, seed=42, hidden=(500, 500), dtype=np.float64):
    """Dense classifier: ReLU/Kaiming hidden layers, softmax/Xavier output."""
    check_positive_int(d, "d")
    check_positive_int(k, "k")
    rng = _rng(seed)
    layers, width = [], d
    for units in hidden:
        layers.append(nn.DenseLayer.create(width, units, "relu", "kaiming", rng, dtype))
        width = units
    layers.append(nn.DenseLayer.create(width, k, "softmax", "xavier", rng, dtype))
    taps = {f"hidden_{i}": (i, None) for i in range(len(hidden))}
    return nn.Network(layers, taps)


def build_cnn_classifier(d, k, seed=42, hidden=(2048, 1024, 512),
                         channels=CONV_CHANNELS, kernel_width=CONV_KERNEL_WIDTH,
                         stride=CONV_STRIDE, dtype=np.float64):
    """One ReLU conv layer over the embedding as a 1-channel signal, then dense layers."""
    check_positive_int(d, "d")
    check_positive_int(k, "k")
    if d < kernel_width:
        raise ValueError(f"input dimension {d} is smaller than kernel width {kernel_width}")
    rng = _rng(seed)
    conv = nn.Conv1dLayer.create(d, 1, channels, kernel_width, stride, "relu", rng, dtype)
    layers, width = [conv], conv.out_features
    for units in hidden:
        layers.append(nn.DenseLayer.create(width, units, "relu", "kaiming", rng, dtype))
        width = units
    layers.append(nn.DenseLayer.create(width, k, "softmax", "xavier", rng, dtype))
    taps = {"conv": (0, None)}
    taps.update({f"hidden_{i}": (i + 1, None) for i in range(len(hidden))})
    return nn.Network(layers, taps)


def build_autoencoder(d, z=128, seed=42, encoder_hidden=(500, 500, 2000), dtype=np.float64):
    """Mirrored autoencoder with logistic latent and output layers.

    ``taps`` lists every hidden layer and the latent layer; see
    :func:`autoencoder_taps` for the per-mode selection.
    """
    check_positive_int(d, "d")
    check_positive_int(z, "z")
    rng = _rng(seed)
    layers, width = [], d
    for units in encoder_hidden:
        layers.append(nn.DenseLayer.create(width, units, "relu", "kaiming", rng, dtype))
        width = units
    layers.append(nn.DenseLayer.create(width, z, "logistic", "xavier", rng, dtype))
    width = z
    for units in reversed(encoder_hidden):
        layers.append(nn.DenseLayer.create(width, units, "relu", "kaiming", rng, dtype))
        width = units
    layers.append(nn.DenseLayer.create(width, d, "logistic", "xavier", rng, dtype))
    depth = len(encoder_hidden) + 1
    taps = {f"encoder_{i}": (i, None) for i in range(len(encoder_hidden))}
    taps["latent"] = (depth - 1, None)
    taps.update({
        f"decoder_{i}": (depth + i, None) for i in range(len(encoder_hidden))
    })
    return nn.Network(layers, taps, encoder_depth=depth)


def autoencoder_taps(network, mode, latent_tap_width=100):
    if mode == "baseline":
        return {}
    if mode == "all_hidden":
        return dict(network.taps)
    if mode == "latent_partial":
        latent = network.encoder_depth - 1
        z = network.layers[latent].out_features
        if latent_tap_width > z:
            raise ValueError(f"latent_tap_width {latent_tap_width} exceeds latent size {z}")
        return {"latent": (latent, latent_tap_width)}
    raise ValueError(f"unknown mode {mode!r}")


def encode(network, X):
    """Latent codes of ``X`` (the encoder half of an autoencoder)."""
    if network.encoder_depth is None:
        raise ValueError("network is not an autoencoder")
    X = np.asarray(X, dtype=network.dtype)
    if X.shape[0] == 0:
        return np.zeros((0, network.layers[network.encoder_depth - 1].out_features))
    out, _ = nn.forward(network, X, stop=network.encoder_depth)
    return out


def _one_hot(y, k, dtype):
    out = np.zeros((y.shape[0], k), dtype=dtype)
    out[np.arange(y.shape[0]), y] = 1
    return out


def _fit(network, X, y, config, taps, classify):
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    dtype = network.dtype
    X = np.asarray(X, dtype=dtype)
    use_snnl = config.alpha != 0 and bool(taps)
    if classify:
        k = network.out_features
        targets = _one_hot(y, k, dtype)
    state = nn.AdamState.for_params(network.params, lr=config.lr)
    history = TrainHistory()
    for epoch in range(config.epochs):
        temperature = annealing_temperature(epoch, config.schedule)
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        primary_sum = 0.0
        correct = 0
        snnl_sum = {name: 0.0 for name in taps}
        snnl_count = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = X[idx]
            out, record = nn.forward(network, xb)
            if classify:
                tb = targets[idx]
                primary_sum += nn.cross_entropy(tb, out) * len(idx)
                correct += int((out.argmax(axis=1) == y[idx]).sum())
                delta = nn.cross_entropy_delta(tb, out)
            else:
                primary_sum += nn.binary_cross_entropy(xb, out) * len(idx)
                delta = nn.binary_cross_entropy_delta(xb, out)
            tap_grads = {}
            if use_snnl and len(idx) >= 2:
                yb = y[idx]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", SNNLWarning)
                    for name, (layer, width) in taps.items():
                        res = snnl(record.tap_output(layer, width), yb,
                                   temperature, norm_floor=TAP_NORM_FLOOR)
                        tap_grads[layer] = (config.alpha * res.grad).astype(dtype)
                        snnl_sum[name] += res.loss * len(idx)
                snnl_count += len(idx)
            grads = nn.backward(network, record, delta_output=delta, tap_grads=tap_grads)
            nn.adam_step(network.params, grads, state)
        history.records.append(EpochRecord(
            epoch=epoch,
            temperature=temperature,
            primary_loss=primary_sum / n,
            snnl={name: s / snnl_count for name, s in snnl_sum.items()} if snnl_count else {},
            train_accuracy=correct / n if classify else None,
        ))
    return history


def train_classifier(network, train, config):
    """Minimize cross-entropy + alpha * SNNL over the network's taps."""
    if train.n == 0:
        raise ValueError("cannot train on an empty dataset")
    y = as_label_vector(train.labels, train.n)
    if y.max() >= network.out_features:
        raise ValueError("labels exceed the number of output classes")
    if config.alpha != 0 and np.unique(y).size < 2:
        raise ValueError("SNNL training needs at least two classes")
    return _fit(network, train.features, y, config, network.taps, classify=True)


def train_autoencoder(network, train, config):
    """Minimize reconstruction BCE + alpha * SNNL over the mode's taps.

    Labels are read only when the mode taps a layer and ``alpha != 0``.
    """
    return _train_autoencoder(network, train.features, lambda: train.labels, config)


def _train_autoencoder(network, X, get_labels, config):
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if X.min() < 0 or X.max() > 1:
        raise ValueError("autoencoder features must be min-max scaled to [0, 1]")
    taps = autoencoder_taps(network, config.mode, config.latent_tap_width)
    y = None
    if taps and config.alpha != 0:
        labels = get_labels()
        if labels is None:
            raise ValueError(f"mode {config.mode!r} with alpha != 0 needs labels")
        y = as_label_vector(labels, X.shape[0])
        if np.unique(y).size < 2:
            raise ValueError("SNNL training needs at least two classes")
    else:
        taps = {}
    return _fit(network, X, y, config, taps, classify=False)


class _SNNLParams:
    def _config(self, alpha, mode="all_hidden"):
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            epochs=self._epochs(),
            alpha=alpha,
            schedule=TemperatureSchedule(self.eta, self.gamma),
            mode=mode,
            latent_tap_width=getattr(self, "latent_tap_width", 100),
            seed=self.random_state,
            dtype=self.dtype,
        )


class SNNLClassifier(_SNNLParams, ClassifierMixin, BaseEstimator):
    """Feed-forward or convolutional classifier trained with an SNNL regularizer.

    Parameters
    ----------
    arch : {"ffn", "cnn"}
    alpha : float
        SNNL weight; positive disentangles hidden layers, negative entangles.
    hidden : tuple of int or None
        Hidden widths; ``None`` means (500, 500) for "ffn" and
        (2048, 1024, 512) for "cnn".
    epochs : int or None
        ``None`` means 30 for "ffn" and 50 for "cnn".
    """

    def __init__(self, arch="ffn", alpha=100.0, hidden=None, lr=1e-3, batch_size=256,
                 epochs=None, eta=1.0, gamma=0.55, random_state=42, dtype="float64"):
        self.arch = arch
        self.alpha = alpha
        self.hidden = hidden
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.eta = eta
        self.gamma = gamma
        self.random_state = random_state
        self.dtype = dtype

    def _epochs(self):
        if self.epochs is not None:
            return self.epochs
        return 50 if self.arch == "cnn" else 30

    def fit(self, X, y):
        X = as_float_matrix(X)
        check_classification_targets(y)
        self.classes_, y_idx = np.unique(np.asarray(y), return_inverse=True)
        d, k = X.shape[1], self.classes_.size
        dtype = np.dtype(self.dtype)
        if self.arch == "ffn":
            hidden = (500, 500) if self.hidden is None else tuple(self.hidden)
            net = build_ffn_classifier(d, k, self.random_state, hidden, dtype)
        elif self.arch == "cnn":
            hidden = (2048, 1024, 512) if self.hidden is None else tuple(self.hidden)
            net = build_cnn_classifier(d, k, self.random_state, hidden, dtype=dtype)
        else:
            raise ValueError(f"arch must be 'ffn' or 'cnn', got {self.arch!r}")
        self.network_ = net
        self.history_ = train_classifier(
            net, EmbeddedDataset(X, y_idx.astype(np.int64)), self._config(self.alpha))
        self.n_features_in_ = d
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = as_float_matrix(X)
        out, _ = nn.forward(self.network_, X)
        return out.astype(np.float64)

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]


class SNNLAutoencoder(_SNNLParams, TransformerMixin, BaseEstimator):
    """Autoencoder whose latent codes can be disentangled with an SNNL term.

    ``transform`` returns latent codes. Inputs must already lie in [0, 1].
    """

    def __init__(self, mode="all_hidden", alpha=100.0, latent_dim=128,
                 latent_tap_width=100, encoder_hidden=(500, 500, 2000), lr=1e-3,
                 batch_size=256, epochs=30, eta=1.0, gamma=0.55, random_state=42,
                 dtype="float64"):
        self.mode = mode
        self.alpha = alpha
        self.latent_dim = latent_dim
        self.latent_tap_width = latent_tap_width
        self.encoder_hidden = encoder_hidden
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.eta = eta
        self.gamma = gamma
        self.random_state = random_state
        self.dtype = dtype

    def _epochs(self):
        return self.epochs

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        net = build_autoencoder(X.shape[1], self.latent_dim, self.random_state,
                                tuple(self.encoder_hidden), np.dtype(self.dtype))
        self.network_ = net
        self.history_ = _train_autoencoder(
            net, X, lambda: y, self._config(self.alpha, self.mode))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        return encode(self.network_, as_float_matrix(X, allow_empty=True)).astype(np.float64)

    def reconstruct(self, X):
        check_is_fitted(self, "network_")
        out, _ = nn.forward(self.network_, as_float_matrix(X))
        return out.astype(np.float64)
