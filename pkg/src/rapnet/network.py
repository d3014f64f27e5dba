"""Fully connected sigmoid/softmax networks trained by SGD on cross-entropy.

Layers are numbered 1..L as weight populations: ``weights[l - 1]`` is the
matrix ``W^l`` mapping layer ``l - 1`` to layer ``l``.  Each matrix carries
its bias as the last column, driven by a constant-1 input, so ``W^l`` has
shape ``(n_l, n_{l-1} + 1)``.  Every configuration object that names layers
(dropconnect, feedback alignment, dilution) uses the same 1-based numbers.

Arrays are batched along the first axis.  Gradients are those of the mean
loss over the batch.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_int, derive_rng

__all__ = [
    "Mlp",
    "FeedbackConfig",
    "DropconnectConfig",
    "DilutionConfig",
    "TrainConfig",
    "TrainingDiverged",
    "init_mlp",
    "parse_arch",
    "sigmoid",
    "softmax",
    "forward",
    "predict_proba",
    "cross_entropy",
    "backward",
    "make_feedback",
    "transpose_feedback",
    "gradient_check",
    "sample_masks",
    "mean_network",
    "train",
    "dilute",
    "test_error",
    "dilution_sweep",
    "PathStats",
    "path_product_histogram",
    "gaussian_inference",
    "save_mlp",
    "load_mlp",
]


class TrainingDiverged(ArithmeticError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class Mlp:
    weights: list

    @property
    def widths(self):
        return [self.weights[0].shape[1] - 1] + [w.shape[0] for w in self.weights]

    @property
    def num_layers(self):
        return len(self.weights)

    def copy(self):
        return Mlp([w.copy() for w in self.weights])


def parse_arch(spec):
    """``"784-100-200-10"`` -> ``[784, 100, 200, 10]``."""
    if isinstance(spec, str):
        widths = [int(x) for x in spec.strip().split("-")]
    else:
        widths = [int(x) for x in spec]
    if len(widths) < 2 or min(widths) < 1:
        raise ValueError(f"architecture needs >= 2 layers of width >= 1, got {spec!r}")
    return widths


def init_mlp(widths, seed=0):
    """Gaussian weights with std ``1/sqrt(fan_in)`` and zero biases."""
    widths = parse_arch(widths)
    weights = []
    for l, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        rng = derive_rng(seed, "init", l)
        w = np.zeros((n_out, n_in + 1))
        w[:, :-1] = rng.standard_normal((n_out, n_in)) / math.sqrt(n_in)
        weights.append(w)
    return Mlp(weights)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(a):
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _extend(a):
    return np.concatenate([a, np.ones(a.shape[:-1] + (1,))], axis=-1)


def _preactivation(w, a, mask):
    a_ext = _extend(a)
    if mask is None:
        return a_ext @ w.T
    if mask.ndim == 2:
        return a_ext @ (w * mask).T
    return np.einsum("bi,boi->bo", a_ext, w * mask)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def forward(mlp, inputs, masks=None):
    """All layer activations ``[v, f(W^1 v), ..., y]``.

    ``masks[l - 1]`` may be None, an ``(n_l, n_{l-1} + 1)`` matrix shared by
    the batch, or a per-example ``(B, n_l, n_{l-1} + 1)`` stack.
    """
    x, single = _as_batch(inputs)
    if x.shape[1] != mlp.widths[0]:
        raise ValueError(f"input width {x.shape[1]} does not match network input {mlp.widths[0]}")
    masks = masks or [None] * mlp.num_layers
    acts = [x]
    for l, w in enumerate(mlp.weights, start=1):
        u = _preactivation(w, acts[-1], masks[l - 1])
        acts.append(softmax(u) if l == mlp.num_layers else sigmoid(u))
    if single:
        return [a[0] for a in acts]
    return acts


def predict_proba(mlp, inputs):
    return forward(mlp, inputs)[-1]


def _targets(labels_or_onehot, num_classes):
    t = np.asarray(labels_or_onehot)
    if t.ndim == 2 or (t.ndim == 1 and t.dtype.kind == "f" and t.size == num_classes):
        return np.atleast_2d(t).astype(np.float64)
    t = np.atleast_1d(t).astype(np.int64)
    out = np.zeros((t.size, num_classes))
    out[np.arange(t.size), t] = 1.0
    return out


def cross_entropy(output, target):
    """``-ln y_true`` with the prediction clamped at 1e-30; mean over a batch."""
    y = np.atleast_2d(output)
    t = _targets(target, y.shape[1])
    losses = -np.log(np.maximum((y * t).sum(axis=1), 1e-30))
    return float(losses[0]) if np.ndim(output) == 1 else float(losses.mean())


@dataclass
class FeedbackConfig:
    """Fixed random feedback matrices keyed by layer number.

    ``matrices[l]`` has shape ``(n_{l-1}, n_l)`` and replaces the transpose
    of ``W^l`` (without its bias column) when the error is sent from layer
    ``l`` down to layer ``l - 1``.
    """

    matrices: dict = field(default_factory=dict)
    bound: float = 0.5


def make_feedback(mlp, layers=(3,), bound=0.5, seed=0):
    if bound <= 0:
        raise ValueError(f"feedback bound must be positive, got {bound}")
    mats = {}
    for l in layers:
        if not 2 <= l <= mlp.num_layers:
            raise ValueError(f"feedback alignment needs a layer in 2..{mlp.num_layers}, got {l}")
        n_out, n_in1 = mlp.weights[l - 1].shape
        mats[l] = derive_rng(seed, "feedback", l).uniform(-bound, bound, size=(n_in1 - 1, n_out))
    return FeedbackConfig(mats, bound)


def backward(mlp, activations, target, feedback=None, masks=None):
    """Gradients of the mean cross-entropy with respect to every ``W^l``.

    The output error is ``y - t``.  It travels down through ``W^l`` (masked
    when a mask is given) or, for layers listed in ``feedback``, through the
    fixed matrix ``B^l`` with no mask applied.  Weight gradients are always
    masked.
    """
    acts = [np.atleast_2d(a) for a in activations]
    if len(acts) != mlp.num_layers + 1:
        raise ValueError("activations do not match the network depth")
    B = acts[0].shape[0]
    t = _targets(target, acts[-1].shape[1])
    if t.shape != acts[-1].shape:
        raise ValueError(f"target shape {t.shape} does not match output {acts[-1].shape}")
    fb = feedback.matrices if feedback is not None else {}
    masks = masks or [None] * mlp.num_layers

    grads = [None] * mlp.num_layers
    delta = acts[-1] - t
    for l in range(mlp.num_layers, 0, -1):
        w, mask = mlp.weights[l - 1], masks[l - 1]
        a_ext = _extend(acts[l - 1])
        if mask is None or mask.ndim == 2:
            g = delta.T @ a_ext / B
            grads[l - 1] = g if mask is None else g * mask
        else:
            grads[l - 1] = np.einsum("bo,boi,bi->oi", delta, mask, a_ext) / B
        if l == 1:
            break
        if l in fb:
            err = delta @ fb[l].T
        elif mask is None:
            err = delta @ w[:, :-1]
        elif mask.ndim == 2:
            err = delta @ (w * mask)[:, :-1]
        else:
            err = np.einsum("bo,boi->bi", delta, (w * mask)[:, :, :-1])
        a = acts[l - 1]
        delta = err * a * (1.0 - a)
    return grads


def transpose_feedback(mlp, layers):
    """Feedback matrices equal to ``W^l`` transposed (bias dropped); FA then reduces to backprop."""
    return FeedbackConfig({l: mlp.weights[l - 1][:, :-1].T.copy() for l in layers}, bound=math.inf)


def gradient_check(mlp, inputs, target, masks=None, feedback=None, step=1e-5):
    """Largest per-layer relative error ``|g - g_fd| / (|g| + |g_fd|)`` (norms over
    the layer) between ``backward`` and central differences of the masked loss."""
    acts = forward(mlp, inputs, masks)
    grads = backward(mlp, acts, target, feedback, masks)
    worst = 0.0
    for l, w in enumerate(mlp.weights):
        fd = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            up = cross_entropy(forward(mlp, inputs, masks)[-1], target)
            w[idx] = orig - step
            down = cross_entropy(forward(mlp, inputs, masks)[-1], target)
            w[idx] = orig
            fd[idx] = (up - down) / (2 * step)
        denom = np.linalg.norm(grads[l]) + np.linalg.norm(fd)
        if denom > 0:
            worst = max(worst, float(np.linalg.norm(grads[l] - fd) / denom))
    return worst


@dataclass
class DropconnectConfig:
    """Keep probabilities per layer; layers absent from ``keep`` are unmasked."""

    keep: dict = field(default_factory=dict)

    def __post_init__(self):
        for l, p in self.keep.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"dropconnect probability for layer {l} must lie in [0, 1], got {p}")


def sample_masks(mlp, dropconnect, batch, rng):
    """Per-example binary masks; bias columns always kept, ``p = 1`` layers get None."""
    masks = [None] * mlp.num_layers
    if dropconnect is None:
        return masks
    for l, p in sorted(dropconnect.keep.items()):
        if p >= 1.0:
            continue
        n_out, n_in1 = mlp.weights[l - 1].shape
        m = np.ones((batch, n_out, n_in1))
        m[:, :, :-1] = rng.random((batch, n_out, n_in1 - 1)) < p
        masks[l - 1] = m
    return masks


def mean_network(mlp, dropconnect):
    """Deterministic surrogate with masked layers' weights scaled by ``p``."""
    out = mlp.copy()
    if dropconnect is not None:
        for l, p in dropconnect.keep.items():
            out.weights[l - 1][:, :-1] *= p
    return out


@dataclass
class TrainConfig:
    schedule: tuple = ((10, 0.1),)
    batch_size: int = 10
    seed: int = 0
    train_size: int = 2000
    test_size: int = 1000

    def __post_init__(self):
        self.schedule = tuple((int(n), float(r)) for n, r in self.schedule)
        if not self.schedule or any(n < 1 for n, _ in self.schedule):
            raise ValueError("schedule spans must be positive epoch counts")
        if any(r < 0 or not math.isfinite(r) for _, r in self.schedule):
            raise ValueError("learning rates must be finite and non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def epochs(self):
        return sum(n for n, _ in self.schedule)

    def rate(self, epoch):
        """Learning rate of 0-based ``epoch``."""
        for n, r in self.schedule:
            if epoch < n:
                return r
            epoch -= n
        raise IndexError("epoch beyond schedule")


def train(mlp, train_set, config, dropconnect=None, feedback=None, test_set=None):
    """Minibatch SGD; returns ``(trained_mlp, curve)``.

    ``curve`` holds ``(epoch, train_loss, test_error)`` per epoch, where
    ``train_loss`` is the mean minibatch loss seen during the epoch and
    ``test_error`` is measured on the mean-scaled network (NaN without a
    test set).  The input network is not modified.
    """
    X, y = train_set.inputs, train_set.labels
    if len(y) == 0:
        raise ValueError("training set is empty")
    net = mlp.copy()
    shuffle_rng = derive_rng(config.seed, "shuffle")
    mask_rng = derive_rng(config.seed, "dropconnect")
    curve = []
    for epoch in range(config.epochs):
        lr = config.rate(epoch)
        order = shuffle_rng.permutation(len(y))
        losses = []
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            masks = sample_masks(net, dropconnect, len(idx), mask_rng)
            acts = forward(net, X[idx], masks)
            loss = cross_entropy(acts[-1], y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}, batch offset {start}")
            losses.append(loss * len(idx))
            grads = backward(net, acts, y[idx], feedback, masks)
            for w, g in zip(net.weights, grads):
                w -= lr * g
        train_loss = math.fsum(losses) / len(y)
        err = test_error(mean_network(net, dropconnect), test_set) if test_set is not None else math.nan
        curve.append((epoch + 1, train_loss, err))
    return net, curve


@dataclass
class DilutionConfig:
    probs: tuple
    seed: int = 0

    def __post_init__(self):
        self.probs = tuple(float(p) for p in self.probs)
        if any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ValueError(f"dilution probabilities must lie in [0, 1], got {self.probs}")


def dilute(mlp, config):
    """Copy of ``mlp`` with each non-bias weight of layer ``l`` removed w.p. ``probs[l-1]``."""
    if len(config.probs) != mlp.num_layers:
        raise ValueError(f"need {mlp.num_layers} dilution probabilities, got {len(config.probs)}")
    out = mlp.copy()
    for l, p in enumerate(config.probs, start=1):
        if p == 0.0:
            continue
        w = out.weights[l - 1]
        removed = derive_rng(config.seed, "dilute", l).random(w[:, :-1].shape) < p
        w[:, :-1][removed] = 0.0
    return out


def test_error(mlp, dataset, proba=None):
    """Fraction misclassified; argmax ties go to the lowest class index."""
    if len(dataset.labels) == 0:
        raise ValueError("dataset is empty")
    if proba is None:
        proba = predict_proba(mlp, dataset.inputs)
    return float(np.mean(np.argmax(proba, axis=1) != dataset.labels))


test_error.__test__ = False


def dilution_sweep(mlp, grid, replicates, dataset, seed=0):
    """Mean and standard error of the test error over independent dilutions.

    Returns rows ``(*probs, err_mean, err_stderr, replicates)``.
    """
    rows = []
    for g, probs in enumerate(grid):
        errs = [
            test_error(dilute(mlp, DilutionConfig(probs, derive_int(seed, "sweep", g, r))), dataset)
            for r in range(replicates)
        ]
        stderr = float(np.std(errs, ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
        rows.append((*(float(p) for p in probs), float(np.mean(errs)), stderr, replicates))
    return rows


@dataclass
class PathStats:
    products: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    sign_balance: float

    def central_fraction(self, width=0.1):
        """Share of products within a window of ``width`` times the observed
        range, centred at zero."""
        span = self.products.max() - self.products.min()
        return float(np.mean(np.abs(self.products) <= 0.5 * width * span))

    def table(self):
        return [(lo, hi, int(c)) for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)]


def path_product_histogram(mlp, num_paths, num_bins=50, seed=0):
    """Weight products along uniformly random input-to-output paths."""
    rng = derive_rng(seed, "paths")
    units = [rng.integers(0, n, size=num_paths) for n in mlp.widths]
    prod = np.ones(num_paths)
    for l, w in enumerate(mlp.weights, start=1):
        prod *= w[units[l], units[l - 1]]
    counts, edges = np.histogram(prod, bins=num_bins)
    return PathStats(prod, edges, counts, float(np.mean(prod > 0)))


def gaussian_inference(mlp, inputs, dropconnect, num_samples=100, seed=0, chunk=256):
    """Model-averaged class probabilities for a dropconnect-trained network.

    At the single dropconnect layer the pre-activation of each unit is drawn
    from a Gaussian with mean ``p W a + b`` and variance
    ``p (1 - p) (W*W)(a*a)`` (bias excluded from both the scaling and the
    variance); the rest of the network runs deterministically and the
    softmax outputs of the samples are averaged.
    """
    if dropconnect is None or len(dropconnect.keep) != 1:
        raise ValueError("Gaussian inference needs exactly one dropconnect layer")
    (layer, p), = dropconnect.keep.items()
    x, single = _as_batch(inputs)
    rng = derive_rng(seed, "gaussian-inference")
    L = mlp.num_layers
    out = np.empty((x.shape[0], mlp.widths[-1]))
    for start in range(0, x.shape[0], chunk):
        a = x[start:start + chunk]
        for l in range(1, layer):
            a = sigmoid(_preactivation(mlp.weights[l - 1], a, None))
        w = mlp.weights[layer - 1]
        ww, b = w[:, :-1], w[:, -1]
        mean = p * (a @ ww.T) + b
        std = np.sqrt(p * (1.0 - p) * ((a * a) @ (ww * ww).T))
        # example-major draw keeps the noise stream independent of ``chunk``
        z = rng.standard_normal((mean.shape[0], num_samples, mean.shape[1])).transpose(1, 0, 2)
        u = mean + std * z
        h = softmax(u) if layer == L else sigmoid(u)
        for l in range(layer + 1, L + 1):
            z = _preactivation(mlp.weights[l - 1], h, None)
            h = softmax(z) if l == L else sigmoid(z)
        out[start:start + chunk] = h.mean(axis=0)
    return out[0] if single else out


_MAGIC = b"RAPNET-MLP v1\n"


def save_mlp(mlp, path):
    """Binary checkpoint: magic line, JSON header line, little-endian float64 payload."""
    header = json.dumps({"widths": mlp.widths, "dtype": "<f8"}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header + b"\n")
        for w in mlp.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise CheckpointError(f"{path!r} is not a network checkpoint")
        try:
            header = json.loads(fh.readline())
            widths = parse_arch(header["widths"])
        except (ValueError, KeyError) as exc:
            raise CheckpointError(f"corrupt checkpoint header in {path!r}") from exc
        weights = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            count = n_out * (n_in + 1)
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CheckpointError(f"truncated checkpoint {path!r}")
            weights.append(np.frombuffer(buf, dtype="<f8").reshape(n_out, n_in + 1).astype(np.float64))
        if fh.read(1):
            raise CheckpointError(f"trailing bytes in checkpoint {path!r}")
    return Mlp(weights)
