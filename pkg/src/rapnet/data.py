"""Datasets, IDX files, key=value experiment configs and CSV output."""

import math
import struct
from dataclasses import dataclass, fields

import numpy as np

from ._rng import derive_int, derive_rng
from .network import parse_arch

__all__ = [
    "Dataset",
    "IdxError",
    "BadMagicError",
    "TruncatedError",
    "CountMismatchError",
    "ConfigError",
    "load_idx_pair",
    "write_idx_pair",
    "parse_idx_images",
    "parse_idx_labels",
    "subset",
    "disjoint_subsets",
    "synthetic_dataset",
    "ExperimentConfig",
    "load_config",
    "write_config",
    "write_results",
    "parse_grid",
    "parse_config",
    "experiment_datasets",
]

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {x.shape} and labels {y.shape} do not line up")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValueError("inputs must lie in [0, 1]")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def one_hot(self, num_classes=None):
        k = int(self.labels.max()) + 1 if num_classes is None else num_classes
        out = np.zeros((len(self), k))
        out[np.arange(len(self)), self.labels] = 1.0
        return out

    def take(self, index, name=None):
        return Dataset(self.inputs[index], self.labels[index], self.name if name is None else name)


def _header(buf, ndims, magic, what):
    if len(buf) < 4 * (1 + ndims):
        raise TruncatedError(f"{what}: header needs {4 * (1 + ndims)} bytes, got {len(buf)}")
    got = struct.unpack_from(">i", buf, 0)[0]
    if got != magic:
        raise BadMagicError(f"{what}: magic {got}, expected {magic}")
    return struct.unpack_from(f">{ndims}i", buf, 4)


def parse_idx_images(buf):
    count, rows, cols = _header(buf, 3, IMAGE_MAGIC, "images")
    need = 16 + count * rows * cols
    if len(buf) < need:
        raise TruncatedError(f"images: payload needs {need} bytes, got {len(buf)}")
    pixels = np.frombuffer(buf, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows * cols), (rows, cols)


def parse_idx_labels(buf):
    (count,) = _header(buf, 1, LABEL_MAGIC, "labels")
    if len(buf) < 8 + count:
        raise TruncatedError(f"labels: payload needs {8 + count} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)


def load_idx_pair(images_path, labels_path):
    """Read an IDX image/label file pair; pixels are scaled by 1/255."""
    with open(images_path, "rb") as fh:
        pixels, _ = parse_idx_images(fh.read())
    with open(labels_path, "rb") as fh:
        labels = parse_idx_labels(fh.read())
    if pixels.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{pixels.shape[0]} images but {labels.shape[0]} labels")
    return Dataset(pixels / 255.0, labels.astype(np.int64), str(images_path))


def write_idx_pair(dataset, images_path, labels_path, shape=None):
    """Write ``dataset`` as IDX; inputs are rounded to the nearest 1/255."""
    n, d = dataset.inputs.shape
    rows, cols = shape if shape is not None else (1, d)
    if rows * cols != d:
        raise ValueError(f"image shape {rows}x{cols} does not hold {d} pixels")
    pixels = np.rint(dataset.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4i", IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2i", LABEL_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def subset(dataset, count, seed=0):
    """Seeded uniform sample of ``count`` examples without replacement."""
    if not 0 <= count <= len(dataset):
        raise ValueError(f"cannot draw {count} of {len(dataset)} examples")
    idx = derive_rng(seed, "subset").permutation(len(dataset))[:count]
    return dataset.take(idx)


def disjoint_subsets(dataset, sizes, seed=0):
    """Non-overlapping seeded samples, e.g. ``sizes=(B1, B2)`` for train/test."""
    if sum(sizes) > len(dataset):
        raise ValueError(f"sizes {tuple(sizes)} exceed {len(dataset)} examples")
    perm = derive_rng(seed, "subset").permutation(len(dataset))
    out, start = [], 0
    for s in sizes:
        out.append(dataset.take(perm[start:start + s]))
        start += s
    return out


def synthetic_dataset(num_classes, dim, size, noise_std, seed=0, prototype_seed=None):
    """Noisy copies of random class prototypes, clamped to [0, 1].

    Prototypes are uniform in ``[0, 1]^dim`` and drawn from ``prototype_seed``
    (default ``seed``), so train and test sets that share a prototype seed
    describe the same task.  Labels cycle through the classes, which
    balances them exactly when ``size`` is a multiple of ``num_classes``.
    """
    if num_classes < 1 or dim < 1 or size < 1 or noise_std < 0:
        raise ValueError("synthetic_dataset needs positive sizes and noise_std >= 0")
    pseed = seed if prototype_seed is None else prototype_seed
    protos = derive_rng(pseed, "prototypes").random((num_classes, dim))
    rng = derive_rng(seed, "synthetic-examples")
    labels = rng.permutation(np.arange(size) % num_classes)
    x = protos[labels]
    if noise_std > 0:
        x = np.clip(x + noise_std * rng.standard_normal(x.shape), 0.0, 1.0)
    return Dataset(x, labels, f"synthetic(classes={num_classes}, dim={dim}, noise={noise_std}, seed={seed})")


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_schedule(s):
    """``"600:0.1,200:0.005,200:0.001"`` -> ``((600, 0.1), ...)`` (epochs:rate)."""
    out = []
    for part in s.split(","):
        n, r = part.split(":")
        out.append((int(n), float(r)))
    return tuple(out)


def _format_schedule(sched):
    return ",".join(f"{n}:{r!r}" for n, r in sched)


def _parse_layer_map(s):
    """``"3:0.5,2:0.9"`` -> ``{3: 0.5, 2: 0.9}``; empty string -> ``{}``."""
    out = {}
    for part in filter(None, (p.strip() for p in s.split(","))):
        l, v = part.split(":")
        out[int(l)] = float(v)
    return out


def _format_layer_map(d):
    return ",".join(f"{l}:{v!r}" for l, v in sorted(d.items()))


def _parse_layers(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Network experiment settings, read from ``key = value`` files.

    Keys (all optional; the defaults follow the 784-100-200-10 setup):

    ``arch``            layer widths, ``784-100-200-10``
    ``seed``            root seed for initialisation and training
    ``data_seed``       seed for subsets / synthetic data
    ``lr_schedule``     ``epochs:rate`` spans, comma separated
    ``batch_size``      minibatch size
    ``train_size``      B1, number of training examples
    ``test_size``       B2, number of test examples
    ``dropconnect``     ``layer:keep_prob`` pairs, comma separated
    ``fa_layers``       layers trained with random feedback, comma separated
    ``fa_bound``        feedback entries are uniform on [-u, u]
    ``inference_samples`` Gaussian samples for dropconnect prediction
    ``train_images`` / ``train_labels`` / ``test_images`` / ``test_labels``
                        IDX paths (test files default to the training pair)
    ``synthetic``       use synthetic data instead of IDX files
    ``synthetic_noise`` noise std of the synthetic data
    ``num_classes``     classes of the synthetic data
    """

    arch: str = "784-100-200-10"
    seed: int = 0
    data_seed: int = 0
    lr_schedule: tuple = ((50, 0.1),)
    batch_size: int = 10
    train_size: int = 2000
    test_size: int = 1000
    dropconnect: dict = None
    fa_layers: tuple = ()
    fa_bound: float = 0.5
    inference_samples: int = 100
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    synthetic: bool = False
    synthetic_noise: float = 1.75
    num_classes: int = 10

    def __post_init__(self):
        if self.dropconnect is None:
            object.__setattr__(self, "dropconnect", {})
        try:
            widths = parse_arch(self.arch)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        L = len(widths) - 1
        for l, p in self.dropconnect.items():
            if not 1 <= l <= L:
                raise ConfigError(f"dropconnect layer {l} outside 1..{L}")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"dropconnect probability {p} for layer {l} outside [0, 1]")
        for l in self.fa_layers:
            if not 2 <= l <= L:
                raise ConfigError(f"feedback-alignment layer {l} outside 2..{L}")
        if self.fa_bound <= 0:
            raise ConfigError(f"fa_bound must be positive, got {self.fa_bound}")
        for name in ("batch_size", "train_size", "test_size", "inference_samples", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.lr_schedule or any(n < 1 or r < 0 for n, r in self.lr_schedule):
            raise ConfigError("lr_schedule needs positive spans and non-negative rates")
        if self.synthetic_noise < 0:
            raise ConfigError("synthetic_noise must be >= 0")

    @property
    def widths(self):
        return parse_arch(self.arch)

    @property
    def epochs(self):
        return sum(n for n, _ in self.lr_schedule)


_PARSERS = {
    "arch": (str, str),
    "seed": (int, str),
    "data_seed": (int, str),
    "lr_schedule": (_parse_schedule, _format_schedule),
    "batch_size": (int, str),
    "train_size": (int, str),
    "test_size": (int, str),
    "dropconnect": (_parse_layer_map, _format_layer_map),
    "fa_layers": (_parse_layers, lambda t: ",".join(str(x) for x in t)),
    "fa_bound": (float, repr),
    "inference_samples": (int, str),
    "train_images": (str, str),
    "train_labels": (str, str),
    "test_images": (str, str),
    "test_labels": (str, str),
    "synthetic": (_parse_bool, lambda b: "true" if b else "false"),
    "synthetic_noise": (float, repr),
    "num_classes": (int, str),
}


def parse_config(text, overrides=None):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: cannot parse {key} = {value!r}: {exc}") from exc
    values.update(overrides or {})
    return ExperimentConfig(**values)


def load_config(path, overrides=None):
    with open(path) as fh:
        return parse_config(fh.read(), overrides)


def write_config(config, path):
    lines = [f"{f.name} = {_PARSERS[f.name][1](getattr(config, f.name))}" for f in fields(config)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_results(columns, rows, path):
    """CSV with a header row, '.' decimals, LF line endings, floats in repr form."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def parse_grid(text):
    """``"lo:hi:step"`` (endpoints inclusive within step/2) or a single number."""
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"grid must be lo:hi:step, got {text!r}")
    lo, hi, step = (float(x) for x in parts)
    if step <= 0 or hi < lo:
        raise ValueError(f"grid needs step > 0 and hi >= lo, got {text!r}")
    n = int(math.floor((hi - lo) / step + 0.5))
    return [round(lo + k * step, 12) for k in range(n + 1)]


def experiment_datasets(config):
    """Train and test sets described by ``config``.

    Synthetic sets share the prototype seed ``data_seed`` and use derived
    example seeds.  IDX data is subsampled to ``train_size`` / ``test_size``;
    without a separate test pair the two sets are disjoint draws from the
    training files.
    """
    widths = config.widths
    if config.synthetic:
        def make(size, tag):
            return synthetic_dataset(
                config.num_classes, widths[0], size, config.synthetic_noise,
                seed=derive_int(config.data_seed, tag), prototype_seed=config.data_seed,
            )
        train, test = make(config.train_size, "train"), make(config.test_size, "test")
    else:
        if not (config.train_images and config.train_labels):
            raise ConfigError("set train_images/train_labels or synthetic = true")
        full = load_idx_pair(config.train_images, config.train_labels)
        if config.test_images:
            test_full = load_idx_pair(config.test_images, config.test_labels)
            train = subset(full, config.train_size, config.data_seed)
            test = subset(test_full, config.test_size, derive_int(config.data_seed, "test"))
        else:
            train, test = disjoint_subsets(full, (config.train_size, config.test_size), config.data_seed)
    for ds in (train, test):
        if ds.dim != widths[0]:
            raise ConfigError(f"data dimension {ds.dim} does not match input width {widths[0]}")
        if len(ds) and ds.labels.max() >= widths[-1]:
            raise ConfigError(f"label {ds.labels.max()} does not fit {widths[-1]} output units")
    return train, test
