"""Dataset files, weight bundles, and result tables.

Image datasets use the classic IDX container (big-endian dims, uint8
payload) and the CIFAR-10 binary batch layout (3073-byte records, label
byte followed by channel-planar pixels). Trained networks are stored as a
bundle directory: a JSON manifest describing the topology plus one raw
little-endian float32 blob per tensor, so round trips are bit-exact.
"""

from __future__ import annotations

import gzip
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .network import NetworkSpec, layer_from_dict, layer_to_dict
from .xbar import ClipSpec

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801

MNIST_FILES = {
    "x_train": "train-images-idx3-ubyte",
    "y_train": "train-labels-idx1-ubyte",
    "x_test": "t10k-images-idx3-ubyte",
    "y_test": "t10k-labels-idx1-ubyte",
}

CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILES = ["test_batch.bin"]
_CIFAR_RECORD = 3073  # 1 label byte + 32*32*3 channel-planar pixels


def _read_bytes(path):
    p = Path(path)
    if p.exists():
        return p.read_bytes()
    gz = Path(str(path) + ".gz")
    if gz.exists():
        with gzip.open(gz, "rb") as f:
            return f.read()
    raise FormatError(f"no such file: {path}")


def load_idx(path) -> np.ndarray:
    """Parse an IDX file (optionally gzipped) into a uint8 array."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for magic ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    zeros, dtype_code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zeros != 0 or dtype_code != 0x08 or ndim == 0:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at offset 0")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated header, need {header_end} bytes, found {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    if len(raw) - header_end != count:
        raise FormatError(
            f"{path}: payload at offset {header_end} should be {count} bytes, found {len(raw) - header_end}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims).copy()


def load_idx_pair(images_path, labels_path):
    """Load an IDX image/label file pair; returns (x in [0,1] NHWC, y int64).

    Grayscale image files (N, H, W) gain a trailing channel axis.
    """
    x = load_idx(images_path)
    y = load_idx(labels_path)
    if x.shape[0] != y.shape[0]:
        raise FormatError(
            f"{images_path}: {x.shape[0]} images but {labels_path} has {y.shape[0]} labels"
        )
    if x.ndim == 3:
        x = x[..., None]
    return x.astype(np.float32) / 255.0, y.astype(np.int64)


def save_idx(path, arr) -> None:
    """Write a uint8 array as an IDX file (images: ndim 3, labels: ndim 1)."""
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(struct.pack(">I", (0x08 << 8) | arr.ndim))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def _load_cifar_file(path):
    raw = _read_bytes(path)
    if len(raw) == 0 or len(raw) % _CIFAR_RECORD:
        raise FormatError(
            f"{path}: size {len(raw)} is not a multiple of the {_CIFAR_RECORD}-byte record"
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
    labels = rec[:, 0].copy()
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"{path}: label {labels[bad]} out of range at record {bad}")
    # channel-planar (3, 32, 32) per record -> HWC
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).copy()
    return images, labels


def load_cifar10(data_dir):
    """Read the binary CIFAR-10 batches; returns (x_train, y_train, x_test, y_test)."""
    d = Path(data_dir)
    xs, ys = zip(*[_load_cifar_file(d / f) for f in CIFAR_TRAIN_FILES])
    xt, yt = zip(*[_load_cifar_file(d / f) for f in CIFAR_TEST_FILES])
    return (
        np.concatenate(xs),
        np.concatenate(ys),
        np.concatenate(xt),
        np.concatenate(yt),
    )


@dataclass
class Dataset:
    """Normalized split: x in [0, 1] float32 NHWC, y int64 class ids."""

    name: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def input_shape(self):
        return tuple(self.x_train.shape[1:])

    @property
    def classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max())) + 1


def default_data_dir():
    return Path(os.environ.get("XBARSIM_DATA_DIR", "data"))


def load_dataset(name: str, data_dir=None) -> Dataset:
    """Load <data_dir>/<name> as a normalized Dataset.

    IDX-style sets (mnist, fashion_mnist, and synthetic stand-ins) use the
    four classic file names; cifar10 uses the binary batch layout.
    """
    base = Path(data_dir) if data_dir is not None else default_data_dir()
    d = base / name
    if name == "cifar10":
        x_train, y_train, x_test, y_test = load_cifar10(d)
        x_train = x_train.astype(np.float32) / 255.0
        x_test = x_test.astype(np.float32) / 255.0
        y_train = y_train.astype(np.int64)
        y_test = y_test.astype(np.int64)
    else:
        x_train, y_train = load_idx_pair(d / MNIST_FILES["x_train"], d / MNIST_FILES["y_train"])
        x_test, y_test = load_idx_pair(d / MNIST_FILES["x_test"], d / MNIST_FILES["y_test"])
    return Dataset(name=name, x_train=x_train, y_train=y_train, x_test=x_test, y_test=y_test)


def _tensor_key(i: int, name: str) -> str:
    return f"layer{i}.{name}"


def save_bundle(bundle_dir, spec: NetworkSpec, meta: dict | None = None) -> None:
    """Write a network to <bundle_dir>/manifest.json plus one blob per tensor.

    Blobs are raw little-endian float32, row-major, one file per weight or
    bias tensor; the manifest records topology, clip percentiles, recorded
    training noise, calibrated converter ranges, and the tensor table.
    """
    d = Path(bundle_dir)
    d.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for i in sorted(spec.weights):
        for name, t in sorted(spec.weights[i].items()):
            key = _tensor_key(i, name)
            fname = key + ".bin"
            blob = np.ascontiguousarray(t, dtype="<f4")
            (d / fname).write_bytes(blob.tobytes())
            tensors[key] = {"file": fname, "shape": list(t.shape), "dtype": "float32"}
    manifest = {
        "format": "xbarsim-bundle-v1",
        "input_shape": list(spec.input_shape),
        "layers": [layer_to_dict(l) for l in spec.layers],
        "activation_bound": spec.activation_bound,
        "sigma_neu": spec.sigma_neu,
        "clip": {"lower_percentile": spec.clip.lower_percentile, "upper_percentile": spec.clip.upper_percentile},
        "dac_ranges": {str(i): [q.lo, q.hi] for i, q in spec.dac.items()},
        "adc_ranges": {str(i): [q.lo, q.hi] for i, q in spec.adc.items()},
        "tensors": tensors,
        "meta": meta or {},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_bundle(bundle_dir):
    """Inverse of save_bundle; returns (NetworkSpec, meta dict).

    Converter ranges are restored as full-precision placeholders (bits come
    from the experiment config, not the bundle).
    """
    d = Path(bundle_dir)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise FormatError(f"{bundle_dir}: no manifest.json")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != "xbarsim-bundle-v1":
        raise FormatError(f"{bundle_dir}: unknown bundle format {manifest.get('format')!r}")
    layers = [layer_from_dict(ld) for ld in manifest["layers"]]
    spec = NetworkSpec(
        input_shape=tuple(manifest["input_shape"]),
        layers=layers,
        clip=ClipSpec(manifest["clip"]["lower_percentile"], manifest["clip"]["upper_percentile"]),
        activation_bound=manifest["activation_bound"],
        sigma_neu=float(manifest.get("sigma_neu", 0.0)),
    )
    tensors = manifest["tensors"]
    for i in spec.parameterized_indices():
        layer = spec.layers[i]
        names = ["weight", "bias"] if layer.use_bias else ["weight"]
        spec.weights[i] = {}
        for name in names:
            key = _tensor_key(i, name)
            if key not in tensors:
                raise FormatError(f"{bundle_dir}: manifest missing tensor {key} for layer {i} ({layer.kind})")
            entry = tensors[key]
            fpath = d / entry["file"]
            if not fpath.exists():
                raise FormatError(f"{bundle_dir}: missing blob {entry['file']} for layer {i} ({layer.kind})")
            shape = tuple(entry["shape"])
            t = np.frombuffer(fpath.read_bytes(), dtype="<f4")
            if t.size != int(np.prod(shape)):
                raise FormatError(
                    f"{bundle_dir}: blob {entry['file']} has {t.size} values, expected {int(np.prod(shape))}"
                )
            spec.weights[i][name] = t.reshape(shape).copy()
    spec.check_weights()
    from .xbar import Quantizer

    spec.dac = {int(i): Quantizer(None, lo, hi) for i, (lo, hi) in manifest.get("dac_ranges", {}).items()}
    spec.adc = {int(i): Quantizer(None, lo, hi) for i, (lo, hi) in manifest.get("adc_ranges", {}).items()}
    return spec, manifest.get("meta", {})


def format_value(v) -> str:
    """Canonical cell text: repr for floats so tables are bit-faithful."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """Plain deterministic CSV: one header line, repr-formatted floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise FormatError(f"row width {len(row)} does not match header {len(header)}")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of write_csv: returns (header, rows of strings)."""
    text = Path(path).read_text().rstrip("\n")
    lines = text.split("\n")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]
