"""Sweep harness: turns trained bundles into benchmark CSV tables.

Each sweep evaluates every listed model bundle at every axis point and
emits one row per (point, model seed) plus across-seed mean/std columns.
Every row is a pure function of (config, seed): all stochastic draws come
from RngStreams keyed by (base_seed + model index, axis point), never from
execution order, so tables are bit-identical regardless of worker count.
The draw keys deliberately exclude the device label: runs that differ only
in device quality see the same underlying standard normals, which makes
device-to-device comparisons paired rather than independent.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data_io import Dataset, default_data_dir, load_bundle, load_dataset
from .device import (
    ADDITIVE,
    IDEAL_DEVICE,
    PROPORTIONAL,
    DecayParams,
    NoiseSpec,
    cycled_nonuniform_device,
    load_device_params,
    measured_uniform_device,
)
from .errors import ConfigError
from .network import build_arrays, calibrate_ranges, assign_quantizers, infer
from .rng import RngStream
from .synthdata import SYNTH_SETS, ensure_dataset, make_blobs
from .xbar import age, current_histogram

BUILTIN_DEVICES = {
    "ideal": lambda: IDEAL_DEVICE,
    "uniform_measured": measured_uniform_device,
    "uniform_measured_x2": lambda: measured_uniform_device(2.0),
    "uniform_measured_x4": lambda: measured_uniform_device(4.0),
    "uniform_measured_x8": lambda: measured_uniform_device(8.0),
    "nonuniform_cycled": cycled_nonuniform_device,
}

# task name -> dataset directory; synthetic stand-ins are generated when the
# real corpus is absent so benchmarks stay runnable offline.
TASK_DATASETS = {
    "mnist": ("mnist", "digits"),
    "fmnist": ("fashion_mnist", "digits_hard"),
    "digits": ("digits", "digits"),
    "digits_hard": ("digits_hard", "digits_hard"),
    "cifar10": ("cifar10", None),
    "toy": (None, None),
}


@dataclass
class ExperimentConfig:
    """One sweep's full description; serializable as flat JSON."""

    task: str = "mnist"
    models: dict = field(default_factory=dict)  # label -> [bundle dir, ...]
    devices: dict = field(default_factory=dict)  # label -> builtin name or json path
    noise_kind: str = ADDITIVE
    sigma_list: list = field(default_factory=lambda: [0.0])
    time_list: list | None = None  # hours
    bits_list: list = field(default_factory=lambda: [None])
    sigma_syn: float = 0.0  # read noise held fixed during drift/adc sweeps
    limit: int | None = None
    calib_size: int = 512
    base_seed: int = 0
    workers: int = 1
    data_dir: str | None = None

    def __post_init__(self):
        if self.task not in TASK_DATASETS:
            raise ConfigError(f"unknown task {self.task!r}, pick one of {sorted(TASK_DATASETS)}")
        if self.noise_kind not in (ADDITIVE, PROPORTIONAL):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for label, paths in self.models.items():
            if isinstance(paths, str):
                raise ConfigError(f"models[{label!r}] must be a list of bundle dirs")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def log_time_grid(start: float = 1e-2, stop: float = 1e4, per_decade: int = 8) -> list:
    """Logarithmic time axis in hours, per_decade points per decade."""
    if start <= 0 or stop <= start:
        raise ConfigError("time grid requires 0 < start < stop")
    n = int(round(np.log10(stop / start) * per_decade)) + 1
    return [float(t) for t in np.logspace(np.log10(start), np.log10(stop), n)]


def resolve_device(ref: str) -> DecayParams:
    """Map a device reference (builtin name or parameter-file path) to params."""
    if ref in BUILTIN_DEVICES:
        return BUILTIN_DEVICES[ref]()
    if str(ref).endswith(".json"):
        if not Path(ref).exists():
            raise ConfigError(f"device-parameter file not found: {ref}")
        return load_device_params(ref)
    raise ConfigError(f"unknown device {ref!r}: not a builtin name or .json path")


_DATASET_CACHE: dict = {}


def resolve_task(task: str, data_dir=None) -> Dataset:
    """Load the task's dataset, generating the synthetic stand-in if needed."""
    base = Path(data_dir) if data_dir is not None else default_data_dir()
    key = (task, str(base))
    if key in _DATASET_CACHE:
        return _DATASET_CACHE[key]
    if task == "toy":
        rng = RngStream(99, stream_id=23)
        x_train, y_train = make_blobs(2000, rng.child("train"))
        x_test, y_test = make_blobs(500, rng.child("test"))
        ds = Dataset("toy", x_train, y_train, x_test, y_test)
    else:
        name, fallback = TASK_DATASETS[task]
        use = name
        if not (base / name).exists():
            if fallback is None:
                raise ConfigError(f"dataset directory {base / name} not found")
            use = fallback
        if use in SYNTH_SETS:
            ensure_dataset(use, base)
        ds = load_dataset(use, base)
    _DATASET_CACHE[key] = ds
    return ds


def _load_model(path):
    if not (Path(path) / "manifest.json").exists():
        raise ConfigError(f"model bundle not found: {path}")
    return load_bundle(path)


def _eval_subset(ds: Dataset, limit):
    if limit:
        return ds.x_test[:limit], ds.y_test[:limit]
    return ds.x_test, ds.y_test


def _accuracy(pnet, x, y, noise, t, rng) -> float:
    labels, _ = infer(pnet, x, noise=noise, t=t, rng=rng)
    return float(np.mean(labels == y))


def _append_stats(rows, key_fn, acc_idx):
    """Append across-seed mean/std columns, grouping rows by key_fn."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(key_fn(row), []).append(row[acc_idx])
    out = []
    for row in rows:
        accs = groups[key_fn(row)]
        out.append(tuple(row) + (float(np.mean(accs)), float(np.std(accs))))
    return out


# ---------------------------------------------------------------- noise sweep


def _noise_task(cfg_d, label, path, midx):
    cfg = ExperimentConfig.from_dict(cfg_d)
    ds = resolve_task(cfg.task, cfg.data_dir)
    x, y = _eval_subset(ds, cfg.limit)
    spec, _ = _load_model(path)
    master = RngStream(cfg.base_seed + midx, stream_id=1)
    pnet = build_arrays(spec, IDEAL_DEVICE, master.child("program"))
    rows = []
    for si, sigma in enumerate(cfg.sigma_list):
        noise = NoiseSpec(cfg.noise_kind, float(sigma))
        acc = _accuracy(pnet, x, y, noise, 0.0, master.child(("noise", si)))
        rows.append((spec.sigma_neu, cfg.noise_kind, float(sigma), midx, acc, label))
    return rows


NOISE_HEADER = [
    "model",
    "sigma_neu",
    "noise_kind",
    "sigma_syn_frac_of_range",
    "seed",
    "accuracy",
    "mean_accuracy",
    "std_accuracy",
]


def sweep_noise(cfg: ExperimentConfig):
    """Accuracy vs read-noise amplitude for every model bundle.

    Models are programmed on the ideal device so the sigma_syn = 0 row is
    exactly the clean (clipped-weight) accuracy.
    """
    if not cfg.models:
        raise ConfigError("noise sweep needs at least one model bundle")
    resolve_task(cfg.task, cfg.data_dir)
    tasks = [
        (cfg.to_dict(), label, path, midx)
        for label in sorted(cfg.models)
        for midx, path in enumerate(cfg.models[label])
    ]
    raw = _run_tasks(_noise_task, tasks, cfg.workers)
    rows = [
        (lbl, sn, kind, sig, midx, acc)
        for task_rows in raw
        for (sn, kind, sig, midx, acc, lbl) in task_rows
    ]
    rows.sort(key=lambda r: (r[0], r[3], r[1], r[2]))
    rows = _append_stats(rows, key_fn=lambda r: (r[0], r[3]), acc_idx=5)
    return NOISE_HEADER, rows


# ---------------------------------------------------------------- drift sweep


def _drift_task(cfg_d, label, path, midx, device_label):
    cfg = ExperimentConfig.from_dict(cfg_d)
    ds = resolve_task(cfg.task, cfg.data_dir)
    x, y = _eval_subset(ds, cfg.limit)
    spec, _ = _load_model(path)
    device = resolve_device(cfg.devices[device_label])
    master = RngStream(cfg.base_seed + midx, stream_id=2)
    pnet = build_arrays(spec, device, master.child("program"))
    noise = NoiseSpec(cfg.noise_kind, cfg.sigma_syn)
    rows = []
    for ti, t in enumerate(cfg.time_list):
        # keyed by time index only: device variants reuse the same draws
        acc = _accuracy(pnet, x, y, noise, float(t), master.child(("drift", ti)))
        rows.append((label, device_label, float(t), midx, cfg.sigma_syn, acc))
    return rows


DRIFT_HEADER = [
    "model",
    "device",
    "t_hours",
    "seed",
    "sigma_syn_frac_of_range",
    "accuracy",
    "mean_accuracy",
    "std_accuracy",
]


def sweep_drift(cfg: ExperimentConfig):
    """Accuracy vs time since programming, re-aged from pristine per point."""
    if not cfg.models or not cfg.devices:
        raise ConfigError("drift sweep needs model bundles and devices")
    if not cfg.time_list:
        raise ConfigError("drift sweep needs time_list (hours)")
    resolve_task(cfg.task, cfg.data_dir)
    tasks = [
        (cfg.to_dict(), label, path, midx, dev)
        for label in sorted(cfg.models)
        for dev in sorted(cfg.devices)
        for midx, path in enumerate(cfg.models[label])
    ]
    raw = _run_tasks(_drift_task, tasks, cfg.workers)
    rows = [r for task_rows in raw for r in task_rows]
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    rows = _append_stats(rows, key_fn=lambda r: (r[0], r[1], r[2]), acc_idx=5)
    return DRIFT_HEADER, rows


# ------------------------------------------------------------------ adc sweep


def _adc_task(cfg_d, label, path, midx):
    cfg = ExperimentConfig.from_dict(cfg_d)
    ds = resolve_task(cfg.task, cfg.data_dir)
    x, y = _eval_subset(ds, cfg.limit)
    spec, _ = _load_model(path)
    calib = ds.x_train[: cfg.calib_size]
    dac_ranges, adc_ranges = calibrate_ranges(spec, calib)
    master = RngStream(cfg.base_seed + midx, stream_id=3)
    pnet = build_arrays(spec, IDEAL_DEVICE, master.child("program"))
    noise = NoiseSpec(cfg.noise_kind, cfg.sigma_syn)
    rows = []
    for bi, bits in enumerate(cfg.bits_list):
        assign_quantizers(spec, dac_ranges, adc_ranges, bits)
        acc = _accuracy(pnet, x, y, noise, 0.0, master.child(("adc", bi)))
        rows.append((label, spec.activation_bound, bits, midx, acc))
    assign_quantizers(spec, dac_ranges, adc_ranges, None)
    return rows


ADC_HEADER = [
    "model",
    "bound_mode",
    "bits",
    "seed",
    "accuracy",
    "mean_accuracy",
    "std_accuracy",
]


def sweep_adc(cfg: ExperimentConfig):
    """Accuracy vs ADC/DAC resolution, converters swept together.

    Ranges come from calibrate_ranges on a training batch; bits=None rows
    are the exact full-precision baseline.
    """
    if not cfg.models:
        raise ConfigError("adc sweep needs at least one model bundle")
    resolve_task(cfg.task, cfg.data_dir)
    tasks = [
        (cfg.to_dict(), label, path, midx)
        for label in sorted(cfg.models)
        for midx, path in enumerate(cfg.models[label])
    ]
    raw = _run_tasks(_adc_task, tasks, cfg.workers)
    rows = [r for task_rows in raw for r in task_rows]
    rows.sort(key=lambda r: (r[0], -1 if r[2] is None else r[2], r[3]))
    rows = [(m, b, "none" if bits is None else bits, s, a) for (m, b, bits, s, a) in rows]
    rows = _append_stats(rows, key_fn=lambda r: (r[0], r[2]), acc_idx=4)
    return ADC_HEADER, rows


# ------------------------------------------------------------------- snapshot


SNAPSHOT_HEADER = ["bin_lo", "bin_hi", "count_t0", "count_t"]


def snapshot_weight_distribution(cfg: ExperimentConfig, layer: int, t: float, which: str = "plus"):
    """Current histogram of one programmed array at t=0 and after t hours.

    layer counts parameterized layers only (0 = first conv/dense). Uses the
    first model of the first label and the first configured device.
    """
    if not cfg.models or not cfg.devices:
        raise ConfigError("snapshot needs a model bundle and a device")
    label = sorted(cfg.models)[0]
    spec, _ = _load_model(cfg.models[label][0])
    device = resolve_device(cfg.devices[sorted(cfg.devices)[0]])
    pidx = spec.parameterized_indices()
    if not 0 <= layer < len(pidx):
        raise ConfigError(f"layer {layer} out of range: model has {len(pidx)} parameterized layers")
    master = RngStream(cfg.base_seed, stream_id=4)
    pnet = build_arrays(spec, device, master.child("program"))
    arr = pnet.arrays[pidx[layer]]
    edges, counts0 = current_histogram(arr, bins=64, which=which)
    aged = age(arr, t, device, master.child(("snapshot", 0)))
    _, counts1 = current_histogram(aged, bins=64, which=which)
    rows = [
        (float(edges[i]), float(edges[i + 1]), int(counts0[i]), int(counts1[i]))
        for i in range(len(counts0))
    ]
    return SNAPSHOT_HEADER, rows


# ------------------------------------------------------------------ execution


def _run_tasks(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    # fork context: cheap on Linux, dataset cache shared copy-on-write.
    # Callers pre-resolve the dataset so children never race to generate it.
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*tasks)))
