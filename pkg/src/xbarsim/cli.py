"""Command-line entry points.

Subcommands: train, infer, sweep-noise, sweep-drift, sweep-adc,
snapshot-dist, make-data, plot. Every subcommand accepts --config pointing
at a JSON file whose keys are the long flag names; explicit flags override
config values. Exit code 0 on success, 2 with a one-line diagnostic on any
configuration, format, or parameter error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data_io import default_data_dir, load_bundle, save_bundle, write_csv
from .device import NoiseSpec
from .errors import ConfigError, XbarsimError
from .experiments import (
    ExperimentConfig,
    log_time_grid,
    resolve_device,
    resolve_task,
    snapshot_weight_distribution,
    sweep_adc,
    sweep_drift,
    sweep_noise,
)
from .network import (
    BOUNDED,
    assign_quantizers,
    build_arrays,
    calibrate_ranges,
    cifar_topology,
    infer,
    init_weights,
    mlp_topology,
    mnist_topology,
)
from .rng import RngStream
from .synthdata import SYNTH_SETS, write_digit_set
from .training import TrainConfig, evaluate, train


def _task_topology(task: str, bound: str, use_bias: bool):
    if task in ("mnist", "fmnist", "digits", "digits_hard"):
        return mnist_topology(bound, use_bias)
    if task == "cifar10":
        return cifar_topology(bound, use_bias)
    if task == "toy":
        return mlp_topology(2, 16, 3, bound)
    raise ConfigError(f"no reference topology for task {task!r}")


def cmd_train(args) -> int:
    ds = resolve_task(args.task, args.data_dir)
    spec = _task_topology(args.task, args.bound, not args.no_bias)
    rng = RngStream(args.seed, stream_id=5)
    init_weights(spec, rng.child("init"))
    x, y = ds.x_train, ds.y_train
    if args.limit:
        x, y = x[: args.limit], y[: args.limit]
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        lr_decay=args.lr_decay,
        optimizer=args.optimizer,
        sigma_neu=args.sigma_neu,
    )
    history = train(spec, x, y, cfg, rng.child("train"))
    acc = evaluate(spec, ds.x_test, ds.y_test)
    meta = {
        "task": args.task,
        "seed": args.seed,
        "epochs": args.epochs,
        "optimizer": args.optimizer,
        "lr": args.lr,
        "sigma_neu": args.sigma_neu,
        "train_limit": args.limit,
        "final_loss": history["loss"][-1],
        "test_accuracy": acc,
    }
    save_bundle(args.out, spec, meta)
    print(f"trained {args.task} ({args.bound}, sigma_neu={args.sigma_neu}): "
          f"test accuracy {acc:.4f}, bundle at {args.out}")
    return 0


def cmd_infer(args) -> int:
    ds = resolve_task(args.task, args.data_dir)
    spec, _ = load_bundle(args.bundle)
    device = resolve_device(args.device)
    if args.bits is not None:
        dac_r, adc_r = calibrate_ranges(spec, ds.x_train[:512])
        assign_quantizers(spec, dac_r, adc_r, args.bits)
    rng = RngStream(args.seed, stream_id=6)
    pnet = build_arrays(spec, device, rng.child("program"))
    x, y = ds.x_test, ds.y_test
    if args.limit:
        x, y = x[: args.limit], y[: args.limit]
    noise = NoiseSpec(args.noise_kind, args.sigma_syn)
    labels, _ = infer(pnet, x, noise=noise, t=args.t, rng=rng.child("eval"))
    acc = float(np.mean(labels == y))
    print(f"accuracy {acc:.4f} on {len(y)} samples "
          f"(t={args.t} h, {args.noise_kind} sigma_syn={args.sigma_syn}, "
          f"bits={args.bits if args.bits is not None else 'full'})")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    if not args.experiment:
        raise ConfigError("sweep commands need --experiment <json> describing models and axes")
    with open(args.experiment, "r", encoding="utf-8") as f:
        cfg = ExperimentConfig.from_dict(json.load(f))
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.limit is not None:
        cfg.limit = args.limit
    if args.workers is not None:
        cfg.workers = args.workers
    if args.data_dir is not None:
        cfg.data_dir = args.data_dir
    if cfg.time_list == "default":
        cfg.time_list = log_time_grid()
    return cfg


def _write_table(out, header, rows) -> int:
    if not out:
        raise ConfigError("--out <csv path> is required")
    write_csv(out, header, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_sweep_noise(args) -> int:
    header, rows = sweep_noise(_experiment_config(args))
    return _write_table(args.out, header, rows)


def cmd_sweep_drift(args) -> int:
    header, rows = sweep_drift(_experiment_config(args))
    return _write_table(args.out, header, rows)


def cmd_sweep_adc(args) -> int:
    header, rows = sweep_adc(_experiment_config(args))
    return _write_table(args.out, header, rows)


def cmd_snapshot_dist(args) -> int:
    cfg = _experiment_config(args)
    header, rows = snapshot_weight_distribution(cfg, args.layer, args.t, args.which)
    return _write_table(args.out, header, rows)


def cmd_make_data(args) -> int:
    data_dir = Path(args.data_dir) if args.data_dir else default_data_dir()
    names = list(SYNTH_SETS) if args.name == "all" else [args.name]
    for name in names:
        if name not in SYNTH_SETS:
            raise ConfigError(f"unknown synthetic set {name!r}, pick from {sorted(SYNTH_SETS)} or 'all'")
        level, n_train, n_test, seed = SYNTH_SETS[name]
        n_train = args.n_train or n_train
        n_test = args.n_test or n_test
        seed = args.seed if args.seed is not None else seed
        write_digit_set(data_dir, name, n_train, n_test, seed, level)
        print(f"wrote {name} ({n_train} train / {n_test} test) under {data_dir / name}")
    return 0


def cmd_plot(args) -> int:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ConfigError("plotting requires matplotlib (pip install matplotlib)")
    from .data_io import read_csv

    header, rows = read_csv(args.csv)
    if args.x not in header or args.y not in header:
        raise ConfigError(f"columns {args.x!r}/{args.y!r} not in {header}")
    xi, yi = header.index(args.x), header.index(args.y)
    gi = header.index(args.group) if args.group else None
    series: dict = {}
    for row in rows:
        key = row[gi] if gi is not None else "all"
        try:
            series.setdefault(key, []).append((float(row[xi]), float(row[yi])))
        except ValueError:
            continue  # non-numeric axis entries (e.g. bits='none')
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key in sorted(series):
        pts = sorted(set(series[key]))
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=str(key))
    if args.logx:
        ax.set_xscale("log")
    ax.set_xlabel(args.x)
    ax.set_ylabel(args.y)
    if gi is not None:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return 0


def _apply_config_file(parser, argv):
    """--config <json> supplies defaults for the long flag names."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{known.config}: config must be a JSON object")
    dests = {a.dest for a in parser._actions}
    unknown = set(cfg) - dests
    if unknown:
        raise ConfigError(f"{known.config}: unknown config keys {sorted(unknown)}")
    parser.set_defaults(**cfg)


def build_parser():
    p = argparse.ArgumentParser(prog="xbarsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of default values for these flags")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--limit", type=int, default=None)
        sp.add_argument("--out", help="output path")
        sp.add_argument("--data-dir", dest="data_dir", default=None)

    t = sub.add_parser("train", help="train a model and save a weight bundle")
    common(t)
    t.add_argument("--task", default="mnist")
    t.add_argument("--bound", choices=["bounded", "unbounded"], default=BOUNDED)
    t.add_argument("--sigma-neu", dest="sigma_neu", type=float, default=0.0)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch-size", dest="batch_size", type=int, default=128)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-decay", dest="lr_decay", type=float, default=1.0,
                   help="multiply the learning rate by this factor after each epoch")
    t.add_argument("--optimizer", default="rmsprop")
    t.add_argument("--no-bias", dest="no_bias", action="store_true")
    t.set_defaults(func=cmd_train, seed=0)

    i = sub.add_parser("infer", help="device-aware accuracy of a saved bundle")
    common(i)
    i.add_argument("--task", default="mnist")
    i.add_argument("--bundle", required=True)
    i.add_argument("--device", default="ideal")
    i.add_argument("--noise-kind", dest="noise_kind", default="additive")
    i.add_argument("--sigma-syn", dest="sigma_syn", type=float, default=0.0)
    i.add_argument("--t", type=float, default=0.0, help="hours since programming")
    i.add_argument("--bits", type=int, default=None, help="ADC/DAC resolution")
    i.set_defaults(func=cmd_infer, seed=0)

    for name, fn in (
        ("sweep-noise", cmd_sweep_noise),
        ("sweep-drift", cmd_sweep_drift),
        ("sweep-adc", cmd_sweep_adc),
    ):
        s = sub.add_parser(name, help=f"{name.replace('-', ' ')} over saved bundles")
        common(s)
        s.add_argument("--experiment", help="experiment JSON (models, devices, axes)")
        s.add_argument("--workers", type=int, default=None)
        s.set_defaults(func=fn)

    sd = sub.add_parser("snapshot-dist", help="array current histogram at t=0 and t")
    common(sd)
    sd.add_argument("--experiment", help="experiment JSON (models, devices)")
    sd.add_argument("--workers", type=int, default=None)
    sd.add_argument("--layer", type=int, default=0)
    sd.add_argument("--t", type=float, default=24.0)
    sd.add_argument("--which", choices=["plus", "minus", "both"], default="plus")
    sd.set_defaults(func=cmd_snapshot_dist)

    md = sub.add_parser("make-data", help="generate synthetic datasets as IDX files")
    common(md)
    md.add_argument("--name", default="all")
    md.add_argument("--n-train", dest="n_train", type=int, default=None)
    md.add_argument("--n-test", dest="n_test", type=int, default=None)
    md.set_defaults(func=cmd_make_data)

    pl = sub.add_parser("plot", help="line chart from a results CSV")
    common(pl)
    pl.add_argument("--csv", required=True)
    pl.add_argument("--x", required=True)
    pl.add_argument("--y", default="mean_accuracy")
    pl.add_argument("--group", default="model")
    pl.add_argument("--logx", action="store_true")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        # apply --config defaults against the chosen subparser
        if argv:
            sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
            if sub_actions and argv[0] in sub_actions[0].choices:
                _apply_config_file(sub_actions[0].choices[argv[0]], argv[1:])
        args = parser.parse_args(argv)
        return args.func(args)
    except XbarsimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
