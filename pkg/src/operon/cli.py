"""Batch driver: data generation, training, prediction, evaluation, and
benchmark comparison, configured by a JSON file plus overriding flags.

Every command is a pure function of (config file, flags, input files):
reruns produce byte-identical artifacts. The mandatory config seed feeds
named sub-seeds (data/init/shuffle/eval) so stages can be varied
independently.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence,
5 metric undefined, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, data, metrics
from ._seeding import subseed
from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import (
    ConfigurationError,
    DataFormatError,
    DivergenceError,
    MetricUndefinedError,
    OperonError,
    ShapeError,
)
from .operator import DeepONetConfig, TrainingSchedule, loss, train
from .rollout import RolloutRequest, run_scheme
from .systems import InputSignal, Partition, simulate_truth, trajectory_to_csv

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_METRIC = 5


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc


def _require(cfg, key):
    if key not in cfg:
        raise ConfigurationError(f"config is missing required field {key!r}")
    return cfg[key]


def _seed_of(cfg, args):
    if args.seed is not None:
        return int(args.seed)
    return int(_require(cfg, "seed"))


def _out_path(args, rel):
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / rel


def _partition_from(cfg) -> Partition:
    kind = cfg.get("kind", "uniform")
    if kind == "uniform":
        return Partition.uniform(cfg["start"], cfg["stop"], cfg["step"])
    if kind == "explicit":
        return Partition(np.asarray(cfg["times"], dtype=float))
    raise ConfigurationError(f"unknown partition kind {kind!r}")


def _schedule_from(cfg, seed, standardize=False) -> TrainingSchedule:
    return TrainingSchedule(
        epochs=int(_require(cfg, "epochs")),
        batch_size=int(cfg.get("batch_size", 256)),
        base_lr=float(cfg.get("base_lr", 1e-3)),
        decay_rate=float(cfg.get("decay_rate", 0.9)),
        decay_every=int(cfg.get("decay_every", 2000)),
        seed=subseed(seed, "shuffle"),
        standardize=standardize,
    )


def _write_history(path, history):
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for epoch, value in history:
            fh.write(f"{epoch},{value:.17g}\n")


# --- commands -----------------------------------------------------------------


def cmd_gen_data(cfg, args):
    seed = _seed_of(cfg, args)
    spec = data.SamplingSpec(
        system=_require(cfg, "system"),
        count=int(_require(cfg, "count")),
        h_range=tuple(_require(cfg, "h_range")),
        num_sensors=int(cfg.get("num_sensors", 1)),
        seed=subseed(seed, "data"),
    )
    triplets = data.generate(spec)
    path = _out_path(args, _require(cfg, "dataset"))
    content_hash = data.save(triplets, path, spec)
    states = np.stack([t.state for t in triplets])
    hs = np.array([t.h for t in triplets])
    print(f"wrote {len(triplets)} records to {path}")
    print(f"hash {content_hash}")
    for i in range(states.shape[1]):
        print(f"state[{i}] range [{states[:, i].min():.6g}, {states[:, i].max():.6g}]")
    print(f"h range [{hs.min():.6g}, {hs.max():.6g}]")
    return EXIT_OK


def _train_deeponet(cfg, triplets, header, seed):
    model_cfg = cfg.get("model", {})
    config = DeepONetConfig.create(
        state_dim=len(triplets[0].state),
        num_sensors=header["spec"]["num_sensors"],
        basis_per_output=int(model_cfg.get("basis_per_output", 20)),
        hidden_width=int(model_cfg.get("hidden_width", 100)),
        hidden_depth=int(model_cfg.get("hidden_depth", 3)),
        activation=model_cfg.get("activation", "tanh"),
        architecture=model_cfg.get("architecture", "modified"),
        seed=subseed(seed, "init"),
    )
    if "num_sensors" in model_cfg and model_cfg["num_sensors"] != config.num_sensors:
        raise ConfigurationError(
            f"model num_sensors {model_cfg['num_sensors']} != dataset "
            f"num_sensors {config.num_sensors}"
        )
    schedule = _schedule_from(
        _require(cfg, "schedule"), seed, standardize=bool(model_cfg.get("standardize", False))
    )
    return train(triplets, config, schedule, progress=_progress_printer(schedule.epochs)), schedule


def _progress_printer(epochs):
    stride = max(1, epochs // 10)

    def progress(epoch, value):
        if epoch == 1 or epoch % stride == 0 or epoch == epochs:
            print(f"epoch {epoch}/{epochs} loss {value:.6g}")

    return progress


def cmd_train(cfg, args):
    seed = _seed_of(cfg, args)
    kind = args.model_kind or cfg.get("model_kind", "deeponet")
    triplets, header = data.load_with_header(_require(cfg, "dataset"))
    model_cfg = cfg.get("model", {})
    if "num_sensors" in model_cfg and model_cfg["num_sensors"] != header["spec"]["num_sensors"]:
        raise ConfigurationError(
            f"model num_sensors {model_cfg['num_sensors']} != dataset "
            f"num_sensors {header['spec']['num_sensors']}"
        )

    if kind == "deeponet":
        (model, history), schedule = _train_deeponet(cfg, triplets, header, seed)
    elif kind in ("fnn", "ensemble"):
        schedule = _schedule_from(_require(cfg, "schedule"), seed)
        hidden = tuple(model_cfg.get("hidden", (128, 128, 128)))
        activation = model_cfg.get("activation", "tanh")
        residual = bool(model_cfg.get("residual", False))
        if kind == "fnn":
            model, history = baselines.train_fnn(
                triplets, schedule, hidden, activation, residual
            )
        else:
            members = int(model_cfg.get("members", 5))
            model, histories = baselines.train_ensemble(
                triplets, members, schedule, hidden, activation, residual
            )
            history = histories[0]
    else:
        raise ConfigurationError(f"unknown model kind {kind!r}")

    ckpt_path = _out_path(args, _require(cfg, "checkpoint"))
    save_checkpoint(
        ckpt_path,
        model,
        schedule=schedule,
        dataset_hash=header["hash"],
        meta={"system": header["system"], "model_kind": kind},
    )
    print(f"wrote checkpoint {ckpt_path}")
    if "history" in cfg:
        hist_path = _out_path(args, cfg["history"])
        _write_history(hist_path, history)
        print(f"wrote history {hist_path}")
    print(f"final loss {history[-1][1]:.17g}")
    return EXIT_OK


def cmd_predict(cfg, args):
    _seed_of(cfg, args)  # mandatory even when unused: no wall-clock defaults anywhere
    model, info = load_checkpoint(_require(cfg, "checkpoint"))
    partition = _partition_from(_require(cfg, "partition"))
    signal = InputSignal.from_spec(_require(cfg, "signal"))
    scheme = args.scheme or cfg.get("scheme", "recursive")
    x0 = np.asarray(_require(cfg, "x0"), dtype=float)

    threshold = RolloutRequest.__dataclass_fields__["divergence_threshold"].default
    system = None
    if cfg.get("system") or info["meta"].get("system"):
        system = data.get_system(cfg.get("system") or info["meta"]["system"])
        threshold = 10.0 * float(np.abs(system.state_space).max())

    pred = run_scheme(RolloutRequest(model, x0, partition, signal, scheme, threshold))
    pred_path = _out_path(args, _require(cfg, "out_prediction"))
    trajectory_to_csv(pred, pred_path, scheme=scheme)
    print(f"wrote {pred.times.size} nodes to {pred_path}")

    truth_cfg = cfg.get("emit_truth")
    if truth_cfg:
        truth_system = data.get_system(truth_cfg.get("system") or info["meta"]["system"])
        truth = simulate_truth(
            truth_system, x0, signal, partition, substeps=int(truth_cfg.get("substeps", 10))
        )
        truth_path = _out_path(args, _require(truth_cfg, "out"))
        trajectory_to_csv(truth, truth_path)
        print(f"wrote truth to {truth_path}")
    if pred.diverged:
        print("rollout diverged; trajectory truncated", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_evaluate(cfg, args):
    seed = _seed_of(cfg, args)
    model, info = load_checkpoint(_require(cfg, "checkpoint"))
    system = data.get_system(cfg.get("system") or info["meta"].get("system"))
    partition = _partition_from(_require(cfg, "partition"))
    signal = InputSignal.from_spec(_require(cfg, "signal"))
    scheme = args.scheme or cfg.get("scheme", "recursive")
    substeps = int(cfg.get("substeps", 10))

    ic = _require(cfg, "ic")
    if ic.get("kind") == "single":
        report = metrics.evaluate_single(
            model, system, np.asarray(ic["x0"], dtype=float), signal, partition,
            scheme, substeps,
        )
    elif ic.get("kind") == "box":
        report = metrics.evaluate_over_initial_conditions(
            model, system, signal, partition,
            np.asarray(ic["box"], dtype=float), int(ic["count"]),
            subseed(seed, "eval"), scheme, substeps,
        )
    else:
        raise ConfigurationError(f"unknown ic kind {ic.get('kind')!r}")

    report_path = _out_path(args, _require(cfg, "out_report"))
    with open(report_path, "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"wrote report {report_path}")
    if "out_csv" in cfg:
        csv_path = _out_path(args, cfg["out_csv"])
        with open(csv_path, "w") as fh:
            fh.write(report.csv_header() + "\n" + report.csv_row() + "\n")
        print(f"wrote csv {csv_path}")
    for i, (m, s) in enumerate(zip(report.mean, report.std)):
        print(f"x{i}: mean {m:.4f}% std {s:.4f}%")
    if report.divergence_count:
        print(f"excluded {report.divergence_count} diverged rollouts")
    return EXIT_OK


def cmd_compare(cfg, args):
    seed = _seed_of(cfg, args)
    triplets, header = data.load_with_header(_require(cfg, "dataset"))
    system = data.get_system(header["system"])
    eval_cfg = _require(cfg, "eval")
    partition = _partition_from(_require(eval_cfg, "partition"))
    signal = InputSignal.from_spec(_require(eval_cfg, "signal"))
    ic = _require(eval_cfg, "ic")
    schedule_cfg = _require(cfg, "schedule")

    models = {}
    failures = {}
    try:
        (models["deeponet"], _), _ = _train_deeponet(cfg, triplets, header, seed)
    except OperonError as exc:
        failures["deeponet"] = str(exc)

    fnn_cfg = cfg.get("fnn", {})
    hidden = tuple(fnn_cfg.get("hidden", (128, 128, 128)))
    schedule = _schedule_from(schedule_cfg, seed)
    try:
        models["fnn"], _ = baselines.train_fnn(
            triplets, schedule, hidden, fnn_cfg.get("activation", "tanh"),
            bool(fnn_cfg.get("residual", False)),
        )
    except OperonError as exc:
        failures["fnn"] = str(exc)
    try:
        members = int(cfg.get("ensemble", {}).get("members", 5))
        models["ensemble"], _ = baselines.train_ensemble(
            triplets, members, schedule, hidden, fnn_cfg.get("activation", "tanh"),
            bool(fnn_cfg.get("residual", False)),
        )
    except OperonError as exc:
        failures["ensemble"] = str(exc)

    rows = []
    for kind in ("deeponet", "fnn", "ensemble"):
        if kind in failures:
            print(f"{kind}: training failed: {failures[kind]}", file=sys.stderr)
            continue
        report = metrics.evaluate_over_initial_conditions(
            models[kind], system, signal, partition,
            np.asarray(ic["box"], dtype=float), int(ic["count"]),
            subseed(seed, "eval"), cfg.get("scheme", "recursive"),
            int(eval_cfg.get("substeps", 10)),
        )
        rows.append((kind, "mean_l2_percent", report.mean))
        rows.append((kind, "std_l2_percent", report.std))
        print(f"{kind}: mean {np.array2string(report.mean, precision=4)} "
              f"std {np.array2string(report.std, precision=4)}")

    n = system.state_dim
    out_path = _out_path(args, _require(cfg, "out"))
    with open(out_path, "w") as fh:
        fh.write("model_kind,metric," + ",".join(f"x{i}" for i in range(n)) + "\n")
        for kind, metric, vals in rows:
            fh.write(f"{kind},{metric}," + ",".join(f"{v:.17g}" for v in vals) + "\n")
    print(f"wrote comparison {out_path}")
    return EXIT_OK if not failures else EXIT_UNEXPECTED


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="operon",
        description="Learn and roll out local solution operators of controlled ODE systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="directory for output artifacts")
        p.add_argument("--scheme", choices=["recursive", "rk2", "rk2-corrector"],
                       default=None, help="rollout scheme override")
        p.add_argument("--model-kind", choices=["deeponet", "fnn", "ensemble"],
                       dest="model_kind", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.scheme:
        args.scheme = args.scheme.replace("-", "_")
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MetricUndefinedError as exc:
        print(f"metric undefined: {exc}", file=sys.stderr)
        return EXIT_METRIC
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
