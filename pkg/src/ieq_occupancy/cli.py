"""Command-line entry point: simulate, experiment, plot-data, train, predict."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .classifiers import MODEL_KINDS, ModelSpec, load_model, save_model
from .data import (
    CHANNELS,
    DEFAULT_INTERVAL,
    Dataset,
    build_matrix,
    complete_rows,
    format_timestamp,
    load_csv,
    resample,
    write_csv,
)
from .evaluation import (
    DEFAULT_FEATURE_ROWS,
    ExperimentConfig,
    FitOptions,
    accuracy,
    fit_pipeline,
    resolve_row,
    run_global,
    run_local,
)
from .report import render_text, report_from_dict, report_to_json
from .simulator import load_zone_document, make_preset_zones, simulate_zone

log = logging.getLogger("ieq_occupancy")

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 1."""


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace, seed, inputs=()):
    skip = {"func", "verbose"}
    arg_doc = {
        k: (str(v) if isinstance(v, Path) else [str(x) for x in v] if isinstance(v, list) else v)
        for k, v in sorted(vars(args).items())
        if k not in skip
    }
    manifest = {
        "command": command,
        "args": arg_doc,
        "seed": seed,
        "version": __version__,
        "input_sha256": [{"path": str(p), "sha256": sha256_file(p)} for p in inputs],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid json ({exc})") from exc


def _zone_name(path: Path) -> str:
    return path.stem


def _load_datasets(paths: list[Path], interval: int) -> list[Dataset]:
    datasets, seen = [], set()
    for path in paths:
        name = _zone_name(path)
        if name in seen:
            raise UsageError(f"duplicate zone name {name!r}; zone names come from file names")
        seen.add(name)
        samples = load_csv(path)
        if not samples:
            raise UsageError(f"{path}: no data rows")
        datasets.append(Dataset(name, resample(samples, interval)))
    return datasets


def _experiment_config(args) -> ExperimentConfig:
    doc = _read_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise UsageError("experiment config must be a json object")
    if args.seed is not None:
        doc["seed"] = args.seed
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    if args.days < 1:
        raise UsageError("--days must be at least 1")
    if args.interval < 0:
        raise UsageError("--interval must be non-negative")
    if args.preset:
        zones = make_preset_zones(args.seed, args.days)
        inputs = []
    else:
        zones = load_zone_document(args.config, args.days, args.seed)
        inputs = [args.config]
    args.out.mkdir(parents=True, exist_ok=True)
    for config, schedule, sim_seed in zones:
        samples = simulate_zone(config, schedule, sim_seed)
        if args.interval:
            samples = resample(samples, args.interval)
        path = args.out / f"{config.name}.csv"
        write_csv(samples, path, config.channels)
        print(f"wrote {path} ({len(samples)} rows)")
    write_manifest(args.out, "simulate", args, args.seed, inputs)
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _experiment_config(args)
    datasets = _load_datasets(args.data, config.interval)
    names = [d.name for d in datasets]
    inputs = list(args.data) + ([args.config] if args.config else [])

    if args.mode == "local":
        report = run_local(config, datasets)
    else:
        if args.train_zone is None:
            raise UsageError("--train-zone is required in global mode")
        if args.train_zone not in names:
            raise UsageError(f"--train-zone {args.train_zone!r} is not among {names}")
        tests = args.test_zones or [n for n in names if n != args.train_zone]
        unknown = [t for t in tests if t not in names]
        if unknown:
            raise UsageError(f"unknown test zones {unknown}")
        local = None
        if args.local_report:
            local = report_from_dict(_read_json(args.local_report))
            inputs.append(args.local_report)
        report = run_local(config, []) if local is None else local
        report.global_ = run_global(config, datasets, args.train_zone, tests, local)
        if local is None:
            report.zones = names

    args.out.mkdir(parents=True, exist_ok=True)
    text = render_text(report)
    (args.out / "report.json").write_text(report_to_json(report))
    (args.out / "report.txt").write_text(text)
    write_manifest(args.out, "experiment", args, config.seed, inputs)
    sys.stdout.write(text[: text.index("[detail]")].rstrip() + "\n")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    channels = [c.strip() for c in args.channels.split(",") if c.strip()]
    unknown = [c for c in channels if c not in CHANNELS]
    if not channels or unknown:
        raise UsageError(f"unknown channels {unknown}; choose from {', '.join(CHANNELS)}")
    samples = load_csv(args.data)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "channel", "value", "occupied"])
        for s in samples:
            ts = format_timestamp(s.timestamp)
            for ch in channels:
                v = s.value(ch)
                writer.writerow([ts, ch, "" if v is None else f"{v:.3f}", s.occupied])
    print(f"wrote {args.out} ({len(samples) * len(channels)} rows)")
    return EXIT_OK


def _feature_channels(spec: str, available) -> tuple[str, ...]:
    for label, tokens in DEFAULT_FEATURE_ROWS:
        if spec == label:
            channels = resolve_row(tokens, available)
            if channels is None:
                raise UsageError(f"feature set {label} needs channels the data lacks")
            return channels
    channels = [c.strip() for c in spec.split(",") if c.strip()]
    unknown = [c for c in channels if c not in CHANNELS]
    if not channels or unknown:
        raise UsageError(f"unknown channels {unknown} in --features")
    return tuple(c for c in CHANNELS if c in channels)


def cmd_train(args) -> int:
    params = {}
    if args.params:
        try:
            params = json.loads(args.params)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--params is not valid json ({exc})") from exc
    spec = ModelSpec(args.model, params)
    (dataset,) = _load_datasets([args.data], args.interval)
    channels = _feature_channels(args.features, dataset.channels)
    matrix = build_matrix(dataset.samples, channels)
    trained = fit_pipeline(matrix, spec, args.seed, FitOptions())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_model(trained, args.out)
    acc = accuracy(trained.predict(matrix), matrix.labels)
    print(f"trained {spec.kind} on {', '.join(channels)} ({matrix.rows} rows); "
          f"training accuracy {100 * acc:.1f}%")
    write_manifest(args.out.parent, "train", args, args.seed, [args.data])
    return EXIT_OK


def cmd_predict(args) -> int:
    trained = load_model(args.model)
    (dataset,) = _load_datasets([args.data], args.interval)
    missing = [c for c in trained.features if c not in dataset.channels]
    if missing:
        raise UsageError(f"data lacks channels {missing} required by the model")
    matrix = build_matrix(dataset.samples, trained.features)
    pred = trained.predict(matrix)
    # build_matrix drops rows it cannot fill; line the predictions up with the survivors.
    kept = complete_rows(dataset.samples, trained.features)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "predicted", "occupied"])
        for idx, p in zip(kept, pred):
            s = dataset.samples[idx]
            writer.writerow([format_timestamp(s.timestamp), int(p), s.occupied])
    print(f"wrote {args.out} ({len(pred)} rows); accuracy {100 * accuracy(pred, matrix.labels):.1f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ieq-occupancy",
        description="Occupancy detection from indoor environmental sensor data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic zone data as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=["paper"], help="the three built-in zones")
    src.add_argument("--config", type=Path, help="zone config json")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--interval", type=int, default=DEFAULT_INTERVAL,
                   help="resample to this many seconds (0 keeps the raw step)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run local or global accuracy experiments")
    p.add_argument("--mode", choices=["local", "global"], default="local")
    p.add_argument("--data", type=Path, nargs="+", required=True,
                   help="zone CSVs; the file stem names the zone")
    p.add_argument("--config", type=Path, help="experiment config json")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--train-zone", help="global mode: zone to train on")
    p.add_argument("--test-zones", nargs="+", help="global mode: zones to test on (default: all others)")
    p.add_argument("--local-report", type=Path,
                   help="global mode: reuse local accuracies from this json report")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot-data", help="export a long-format CSV for plotting")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--channels", default="co2_bg,voc",
                   help=f"comma-separated subset of {','.join(CHANNELS)}")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("train", help="fit one model on a zone CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--features", default="CO2+VOC",
                   help="a feature-set label such as CO2+VOC, or comma-separated channels")
    p.add_argument("--params", help="hyperparameters as json, e.g. '{\"C\": 10}'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interval", type=int, default=DEFAULT_INTERVAL)
    p.add_argument("--out", type=Path, required=True, help="model json path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a zone CSV")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--interval", type=int, default=DEFAULT_INTERVAL)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
