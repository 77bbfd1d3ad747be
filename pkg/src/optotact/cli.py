"""Command-line entry point covering every pipeline stage.

Stages hand off through files only (no daemon), and all randomness fans out
from the single --seed flag, so any run is reproducible from its inputs.
Every run writes a manifest.json next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, calibration, classifier, config, features, fusion, oft, physics, tactile

_SATURATION_PREVIEW = 10


def _write_manifest(out_dir: Path, subcommand: str, args, inputs: dict, outputs: dict, started: float):
    """Atomic run manifest naming every file the run produced."""
    manifest = {
        "subcommand": subcommand,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "version": __version__,
        "wall_time_s": time.time() - started,
    }
    for path in outputs.values():
        if not Path(path).exists():
            raise FileNotFoundError(f"declared output {path} was not written")
    tmp = out_dir / ".manifest.json.tmp"
    with open(tmp, "w") as handle:
        json.dump(manifest, handle, indent=2)
    os.replace(tmp, out_dir / "manifest.json")


def _load_cfg(args) -> dict[str, str]:
    return config.load_config(args.config) if args.config else {}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = _load_cfg(args)
    structure = config.structure_from_config(cfg)
    adc = config.adc_from_config(cfg, seed=args.seed)

    schedule = np.loadtxt(args.schedule, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    if schedule.size == 0 or schedule.shape[1] != 4:
        raise ValueError(f"schedule {args.schedule} must have columns t_ns,fz,mx,my")
    timestamps = schedule[:, 0].astype(np.int64)
    wrenches = schedule[:, 1:4]

    counts, saturated = physics.simulate_counts(wrenches, structure, adc, adc.make_rng())
    if saturated.any():
        rows = np.flatnonzero(saturated)
        preview = ", ".join(str(r) for r in rows[:_SATURATION_PREVIEW])
        more = "" if len(rows) <= _SATURATION_PREVIEW else f" (+{len(rows) - _SATURATION_PREVIEW} more)"
        print(f"warning: {len(rows)} saturated rows: {preview}{more}", file=sys.stderr)

    out = _out_dir(args)
    oft_path = out / "force.oft"
    log_path = out / "calibration_log.csv"
    oft.write_oft(oft_path, timestamps, counts, wrenches)
    calibration.CalibrationLog(timestamps, counts, wrenches).save_csv(log_path)
    print(f"simulated {len(timestamps)} frames -> {oft_path}, {log_path}")
    _write_manifest(
        out,
        "simulate",
        args,
        {"schedule": args.schedule},
        {"oft": oft_path, "log": log_path},
        started,
    )
    return 0


def _split_log(log: calibration.CalibrationLog, ratio: float, seed: int):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(log))
    n_train = int(np.floor(ratio * len(log)))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def cmd_calibrate(args) -> int:
    started = time.time()
    log = calibration.CalibrationLog.load_csv(args.log)
    zero_rows = (log.wrenches == 0).all(axis=1)
    if zero_rows.any():
        baseline = calibration.tare(log.counts[zero_rows].astype(float))
    else:
        baseline = np.zeros(3)
        print("note: no zero-load rows found, using a zero baseline", file=sys.stderr)

    if args.split is not None:
        train_idx, val_idx = _split_log(log, args.split, args.seed)
        matrix, _ = calibration.fit_calibration(
            log.counts[train_idx].astype(float), log.wrenches[train_idx], baseline
        )
        report = calibration.evaluate(
            matrix, log.counts[val_idx].astype(float), log.wrenches[val_idx]
        )
        print(f"held-out report ({len(val_idx)} rows):")
    else:
        matrix, report = calibration.fit_calibration(
            log.counts.astype(float), log.wrenches, baseline
        )
        print("training report:")
    print(report.as_text())

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    matrix.save(out)
    _write_manifest(
        out.parent, "calibrate", args, {"log": args.log}, {"matrix": out}, started
    )
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    matrix = calibration.CalibrationMatrix.load(args.matrix)
    log = calibration.CalibrationLog.load_csv(args.log)
    report = calibration.evaluate(matrix, log.counts.astype(float), log.wrenches)
    print(report.as_text())
    outputs = {}
    if args.out:
        report.to_csv(args.out)
        outputs["report"] = args.out
        _write_manifest(
            Path(args.out).parent, "evaluate", args,
            {"matrix": args.matrix, "log": args.log}, outputs, started,
        )
    return 0


def cmd_render(args) -> int:
    started = time.time()
    grid = _parse_grid(args.grid)
    samples = tactile.generate_dataset(args.n_per_class, seed=args.seed, grid=grid)
    out = _out_dir(args)
    manifest = tactile.write_dataset(out, samples)
    print(f"rendered {len(samples)} images ({args.n_per_class} per class) -> {out}")
    _write_manifest(out, "render", args, {}, {"dataset_manifest": manifest}, started)
    return 0


def cmd_train(args) -> int:
    started = time.time()
    images = tactile.load_dataset(args.data)
    labels = [img.label for img in images]
    train_idx, val_idx = tactile.stratified_split(labels, args.split, args.seed)

    X = features.extract_feature_matrix(images)
    y = np.asarray(labels)
    clf = classifier.SoftmaxShapeClassifier(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr, seed=args.seed
    ).fit(X[train_idx], y[train_idx])

    predictions = clf.predict(X[val_idx])
    accuracy = float(np.mean(predictions == y[val_idx]))
    print(f"accuracy: {accuracy:.4f} ({int(accuracy * len(val_idx))}/{len(val_idx)} held-out)")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    classifier.save_model(out, clf)
    confusion_path = out.with_name(out.stem + "_confusion.csv")
    counts = classifier.confusion_matrix(y[val_idx], predictions, clf.classes_)
    classifier.save_confusion_csv(confusion_path, counts, clf.classes_)
    _write_manifest(
        out.parent, "train", args, {"data": args.data},
        {"model": out, "confusion": confusion_path}, started,
    )
    return 0


def cmd_classify(args) -> int:
    clf = classifier.load_model(args.model)
    image = tactile.read_ppm(args.image)
    label, probs = classifier.classify_image(clf, image)
    print(f"label: {label}")
    for name, p in sorted(zip(clf.classes_, probs), key=lambda pair: -pair[1]):
        print(f"  {name:<20}{p:.4f}")
    return 0


def cmd_fuse(args) -> int:
    started = time.time()
    cfg = _load_cfg(args)
    fusion_cfg = config.fusion_from_config(
        cfg, mode=args.mode, force_rate=args.rate_force, image_rate=args.rate_image
    )
    structure = config.structure_from_config(cfg)
    adc = config.adc_from_config(cfg, seed=args.seed)
    scenario = fusion.load_scenario(args.scenario)

    result = fusion.run_pipeline(fusion_cfg, scenario, args.duration, structure, adc)
    out = _out_dir(args)
    outputs = {}

    if result.force_log:
        force_path = out / "force.oft"
        oft.write_oft(
            force_path,
            [f.timestamp for f in result.force_log],
            [f.reading.counts for f in result.force_log],
            [f.wrench.as_array() for f in result.force_log],
        )
        outputs["force"] = force_path

    if result.image_log:
        image_dir = out / "images"
        image_dir.mkdir(exist_ok=True)
        index_path = out / "images.csv"
        with open(index_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["path", "t_ns", "label"])
            for i, frame in enumerate(result.image_log):
                name = f"frame_{i:05d}.ppm"
                tactile.write_ppm(image_dir / name, frame.image)
                writer.writerow([f"images/{name}", frame.timestamp, frame.label or ""])
        outputs["images"] = index_path

    if fusion_cfg.mode is fusion.Mode.COMBINED:
        fused_path = out / "fused.csv"
        fusion.save_fused_csv(fused_path, result.fused)
        outputs["fused"] = fused_path

    stats_path = out / "stats.json"
    with open(stats_path, "w") as handle:
        json.dump(result.stats.as_dict(), handle, indent=2)
    outputs["stats"] = stats_path

    stats = result.stats
    print(
        f"fused run ({fusion_cfg.mode.value}): {stats.force_frames} force frames, "
        f"{stats.image_frames} images, {stats.fused_records} fused"
    )
    _write_manifest(out, "fuse", args, {"scenario": args.scenario}, outputs, started)
    return 0


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        width, height = (int(part) for part in text.lower().split("x"))
        return width, height
    except ValueError:
        raise ValueError(f"grid must look like 160x120, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optotact",
        description="Simulate, calibrate, render, classify and fuse the dual-mode sensor.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="run the physics chain over a wrench schedule")
    p.add_argument("--schedule", required=True, help="CSV with columns t_ns,fz,mx,my")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit a calibration matrix from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="matrix CSV path")
    p.add_argument("--split", type=float, default=None, help="hold out 1-split for the report")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="score a calibration matrix against a log")
    p.add_argument("--matrix", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", default=None, help="optional report CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="generate a labelled synthetic tactile dataset")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--grid", default="160x120")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train", help="train the shape classifier on a rendered dataset")
    p.add_argument("--data", required=True, help="dataset directory with manifest.csv")
    p.add_argument("--out", required=True, help="model CSV path")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify one PPM image")
    p.add_argument("--model", required=True)
    p.add_argument("image")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("fuse", help="run the dual-rate pipeline over a scenario")
    p.add_argument("--scenario", required=True, help="CSV with t_s,fz,mx,my,shape,depth")
    p.add_argument("--config", default=None)
    p.add_argument("--mode", default=None, help="ForceOnly, TextureOnly or Combined")
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--rate-force", type=float, default=None)
    p.add_argument("--rate-image", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fuse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # clean nonzero exit with the cause on stderr
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
