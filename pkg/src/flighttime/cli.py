"""File-based pipeline commands.

Every subcommand validates its inputs, writes its outputs plus a
``manifest.json`` (command, config snapshot, input hashes, seed, version,
timestamps) into the output directory, and exits nonzero on failure: 2 for
usage errors (argparse), 1 for data errors, which are reported as one JSON
line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

import flighttime
from flighttime import evaluate as ev
from flighttime import fuel as fuelmod
from flighttime.features.dataset import DatasetSchema, load_split, save_split
from flighttime.features.network import NetworkIndex
from flighttime.ingest.metar import MetarArchive
from flighttime.ingest.records import load_flight_records, parse_utc
from flighttime.manifest import RunManifest
from flighttime.model import ModelConfig, SpatialWeightedRnn
from flighttime.pipeline import (
    DatasetBundle,
    bundle_from_dir,
    load_world_dir,
    model_config_for,
)
from flighttime.synth import ScenarioSpec, generate, load_metadata, write_world
from flighttime.train import (
    SWEEP_TIMESTEPS,
    TrainConfig,
    timestep_sweep,
    train_full,
    train_two_step,
)


def _fail(exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return 1


def _manifest(args, command: str, config: dict) -> RunManifest:
    return RunManifest(
        command=command,
        argv=sys.argv[1:],
        config=config,
        seed=getattr(args, "seed", None),
        tool_version=flighttime.__version__,
    )


def _load_train_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = TrainConfig.from_text(fh.read())
    for key in ("seed", "threads", "n_t"):
        if getattr(args, key, None) is not None:
            cfg = replace(cfg, **{key: getattr(args, key)})
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, step2_epochs=args.epochs)
    if getattr(args, "step1_epochs", None) is not None:
        cfg = replace(cfg, step1_epochs=args.step1_epochs)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- synth ----


def cmd_synth(args) -> int:
    spec = ScenarioSpec(
        n_airports=args.airports,
        n_od=args.ods,
        days=args.days,
        flights_per_od_per_day=args.flights_per_od,
        seed=args.seed,
    )
    manifest = _manifest(args, "synth", spec.__dict__ | {"aircraft_types": list(spec.aircraft_types)})
    world = generate(spec)
    paths = write_world(world, args.out)
    manifest.write(args.out)
    print(json.dumps({"out": args.out, "flights": len(world.records), **{k: v for k, v in paths.items()}}))
    return 0


# ---------------------------------------------------------- parse-metar ----


def cmd_parse_metar(args) -> int:
    anchor = parse_utc(args.anchor)
    archive, report = MetarArchive.from_file(args.input, anchor)
    manifest = _manifest(args, "parse-metar", {"anchor": args.anchor})
    manifest.add_input(args.input)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "observations.csv")
    fields = ("wind_direction", "wind_speed", "wind_gust", "cloud_cover",
              "cloud_height_ft", "visibility_m", "vmc")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("station,time," + ",".join(fields) + "\n")
        for station in archive.stations:
            for when, obs in archive._series[station]:
                vec = obs.to_vector()
                fh.write(
                    station + "," + when.strftime("%Y-%m-%dT%H:%M:%SZ") + ","
                    + ",".join(repr(float(v)) for v in vec) + "\n"
                )
    manifest.write(args.out)
    print(json.dumps({"reports": report.reports_out, "malformed": report.malformed, "out": out_path}))
    return 0 if report.reports_out else 1


# ------------------------------------------------------- build-features ----


def _features_paths(features_dir):
    return {
        "schema": os.path.join(features_dir, "schema.json"),
        "index": os.path.join(features_dir, "index.json"),
        "train": os.path.join(features_dir, "train.csv"),
        "val": os.path.join(features_dir, "val.csv"),
        "test": os.path.join(features_dir, "test.csv"),
    }


def cmd_build_features(args) -> int:
    manifest = _manifest(args, "build-features", {"n_t": args.nt, "seed": args.seed})
    manifest.add_input(args.world)
    bundle = bundle_from_dir(args.world, args.nt, args.seed)
    os.makedirs(args.out, exist_ok=True)
    paths = _features_paths(args.out)
    bundle.schema.save(paths["schema"])
    with open(paths["index"], "w", encoding="utf-8") as fh:
        json.dump(bundle.index.to_json(), fh, sort_keys=True)
    for split in ("train", "val", "test"):
        save_split(paths[split], getattr(bundle, split), bundle.schema, split)
    manifest.write(args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "index_hash": bundle.index.fingerprint,
                "train": bundle.train.n,
                "val": bundle.val.n,
                "test": bundle.test.n,
                "skipped_no_history": bundle.assembly.skipped_no_history,
                "skipped_unknown_od": bundle.assembly.skipped_unknown_od,
            }
        )
    )
    return 0


def _load_features(features_dir):
    paths = _features_paths(features_dir)
    schema = DatasetSchema.load(paths["schema"])
    with open(paths["index"], "r", encoding="utf-8") as fh:
        index = NetworkIndex.from_json(json.load(fh))
    splits = {s: load_split(paths[s], schema) for s in ("train", "val", "test")}
    return schema, index, splits


# ---------------------------------------------------------------- train ----


def cmd_train(args) -> int:
    cfg = _load_train_config(args)
    schema, index, splits = _load_features(args.features)
    bundle = DatasetBundle(
        train=splits["train"], val=splits["val"], test=splits["test"],
        schema=schema, index=index, assembly=None, labels=None, splits=None,
    )
    mode = "ablation" if args.ablation_no_swl else ("two_step" if args.two_step else "single_step")
    manifest = _manifest(args, "train", {"mode": mode, **json.loads(json.dumps(cfg.__dict__))})
    manifest.add_input(args.features)
    model_config = model_config_for(bundle, cfg, with_swl=not args.ablation_no_swl)
    if mode == "two_step":
        model, history, _ = train_two_step(
            bundle.train, bundle.val, model_config, cfg,
            index_hash=index.fingerprint, schema_hash=schema.fingerprint,
        )
    else:
        model, history = train_full(
            bundle.train, bundle.val, None, model_config, cfg,
            index_hash=index.fingerprint, schema_hash=schema.fingerprint,
        )
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "model.ckpt")
    model.save_checkpoint(ckpt)
    with open(os.path.join(args.out, "history.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,val_rmse\n")
        for row in history:
            fh.write(
                f"{row['epoch']},{row['train_loss']!r},"
                f"{row.get('val_loss', '')!r},{row.get('val_rmse', '')!r}\n".replace("''", "")
            )
    with open(os.path.join(args.out, "train_config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    manifest.write(args.out)
    best = min((h.get("val_rmse", float("inf")) for h in history), default=float("nan"))
    print(json.dumps({"checkpoint": ckpt, "epochs": len(history), "best_val_rmse": best, "mode": mode}))
    return 0


# ------------------------------------------------------------- evaluate ----


def cmd_evaluate(args) -> int:
    schema, index, splits = _load_features(args.features)
    test = splits["test"]
    manifest = _manifest(args, "evaluate", {"models": args.model or [], "fps": args.fps, "lasso": args.lasso})
    manifest.add_input(args.features)
    preds: dict[str, np.ndarray] = {}
    for spec_arg in args.model or []:
        name, _, path = spec_arg.partition("=")
        if not path:
            raise ValueError(f"--model expects NAME=CHECKPOINT, got {spec_arg!r}")
        manifest.add_input(path)
        model, _ = SpatialWeightedRnn.load_checkpoint(path, expect_index_hash=index.fingerprint)
        preds[name] = model.predict(test)
    if args.fps:
        preds["fps"] = ev.fps_baseline(test)
    if args.lasso:
        model = ev.lasso_fit_validated(
            splits["train"].flattened_features(), splits["train"].y,
            splits["val"].flattened_features(), splits["val"].y,
        )
        preds["lasso"] = ev.lasso_predict(model, test.flattened_features())
    if not preds:
        raise ValueError("nothing to evaluate: give --model, --fps, or --lasso")
    os.makedirs(args.out, exist_ok=True)
    pred_path = os.path.join(args.out, "predictions.csv")
    ev.save_predictions(pred_path, ev.prediction_rows(test, preds))
    paths = ev.emit_reports(args.out, test, preds, index)
    manifest.write(args.out)
    print(json.dumps({"predictions": pred_path, **paths}))
    return 0


# --------------------------------------------------------------- report ----


def cmd_report(args) -> int:
    schema, index, splits = _load_features(args.features)
    test = splits["test"]
    manifest = _manifest(args, "report", {})
    manifest.add_input(args.predictions)
    rows = ev.load_predictions(args.predictions)
    by_method: dict[str, dict[str, float]] = {}
    for row in rows:
        by_method.setdefault(row["method"], {})[row["flight_id"]] = row["y_pred"]
    preds = {}
    for method, mapping in by_method.items():
        missing = [fid for fid in test.ids if fid not in mapping]
        if missing:
            raise ValueError(f"predictions for method {method!r} missing {len(missing)} test flights")
        preds[method] = np.array([mapping[fid] for fid in test.ids])
    paths = ev.emit_reports(args.out, test, preds, index)
    manifest.write(args.out)
    print(json.dumps(paths))
    return 0


# ------------------------------------------------------------- sweep-nt ----


def cmd_sweep_nt(args) -> int:
    cfg = _load_train_config(args)
    values = tuple(int(v) for v in args.values.split(","))
    manifest = _manifest(args, "sweep-nt", {"values": list(values), **cfg.__dict__})
    manifest.add_input(args.world)

    bundles: dict[int, DatasetBundle] = {}

    def build(n_t: int):
        if n_t not in bundles:
            bundles[n_t] = bundle_from_dir(args.world, n_t, cfg.seed)
        return bundles[n_t].train, bundles[n_t].val

    def mc_for(n_t: int) -> ModelConfig:
        return model_config_for(bundles[n_t], cfg)

    rows = timestep_sweep(build, mc_for, cfg, values, two_step=args.two_step)
    os.makedirs(args.out, exist_ok=True)
    table = os.path.join(args.out, "sweep_nt.csv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("n_t,val_rmse\n")
        for row in rows:
            fh.write(f"{row['n_t']},{row['val_rmse']!r}\n")
    manifest.write(args.out)
    print(json.dumps({"table": table, "rows": rows}))
    return 0


# ------------------------------------------------------------- fuel-sim ----


def cmd_fuel_sim(args) -> int:
    records, _ = load_flight_records(os.path.join(args.world, "flights.csv"))
    metadata = load_metadata(args.world)
    manifest = _manifest(args, "fuel-sim", {"policy": args.policy, "method": args.method})
    manifest.add_input(args.predictions)
    rows = ev.load_predictions(args.predictions)
    predictions = {
        r["flight_id"]: r["y_pred"] for r in rows if r["method"] == args.method
    }
    if not predictions:
        raise ValueError(f"no predictions for method {args.method!r} in {args.predictions}")
    policies = (
        list(fuelmod.POLICIES.values())
        if args.policy == "both"
        else [fuelmod.POLICIES[args.policy.replace("-", "_")]]
    )
    results = {
        p.name: fuelmod.plan_fleet(records, predictions, p, use_raw_consumption=args.raw_consumption)
        for p in policies
    }
    summary = fuelmod.fleet_summary(records, results, fuelmod.hub_direction_group(metadata["hub"]))
    paths = fuelmod.write_fuel_reports(args.out, records, results, summary)
    manifest.write(args.out)
    print(json.dumps({**paths, "fleet": summary.fleet}))
    return 0


# ----------------------------------------------------------------- main ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flighttime",
        description="Flight-time prediction pipeline: synthetic worlds, features, "
        "training, evaluation, and fuel-loading simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--airports", type=int, default=10)
    p.add_argument("--ods", type=int, default=20)
    p.add_argument("--days", type=int, default=60)
    p.add_argument("--flights-per-od", type=int, default=6)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("parse-metar", help="decode a METAR stream to a table")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--anchor", default="2017-01-01T00:00:00Z",
                   help="period start used to resolve day-of-month issue times")
    p.set_defaults(fn=cmd_parse_metar)

    p = sub.add_parser("build-features", help="assemble, split, and encode datasets")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nt", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_build_features)

    p = sub.add_parser("train", help="train the model on built features")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--two-step", action="store_true", help="per-route pretraining, then frozen-bank training")
    group.add_argument("--single-step", action="store_true", help="one-stage joint training (default)")
    p.add_argument("--ablation-no-swl", action="store_true", help="drop the spatial layers entirely")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--epochs", type=int, help="override main-stage epochs")
    p.add_argument("--step1-epochs", type=int, help="override per-route pretraining epochs")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="predict on the test split and emit reports")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", action="append", metavar="NAME=CKPT")
    p.add_argument("--fps", action="store_true", help="include the planner baseline")
    p.add_argument("--lasso", action="store_true", help="include the L1 linear baseline")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="regenerate report tables from a predictions file")
    p.add_argument("--features", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("sweep-nt", help="window-length sensitivity sweep")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--values", default=",".join(str(v) for v in SWEEP_TIMESTEPS))
    p.add_argument("--two-step", action="store_true")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--step1-epochs", type=int)
    p.set_defaults(fn=cmd_sweep_nt)

    p = sub.add_parser("fuel-sim", help="apply fuel-loading policies to predictions")
    p.add_argument("--world", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", choices=["pro-efficiency", "pro-safety", "both"], default="both")
    p.add_argument("--method", default="swrnn", help="prediction method name to plan with")
    p.add_argument("--raw-consumption", action="store_true",
                   help="compare raw recorded consumption against reserve (no weight correction)")
    p.set_defaults(fn=cmd_fuel_sim)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
