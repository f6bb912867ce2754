"""Batch command-line front-end.

Subcommands
-----------
simulate     write ground truth and measurement frames as CSV
track        run tracking passes (generated or replayed frames), write
             estimates/metrics/summary
sweep-lscan  run the same tracking configuration across several scan-window
             lengths, write per-L error and timing tables

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure.  The output directory can be overridden with the ``JTCPHD_OUT``
environment variable.  All CSV numeric fields carry 17 significant digits
so replays are bit-comparable.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigurationError, LoadedConfig, load_config
from .filter import MeasurementFrame
from .models import MEAS_DIM
from .simulator import (GroundTruth, generate_frame, generate_truth,
                        run_monte_carlo, run_single)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (np.floating,)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = os.environ.get("JTCPHD_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> LoadedConfig:
    loaded = load_config(args.config)
    if args.seed is not None or getattr(args, "l_scan", None) is not None:
        raw = dict(loaded.resolved)
        if args.seed is not None:
            raw["scenario"] = dict(raw["scenario"], seed=int(args.seed))
        if getattr(args, "l_scan", None) is not None:
            raw["filter"] = dict(
                raw["filter"],
                l_scan=None if args.l_scan == "none" else int(args.l_scan))
        # the resolved form round-trips through the parser
        from .config import parse_config

        loaded = parse_config(_resolved_to_raw(raw))
    return loaded


def _resolved_to_raw(resolved: dict) -> dict:
    """The canonical resolved form is itself a valid config document, except
    classes carry explicit matrices; rebuild the model list accordingly."""
    raw = json.loads(json.dumps(resolved))
    for cid, spec in raw["classes"].items():
        models = []
        for m in spec["models"]:
            models.append({"id": m["id"], "type": "matrix",
                           "transition": m["transition"], "noise": m["noise"]})
        spec["models"] = models
    birth = []
    for cid, entries in raw["birth"].items():
        for e in entries:
            birth.append({"mean": e["mean"], "cov": e["cov"],
                          "class_weights": {cid: e["weight"]},
                          "model_weights": e["model_weights"]})
    raw["birth"] = birth
    raw["sensor"] = {k: v for k, v in raw["sensor"].items() if v is not None}
    return raw


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    loaded = _load(args)
    scenario = loaded.scenario
    out = _out_dir(args)
    t0 = time.perf_counter()
    truth = generate_truth(scenario)

    truth_rows = []
    for tr in truth.targets:
        for s in range(tr.states.shape[0]):
            scan = tr.birth + s
            model = tr.models[s - 1] if s > 0 else None
            truth_rows.append((tr.target_id, tr.class_id, scan, model,
                               *tr.states[s]))
    _write_csv(out / "truth.csv",
               ["target", "class", "scan", "model",
                "px", "vx", "py", "vy", "pz", "vz"], truth_rows)

    frame_rows = []
    for t in range(1, scenario.duration + 1):
        frame = generate_frame(truth, t, scenario.sensor, scenario.clutter,
                               scenario.classes, scenario.seed)
        for i in range(frame.measurements.shape[0]):
            src = frame.provenance[i] if frame.provenance else None
            frame_rows.append((t, *frame.measurements[i], src))
    _write_csv(out / "frames.csv",
               ["scan", "azimuth", "elevation", "range", "source"], frame_rows)

    _write_json(out / "manifest.json", {
        "command": "simulate", "config_digest": loaded.digest,
        "seed": scenario.seed, "runs": 1, "l_values": None,
        "wall_clock_seconds": time.perf_counter() - t0,
        "outputs": ["truth.csv", "frames.csv"]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# track
# ---------------------------------------------------------------------------

def _read_frames(path: Path, duration: int) -> list[MeasurementFrame]:
    by_scan: dict[int, list] = {t: [] for t in range(1, duration + 1)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            t = int(row["scan"])
            if not 1 <= t <= duration:
                raise ConfigurationError(
                    f"{path}: frame scan {t} outside 1..{duration}")
            by_scan[t].append([float(row["azimuth"]), float(row["elevation"]),
                               float(row["range"])])
    return [MeasurementFrame(time=t, measurements=np.asarray(
        by_scan[t], dtype=float).reshape(-1, MEAS_DIM))
        for t in range(1, duration + 1)]


def _track_outputs(out: Path, loaded: LoadedConfig, results, wall: float) -> None:
    scenario = loaded.scenario
    est_rows = []
    state_rows = []
    for rec in results.records:
        for (scan, trk, birth, length, cid, cprob, w, last) in rec.est_rows:
            est_rows.append((rec.run, scan, trk, birth, length, cid, cprob, w,
                             *last))
        for trk, e in enumerate(rec.final_estimates):
            for s in range(e.length):
                state_rows.append((rec.run, trk, e.birth + s, *e.states[s]))
    _write_csv(out / "estimates.csv",
               ["run", "scan", "track", "birth", "length", "class",
                "class_prob", "weight", "px", "vx", "py", "vy", "pz", "vz"],
               est_rows)
    _write_csv(out / "states.csv",
               ["run", "track", "scan", "px", "vx", "py", "vy", "pz", "vz"],
               state_rows)

    metric_rows = []
    class_ids = list(scenario.classes.keys())
    for rec in results.records:
        for t in range(scenario.duration):
            metric_rows.append((t + 1, "tm", rec.tm[t], None, rec.run))
        for cid in class_ids:
            for t in range(scenario.duration):
                metric_rows.append((t + 1, "cardinality", rec.card_est[cid][t],
                                    cid, rec.run))
                acc = rec.class_acc[cid][t]
                if not math.isnan(acc):
                    metric_rows.append((t + 1, "class_accuracy", acc, cid,
                                        rec.run))
    _write_csv(out / "metrics.csv",
               ["scan", "metric", "value", "class", "run"], metric_rows)

    _write_json(out / "summary.json", {
        "scenario_digest": loaded.digest,
        "runs": len(results.records),
        "l_scan": loaded.filter_cfg.l_scan,
        "seed": scenario.seed,
        "per_scan": {
            "tm": results.mean_tm(),
            "card_by_class": results.mean_card(),
            "true_card_by_class": results.true_card(),
            "class_acc": results.mean_acc(),
        },
        "timing_seconds": wall,
        "mean_run_seconds": results.mean_wall_seconds(),
    })


def cmd_track(args) -> int:
    loaded = _load(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    frames = None
    if args.frames != "generate":
        frames = _read_frames(Path(args.frames), loaded.scenario.duration)
    if frames is not None:
        truth = generate_truth(loaded.scenario)
        records = [run_single(loaded.scenario, loaded.filter_cfg, r,
                              metric_cfg=loaded.metric_cfg, frames=frames,
                              truth=truth)
                   for r in range(args.runs)]
        from .simulator import RunResults

        results = RunResults(records=tuple(records))
    else:
        results = run_monte_carlo(loaded.scenario, loaded.filter_cfg,
                                  args.runs, metric_cfg=loaded.metric_cfg,
                                  workers=args.workers)
    wall = time.perf_counter() - t0
    _track_outputs(out, loaded, results, wall)
    _write_json(out / "manifest.json", {
        "command": "track", "config_digest": loaded.digest,
        "seed": loaded.scenario.seed, "runs": args.runs,
        "l_values": [loaded.filter_cfg.l_scan],
        "wall_clock_seconds": wall,
        "outputs": ["estimates.csv", "states.csv", "metrics.csv",
                    "summary.json"]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep-lscan
# ---------------------------------------------------------------------------

def cmd_sweep_lscan(args) -> int:
    l_values = []
    for tok in str(args.l_scan).split(","):
        tok = tok.strip()
        if not tok:
            continue
        l_values.append(None if tok == "none" else int(tok))
    if not l_values:
        raise ConfigurationError("sweep-lscan requires a non-empty L list")
    out = _out_dir(args)
    t0 = time.perf_counter()

    sweep_rows = []
    timing_rows = []
    digests = []
    base_args = argparse.Namespace(**vars(args))
    for l in l_values:
        base_args.l_scan = "none" if l is None else str(l)
        loaded = _load(base_args)
        digests.append(loaded.digest)
        results = run_monte_carlo(loaded.scenario, loaded.filter_cfg,
                                  args.runs, metric_cfg=loaded.metric_cfg,
                                  workers=args.workers)
        rms = results.rms_tm()
        for t in range(loaded.scenario.duration):
            sweep_rows.append((l, t + 1, rms[t]))
        timing_rows.append((l, results.mean_wall_seconds()))
    _write_csv(out / "lsweep.csv", ["L", "scan", "mean_tm"], sweep_rows)
    _write_csv(out / "timing.csv", ["L", "mean_wall_clock_seconds"],
               timing_rows)
    _write_json(out / "manifest.json", {
        "command": "sweep-lscan", "config_digest": digests,
        "seed": args.seed, "runs": args.runs,
        "l_values": l_values,
        "wall_clock_seconds": time.perf_counter() - t0,
        "outputs": ["lsweep.csv", "timing.csv"]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jtcphd",
        description="trajectory filtering with joint classification: "
                    "simulate, track, and sweep scan-window lengths")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, l_default=None):
        p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--out", default="out", help="output directory "
                       "(env JTCPHD_OUT overrides)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")

    p_sim = sub.add_parser("simulate", help="write truth.csv and frames.csv")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_trk = sub.add_parser("track", help="run tracking passes")
    common(p_trk)
    p_trk.add_argument("--runs", type=int, default=1)
    p_trk.add_argument("--l-scan", dest="l_scan", default=None,
                       help="override the scan window (integer or 'none')")
    p_trk.add_argument("--frames", default="generate",
                       help="'generate' or a frames.csv path to replay")
    p_trk.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p_trk.set_defaults(func=cmd_track)

    p_swp = sub.add_parser("sweep-lscan",
                           help="track across several scan-window lengths")
    common(p_swp)
    p_swp.add_argument("--runs", type=int, default=1)
    p_swp.add_argument("--l-scan", dest="l_scan", required=True,
                       help="comma-separated window lengths, e.g. 1,5,10,30")
    p_swp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p_swp.set_defaults(func=cmd_sweep_lscan)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
