"""Batch command-line harness for the walking-robustness pipeline.

Subcommands wrap the library modules: `synthesize` produces a gait file,
`simulate` rolls it out and exports a trajectory, `certify` computes the
forward-invariance certificate, and `optimize` runs the simulation-in-the-
loop search. Configuration comes from an optional TOML file plus flag
overrides; `STEP2STEP_SEED` overrides every configured seed. All outputs
are deterministic given config + seed and carry the config hash.

Exit codes: 0 success, 1 usage/config error, 2 domain failure
(synthesis / fixed point / certification), 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import model as model_mod
from . import sim as sim_mod
from .control import TrackingGains, closed_loop_field
from .errors import StepRobustError
from .gait import EssentialConstraints, load_gait, save_gait, gait_to_dict
from .invariance import BarrierParams, certify, save_certificate, samples_to_csv
from .poincare import default_reduced_chart, find_fixed_point
from .synth import (LoopConfig, SearchBounds, optimize_loop, rank,
                    synthesize_gait, synthesis_report)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_INTERNAL = 3

DEFAULT_CONFIG = {
    "model": {"name": "fivelink"},
    "integrator": {"rtol": 1e-9, "atol": 1e-11},
    "controller": {"kp": 100.0, "kd": 20.0, "epsilon": 1.0,
                   "u_max": 150.0, "mode": "fblin"},
    "barrier": {"alpha": 0.05, "r_max": 2.0, "n_samples": 200, "seed": 0},
    "synthesis": {"step_length": 0.30, "step_duration": 0.55,
                  "step_height": 0.05, "degree": 7, "n_starts": 5, "seed": 0},
    "loop": {"iterations": 10, "gaits_per_iteration": 5, "seed": 0,
             "stability_threshold": 50, "synth_starts": 5,
             "synth_max_nfev": 200,
             "step_length": [0.20, 0.45], "step_duration": [0.40, 0.80],
             "step_height": [0.03, 0.09]},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None) -> dict:
    cfg = {k: dict(v) for k, v in DEFAULT_CONFIG.items()}
    if path is not None:
        with open(path, "rb") as fh:
            cfg = _merge(cfg, tomllib.load(fh))
    env_seed = os.environ.get("STEP2STEP_SEED")
    if env_seed is not None:
        seed = int(env_seed)
        cfg["barrier"]["seed"] = seed
        cfg["synthesis"]["seed"] = seed
        cfg["loop"]["seed"] = seed
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def _model(cfg: dict):
    section = cfg["model"]
    if "path" in section:
        return model_mod.load_model(section["path"])
    return model_mod.get_model(section["name"])


def _gains(cfg: dict) -> TrackingGains:
    c = cfg["controller"]
    return TrackingGains(kp=c["kp"], kd=c["kd"], epsilon=c["epsilon"],
                         u_max=c["u_max"], mode=c["mode"])


def _sim_options(cfg: dict) -> sim_mod.SimOptions:
    c = cfg["integrator"]
    return sim_mod.SimOptions(rtol=c["rtol"], atol=c["atol"])


def _barrier(cfg: dict) -> BarrierParams:
    c = cfg["barrier"]
    return BarrierParams(alpha=c["alpha"], r_max=c["r_max"],
                         n_samples=c["n_samples"], seed=c["seed"])


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synthesize(args, cfg) -> int:
    model = _model(cfg)
    syn = cfg["synthesis"]
    essential = EssentialConstraints(
        step_length=args.step_length if args.step_length is not None else syn["step_length"],
        step_duration=args.step_duration if args.step_duration is not None else syn["step_duration"],
        step_height=args.step_height if args.step_height is not None else syn["step_height"],
    )
    if essential.step_length > 2.0 * model.leg_length:
        print(f"error: step length {essential.step_length} exceeds the "
              f"kinematic workspace (2 x leg length = {2*model.leg_length})",
              file=sys.stderr)
        return EXIT_DOMAIN
    gait = synthesize_gait(model, essential, degree=syn["degree"],
                           gains=_gains(cfg), n_starts=syn["n_starts"],
                           seed=syn["seed"])
    doc = gait_to_dict(gait)
    doc["config_hash"] = config_hash(cfg)
    _write_json(Path(args.out), doc)
    report = synthesis_report(model, gait, _gains(cfg))
    print(f"gait written to {args.out}")
    for key in ("hzd_residual", "periodicity_residual", "step_length_error",
                "step_height_error", "duration_error_rel", "min_clearance"):
        print(f"  {key}: {report[key]:.3e}")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    model = _model(cfg)
    gait = load_gait(args.gait)
    field = closed_loop_field(model, gait, _gains(cfg))
    options = _sim_options(cfg)
    result = sim_mod.rollout(field, model, gait.fixed_point, args.steps, options)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    table = sim_mod.resample_rollout(result, field, dt=1e-3)
    n = model.n_q
    header = (["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)]
              + [f"u{i}" for i in range(model.n_u)] + ["h"])
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(table["t"])):
            row = ([f"{table['t'][k]:.17g}"]
                   + [f"{v:.17g}" for v in table["x"][k]]
                   + [f"{v:.17g}" for v in table["u"][k]]
                   + [f"{table['h'][k]:.17g}"])
            writer.writerow(row)
    summary = {
        "config_hash": config_hash(cfg),
        "gait_id": gait.gait_id,
        "steps_requested": args.steps,
        "steps_taken": result.steps_taken,
        "termination": result.termination,
        "total_time": float(sum(seg.duration for seg in result.segments)),
    }
    _write_json(out_dir / "summary.json", summary)
    print(f"{result.steps_taken} steps, termination={result.termination}; "
          f"trajectory.csv and summary.json in {out_dir}")
    return EXIT_OK


def cmd_certify(args, cfg) -> int:
    model = _model(cfg)
    gait = load_gait(args.gait)
    field = closed_loop_field(model, gait, _gains(cfg))
    options = _sim_options(cfg)
    fp = find_fixed_point(field, model, gait.fixed_point, options)
    chart = default_reduced_chart(model, gait, fp.x_star)
    cert = certify(field, model, chart, _barrier(cfg), options,
                   gait_id=gait.gait_id)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cert_path = out_dir / "certificate.json"
    save_certificate(cert, cert_path, extra={"config_hash": config_hash(cfg),
                                             "spectral_radius": fp.spectral_radius})
    samples_to_csv(cert, out_dir / "samples.csv")
    print(f"r_star = {cert.r_star:.6g} (squared-radius units), "
          f"spectral radius {fp.spectral_radius:.4f}; "
          f"certificate.json and samples.csv in {out_dir}")
    return EXIT_OK


def cmd_optimize(args, cfg) -> int:
    model = _model(cfg)
    loop = cfg["loop"]
    config = LoopConfig(
        iterations=loop["iterations"],
        gaits_per_iteration=loop["gaits_per_iteration"],
        bounds=SearchBounds(step_length=tuple(loop["step_length"]),
                            step_duration=tuple(loop["step_duration"]),
                            step_height=tuple(loop["step_height"])),
        seed=loop["seed"],
        stability_threshold=loop["stability_threshold"],
        barrier=_barrier(cfg),
        synth_starts=loop["synth_starts"],
        synth_max_nfev=loop["synth_max_nfev"],
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history, gaits = None, None
    if args.resume:
        with open(args.resume) as fh:
            history = [json.loads(line) for line in fh if line.strip()]
        gaits = {}
        for rec in history:
            if rec.get("synthesized"):
                path = out_dir / f"gait_{rec['gait_id']}.json"
                if path.exists():
                    gaits[rec["gait_id"]] = load_gait(path)

    result = optimize_loop(model, config, objective=args.objective,
                           gains=_gains(cfg), options=_sim_options(cfg),
                           history=history, gaits=gaits)
    chash = config_hash(cfg)
    with open(out_dir / "history.jsonl", "w") as fh:
        for rec in result["history"]:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    for gid, gait in sorted(result["gaits"].items()):
        doc = gait_to_dict(gait)
        doc["config_hash"] = chash
        _write_json(out_dir / f"gait_{gid}.json", doc)
    best = result["best_score"]
    if best is None or result["best_gait"] is None:
        print("no candidate synthesized successfully", file=sys.stderr)
        return EXIT_DOMAIN
    doc = gait_to_dict(result["best_gait"])
    doc["config_hash"] = chash
    _write_json(out_dir / "best_gait.json", doc)
    _write_json(out_dir / "result.json", {
        "config_hash": chash,
        "objective": args.objective,
        "best_gait_id": best.gait_id,
        "stable": best.stable,
        "steps_taken": best.steps_taken,
        "r_star": best.r_star,
    })
    print(f"best gait {best.gait_id}: stable={best.stable}, "
          f"steps={best.steps_taken}, r_star={best.r_star}; "
          f"artifacts in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steprobust",
        description="Synthesize, simulate, and certify planar walking gaits.")
    parser.add_argument("-c", "--config", help="TOML configuration file")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker cap for batch evaluation (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="synthesize a periodic gait")
    p.add_argument("--step-length", type=float, dest="step_length")
    p.add_argument("--step-duration", type=float, dest="step_duration")
    p.add_argument("--step-height", type=float, dest="step_height")
    p.add_argument("-o", "--out", default="gait.json")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="roll out a gait and export a trajectory")
    p.add_argument("gait")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("-d", "--out-dir", default="sim_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="compute the invariance certificate")
    p.add_argument("gait")
    p.add_argument("-d", "--out-dir", default="cert_out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("optimize", help="simulation-in-the-loop gait search")
    p.add_argument("--objective", choices=("robustness", "stability_only"),
                   default="robustness")
    p.add_argument("--resume", help="history.jsonl of a previous run")
    p.add_argument("-d", "--out-dir", default="opt_out")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except StepRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # internal fault, never silent
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
