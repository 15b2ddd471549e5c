"""Command-line entry point: ``dcmbench {plan,run,metrics,sweep}``.

Exit codes: 0 on success, 2 when a run falls, 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml

from ..planner import dump_footsteps
from ..rigidbody import load_model, mini_biped
from .config import dump_config, load_config, with_overrides
from .io import export, read_log, write_log, write_metrics
from .metrics import compute_metrics
from .runner import ExperimentAborted, plan, run_experiment

log = logging.getLogger("dcmbench")

EXIT_OK, EXIT_ERROR, EXIT_FALL = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment configuration (merged over the defaults)")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--arch", help="architecture, e.g. inst-pos, mpcxtrq")
    p.add_argument("--speed", type=float, help="walking speed (m/s)")
    p.add_argument("--duration", type=float, help="simulated time (s); default runs the whole plan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcmbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan footsteps and references; writes footsteps.txt and references.csv")
    _common(p)
    p = sub.add_parser("run", help="run one experiment; writes log.csv, metrics.txt, footsteps.txt, config.yaml")
    _common(p)
    p = sub.add_parser("metrics", help="recompute metrics from an existing log.csv")
    p.add_argument("log", type=Path, help="log.csv path")
    p.add_argument("--config", type=Path, help="configuration used for the run (for the model mass)")
    p.add_argument("--out", type=Path, help="write metrics.txt here instead of printing")
    p = sub.add_parser("sweep", help="run a grid of speeds and step durations in parallel; writes sweep.csv")
    _common(p)
    p.add_argument("--speeds", type=_floats, default=[0.05, 0.10, 0.15, 0.20], help="comma-separated speeds (m/s)")
    p.add_argument("--step-times", type=_floats, default=None,
                   help="comma-separated shortest step durations (s); each point allows [t, t + time_grid]")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    return parser


def _config(args):
    cfg = load_config(args.config)
    return with_overrides(cfg, arch=getattr(args, "arch", None), seed=getattr(args, "seed", None),
                          speed=getattr(args, "speed", None), duration=getattr(args, "duration", None),
                          output=str(args.out) if getattr(args, "out", None) else None)


def _out_dir(cfg, default: str) -> Path:
    return Path(cfg.output) if cfg.output else Path(default)


def cmd_plan(args) -> int:
    cfg = _config(args)
    cfg.validate()
    refs = plan(cfg)
    out = _out_dir(cfg, "plan")
    out.mkdir(parents=True, exist_ok=True)
    dump_footsteps(refs.footsteps, out / "footsteps.txt")
    refs.to_csv(out / "references.csv")
    print(f"{len(refs.footsteps)} footsteps, {refs.duration:.2f} s of references -> {out}")
    return EXIT_OK


def _model(cfg):
    return load_model(cfg.model) if cfg.model else mini_biped()


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg, "run")
    try:
        result = run_experiment(cfg)
    except ExperimentAborted as e:
        log.error("experiment aborted: %s", e)
        if len(e.log):
            out.mkdir(parents=True, exist_ok=True)
            write_log(e.log, out / "log.csv")
            log.error("partial log written to %s", out / "log.csv")
        return EXIT_ERROR
    export(result.log, result.metrics, out, result.references.footsteps,
           extra={"arch": cfg.arch, "plant": cfg.plant, "seed": cfg.seed})
    dump_config(cfg, out / "config.yaml")
    m = result.metrics
    status = f"FELL at t = {m.fall_time:.2f} s" if m.fell else "completed"
    print(f"{cfg.arch} on {cfg.plant}: {status}; max DCM error {m.dcm_error_max:.4g} m, "
          f"max CoM error {m.com_error_max:.4g} m, velocity {m.walking_velocity}, c_et {m.c_et} -> {out}")
    return EXIT_FALL if m.fell else EXIT_OK


def cmd_metrics(args) -> int:
    cfg = load_config(args.config)
    tlog = read_log(args.log)
    m = compute_metrics(tlog, _model(cfg).total_mass, cfg.period, cfg.planner.bounds.lateral_offset)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_metrics(m, args.out / "metrics.txt")
    else:
        print(yaml.safe_dump(m.to_dict(), sort_keys=False), end="")
    return EXIT_OK


SWEEP_COLUMNS = ("arch", "plant", "speed", "step_time", "status", "fell", "fall_time", "dcm_error_max",
                 "com_error_max", "walking_velocity", "c_et", "wholebody_failures")


def _sweep_point(cfg, speed: float, step_time: float | None) -> dict:
    cfg = with_overrides(cfg, speed=speed)
    if step_time is not None:
        b = cfg.planner.bounds
        cfg = replace(cfg, planner=replace(cfg.planner, bounds=replace(b, t_min=step_time,
                                                                       t_max=step_time + b.time_grid)))
    row = {"arch": cfg.arch, "plant": cfg.plant, "speed": speed, "step_time": step_time}
    try:
        m = run_experiment(cfg).metrics
    except Exception as e:  # one failed point must not stop the sweep
        row.update(status=f"error: {e}".replace("\n", " "))
        return row
    row.update(status="fell" if m.fell else "ok", fell=int(m.fell), fall_time=m.fall_time,
               dcm_error_max=m.dcm_error_max, com_error_max=m.com_error_max,
               walking_velocity=m.walking_velocity, c_et=m.c_et, wholebody_failures=m.wholebody_failures)
    return row


def cmd_sweep(args) -> int:
    cfg = _config(args)
    cfg.validate()
    out = _out_dir(cfg, "sweep")
    grid = [(v, st) for v in args.speeds for st in (args.step_times or [None])]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(_sweep_point, [cfg] * len(grid), *zip(*grid)))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r[k]) for k in SWEEP_COLUMNS})
    ok = sum(r["status"] == "ok" for r in rows)
    print(f"{ok}/{len(rows)} grid points walked without falling -> {out / 'sweep.csv'}")
    return EXIT_OK if all(not r["status"].startswith("error") for r in rows) else EXIT_ERROR


COMMANDS = {"plan": cmd_plan, "run": cmd_run, "metrics": cmd_metrics, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, TypeError) as e:
        log.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
