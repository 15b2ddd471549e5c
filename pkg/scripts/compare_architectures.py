"""Run every architecture on the same plan and tabulate tracking errors and c_et.

    python scripts/compare_architectures.py --duration 10 --out results/compare
"""
import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from dcmbench.harness import export, load_config, run_experiment, with_overrides

ARCHS = ("inst-pos", "inst-vel", "inst-trq", "mpc-pos", "mpc-vel", "mpc-trq")
COLUMNS = ("arch", "fell", "dcm_error_max", "com_error_max", "zmp_error_max", "walking_velocity", "c_et",
           "simplified_failures", "wholebody_failures")


def run_one(args):
    arch, cfg, out = args
    r = run_experiment(with_overrides(cfg, arch=arch))
    export(r.log, r.metrics, out / arch, r.references.footsteps, extra={"arch": arch})
    return {"arch": arch, **{k: getattr(r.metrics, k) for k in COLUMNS[1:]}}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--speed", type=float, default=0.15)
    p.add_argument("--archs", default=",".join(ARCHS))
    p.add_argument("--out", type=Path, default=Path("results/compare"))
    p.add_argument("--jobs", type=int)
    a = p.parse_args()
    cfg = with_overrides(load_config(a.config), duration=a.duration, speed=a.speed)
    archs = [s.strip() for s in a.archs.split(",") if s.strip()]
    with ProcessPoolExecutor(max_workers=a.jobs) as pool:
        rows = list(pool.map(run_one, [(arch, cfg, a.out) for arch in archs]))
    a.out.mkdir(parents=True, exist_ok=True)
    with open(a.out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        cet = "n/a" if r["c_et"] is None else f"{r['c_et']:.3f}"
        print(f"{r['arch']:9s} fell={int(r['fell'])} dcm={r['dcm_error_max']:.2e} com={r['com_error_max']:.2e} "
              f"c_et={cet}")


if __name__ == "__main__":
    main()
