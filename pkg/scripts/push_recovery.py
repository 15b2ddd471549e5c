"""Push the LIPM plant's DCM and compare commanded-ZMP feasibility of both simplified controllers.

    python scripts/push_recovery.py --impulses 0.02,0.04,0.06,0.08,0.1
"""
import argparse
from dataclasses import replace

import numpy as np

from dcmbench.harness import Disturbances, Impulse, load_config, run_experiment, with_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--impulses", default="0.02,0.04,0.06,0.08,0.1", help="forward DCM impulses (m)")
    p.add_argument("--time", type=float, default=2.0, help="impulse time (s)")
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--margin", type=float, default=0.0, help="MPC polygon margin (m)")
    a = p.parse_args()
    base = load_config()
    base = replace(base, plant="lipm", duration=a.duration, mpc=replace(base.mpc, polygon_margin=a.margin))
    print("impulse  arch      fell  ticks outside  max violation (m)")
    for mag in (float(v) for v in a.impulses.split(",")):
        cfg = replace(base, disturbances=Disturbances(impulses=(Impulse(a.time, "dcm", (mag, 0.0)),)))
        for arch in ("inst-pos", "mpc-pos"):
            r = run_experiment(with_overrides(cfg, arch=arch))
            viol = r.log.column("zmp_cmd_violation")
            print(f"{mag:7.3f}  {arch:8s}  {int(r.fell):4d}  {int(np.sum(viol > 1e-6)):13d}  {np.max(viol):.3g}")


if __name__ == "__main__":
    main()
