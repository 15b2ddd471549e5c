"""Tracking errors, walking velocity and the specific energetic cost of a run."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..planner import Footstep, Side, step_length
from ..rigidbody import RobotModel, RobotState
from ..rigidbody import dynamics as dyn
from ..rigidbody import kinematics as kin

MIN_DISTANCE = 0.01


class VelocityUndefined(ValueError):
    pass


@dataclass
class Metrics:
    n_ticks: int
    duration: float
    fell: bool
    fall_time: float | None
    dcm_error_max: float
    com_error_max: float
    zmp_error_max: float
    foot_error_max: float
    walking_velocity: float | None
    step_count: int
    distance: float
    energy: float
    mass: float
    c_et: float | None
    simplified_failures: int
    wholebody_failures: int
    undefined: list = field(default_factory=list)
    series: dict = field(default_factory=dict, repr=False)

    @property
    def failure_rate(self) -> float:
        return self.wholebody_failures / self.n_ticks if self.n_ticks else 0.0

    def require_velocity(self) -> float:
        if self.walking_velocity is None:
            raise VelocityUndefined("walking velocity is undefined for this run")
        return self.walking_velocity

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k == "series":
                continue
            out[k] = v.item() if isinstance(v, np.generic) else v
        out["failure_rate"] = self.failure_rate
        return out


def positive_work(tau, sd, period: float) -> float:
    """``sum_ticks sum_joints max(tau_i sd_i, 0) T``."""
    p = np.asarray(tau, dtype=float) * np.asarray(sd, dtype=float)
    return float(np.sum(np.maximum(p, 0.0)) * period)


def specific_energetic_cost(energy: float, mass: float, distance: float) -> float:
    if distance < MIN_DISTANCE:
        raise VelocityUndefined(f"distance {distance:.3g} m is below {MIN_DISTANCE} m")
    return energy / (mass * distance)


def realized_touchdowns(log) -> list[Footstep]:
    """Foot poses at every swing-to-stance transition in the log."""
    steps = []
    t = log.column("t")
    for side, p in ((Side.LEFT, "lf"), (Side.RIGHT, "rf")):
        c = log.column(f"{p}_contact")
        pose = log.matrix([f"{p}_x", f"{p}_y", f"{p}_yaw"])
        for k in np.flatnonzero((c[1:] > 0) & (c[:-1] == 0)) + 1:
            steps.append(Footstep(side, pose[k, :2], pose[k, 2], t[k], 0.0))
    steps.sort(key=lambda s: s.impact_time)
    out = []
    for k, s in enumerate(steps):
        dur = s.impact_time - steps[k - 1].impact_time if k else 0.0
        out.append(Footstep(s.side, s.position, s.yaw, s.impact_time, dur))
    return out


def realized_velocity(steps: list[Footstep], lateral_offset: float = 0.16) -> float:
    """Mean step length over step duration between consecutive realized touchdowns."""
    if len(steps) < 2:
        raise VelocityUndefined("fewer than two realized touchdowns")
    ratios = [step_length(steps[k - 1], steps[k], lateral_offset) / steps[k].step_duration
              for k in range(1, len(steps))]
    return float(np.mean(ratios))


def compute_metrics(log, mass: float, period: float | None = None, lateral_offset: float = 0.16,
                    fall_time: float | None = None) -> Metrics:
    n = len(log)
    t = log.column("t")
    if period is None:
        period = float(t[1] - t[0]) if n > 1 else 0.0

    def err(a, b):
        return np.linalg.norm(log.matrix(a) - log.matrix(b), axis=1) if n else np.zeros(0)

    series = {
        "dcm": err(["xi_x", "xi_y"], ["xi_ref_x", "xi_ref_y"]),
        "com": err(["com_x", "com_y"], ["com_ref_x", "com_ref_y"]),
        "zmp": err(["zmp_meas_x", "zmp_meas_y"], ["zmp_ref_x", "zmp_ref_y"]),
        "foot": np.maximum(err(["lf_x", "lf_y", "lf_z"], ["lf_ref_x", "lf_ref_y", "lf_ref_z"]),
                           err(["rf_x", "rf_y", "rf_z"], ["rf_ref_x", "rf_ref_y", "rf_ref_z"])),
    }

    def peak(x):
        x = x[np.isfinite(x)]
        return float(np.max(x)) if x.size else 0.0

    joints = log.joint_names
    tau = log.matrix([f"tau_{j}" for j in joints])
    sd = log.matrix([f"sd_{j}" for j in joints])
    ok = np.all(np.isfinite(tau), axis=1) & np.all(np.isfinite(sd), axis=1) if joints else np.zeros(n, bool)
    energy = positive_work(tau[ok], sd[ok], period) if joints else 0.0
    com = log.matrix(["com_x", "com_y"])
    distance = float(np.linalg.norm(com[-1] - com[0])) if n else 0.0
    undefined = []
    steps = realized_touchdowns(log) if n else []
    try:
        velocity = realized_velocity(steps, lateral_offset)
    except VelocityUndefined:
        velocity = None
        undefined.append("walking_velocity")
    if distance < MIN_DISTANCE:
        velocity = None
        undefined = ["walking_velocity", "c_et"]
        c_et = None
    elif not joints:
        # no joint power in the log (LIPM plant)
        c_et = None
        undefined.append("c_et")
    else:
        c_et = specific_energetic_cost(energy, mass, distance)
    fails_s = int(np.sum(log.column("simplified_status") == "failed")) if n else 0
    fails_w = int(np.sum(log.column("wholebody_status") == "failed")) if n else 0
    return Metrics(n, float(t[-1] - t[0] + period) if n else 0.0, fall_time is not None, fall_time,
                   peak(series["dcm"]), peak(series["com"]), peak(series["zmp"]), peak(series["foot"]),
                   velocity, len(steps), distance, energy, float(mass), c_et, fails_s, fails_w,
                   sorted(set(undefined)), series)


def reconstruct_torques(model: RobotModel, state: RobotState, nu_dot, contacts, gravity=dyn.DEFAULT_GRAVITY,
                        data=None) -> tuple[np.ndarray, np.ndarray]:
    """Joint torques consistent with the motion, using the minimum-norm contact wrenches.

    The base rows of the dynamics fix the wrenches (least-norm solution); the
    joint rows then give the torques.  Returns ``(tau, stacked wrenches)``.
    """
    d = data if data is not None else kin.compute(model, state)
    M = dyn.mass_matrix(model, state, d)
    h = dyn.bias_forces(model, state, gravity, d)
    rhs = M @ np.asarray(nu_dot, dtype=float) + h
    if contacts:
        Jc = np.vstack([kin.frame_jacobian(model, state, c, d) for c in contacts])
        f = np.linalg.lstsq(Jc[:, :6].T, rhs[:6], rcond=None)[0]
        tau = rhs[6:] - Jc[:, 6:].T @ f
    else:
        f = np.zeros(0)
        tau = rhs[6:]
    return tau, f
