"""Closed-loop experiment: planner, simplified control, whole-body layer, plant, estimator."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..control import InstantaneousDcmController, MpcDcmController, ZmpComController, support_polygon
from ..estimation import LeggedOdometry, NoFixedFrame
from ..planner import Phase, ReferenceTrajectories, Side, build_references
from ..rigidbody import RobotModel, RobotState, ZmpUndefined, load_model, mini_biped
from ..rigidbody import kinematics as kin
from ..rigidbody.spatial import exp_so3, log_so3, yaw_of
from ..wbc import (FootMotion, com_velocity_correction, FootReference, IkInfeasible, KinematicIntegrals, KinematicTaskReferences,
                   TorqueQpInfeasible, TorqueTaskReferences, ZmpRefInfeasible, converge_pose, solve_torque)
from ..wbc import build_and_solve as solve_kinematic
from .config import ExperimentConfig
from .io import ControlTickLog, log_columns
from .lipm import consistent_zmp, discretize
from .metrics import Metrics, compute_metrics, reconstruct_torques
from .plants import KinematicPlant, LipmPlant, lag_factor, normal_forces

LEFT, RIGHT = "left_foot", "right_foot"
_ROLE = {Side.LEFT: LEFT, Side.RIGHT: RIGHT}


class ExperimentAborted(RuntimeError):
    def __init__(self, message: str, log: ControlTickLog):
        self.log = log
        super().__init__(message)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    log: ControlTickLog
    metrics: Metrics
    references: ReferenceTrajectories

    @property
    def fell(self) -> bool:
        return self.metrics.fell


def nominal_posture(model: RobotModel) -> np.ndarray:
    """Bent-knee posture: hips and ankles pitched to keep the soles flat."""
    s = np.zeros(model.n)
    for i, j in enumerate(model.joints):
        if j.name.endswith("hip_pitch") or j.name.endswith("ankle_pitch"):
            s[i] = -0.4
        elif j.name.endswith("knee"):
            s[i] = 0.8
    return s


def _rz(yaw: float) -> np.ndarray:
    return exp_so3([0.0, 0.0, yaw])


def _mean_yaw(a: float, b: float) -> float:
    return float(np.arctan2(np.sin(a) + np.sin(b), np.cos(a) + np.cos(b)))


def plan(config: ExperimentConfig) -> ReferenceTrajectories:
    pcfg = replace(config.planner, period=config.period)
    d = pcfg.bounds.lateral_offset
    return build_references(pcfg, config.pendulum, (0.0, d / 2, 0.0), (0.0, -d / 2, 0.0))


def support_polygons(refs: ReferenceTrajectories, length: float, width: float, margin: float = 0.0) -> list:
    """Support polygon of the planned contacts at every reference sample."""
    cache, out = {}, []
    for k, ph in enumerate(refs.phase):
        feet = []
        for side in Side:
            if ph is Phase.DS or ph.stance is side:
                x, y, _, yaw = refs.foot(side).pose[k]
                feet.append((round(x, 12), round(y, 12), round(yaw, 12)))
        key = tuple(feet)
        if key not in cache:
            cache[key] = support_polygon(feet, length, width, margin)
        out.append(cache[key])
    return out


def initial_state(model: RobotModel, refs: ReferenceTrajectories, z0: float) -> RobotState:
    s0 = nominal_posture(model)
    st = model.neutral_state()
    st.joint_positions[:] = s0
    feet = {}
    for side in Side:
        x, y, z, yaw = refs.foot(side).pose[0]
        feet[_ROLE[side]] = FootReference(np.array([x, y, z]), _rz(yaw))
    yaw = _mean_yaw(refs.left.pose[0, 3], refs.right.pose[0, 3])
    st.base_rotation = _rz(yaw)
    target = KinematicTaskReferences(np.array([*refs.com[0], z0]), np.zeros(3), feet, _rz(yaw), s0)
    return converge_pose(model, st, target)


class _Loop:
    """State shared by the ticks of one experiment."""

    def __init__(self, config: ExperimentConfig, model: RobotModel):
        self.cfg = config
        self.model = model
        self.T = config.period
        self.b = config.pendulum.b
        self.z0 = config.pendulum.z0
        self.refs = plan(config)
        self.n_plan = len(self.refs)
        self.n_ticks = self.n_plan if config.duration is None else int(round(config.duration / self.T))
        margin = config.mpc.polygon_margin
        self.polygons = support_polygons(self.refs, model.foot.length, model.foot.width, margin)
        self.rng = np.random.default_rng(config.seed)
        self.zmp_com = ZmpComController(config.zmp_com, self.b)
        self.k_zmp = config.zmp_com.k_zmp
        if config.simplified == "instantaneous":
            self.simplified = InstantaneousDcmController(config.dcm, self.b, self.T)
        else:
            self.simplified = MpcDcmController(replace(config.mpc, period=self.T), self.b,
                                               r_initial=self.refs.zmp[0])
        self.log = ControlTickLog(log_columns([j.name for j in model.joints] if config.plant == "kinematic" else []))
        self.weight = model.total_mass * config.pendulum.g
        self.impulses = {}
        for imp in config.disturbances.impulses:
            k = int(round(imp.time / self.T))
            self.impulses.setdefault(k, []).append(imp)
        self.consecutive_failures = 0

    def idx(self, k: int) -> int:
        return min(k, self.n_plan - 1)

    def contacts(self, i: int) -> dict:
        ph = self.refs.phase[i]
        return {_ROLE[s]: ph is Phase.DS or ph.stance is s for s in Side}

    def foot_ref_row(self, i: int) -> dict:
        row = {}
        for side, p in ((Side.LEFT, "lf"), (Side.RIGHT, "rf")):
            x, y, z, yaw = self.refs.foot(side).pose[i]
            row.update({f"{p}_ref_x": x, f"{p}_ref_y": y, f"{p}_ref_z": z, f"{p}_ref_yaw": yaw})
        c = self.contacts(i)
        row["lf_contact"], row["rf_contact"] = int(c[LEFT]), int(c[RIGHT])
        return row

    def simplified_step(self, k: int, xi: np.ndarray) -> tuple[np.ndarray, str, int]:
        i = self.idx(k)
        refs = self.refs
        if isinstance(self.simplified, InstantaneousDcmController):
            r = self.simplified.step(xi, refs.xi[i], refs.xi_dot[i])
            return r, "solved", 0
        N = self.simplified.settings.horizon
        ids = np.minimum(np.arange(k, k + N + 1), self.n_plan - 1)
        r = self.simplified.step(xi, refs.xi[ids], [self.polygons[j] for j in ids[:-1]])
        status = "failed" if self.simplified.last_failed else "solved"
        return r, status, int(self.simplified.last_iterations)

    def tick_failed(self, failed: bool) -> None:
        self.consecutive_failures = self.consecutive_failures + 1 if failed else 0
        if self.consecutive_failures > self.cfg.max_consecutive_failures:
            raise ExperimentAborted(f"{self.consecutive_failures} consecutive failed ticks", self.log)


def run_experiment(config: ExperimentConfig, model: RobotModel | None = None) -> ExperimentResult:
    """Run one closed-loop experiment and compute its metrics."""
    config.validate()
    if model is None:
        model = load_model(config.model) if config.model else mini_biped()
    loop = _Loop(config, model)
    try:
        if config.plant == "lipm":
            fall_time = _run_lipm(loop)
        else:
            fall_time = _run_kinematic(loop)
    except ExperimentAborted:
        raise
    except Exception as e:
        raise ExperimentAborted(f"{type(e).__name__}: {e}", loop.log) from e
    metrics = compute_metrics(loop.log, model.total_mass, loop.T, config.planner.bounds.lateral_offset, fall_time)
    return ExperimentResult(config, loop.log, metrics, loop.refs)


def sensed_zmp(v0, k_zmp, offset, delta, p, v, alpha: float, b: float, period: float) -> np.ndarray:
    """ZMP that the plant applies over the current tick when the ZMP-CoM loop reads it.

    The commanded CoM velocity is ``v0 + K_zmp (r + offset) + delta`` and the
    plant realizes ``v + alpha (command - v)``.  The applied ZMP ``r`` is the
    constant one that produces this velocity change on the LIPM, so the loop
    is solved as a linear fixed point rather than with a one-tick delay.
    """
    d = discretize(float(b), float(period))
    a_vp, a_vv, b_v = d.Ad[2, 0], d.Ad[2, 2], d.Bd[2, 0]
    K = np.asarray(k_zmp, dtype=float)
    v = np.asarray(v, dtype=float)
    rhs = v + alpha * (np.asarray(v0) + K @ offset + delta - v) - a_vp * np.asarray(p) - a_vv * v
    return np.linalg.solve(b_v * np.eye(2) - alpha * K, rhs)


def _disturb(loop: _Loop, k: int, push) -> np.ndarray:
    """Apply this tick's impulses; returns the additive ZMP measurement offset."""
    dz = np.zeros(2)
    for imp in loop.impulses.get(k, []):
        if imp.target == "dcm":
            push(np.array(imp.value))
        else:
            dz += imp.value
    return dz + loop.rng.normal(0.0, 1.0, 2) * loop.cfg.disturbances.zmp_noise_std


def _control_row(loop: _Loop, k: int, t: float, xi, p, v) -> dict:
    i = loop.idx(k)
    refs = loop.refs
    row = {"t": t, "phase": refs.phase[i].value, "xi_ref_x": refs.xi[i, 0], "xi_ref_y": refs.xi[i, 1],
           "xi_x": xi[0], "xi_y": xi[1], "zmp_ref_x": refs.zmp[i, 0], "zmp_ref_y": refs.zmp[i, 1],
           "com_ref_x": refs.com[i, 0],
           "com_ref_y": refs.com[i, 1], "com_x": p[0], "com_y": p[1], "com_z": p[2] if len(p) > 2 else loop.z0,
           "com_vel_ref_x": refs.com_vel[i, 0], "com_vel_ref_y": refs.com_vel[i, 1],
           "com_vel_x": v[0], "com_vel_y": v[1]}
    row.update(loop.foot_ref_row(i))
    return row


def _fallen(loop: _Loop, k: int, xi) -> bool:
    i = loop.idx(k)
    return bool(np.linalg.norm(xi - loop.refs.xi[i]) > loop.cfg.fall_threshold) or not np.all(np.isfinite(xi))


def _run_lipm(loop: _Loop) -> float | None:
    refs, T, b = loop.refs, loop.T, loop.b
    plant = LipmPlant(refs.com[0], refs.com_vel[0], b, T, loop.cfg.wholebody, loop.cfg.velocity_lag)
    for k in range(loop.n_ticks):
        t = refs.t[0] + k * T
        i = loop.idx(k)
        dz = _disturb(loop, k, plant.push)
        p, v = plant.p.copy(), plant.v.copy()
        xi = plant.dcm
        row = _control_row(loop, k, t, xi, p, v)
        for p_, s in (("lf", Side.LEFT), ("rf", Side.RIGHT)):
            x, y, z, yaw = refs.foot(s).pose[i]
            row.update({f"{p_}_x": x, f"{p_}_y": y, f"{p_}_z": z, f"{p_}_yaw": yaw})
        if _fallen(loop, k, xi):
            loop.log.append(row)
            return t
        r_cmd, status, its = loop.simplified_step(k, xi)
        v0 = loop.zmp_com.step(r_cmd, np.zeros(2), refs.com[i], p, refs.com_vel[i])
        alpha = 1.0 if plant.mode == "position" else plant.alpha
        r_meas = sensed_zmp(v0, loop.k_zmp, dz, np.zeros(2), p, v, alpha, b, T) + dz
        v_cmd = v0 + loop.k_zmp @ r_meas
        plant.step(v_cmd)
        row.update({"zmp_cmd_x": r_cmd[0], "zmp_cmd_y": r_cmd[1], "zmp_meas_x": r_meas[0], "zmp_meas_y": r_meas[1],
                    "zmp_cmd_violation": loop.polygons[i].violation(r_cmd),
                    "com_vel_cmd_x": v_cmd[0], "com_vel_cmd_y": v_cmd[1], "simplified_status": status,
                    "simplified_iterations": its, "wholebody_status": "ideal", "fallback": int(status == "failed")})
        loop.log.append(row)
        loop.tick_failed(status == "failed")
    return None


def _foot_targets(loop: _Loop, i: int):
    contacts = loop.contacts(i)
    kin_feet, trq_feet = {}, {}
    for side in Side:
        role = _ROLE[side]
        fs = loop.refs.foot(side)
        x, y, z, yaw = fs.pose[i]
        pos, R = np.array([x, y, z]), _rz(yaw)
        tw, acc = fs.twist[i], fs.acc[i]
        kin_feet[role] = FootReference(pos, R, tw.copy(), contacts[role])
        trq_feet[role] = FootMotion(pos, R, tw[:3].copy(), tw[3:].copy(), acc[:3].copy(), acc[3:].copy(),
                                    contacts[role])
    return kin_feet, trq_feet


def _run_kinematic(loop: _Loop) -> float | None:
    cfg, model, refs, T, b, z0 = loop.cfg, loop.model, loop.refs, loop.T, loop.b, loop.z0
    s0 = nominal_posture(model)
    truth0 = initial_state(model, refs, z0)
    plant = KinematicPlant(model, truth0, T, "velocity" if cfg.wholebody == "velocity" else "position",
                           cfg.velocity_lag, anchor=LEFT,
                           contacts=[c for c, on in loop.contacts(0).items() if on])
    odom = LeggedOdometry(model, (LEFT, RIGHT), LEFT, world_H_fixed=kin.frame_pose(model, truth0, LEFT),
                          settings=cfg.estimation, initially_active=(LEFT, RIGHT))
    integrals = KinematicIntegrals()
    r_true = refs.zmp[0].copy()
    p_cmd = None
    nu_prev = None
    tau_prev = np.zeros(model.n)
    est_H = odom.update(refs.t[0] - T, truth0.joint_positions, {LEFT: loop.weight / 2, RIGHT: loop.weight / 2})
    est_fallback = False
    for k in range(loop.n_ticks):
        t = refs.t[0] + k * T
        i = loop.idx(k)
        truth = plant.state
        dz = _disturb(loop, k, None)
        failed = False
        # estimation
        ph = refs.phase[i]
        stance = _ROLE[ph.stance] if ph.stance is not None else None
        d_true = kin.compute(model, truth)
        lf, rf = (kin.frame_pose(model, truth, f, d_true) for f in (LEFT, RIGHT))
        soles = [support_polygon([(H[0, 3], H[1, 3], yaw_of(H[:3, :3]))], model.foot.length, model.foot.width)
                 for H in (lf, rf)]
        forces = normal_forces(stance, r_true, soles[0], soles[1], loop.weight)
        try:
            est_H = odom.update(t, truth.joint_positions, forces)
            est_fallback = False
        except NoFixedFrame:
            est_fallback = failed = True
        base_true = truth.base_transform
        est = RobotState(est_H[:3, 3].copy(), est_H[:3, :3].copy(), truth.joint_positions.copy())
        sd_meas = plant.sd
        vb = odom.velocity(est, sd_meas) if odom.fixed_frame is not None else np.zeros(6)
        est = est.with_velocity(np.concatenate([vb, sd_meas]))
        d_est = kin.compute(model, est)
        com = kin.com_state(model, est, d_est)
        p, v = com.position, com.velocity
        xi = p[:2] + b * v[:2]
        row = _control_row(loop, k, t, xi, p, v)
        for pre, H in (("lf", lf), ("rf", rf)):
            row.update({f"{pre}_x": H[0, 3], f"{pre}_y": H[1, 3], f"{pre}_z": H[2, 3], f"{pre}_yaw": yaw_of(H[:3, :3])})
        base_err = max(np.max(np.abs(est_H[:3, 3] - base_true[:3, 3])),
                       np.linalg.norm(log_so3(est_H[:3, :3] @ base_true[:3, :3].T)))
        row.update({"fixed_frame": odom.fixed_frame or "", "base_x": est_H[0, 3], "base_y": est_H[1, 3],
                    "base_z": est_H[2, 3], "base_error": base_err})
        if _fallen(loop, k, xi):
            loop.log.append(row)
            return t
        # simplified control and the ZMP-CoM loop
        r_cmd, sstatus, sits = loop.simplified_step(k, xi)
        failed |= sstatus == "failed"
        if p_cmd is None:
            p_cmd = np.array([p[0], p[1], z0])
        v0 = loop.zmp_com.step(r_cmd, np.zeros(2), refs.com[i], p[:2], refs.com_vel[i])
        delta, _ = com_velocity_correction(cfg.kinematic, p, p_cmd, integrals.com, T)
        com_true = kin.com_state(model, truth, d_true)
        alpha = 1.0 if plant.mode == "position" else plant.alpha
        r_meas = sensed_zmp(v0, loop.k_zmp, dz, delta[:2], com_true.position[:2], com_true.velocity[:2],
                            alpha, b, T) + dz
        v_cmd = v0 + loop.k_zmp @ r_meas
        # whole-body kinematic QP
        kin_feet, trq_feet = _foot_targets(loop, i)
        torso_R = _rz(_mean_yaw(refs.left.pose[i, 3], refs.right.pose[i, 3]))
        krefs = KinematicTaskReferences(p_cmd.copy(), np.array([v_cmd[0], v_cmd[1], 0.0]), kin_feet, torso_R, s0)
        wstatus, wits = "solved", 0
        try:
            sol = solve_kinematic(model, est, krefs, cfg.kinematic, integrals, T, data=d_est)
            integrals = sol.integrals
            sd_cmd = sol.joint_velocities
            wits = sol.iterations
        except IkInfeasible:
            sd_cmd = np.zeros(model.n)
            wstatus, failed = "failed", True
        p_cmd = p_cmd + T * np.array([v_cmd[0], v_cmd[1], 0.0])
        # torque QP evaluated open loop on the same state
        trq = {}
        if cfg.wholebody == "torque":
            a_ref = (refs.com[i] - refs.zmp[i]) / b**2
            ct = cfg.com_tracking
            a_des = a_ref + ct.kd * (refs.com_vel[i] - v[:2]) + ct.kp * (refs.com[i] - p[:2])
            r_trq = p[:2] - b**2 * a_des
            trefs = TorqueTaskReferences(trq_feet, r_trq, z0, torso_rotation=torso_R, posture=s0,
                                         posture_velocity=np.zeros(model.n))
            try:
                tsol = solve_torque(model, est, trefs, cfg.torque, project_zmp=cfg.torque_project_zmp,
                                    zmp_margin=cfg.torque_zmp_margin, data=d_est,
                                    coplanar_tol=cfg.torque_coplanar_tol)
                tau = tsol.tau
                res = tsol.residuals
                tl = cfg.torque.torque_limit if cfg.torque.torque_limit is not None else model.torque_limits()
                trq = {"dynamics_residual": res["dynamics"], "zmp_residual": res["zmp"],
                       "friction_residual": res["friction"], "cop_residual": res["cop"],
                       "torque_violation": float(np.max(np.abs(tau) - tl)), "zmp_projected": int(tsol.projected),
                       "wholebody_iterations": tsol.iterations}
                tau_prev = tau
            except ZmpUndefined:
                row.update(trq)
                loop.log.append(row)
                return t
            except (TorqueQpInfeasible, ZmpRefInfeasible):
                tau = tau_prev
                wstatus, failed = "failed", True
        # plant
        if stance is not None:
            plant.set_anchor(stance)
        nu = plant.step(sd_cmd, [c for c, on in loop.contacts(loop.idx(k + 1)).items() if on])
        if cfg.wholebody != "torque":
            nu_dot = np.zeros(model.nv) if nu_prev is None else (nu - nu_prev) / T
            contacts = [c for c, on in loop.contacts(i).items() if on]
            tau, _ = reconstruct_torques(model, truth.with_velocity(nu), nu_dot, contacts, data=d_true)
        nu_prev = nu
        v_next = kin.com_state(model, truth.with_velocity(nu), d_true).velocity[:2]
        r_true = consistent_zmp(com_true.position[:2], com_true.velocity[:2], v_next, b, T)
        row.update({"zmp_cmd_x": r_cmd[0], "zmp_cmd_y": r_cmd[1], "zmp_meas_x": r_meas[0], "zmp_meas_y": r_meas[1],
                    "zmp_cmd_violation": loop.polygons[i].violation(r_cmd),
                    "com_vel_cmd_x": v_cmd[0], "com_vel_cmd_y": v_cmd[1],
                    "simplified_status": sstatus, "simplified_iterations": sits, "wholebody_status": wstatus,
                    "wholebody_iterations": wits, "fallback": int(failed or est_fallback)})
        row.update(trq)
        for j, name in enumerate(loop.log.joint_names):
            row[f"s_{name}"] = truth.joint_positions[j]
            row[f"sd_{name}"] = nu[6 + j]
            row[f"tau_{name}"] = tau[j]
        loop.log.append(row)
        loop.tick_failed(failed)
    return None

