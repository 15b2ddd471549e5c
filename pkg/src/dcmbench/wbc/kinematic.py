"""Velocity-level whole-body QP.

Hard constraints: CoM velocity and foot twists.  Soft terms: torso angular
velocity and joint posture.  Decision variable is the full mixed velocity
``nu = (base linear, base angular, joint rates)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..qp import QpProblem, QpSettings, QpStatus, solve
from ..rigidbody import RobotModel, RobotState
from ..rigidbody import kinematics as kin
from ..rigidbody.spatial import exp_so3, vee_sk

FEET = ("left_foot", "right_foot")


class IkInfeasible(RuntimeError):
    """The equality tasks cannot be met within the joint velocity bounds."""

    def __init__(self, status: QpStatus, constraints: list[str]):
        self.status = status
        self.constraints = constraints
        super().__init__(f"kinematic QP {status.value}; conflicting constraints: {', '.join(constraints) or 'unknown'}")


def _is_rotation(R, tol=1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return R.shape == (3, 3) and np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1) < tol


@dataclass
class FootReference:
    position: np.ndarray
    rotation: np.ndarray
    twist: np.ndarray = field(default_factory=lambda: np.zeros(6))  # (linear; angular)
    in_contact: bool = True


@dataclass
class KinematicTaskReferences:
    com_position: np.ndarray      # p_C*, integrated ZMP-CoM output plus the height reference
    com_velocity: np.ndarray      # v_C*
    feet: dict                    # frame role -> FootReference
    torso_rotation: np.ndarray
    posture: np.ndarray

    def validate(self) -> None:
        for name, f in self.feet.items():
            if not _is_rotation(f.rotation):
                raise ValueError(f"{name} rotation reference is not in SO(3)")
        if not _is_rotation(self.torso_rotation):
            raise ValueError("torso rotation reference is not in SO(3)")


def _pd(M) -> bool:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0)


def _diag(v, n):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(n)
    if a.ndim == 1:
        return np.diag(a)
    return a


@dataclass
class KinematicGains:
    torso_weight: np.ndarray = 10.0
    posture_weight: np.ndarray = 1.0
    posture_gain: np.ndarray = 5.0
    torso_gain: np.ndarray = 5.0
    foot_kp: np.ndarray = 10.0
    foot_ki: np.ndarray = 1.0
    foot_kw: np.ndarray = 10.0
    com_kp: np.ndarray = 10.0
    com_ki: np.ndarray = 1.0
    joint_velocity_limits: tuple = (-2.0, 2.0)
    foot_integral_limit: float = 0.02
    com_integral_limit: float = 0.02
    regularization: float = 1e-8

    def matrices(self, n: int) -> dict:
        lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() for v in self.joint_velocity_limits)
        return dict(
            torso_weight=_diag(self.torso_weight, 3), posture_weight=_diag(self.posture_weight, n),
            posture_gain=_diag(self.posture_gain, n), torso_gain=_diag(self.torso_gain, 3),
            foot_kp=_diag(self.foot_kp, 3), foot_ki=_diag(self.foot_ki, 3), foot_kw=_diag(self.foot_kw, 3),
            com_kp=_diag(self.com_kp, 3), com_ki=_diag(self.com_ki, 3), lo=lo, hi=hi)

    def validate(self, n: int, allow_zero_weights: bool = True) -> None:
        m = self.matrices(n)
        for k in ("posture_gain", "torso_gain", "foot_kp", "foot_ki", "foot_kw", "com_kp", "com_ki"):
            if not _pd(m[k]):
                raise ValueError(f"{k} must be positive definite")
        for k in ("torso_weight", "posture_weight"):
            ok = np.linalg.eigvalsh(m[k])[0] >= 0 if allow_zero_weights else _pd(m[k])
            if not ok:
                raise ValueError(f"{k} must be positive {'semi' if allow_zero_weights else ''}definite")
        if not np.all(m["lo"] < m["hi"]):
            raise ValueError("joint velocity bounds need lower < upper")


@dataclass
class KinematicIntegrals:
    feet: dict = field(default_factory=lambda: {f: np.zeros(3) for f in FEET})
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "KinematicIntegrals":
        return KinematicIntegrals({k: v.copy() for k, v in self.feet.items()}, self.com.copy())


@dataclass
class KinematicSolution:
    nu: np.ndarray
    integrals: KinematicIntegrals
    status: QpStatus
    iterations: int
    com_velocity_des: np.ndarray
    foot_twist_des: dict
    torso_omega_des: np.ndarray
    equality_residual: float
    active_bounds: np.ndarray

    @property
    def joint_velocities(self) -> np.ndarray:
        return self.nu[6:]


def torso_angular_velocity_des(R, R_ref, gain) -> np.ndarray:
    """``-K (sk(R R_ref^T))^vee``."""
    return -_diag(gain, 3) @ vee_sk(np.asarray(R) @ np.asarray(R_ref).T)


def foot_twist_des(p, R, ref: FootReference, integral, kp, ki, kw) -> np.ndarray:
    lin = ref.twist[:3] - kp @ (p - ref.position) - ki @ integral
    ang = ref.twist[3:] - kw @ vee_sk(R @ ref.rotation.T)
    return np.concatenate([lin, ang])


def integrate_joint_positions(s, joint_velocities, period: float, limits=None) -> np.ndarray:
    """Forward Euler step clamped to the joint position limits ``(lo, hi)``."""
    s_next = np.asarray(s, dtype=float) + period * np.asarray(joint_velocities, dtype=float)
    if limits is not None:
        s_next = np.clip(s_next, limits[0], limits[1])
    return s_next


def _clamp(v, lim):
    return np.clip(v, -lim, lim)


def com_velocity_correction(gains: KinematicGains, p_c, p_ref, integral, period: float):
    """CoM feedback ``-K_p e - K_i int(e)`` and the updated integral; the CoM task adds it to ``v_C*``."""
    e_c = np.asarray(p_c, dtype=float) - np.asarray(p_ref, dtype=float)
    new = _clamp(np.asarray(integral, dtype=float) + period * e_c, gains.com_integral_limit)
    return -_diag(gains.com_kp, 3) @ e_c - _diag(gains.com_ki, 3) @ new, new


def build_qp(model: RobotModel, state: RobotState, refs: KinematicTaskReferences, gains: KinematicGains,
             integrals: KinematicIntegrals, period: float, data=None):
    """Assemble the QP and the quantities needed to report on it.

    Returns ``(problem, labels, info)``; ``labels`` names every constraint row.
    """
    refs.validate()
    gains.validate(model.n)
    n, nv = model.n, model.nv
    g = gains.matrices(n)
    d = data if data is not None else kin.compute(model, state)
    new_int = integrals.copy()

    com = kin.com_state(model, state, d)
    corr, new_int.com = com_velocity_correction(gains, com.position, refs.com_position, integrals.com, period)
    v_c = refs.com_velocity + corr

    rows, rhs, labels = [com.jacobian], [v_c], [f"com_{a}" for a in "xyz"]
    twists = {}
    for foot, fref in refs.feet.items():
        H = kin.frame_pose(model, state, foot, d)
        J = kin.frame_jacobian(model, state, foot, d)
        if fref.in_contact:
            new_int.feet[foot] = np.zeros(3)
            v_f = np.zeros(6)
        else:
            e_f = H[:3, 3] - fref.position
            new_int.feet[foot] = _clamp(integrals.feet.get(foot, np.zeros(3)) + period * e_f,
                                        gains.foot_integral_limit)
            v_f = foot_twist_des(H[:3, 3], H[:3, :3], fref, new_int.feet[foot],
                                 g["foot_kp"], g["foot_ki"], g["foot_kw"])
        twists[foot] = v_f
        rows.append(J)
        rhs.append(v_f)
        labels += [f"{foot}_{c}" for c in ("vx", "vy", "vz", "wx", "wy", "wz")]

    Ht = kin.frame_pose(model, state, "torso", d)
    Jt = kin.frame_jacobian(model, state, "torso", d)[3:]
    w_t = torso_angular_velocity_des(Ht[:3, :3], refs.torso_rotation, g["torso_gain"])
    s_des = -g["posture_gain"] @ (state.joint_positions - refs.posture)

    Wt, Wp = g["torso_weight"], g["posture_weight"]
    S = np.zeros((n, nv))
    S[:, 6:] = np.eye(n)
    Hq = Jt.T @ Wt @ Jt + S.T @ Wp @ S + gains.regularization * np.eye(nv)
    gq = -(Jt.T @ Wt @ w_t + S.T @ Wp @ s_des)

    Aeq = np.vstack(rows)
    beq = np.concatenate(rhs)
    A = np.vstack([Aeq, S])
    lo = np.concatenate([beq, g["lo"]])
    hi = np.concatenate([beq, g["hi"]])
    labels += [f"joint_velocity[{j.name}]" for j in model.joints]
    info = dict(integrals=new_int, v_c=v_c, twists=twists, w_t=w_t, s_des=s_des, n_eq=len(beq))
    return QpProblem(0.5 * (Hq + Hq.T), gq, A, lo, hi), labels, info


def build_and_solve(model: RobotModel, state: RobotState, refs: KinematicTaskReferences, gains: KinematicGains,
                    integrals: KinematicIntegrals | None = None, period: float = 0.01,
                    qp_settings: QpSettings | None = None, warm_start=None, data=None) -> KinematicSolution:
    integrals = integrals or KinematicIntegrals()
    prob, labels, info = build_qp(model, state, refs, gains, integrals, period, data)
    sol = solve(prob, qp_settings, warm_start=warm_start)
    if sol.status is not QpStatus.SOLVED:
        bad = []
        if sol.status is QpStatus.PRIMAL_INFEASIBLE and sol.certificate is not None:
            y = np.asarray(sol.certificate)
            bad = [labels[i] for i in np.flatnonzero(np.abs(y) > 1e-6 * max(1.0, np.abs(y).max()))]
        raise IkInfeasible(sol.status, bad)
    nu = sol.primal
    n_eq = info["n_eq"]
    eq_res = float(np.max(np.abs(prob.constraint_matrix[:n_eq] @ nu - prob.lower_bounds[:n_eq])))
    sd = nu[6:]
    active = np.flatnonzero((sd <= prob.lower_bounds[n_eq:] + 1e-9) | (sd >= prob.upper_bounds[n_eq:] - 1e-9))
    return KinematicSolution(nu, info["integrals"], sol.status, sol.iterations, info["v_c"], info["twists"],
                             info["w_t"], eq_res, active)


def integrate_configuration(state: RobotState, nu, period: float, limits=None) -> RobotState:
    """Advance base pose and joints by ``nu`` held over ``period``.

    The base orientation uses the exponential map of the inertial angular
    velocity, so it stays in SO(3).
    """
    nu = np.asarray(nu, dtype=float)
    R = exp_so3(period * nu[3:6]) @ state.base_rotation
    s = integrate_joint_positions(state.joint_positions, nu[6:], period, limits)
    out = RobotState(state.base_position + period * nu[:3], R, s, nu[:3].copy(), nu[3:6].copy(), nu[6:].copy())
    return out


def converge_pose(model: RobotModel, state: RobotState, refs: KinematicTaskReferences,
                  gains: KinematicGains | None = None, period: float = 0.01, steps: int = 400,
                  tol: float = 1e-10) -> RobotState:
    """Drive a configuration onto the task references by repeated QP steps.

    All feet are treated as tracked (not in contact) so their poses converge;
    integral terms are disabled.  Used to build consistent initial stances.
    """
    gains = gains or KinematicGains(foot_ki=1e-9, com_ki=1e-9)
    tracked = KinematicTaskReferences(
        refs.com_position, np.zeros(3),
        {k: FootReference(f.position, f.rotation, np.zeros(6), False) for k, f in refs.feet.items()},
        refs.torso_rotation, refs.posture)
    lims = model.position_limits()
    st = state.copy()
    for _ in range(steps):
        sol = build_and_solve(model, st, tracked, gains, KinematicIntegrals(), period)
        err = max([np.max(np.abs(v)) for v in sol.foot_twist_des.values()] + [np.max(np.abs(sol.com_velocity_des))])
        if err < tol:
            break
        st = integrate_configuration(st, sol.nu, period, lims)
    return st.with_velocity(np.zeros(model.nv))
