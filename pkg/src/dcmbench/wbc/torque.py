"""Torque-level whole-body QP over ``u = (nu_dot, tau, f)``.

Contact wrenches are (force; torque) at each sole origin with inertial-frame
coordinates, the dual of the mixed twist used by the frame Jacobians.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..control.polygon import support_polygon
from ..qp import QpProblem, QpSettings, QpStatus, solve
from ..rigidbody import Contact, ContactWrench, RobotModel, RobotState, global_zmp
from ..rigidbody import dynamics as dyn
from ..rigidbody.zmp import COPLANAR_TOL
from ..rigidbody import kinematics as kin
from ..rigidbody.spatial import skew, vee_sk, yaw_of
from .kinematic import FEET, _diag, _is_rotation


class TorqueQpInfeasible(RuntimeError):
    def __init__(self, status: QpStatus, certificate=None, constraints: list[str] | None = None):
        self.status = status
        self.certificate = certificate
        self.constraints = constraints or []
        super().__init__(f"torque QP {status.value}; certificate rows: {', '.join(self.constraints) or 'n/a'}")


class ZmpRefInfeasible(ValueError):
    def __init__(self, r_ref, distance: float):
        self.r_ref = np.asarray(r_ref, dtype=float)
        self.distance = distance
        super().__init__(f"ZMP reference {self.r_ref} lies {distance:.3g} m outside the contact hull")


def rotational_pid(R, R_ref, w, w_ref, dw_ref, c0: float, c1: float, c2: float) -> np.ndarray:
    """Angular acceleration feedback on SO(3) with skew-part vee of general matrices."""
    R, R_ref = np.asarray(R, dtype=float), np.asarray(R_ref, dtype=float)
    E = R @ R_ref.T
    w, w_ref = np.asarray(w, dtype=float), np.asarray(w_ref, dtype=float)
    return (np.asarray(dw_ref, dtype=float) - c0 * vee_sk(skew(w) @ E - E @ skew(w_ref))
            - c1 * (w - w_ref) - c2 * vee_sk(E))


def linear_pid(p, p_ref, v, v_ref, dv_ref, kp, kd) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    n = p.size
    return (np.asarray(dv_ref, dtype=float) - _diag(kd, n) @ (np.asarray(v) - v_ref)
            - _diag(kp, n) @ (p - p_ref))


# ---------------------------------------------------------------- wrench feasibility

@dataclass(frozen=True)
class WrenchFeasibilitySet:
    """``B_f w <= 0`` for one contact wrench ``w`` expressed in the contact frame."""
    matrix: np.ndarray
    labels: tuple

    @classmethod
    def build(cls, mu: float, length: float, width: float, n_facets: int = 8) -> "WrenchFeasibilitySet":
        if not mu > 0:
            raise ValueError("friction coefficient must be positive")
        rows, labels = [], []
        # pyramid inscribed in the cone: facet normals at the polygon's edge midpoints
        mu_in = mu * np.cos(np.pi / n_facets)
        for k in range(n_facets):
            th = 2 * np.pi * (k + 0.5) / n_facets
            rows.append([np.cos(th), np.sin(th), -mu_in, 0, 0, 0])
            labels.append(f"friction[{k}]")
        # local CoP (x, y) = (-t_y, t_x) / f_z inside the sole rectangle
        hl, hw = length / 2, width / 2
        rows += [[0, 0, -hl, 0, -1, 0], [0, 0, -hl, 0, 1, 0], [0, 0, -hw, 1, 0, 0], [0, 0, -hw, -1, 0, 0]]
        labels += ["cop_x_max", "cop_x_min", "cop_y_max", "cop_y_min"]
        rows.append([0, 0, -1, 0, 0, 0])
        labels.append("unilateral")
        return cls(np.array(rows, dtype=float), tuple(labels))

    def in_world(self, R) -> np.ndarray:
        """Rows acting on an inertial-frame wrench of a contact with orientation ``R``."""
        T = np.zeros((6, 6))
        T[:3, :3] = T[3:, 3:] = np.asarray(R).T
        return self.matrix @ T


def zmp_equality(foot_positions, r_ref) -> np.ndarray:
    """Rows ``A`` with ``A f = 0`` iff the global ZMP of the stacked wrenches is ``r_ref``.

    Moments of all contact wrenches about the reference point are required to
    have zero horizontal components; feet are assumed to share the ground plane.
    """
    r = np.asarray(r_ref, dtype=float)[:2]
    A = np.zeros((2, 6 * len(foot_positions)))
    for k, p in enumerate(foot_positions):
        c = 6 * k
        A[0, c + 2] = r[0] - p[0]
        A[0, c + 4] = 1.0
        A[1, c + 2] = r[1] - p[1]
        A[1, c + 3] = -1.0
    return A


def check_zmp_reference(feet_planar, r_ref, foot_length: float, foot_width: float, tol: float = 1e-9):
    """Raise :class:`ZmpRefInfeasible` if ``r_ref`` is outside the contact hull."""
    poly = support_polygon(feet_planar, foot_length, foot_width)
    viol = poly.violation(r_ref)
    if viol > tol:
        raise ZmpRefInfeasible(r_ref, viol)
    return poly


# ---------------------------------------------------------------- QP

@dataclass
class TorqueGains:
    torso_weight: float = 10.0
    posture_weight: float = 1.0
    torque_weight: float = 1e-3
    wrench_weight: float = 1e-4
    wrench_mode: str = "nominal"  # "nominal" (half weight per stance foot) or "literal" (||f||^2)
    c0: float = 1.0
    c1: float = 20.0
    c2: float = 100.0
    posture_kp: float = 100.0
    posture_kd: float = 20.0
    foot_kp: float = 400.0
    foot_kd: float = 40.0
    com_height_kp: float = 400.0
    com_height_kd: float = 40.0
    mu: float = 1.0 / 3.0
    n_facets: int = 8
    torque_limit: float | None = None  # None: model limits
    regularization: float = 1e-8

    def validate(self) -> None:
        for k in ("c0", "c1", "c2", "posture_kp", "posture_kd", "foot_kp", "foot_kd", "com_height_kp",
                  "com_height_kd", "mu"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        for k in ("torso_weight", "posture_weight", "torque_weight", "wrench_weight"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be non-negative")
        if self.wrench_mode not in ("nominal", "literal"):
            raise ValueError("wrench_mode must be 'nominal' or 'literal'")


@dataclass
class FootMotion:
    """Foot reference; ``in_contact`` feet get zero acceleration and carry a wrench."""
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    in_contact: bool = True


@dataclass
class TorqueTaskReferences:
    feet: dict                       # role -> FootMotion
    zmp: np.ndarray
    com_height: float
    com_height_velocity: float = 0.0
    com_height_acceleration: float = 0.0
    torso_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    torso_omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torso_omega_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    posture: np.ndarray | None = None
    posture_velocity: np.ndarray | None = None

    def validate(self) -> None:
        for name, f in self.feet.items():
            if not _is_rotation(f.rotation):
                raise ValueError(f"{name} rotation reference is not in SO(3)")
        if not _is_rotation(self.torso_rotation):
            raise ValueError("torso rotation reference is not in SO(3)")
        if not any(f.in_contact for f in self.feet.values()):
            raise ValueError("torque QP needs at least one contact")


@dataclass
class TorqueSolution:
    nu_dot: np.ndarray
    tau: np.ndarray
    wrenches: dict                  # role -> 6-vector (force; torque), inertial coordinates at the sole
    status: QpStatus
    iterations: int
    residuals: dict
    zmp: np.ndarray                 # global ZMP reproduced from the wrenches
    zmp_reference: np.ndarray       # the reference actually imposed (after any projection)
    active: list
    projected: bool = False

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.nu_dot, self.tau] + list(self.wrenches.values()))


@dataclass
class TorqueProblem:
    qp: QpProblem
    labels: list
    contacts: list
    n_eq: int
    blocks: dict
    zmp_reference: np.ndarray
    M: np.ndarray
    h: np.ndarray
    Jc: np.ndarray


def build_qp(model: RobotModel, state: RobotState, refs: TorqueTaskReferences, gains: TorqueGains,
             gravity=dyn.DEFAULT_GRAVITY, data=None) -> TorqueProblem:
    refs.validate()
    gains.validate()
    n, nv = model.n, model.nv
    d = data if data is not None else kin.compute(model, state)
    nu = state.nu
    contacts = [k for k in FEET if k in refs.feet and refs.feet[k].in_contact]
    nc = len(contacts)
    nx = nv + n + 6 * nc
    iv, it, iff = slice(0, nv), slice(nv, nv + n), slice(nv + n, nx)

    M = dyn.mass_matrix(model, state, d)
    h = dyn.bias_forces(model, state, gravity, d)
    Bsel = dyn.selector(model)
    poses = {k: kin.frame_pose(model, state, k, d) for k in refs.feet}
    Js = {k: kin.frame_jacobian(model, state, k, d) for k in refs.feet}
    Jc = np.vstack([Js[k] for k in contacts]) if nc else np.zeros((0, nv))

    eq_rows, eq_rhs, labels = [], [], []

    def add_eq(A, b, names):
        eq_rows.append(A)
        eq_rhs.append(np.atleast_1d(b))
        labels.extend(names)

    # dynamics: M nu_dot + h = B tau + Jc^T f
    A = np.zeros((nv, nx))
    A[:, iv], A[:, it], A[:, iff] = M, -Bsel, -Jc.T
    add_eq(A, -h, [f"dynamics[{i}]" for i in range(nv)])

    # feet
    for k, fm in refs.feet.items():
        H = poses[k]
        bias = kin.bias_acceleration(model, state, k, d)
        if fm.in_contact:
            acc = np.zeros(6)
        else:
            tw = Js[k] @ nu
            lin = linear_pid(H[:3, 3], fm.position, tw[:3], fm.velocity, fm.acceleration, gains.foot_kp, gains.foot_kd)
            ang = rotational_pid(H[:3, :3], fm.rotation, tw[3:], fm.omega, fm.omega_dot, gains.c0, gains.c1, gains.c2)
            acc = np.concatenate([lin, ang])
        A = np.zeros((6, nx))
        A[:, iv] = Js[k]
        add_eq(A, acc - bias, [f"{k}_{c}" for c in ("ax", "ay", "az", "alx", "aly", "alz")])

    # CoM height
    com = kin.com_state(model, state, d)
    z_acc = linear_pid(com.position[2:], refs.com_height, com.velocity[2:], refs.com_height_velocity,
                       refs.com_height_acceleration, gains.com_height_kp, gains.com_height_kd)
    A = np.zeros((1, nx))
    A[0, iv] = com.jacobian[2]
    add_eq(A, z_acc - com.bias_acceleration[2], ["com_height"])

    # ZMP
    A = np.zeros((2, nx))
    A[:, iff] = zmp_equality([poses[k][:3, 3] for k in contacts], refs.zmp)
    add_eq(A, np.zeros(2), ["zmp_x", "zmp_y"])
    n_eq = sum(len(b) for b in eq_rhs)

    # inequalities: wrench feasibility and torque bounds
    wf = WrenchFeasibilitySet.build(gains.mu, model.foot.length, model.foot.width, gains.n_facets)
    in_rows, in_lo, in_hi = [], [], []
    for c, k in enumerate(contacts):
        A = np.zeros((len(wf.labels), nx))
        A[:, nv + n + 6 * c: nv + n + 6 * c + 6] = wf.in_world(poses[k][:3, :3])
        in_rows.append(A)
        in_lo.append(np.full(len(wf.labels), -np.inf))
        in_hi.append(np.zeros(len(wf.labels)))
        labels.extend(f"{k}_{l}" for l in wf.labels)
    tl = np.full(n, gains.torque_limit) if gains.torque_limit is not None else model.torque_limits()
    A = np.zeros((n, nx))
    A[:, it] = np.eye(n)
    in_rows.append(A)
    in_lo.append(-tl)
    in_hi.append(tl)
    labels.extend(f"torque[{j.name}]" for j in model.joints)

    # cost
    Hq = gains.regularization * np.eye(nx)
    gq = np.zeros(nx)
    Ht = kin.frame_pose(model, state, "torso", d)
    Jt = kin.frame_jacobian(model, state, "torso", d)
    wt = Jt[3:] @ nu
    dw_des = rotational_pid(Ht[:3, :3], refs.torso_rotation, wt, refs.torso_omega, refs.torso_omega_dot,
                            gains.c0, gains.c1, gains.c2)
    Jtw = np.zeros((3, nx))
    Jtw[:, iv] = Jt[3:]
    bias_t = kin.bias_acceleration(model, state, "torso", d)[3:]
    # ||dw_des - (Jt nu_dot + bias)||^2
    Hq += gains.torso_weight * Jtw.T @ Jtw
    gq -= gains.torso_weight * Jtw.T @ (dw_des - bias_t)

    s_ref = refs.posture if refs.posture is not None else state.joint_positions
    sd_ref = refs.posture_velocity if refs.posture_velocity is not None else np.zeros(n)
    sdd_des = -gains.posture_kd * (state.joint_velocities - sd_ref) - gains.posture_kp * (state.joint_positions - s_ref)
    Sp = np.zeros((n, nx))
    Sp[:, 6:nv] = np.eye(n)
    Hq += gains.posture_weight * Sp.T @ Sp
    gq -= gains.posture_weight * Sp.T @ sdd_des

    Hq[it, it] += gains.torque_weight * np.eye(n)
    Hq[iff, iff] += gains.wrench_weight * np.eye(6 * nc)
    if gains.wrench_mode == "nominal" and nc:
        weight = model.total_mass * abs(gravity[2])
        f_nom = np.tile([0, 0, weight / nc, 0, 0, 0], nc)
        gq[iff] -= gains.wrench_weight * f_nom

    A = np.vstack(eq_rows + in_rows)
    beq = np.concatenate(eq_rhs)
    lo = np.concatenate([beq] + in_lo)
    hi = np.concatenate([beq] + in_hi)
    qp = QpProblem(0.5 * (Hq + Hq.T), gq, A, lo, hi)
    return TorqueProblem(qp, labels, contacts, n_eq, dict(nu_dot=iv, tau=it, f=iff), np.asarray(refs.zmp, float)[:2],
                         M, h, Jc)


def _residuals(model, tp: TorqueProblem, x, gains: TorqueGains, poses) -> dict:
    qp = tp.qp
    nv = model.nv
    A = qp.constraint_matrix
    eq = A[:tp.n_eq] @ x - qp.lower_bounds[:tp.n_eq]
    res = {"dynamics": float(np.max(np.abs(eq[:nv]))),
           "tasks": float(np.max(np.abs(eq[nv:tp.n_eq - 2]))) if tp.n_eq - 2 > nv else 0.0,
           "zmp_rows": float(np.max(np.abs(eq[tp.n_eq - 2:])))}
    ineq = A[tp.n_eq:] @ x
    res["inequality"] = float(max(0.0, np.max(ineq - qp.upper_bounds[tp.n_eq:]),
                                  np.max(qp.lower_bounds[tp.n_eq:] - ineq)))
    f = x[tp.blocks["f"]].reshape(-1, 6)
    fr = 0.0
    cop = 0.0
    for k, w in zip(tp.contacts, f):
        R = poses[k][:3, :3]
        fl, tl = R.T @ w[:3], R.T @ w[3:]
        fr = max(fr, float(np.hypot(fl[0], fl[1]) - gains.mu * fl[2]))
        if fl[2] > 0:
            cx, cy = -tl[1] / fl[2], tl[0] / fl[2]
            cop = max(cop, abs(cx) - model.foot.length / 2, abs(cy) - model.foot.width / 2)
    res["friction"] = fr
    res["cop"] = cop
    return res


def build_and_solve(model: RobotModel, state: RobotState, refs: TorqueTaskReferences, gains: TorqueGains,
                    qp_settings: QpSettings | None = None, gravity=dyn.DEFAULT_GRAVITY, project_zmp: bool = False,
                    zmp_margin: float = 0.0, warm_start=None, data=None,
                    coplanar_tol: float = COPLANAR_TOL) -> TorqueSolution:
    """Solve one tick.

    With ``project_zmp`` a reference outside the contact hull (shrunk by
    ``zmp_margin``) is replaced by its projection instead of raising.
    """
    d = data if data is not None else kin.compute(model, state)
    contacts = [k for k in FEET if k in refs.feet and refs.feet[k].in_contact]
    poses = {k: kin.frame_pose(model, state, k, d) for k in contacts}
    planar = [(H[0, 3], H[1, 3], yaw_of(H[:3, :3])) for H in poses.values()]
    projected = False
    try:
        check_zmp_reference(planar, refs.zmp, model.foot.length - 2 * zmp_margin, model.foot.width - 2 * zmp_margin)
    except ZmpRefInfeasible:
        if not project_zmp:
            raise
        poly = support_polygon(planar, model.foot.length, model.foot.width, zmp_margin)
        refs = _with_zmp(refs, poly.project(refs.zmp))
        projected = True
    tp = build_qp(model, state, refs, gains, gravity, d)
    sol = solve(tp.qp, qp_settings, warm_start=warm_start)
    if sol.status is not QpStatus.SOLVED:
        rows = []
        if sol.status is QpStatus.PRIMAL_INFEASIBLE and sol.certificate is not None:
            y = np.asarray(sol.certificate)
            rows = [tp.labels[i] for i in np.flatnonzero(np.abs(y) > 1e-6 * max(1.0, np.abs(y).max()))]
        raise TorqueQpInfeasible(sol.status, sol.certificate, rows)
    x = sol.primal
    f = x[tp.blocks["f"]].reshape(-1, 6)
    wrenches = {k: f[i].copy() for i, k in enumerate(contacts)}
    zmp = global_zmp([Contact(ContactWrench(k, poses[k][:3, :3].T @ w[:3], poses[k][:3, :3].T @ w[3:]), poses[k])
                      for k, w in wrenches.items()], coplanar_tol=coplanar_tol)
    res = _residuals(model, tp, x, gains, poses)
    res["zmp"] = float(np.max(np.abs(zmp[:2] - tp.zmp_reference)))
    active = [tp.labels[tp.n_eq + i] for i in np.flatnonzero(sol.active_upper[tp.n_eq:] | sol.active_lower[tp.n_eq:])] \
        if sol.active_upper.size else []
    return TorqueSolution(x[tp.blocks["nu_dot"]].copy(), x[tp.blocks["tau"]].copy(), wrenches, sol.status,
                          sol.iterations, res, zmp[:2], tp.zmp_reference, active, projected)


def _with_zmp(refs: TorqueTaskReferences, r) -> TorqueTaskReferences:
    return replace(refs, zmp=np.asarray(r, dtype=float))


def forward_acceleration(model: RobotModel, state: RobotState, tau, wrenches: dict, gravity=dyn.DEFAULT_GRAVITY):
    """``nu_dot`` of the model under ``tau`` and contact wrenches (inertial-frame, at each frame)."""
    M = dyn.mass_matrix(model, state)
    h = dyn.bias_forces(model, state, gravity)
    rhs = dyn.selector(model) @ tau - h
    for k, w in wrenches.items():
        rhs += kin.frame_jacobian(model, state, k).T @ w
    return np.linalg.solve(M, rhs)
