"""Forward kinematics, frame Jacobians and bias accelerations.

All per-state quantities are computed once into a :class:`KinematicsData` and
the frame-level functions read from it.  Passing a ready ``data`` object avoids
recomputation when a controller queries several frames of the same state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RobotModel, RobotState
from .spatial import cross, exp_so3, skew


@dataclass
class KinematicsData:
    link_R: np.ndarray      # (L, 3, 3) world rotation of each link frame
    link_p: np.ndarray      # (L, 3) world origin of each link frame
    joint_axis: np.ndarray  # (n, 3) world axis of each joint
    joint_p: np.ndarray     # (n, 3) world point on each joint axis
    link_omega: np.ndarray  # (L, 3) angular velocity
    link_v: np.ndarray      # (L, 3) velocity of the link origin
    link_alpha: np.ndarray  # (L, 3) angular acceleration at zero nu_dot
    link_a: np.ndarray      # (L, 3) acceleration of the link origin at zero nu_dot
    com_world: np.ndarray   # (L, 3) world position of each link CoM
    base_p: np.ndarray


def compute(model: RobotModel, state: RobotState) -> KinematicsData:
    L, n = len(model.links), model.n
    R = np.empty((L, 3, 3))
    p = np.empty((L, 3))
    axis = np.empty((n, 3))
    jp = np.empty((n, 3))
    om = np.empty((L, 3))
    v = np.empty((L, 3))
    al = np.empty((L, 3))
    a = np.empty((L, 3))
    b = model.link_index[model.base]
    R[b] = state.base_rotation
    p[b] = state.base_position
    om[b] = state.base_angular_velocity
    v[b] = state.base_linear_velocity
    al[b] = 0.0
    a[b] = 0.0
    s = state.joint_positions
    sd = state.joint_velocities
    for k in model.joint_order:
        j = model.joints[k]
        pi = model.link_index[j.parent]
        ci = model.link_index[j.child]
        Rj = R[pi] @ j.origin[:3, :3]
        pj = p[pi] + R[pi] @ j.origin[:3, 3]
        ax = Rj @ j.axis
        R[ci] = Rj @ exp_so3(j.axis * s[k])
        p[ci] = pj
        axis[k] = ax
        jp[k] = pj
        r = pj - p[pi]
        w_p = om[pi]
        v[ci] = v[pi] + cross(w_p, r)
        a[ci] = a[pi] + cross(al[pi], r) + cross(w_p, cross(w_p, r))
        om[ci] = w_p + ax * sd[k]
        al[ci] = al[pi] + cross(w_p, ax * sd[k])
    com = p + np.einsum("lij,lj->li", R, np.array([l.com for l in model.links]))
    return KinematicsData(R, p, axis, jp, om, v, al, a, com, state.base_position.copy())


def _data(model, state, data):
    return data if data is not None else compute(model, state)


def frame_pose(model: RobotModel, state: RobotState, frame: str,
               data: KinematicsData | None = None) -> np.ndarray:
    """World transform of ``frame`` (a named frame, role, or link)."""
    li, off = model.resolve_frame(frame)
    d = _data(model, state, data)
    H = np.eye(4)
    H[:3, :3] = d.link_R[li] @ off[:3, :3]
    H[:3, 3] = d.link_p[li] + d.link_R[li] @ off[:3, 3]
    return H


def point_jacobian(model: RobotModel, d: KinematicsData, link: int, x: np.ndarray) -> np.ndarray:
    """6 x (n+6) Jacobian of a point ``x`` (world) rigidly attached to ``link``."""
    J = np.zeros((6, model.nv))
    J[0:3, 0:3] = np.eye(3)
    J[0:3, 3:6] = -skew(x - d.base_p)
    J[3:6, 3:6] = np.eye(3)
    for k in model.link_support[link]:
        J[0:3, 6 + k] = cross(d.joint_axis[k], x - d.joint_p[k])
        J[3:6, 6 + k] = d.joint_axis[k]
    return J


def frame_jacobian(model: RobotModel, state: RobotState, frame: str,
                   data: KinematicsData | None = None) -> np.ndarray:
    """Jacobian mapping ``nu`` to the frame twist (linear; angular)."""
    li, off = model.resolve_frame(frame)
    d = _data(model, state, data)
    x = d.link_p[li] + d.link_R[li] @ off[:3, 3]
    return point_jacobian(model, d, li, x)


def _point_bias(d: KinematicsData, li: int, x: np.ndarray) -> np.ndarray:
    r = x - d.link_p[li]
    w = d.link_omega[li]
    lin = d.link_a[li] + cross(d.link_alpha[li], r) + cross(w, cross(w, r))
    return np.concatenate([lin, d.link_alpha[li]])


def bias_acceleration(model: RobotModel, state: RobotState, frame: str,
                      data: KinematicsData | None = None) -> np.ndarray:
    """``J_dot nu`` for ``frame``: its acceleration when ``nu_dot = 0``."""
    li, off = model.resolve_frame(frame)
    d = _data(model, state, data)
    x = d.link_p[li] + d.link_R[li] @ off[:3, 3]
    return _point_bias(d, li, x)


def frame_twist(model, state, frame, data=None) -> np.ndarray:
    li, off = model.resolve_frame(frame)
    d = _data(model, state, data)
    x = d.link_p[li] + d.link_R[li] @ off[:3, 3]
    w = d.link_omega[li]
    return np.concatenate([d.link_v[li] + cross(w, x - d.link_p[li]), w])


@dataclass
class ComState:
    position: np.ndarray   # p_C
    jacobian: np.ndarray   # 3 x (n+6)
    velocity: np.ndarray   # J_com nu
    bias_acceleration: np.ndarray  # J_com_dot nu


def com_state(model: RobotModel, state: RobotState, data: KinematicsData | None = None) -> ComState:
    d = _data(model, state, data)
    masses = np.array([l.mass for l in model.links])
    M = masses.sum()
    pc = masses @ d.com_world / M
    J = np.zeros((3, model.nv))
    J[:, 0:3] = np.eye(3)
    J[:, 3:6] = -skew(pc - d.base_p)
    for k, sub in enumerate(model.subtree_links):
        m_sub = masses[sub].sum()
        c_sub = masses[sub] @ d.com_world[sub] / m_sub
        J[:, 6 + k] = m_sub / M * cross(d.joint_axis[k], c_sub - d.joint_p[k])
    bias = np.zeros(3)
    for li in range(len(model.links)):
        bias += masses[li] * _point_bias(d, li, d.com_world[li])[:3]
    return ComState(pc, J, J @ state.nu, bias / M)
