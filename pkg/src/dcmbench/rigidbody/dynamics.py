"""Mass matrix and bias forces of the floating-base model.

Spatial quantities are expressed at the inertial origin with motion vectors
ordered ``(omega, v_O)`` and force vectors ``(n_O, f)``.  In this frame every
joint motion subspace is a constant-per-state 6-vector, so the composite
rigid-body algorithm reduces to sums of world-frame inertias.

Sign convention for ``bias_forces``: the returned ``h`` enters
``M nu_dot + h = B tau + sum J' f``.  With gravity ``(0, 0, -9.81)`` and zero
velocity the base force rows of ``h`` are ``(0, 0, +m g)``.
"""
from __future__ import annotations

import numpy as np

from .kinematics import KinematicsData, _point_bias, compute
from .model import RobotModel, RobotState
from .spatial import cross, skew

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])


def _link_world_inertia(model: RobotModel, d: KinematicsData) -> np.ndarray:
    """(L, 6, 6) spatial inertias about the inertial origin."""
    out = np.empty((len(model.links), 6, 6))
    for i, l in enumerate(model.links):
        R = d.link_R[i]
        Ic = R @ l.inertia @ R.T
        c = d.com_world[i]
        C = skew(c)
        m = l.mass
        out[i, :3, :3] = Ic - m * C @ C
        out[i, :3, 3:] = m * C
        out[i, 3:, :3] = -m * C
        out[i, 3:, 3:] = m * np.eye(3)
    return out


def motion_subspace(model: RobotModel, d: KinematicsData) -> np.ndarray:
    """6 x (n+6) matrix of generalized-velocity motion vectors at the origin."""
    S = np.zeros((6, model.nv))
    S[3:, 0:3] = np.eye(3)
    S[:3, 3:6] = np.eye(3)
    S[3:, 3:6] = skew(d.base_p)
    for k in range(model.n):
        a = d.joint_axis[k]
        S[:3, 6 + k] = a
        S[3:, 6 + k] = cross(d.joint_p[k], a)
    return S


def mass_matrix(model: RobotModel, state: RobotState, data: KinematicsData | None = None) -> np.ndarray:
    """Composite rigid-body algorithm."""
    d = data if data is not None else compute(model, state)
    Il = _link_world_inertia(model, d)
    S = motion_subspace(model, d)
    # composite inertia of the subtree rooted at each joint's child
    Ic = [Il[sub].sum(axis=0) for sub in model.subtree_links]
    nv = model.nv
    M = np.zeros((nv, nv))
    Sb = S[:, :6]
    M[:6, :6] = Sb.T @ Il.sum(axis=0) @ Sb
    for k in range(model.n):
        F = Ic[k] @ S[:, 6 + k]
        M[:6, 6 + k] = Sb.T @ F
        M[6 + k, :6] = M[:6, 6 + k]
        # ancestors j of k (including k itself) see the subtree of k
        child = model.link_index[model.joints[k].child]
        for j in model.link_support[child]:
            M[6 + j, 6 + k] = S[:, 6 + j] @ F
            M[6 + k, 6 + j] = M[6 + j, 6 + k]
    return M


def bias_forces(model: RobotModel, state: RobotState, gravity=DEFAULT_GRAVITY,
                data: KinematicsData | None = None) -> np.ndarray:
    """``C(q, nu) nu + G(q)`` via Newton-Euler at zero generalized acceleration."""
    d = data if data is not None else compute(model, state)
    g = np.asarray(gravity, dtype=float)
    S = motion_subspace(model, d)
    L = len(model.links)
    wrench = np.empty((L, 6))
    for i, l in enumerate(model.links):
        R = d.link_R[i]
        Iw = R @ l.inertia @ R.T
        c = d.com_world[i]
        ac = _point_bias(d, i, c)[:3]
        w = d.link_omega[i]
        f = l.mass * (ac - g)
        n = Iw @ d.link_alpha[i] + cross(w, Iw @ w)
        wrench[i, :3] = n + cross(c, f)
        wrench[i, 3:] = f
    h = np.empty(model.nv)
    h[:6] = S[:, :6].T @ wrench.sum(axis=0)
    for k, sub in enumerate(model.subtree_links):
        h[6 + k] = S[:, 6 + k] @ wrench[sub].sum(axis=0)
    return h


def gravity_forces(model: RobotModel, state: RobotState, gravity=DEFAULT_GRAVITY) -> np.ndarray:
    return bias_forces(model, state.with_velocity(np.zeros(model.nv)), gravity)


def selector(model: RobotModel) -> np.ndarray:
    """``B``: maps joint torques into generalized forces."""
    B = np.zeros((model.nv, model.n))
    B[6:, :] = np.eye(model.n)
    return B


def kinetic_energy(model: RobotModel, state: RobotState, data: KinematicsData | None = None) -> float:
    nu = state.nu
    return 0.5 * float(nu @ mass_matrix(model, state, data) @ nu)
