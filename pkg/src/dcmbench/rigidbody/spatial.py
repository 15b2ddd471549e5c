"""Rotation and homogeneous-transform helpers."""
from __future__ import annotations

import numpy as np


def skew(v) -> np.ndarray:
    """Matrix ``[v]x`` such that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross(a, b) -> np.ndarray:
    """Cross product of two 3-vectors; much cheaper than ``np.cross`` for single vectors."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def vee(W) -> np.ndarray:
    """Inverse of :func:`skew` for a matrix in so(3)."""
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def sk(A) -> np.ndarray:
    """Skew-symmetric part of a 3x3 matrix."""
    A = np.asarray(A)
    return 0.5 * (A - A.T)


def vee_sk(A) -> np.ndarray:
    """``(sk(A))^vee``; for general matrices the skew part is taken first."""
    return vee(sk(A))


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis roll-pitch-yaw (URDF convention): ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def exp_so3(w) -> np.ndarray:
    """Rotation matrix of the rotation vector ``w``."""
    w = np.asarray(w, dtype=float)
    th = float(np.linalg.norm(w))
    W = skew(w)
    if th < 1e-12:
        return np.eye(3) + W + 0.5 * W @ W
    return np.eye(3) + np.sin(th) / th * W + (1 - np.cos(th)) / th**2 * W @ W


def log_so3(R) -> np.ndarray:
    """Rotation vector of ``R`` (principal branch)."""
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = float(np.arccos(c))
    if th < 1e-9:
        return vee(sk(R))
    if np.pi - th < 1e-6:
        # near pi: axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        return th * axis
    return th / (2.0 * np.sin(th)) * vee(R - R.T)


def homogeneous(R, p) -> np.ndarray:
    H = np.eye(4)
    H[:3, :3] = R
    H[:3, 3] = p
    return H


def inv_transform(H) -> np.ndarray:
    R, p = H[:3, :3], H[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ p
    return out


def orthonormalize(R) -> np.ndarray:
    """Closest rotation matrix (polar decomposition)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R)
    return (R.shape == (3, 3)
            and np.max(np.abs(R.T @ R - np.eye(3))) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def yaw_of(R) -> float:
    return float(np.arctan2(R[1, 0], R[0, 0]))
