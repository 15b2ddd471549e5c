"""Exact discretization of the planar linear inverted pendulum."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class LipmDiscretization:
    """``x' = Ad x + Bd r`` with ``x = (p_x, p_y, v_x, v_y)`` and ZMP input ``r``."""
    b: float
    period: float
    A: np.ndarray
    B: np.ndarray
    Ad: np.ndarray
    Bd: np.ndarray

    def continuous_eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.A).real)

    def discrete_eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.Ad).real)


@lru_cache(maxsize=32)
def discretize(b: float, period: float) -> LipmDiscretization:
    if not (b > 0 and period > 0):
        raise ValueError("b and the period must be positive")
    w2 = 1.0 / b**2
    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    A[2:, :2] = w2 * np.eye(2)
    B = np.zeros((4, 2))
    B[2:] = -w2 * np.eye(2)
    aug = np.zeros((6, 6))
    aug[:4, :4], aug[:4, 4:] = A, B
    E = expm(aug * period)
    disc = LipmDiscretization(b, period, A, B, E[:4, :4], E[:4, 4:])
    ev = disc.continuous_eigenvalues()
    assert np.allclose(ev, [-1 / b, -1 / b, 1 / b, 1 / b], rtol=1e-12), ev
    for M in (A, B, disc.Ad, disc.Bd):
        M.setflags(write=False)
    return disc


def lipm_step(p, v, r, b: float, period: float) -> tuple[np.ndarray, np.ndarray]:
    """Advance CoM position and velocity over one period under a constant ZMP."""
    d = discretize(float(b), float(period))
    x = d.Ad @ np.concatenate([p, v]) + d.Bd @ np.asarray(r, dtype=float)
    return x[:2], x[2:]


def consistent_zmp(p, v, v_next, b: float, period: float) -> np.ndarray:
    """Constant ZMP that takes the CoM velocity from ``v`` to ``v_next`` over one period."""
    d = discretize(float(b), float(period))
    # per axis: v' = Ad[v,p] p + Ad[v,v] v + Bd[v] r
    a_vp, a_vv, b_v = d.Ad[2, 0], d.Ad[2, 2], d.Bd[2, 0]
    return (np.asarray(v_next, dtype=float) - a_vp * np.asarray(p, dtype=float)
            - a_vv * np.asarray(v, dtype=float)) / b_v
