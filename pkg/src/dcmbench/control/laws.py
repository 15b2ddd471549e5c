"""Instantaneous DCM feedback and the ZMP-CoM velocity law."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidGains(ValueError):
    pass


def _pd(M) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0)


def _psd(M) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= 0)


def _mat(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(2)
    if a.ndim == 1:
        return np.diag(a)
    return a.reshape(2, 2)


@dataclass(frozen=True)
class DcmGains:
    kp: np.ndarray = field(default_factory=lambda: 3.0 * np.eye(2))
    ki: np.ndarray = field(default_factory=lambda: 1.0 * np.eye(2))
    integral_limit: np.ndarray = field(default_factory=lambda: np.array([0.05, 0.05]))

    def __post_init__(self):
        object.__setattr__(self, "kp", _mat(self.kp))
        object.__setattr__(self, "ki", _mat(self.ki))
        object.__setattr__(self, "integral_limit", np.broadcast_to(
            np.asarray(self.integral_limit, dtype=float), (2,)).copy())

    def satisfies_stability_condition(self) -> bool:
        """``K_p - I`` positive definite and ``K_i`` positive semidefinite."""
        return _pd(self.kp - np.eye(2)) and _psd(self.ki)

    def validate(self) -> None:
        if not self.satisfies_stability_condition():
            raise InvalidGains("DCM gains need K_p - I positive definite and K_i positive semidefinite")


def error_system_matrix(gains: DcmGains, b: float) -> np.ndarray:
    """4x4 matrix of the closed-loop error system in ``(xi_err, integral of xi_err)``."""
    A = np.zeros((4, 4))
    A[:2, :2] = (np.eye(2) - gains.kp) / b
    A[:2, 2:] = -gains.ki / b
    A[2:, :2] = np.eye(2)
    return A


@dataclass(frozen=True)
class IntegralState:
    """Running integral of the DCM error plus the last error (for the trapezoid)."""
    value: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_error: np.ndarray | None = None


def dcm_feedback(xi, xi_ref, xi_dot_ref, integral, gains: DcmGains, b: float) -> np.ndarray:
    """``r* = xi_ref - b xi_dot_ref + K_p e + K_i integral`` with ``e = xi - xi_ref``."""
    xi_ref = np.asarray(xi_ref, dtype=float)
    e = np.asarray(xi, dtype=float) - xi_ref
    return xi_ref - b * np.asarray(xi_dot_ref, dtype=float) + gains.kp @ e + gains.ki @ np.asarray(integral, dtype=float)


def instantaneous_dcm(xi, xi_ref, xi_dot_ref, state: IntegralState, gains: DcmGains, b: float,
                      period: float) -> tuple[np.ndarray, IntegralState]:
    """One tick of the instantaneous law.

    The integral is advanced by the trapezoidal rule over ``period`` (the first
    tick only records the error) and clamped before it enters the law.
    """
    e = np.asarray(xi, dtype=float) - np.asarray(xi_ref, dtype=float)
    value = state.value
    if state.last_error is not None:
        value = value + 0.5 * period * (e + state.last_error)
    value = np.clip(value, -gains.integral_limit, gains.integral_limit)
    r = dcm_feedback(xi, xi_ref, xi_dot_ref, value, gains, b)
    return r, IntegralState(value, e)


class InstantaneousDcmController:
    """Stateful wrapper around :func:`instantaneous_dcm`.

    With ``polygon`` passed to :meth:`step` and ``project`` enabled the command
    is projected onto the support polygon afterwards.
    """

    def __init__(self, gains: DcmGains, b: float, period: float, project: bool = False):
        gains.validate()
        self.gains, self.b, self.period = gains, float(b), float(period)
        self.project = project
        self.reset()

    def reset(self) -> None:
        self.state = IntegralState()

    @property
    def integral(self) -> np.ndarray:
        return self.state.value

    def step(self, xi, xi_ref, xi_dot_ref, polygon=None) -> np.ndarray:
        r, self.state = instantaneous_dcm(xi, xi_ref, xi_dot_ref, self.state, self.gains, self.b, self.period)
        if self.project and polygon is not None:
            r = polygon.project(r)
        return r


@dataclass(frozen=True)
class ZmpComGains:
    k_zmp: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(2))
    k_com: np.ndarray = field(default_factory=lambda: 6.0 * np.eye(2))

    def __post_init__(self):
        object.__setattr__(self, "k_zmp", _mat(self.k_zmp))
        object.__setattr__(self, "k_com", _mat(self.k_com))

    def validate(self, b: float) -> None:
        I = np.eye(2) / b
        if not _pd(self.k_com - I):
            raise InvalidGains(f"K_com must exceed 1/b = {1 / b:.4g}")
        if not (_pd(self.k_zmp) and _pd(I - self.k_zmp)):
            raise InvalidGains(f"K_zmp must lie strictly between 0 and 1/b = {1 / b:.4g}")


def zmp_com_control(r_star, r_meas, p_ref, p_meas, v_ref, gains: ZmpComGains) -> np.ndarray:
    """``v* = v_ref - K_zmp (r* - r) + K_com (p_ref - p)``."""
    return (np.asarray(v_ref, dtype=float) - gains.k_zmp @ (np.asarray(r_star) - r_meas)
            + gains.k_com @ (np.asarray(p_ref) - p_meas))


class ZmpComController:
    def __init__(self, gains: ZmpComGains, b: float):
        gains.validate(b)
        self.gains, self.b = gains, float(b)

    def step(self, r_star, r_meas, p_ref, p_meas, v_ref) -> np.ndarray:
        return zmp_com_control(r_star, r_meas, p_ref, p_meas, v_ref, self.gains)
