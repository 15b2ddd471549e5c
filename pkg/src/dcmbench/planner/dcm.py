"""DCM reference generation: backward recursion, C1 smoothing, ZMP and CoM."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .footsteps import Footstep, Side


class InvalidTiming(ValueError):
    pass


@dataclass(frozen=True)
class PendulumConstants:
    z0: float
    g: float = 9.81

    def __post_init__(self):
        if not (self.z0 > 0 and self.g > 0):
            raise ValueError("z0 and g must be positive")

    @property
    def b(self) -> float:
        return float(np.sqrt(self.z0 / self.g))

    @property
    def omega(self) -> float:
        return 1.0 / self.b


class TerminalRule(enum.Enum):
    LAST_FOOT = "last_foot"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class DcmPiece:
    """One constant-ZMP segment: ``xi(t) = r + exp(t/b) (xi_ios - r)``."""

    r_zmp: np.ndarray
    xi_ios: np.ndarray
    duration: float
    t_start: float = 0.0
    stance: Side | None = None  # None while both feet are planted

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("DcmPiece duration must be positive")
        object.__setattr__(self, "r_zmp", np.asarray(self.r_zmp, dtype=float).reshape(2))
        object.__setattr__(self, "xi_ios", np.asarray(self.xi_ios, dtype=float).reshape(2))

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def evaluate(self, t: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """DCM and its rate at absolute time ``t`` (may extrapolate)."""
        e = np.exp((t - self.t_start) / b) * (self.xi_ios - self.r_zmp)
        return self.r_zmp + e, e / b

    def xi_eos(self, b: float) -> np.ndarray:
        return self.evaluate(self.t_end, b)[0]


def plan_dcm(footsteps: list[Footstep], constants: PendulumConstants,
             terminal_rule: TerminalRule = TerminalRule.LAST_FOOT,
             t_final: float = 1.0) -> list[DcmPiece]:
    """Pieces for the initial standing phase, every stance foot, and the final standing phase.

    The recursion runs backwards from the final ZMP: each stance piece starts at
    ``r + exp(-t_step/b) (xi_eos - r)`` and ends where the next piece starts.
    """
    if len(footsteps) < 2:
        raise ValueError("need at least the two initial stance footholds")
    b = constants.b
    f = footsteps
    if terminal_rule is TerminalRule.LAST_FOOT or len(f) < 2:
        r_final = f[-1].position
    else:
        r_final = 0.5 * (f[-1].position + f[-2].position)
    spans = []  # (r, t_start, duration, stance side)
    t_init = f[1].impact_time - f[0].impact_time
    if t_init > 0:
        spans.append((0.5 * (f[0].position + f[1].position), f[0].impact_time, t_init, None))
    for k in range(1, len(f) - 1):
        spans.append((f[k].position, f[k].impact_time, f[k + 1].impact_time - f[k].impact_time, f[k].side))
    spans.append((r_final, f[-1].impact_time, float(t_final), None))
    pieces = [None] * len(spans)
    xi_eos = r_final
    for i in range(len(spans) - 1, -1, -1):
        r, t0, dur, side = spans[i]
        xi_ios = r + np.exp(-dur / b) * (xi_eos - r)
        pieces[i] = DcmPiece(r, xi_ios, dur, t0, side)
        xi_eos = xi_ios
    return pieces


def _hermite(t, ta, tb, xa, va, xb, vb):
    """Cubic through (ta, xa, va) and (tb, xb, vb): value, first and second derivative."""
    W = tb - ta
    s = (t - ta) / W
    h00, h10, h01, h11 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2
    d00, d10, d01, d11 = 6 * s**2 - 6 * s, 3 * s**2 - 4 * s + 1, -6 * s**2 + 6 * s, 3 * s**2 - 2 * s
    e00, e10, e01, e11 = 12 * s - 6, 6 * s - 4, -12 * s + 6, 6 * s - 2
    x = h00 * xa + h10 * W * va + h01 * xb + h11 * W * vb
    v = (d00 * xa + d10 * W * va + d01 * xb + d11 * W * vb) / W
    a = (e00 * xa + e10 * W * va + e01 * xb + e11 * W * vb) / W**2
    return x, v, a


class SmoothedDcm:
    """Continuous DCM trajectory: raw pieces with cubic blends around transitions."""

    def __init__(self, pieces: list[DcmPiece], ds_durations, b: float):
        self.pieces = list(pieces)
        self.b = float(b)
        ds = np.zeros(len(pieces) - 1) if ds_durations is None else np.asarray(ds_durations, dtype=float)
        if ds.shape != (len(pieces) - 1,):
            raise InvalidTiming(f"need {len(pieces) - 1} double-support durations, got {ds.size}")
        if np.any(ds < 0):
            raise InvalidTiming("double-support durations must be non-negative")
        self.ds = ds
        self.windows = []
        for i, w in enumerate(ds):
            tc = self.pieces[i].t_end
            self.windows.append((tc - w / 2, tc + w / 2))
        # each window must fit in its neighbours without overlapping the next one
        for i, p in enumerate(self.pieces):
            left = ds[i - 1] / 2 if i > 0 else 0.0
            right = ds[i] / 2 if i < len(ds) else 0.0
            if left + right > p.duration + 1e-12:
                raise InvalidTiming(f"double-support windows overlap inside piece {i} "
                                    f"({left + right:.4g} s > {p.duration:.4g} s)")

    @property
    def t_start(self) -> float:
        return self.pieces[0].t_start

    @property
    def t_end(self) -> float:
        return self.pieces[-1].t_end

    def piece_index(self, t: float) -> int:
        for i, p in enumerate(self.pieces):
            if t < p.t_end:
                return i
        return len(self.pieces) - 1

    def window_index(self, t: float) -> int | None:
        for i, (a, c) in enumerate(self.windows):
            if c > a and a <= t < c:
                return i
        return None

    def evaluate(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """DCM, rate and acceleration at time ``t``."""
        w = self.window_index(t)
        b = self.b
        if w is None:
            p = self.pieces[self.piece_index(t)]
            xi, xid = p.evaluate(t, b)
            return xi, xid, xid / b
        ta, tb = self.windows[w]
        xa, va = self.pieces[w].evaluate(ta, b)
        xb, vb = self.pieces[w + 1].evaluate(tb, b)
        return _hermite(t, ta, tb, xa, va, xb, vb)

    def zmp(self, t: float) -> np.ndarray:
        xi, xid, _ = self.evaluate(t)
        return xi - self.b * xid

    def max_zmp_rate(self, window: int, samples: int = 201) -> float:
        """Peak ZMP speed inside one blend window (ZMP is constant outside)."""
        ta, tb = self.windows[window]
        if tb <= ta:
            return np.inf if np.linalg.norm(self.pieces[window + 1].r_zmp - self.pieces[window].r_zmp) > 0 else 0.0
        xa, va = self.pieces[window].evaluate(ta, self.b)
        xb, vb = self.pieces[window + 1].evaluate(tb, self.b)
        s = np.linspace(ta, tb, samples)[:, None]
        _, v, a = _hermite(s, ta, tb, xa, va, xb, vb)
        rate = v - self.b * a  # d/dt (xi - b xi_dot)
        return float(np.max(np.linalg.norm(rate, axis=1)))


@dataclass
class SampledDcm:
    t: np.ndarray
    xi: np.ndarray
    xi_dot: np.ndarray
    trajectory: SmoothedDcm

    @property
    def period(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0


def sample_times(t0: float, t1: float, T: float) -> np.ndarray:
    return t0 + T * np.arange(int(np.floor((t1 - t0) / T + 1e-9)) + 1)


def smooth_dcm(pieces: list[DcmPiece], ds_durations, T: float, b: float) -> SampledDcm:
    """Sample the DCM with a C1 cubic blend of width ``ds_durations[i]`` around each transition."""
    traj = SmoothedDcm(pieces, ds_durations, b)
    t = sample_times(traj.t_start, traj.t_end, T)
    xi = np.empty((t.size, 2))
    xid = np.empty((t.size, 2))
    for k, tk in enumerate(t):
        xi[k], xid[k], _ = traj.evaluate(tk)
    return SampledDcm(t, xi, xid, traj)


def double_support_durations(pieces: list[DcmPiece], b: float, fraction: float = 0.2,
                             zmp_rate_limit: float | None = None, step: float = 0.01,
                             max_fraction: float = 0.8) -> np.ndarray:
    """Blend widths per transition.

    The nominal width is ``fraction`` of the shorter adjacent piece.  With a
    ``zmp_rate_limit`` each window is widened in increments of ``step`` until
    the blended ZMP speed stays below the limit, up to ``max_fraction`` of the
    shorter adjacent piece.  ``max_fraction < 1`` keeps neighbouring windows
    apart, which leaves every swing phase some time.
    """
    out = np.zeros(len(pieces) - 1)
    for i in range(len(out)):
        shorter = min(pieces[i].duration, pieces[i + 1].duration)
        cap = max_fraction * shorter
        w = min(fraction * shorter, cap)
        if zmp_rate_limit is not None:
            while True:
                ds = np.zeros(len(out))
                ds[i] = w
                rate = SmoothedDcm(pieces, ds, b).max_zmp_rate(i)
                if rate <= zmp_rate_limit or w >= cap - 1e-12:
                    break
                w = min(w + step, cap)
        out[i] = w
    return out


def derive_zmp_com(sampled: SampledDcm, constants: PendulumConstants, com0=None,
                   substeps: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ZMP ``xi - b xi_dot`` and the CoM of ``p_dot = (xi - p)/b`` integrated with RK4.

    ``substeps`` subdivides each sample period (used by the refinement check).
    Returns ``(zmp, com, com_velocity)`` sampled on ``sampled.t``.
    """
    b = constants.b
    traj = sampled.trajectory
    zmp = sampled.xi - b * sampled.xi_dot
    p = np.array(sampled.xi[0] if com0 is None else com0, dtype=float)
    com = np.empty_like(sampled.xi)
    com[0] = p
    xi_at = lambda t: traj.evaluate(t)[0]
    for k in range(1, sampled.t.size):
        t0, t1 = sampled.t[k - 1], sampled.t[k]
        h = (t1 - t0) / substeps
        for j in range(substeps):
            t = t0 + j * h
            k1 = (xi_at(t) - p) / b
            k2 = (xi_at(t + h / 2) - (p + h / 2 * k1)) / b
            k3 = (xi_at(t + h / 2) - (p + h / 2 * k2)) / b
            k4 = (xi_at(t + h) - (p + h * k3)) / b
            p = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        com[k] = p
    comv = (sampled.xi - com) / b
    return zmp, com, comv
