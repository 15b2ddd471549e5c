"""Swing-foot trajectories, contact phases and the sampled reference bundle."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .dcm import (DcmPiece, InvalidTiming, PendulumConstants, SmoothedDcm, TerminalRule, derive_zmp_com,
                  double_support_durations, plan_dcm, smooth_dcm)
from .footsteps import Footstep, Side, StepBounds, plan_footsteps


class Phase(enum.Enum):
    LEFT_SS = "LeftSS"
    RIGHT_SS = "RightSS"
    DS = "DS"

    @property
    def stance(self) -> Side | None:
        return {Phase.LEFT_SS: Side.LEFT, Phase.RIGHT_SS: Side.RIGHT}.get(self)


def _smoothstep(s):
    """Cubic with zero slope at both ends, plus its first two derivatives in s."""
    return 3 * s**2 - 2 * s**3, 6 * s - 6 * s**2, 6 - 12 * s


@dataclass(frozen=True)
class Swing:
    side: Side
    t_lift: float
    t_touch: float
    start: tuple  # (x, y, yaw)
    end: tuple

    def evaluate(self, t: float, h_apex: float):
        """Pose (x, y, z, yaw), twist and acceleration of the swinging foot."""
        D = self.t_touch - self.t_lift
        s = min(max((t - self.t_lift) / D, 0.0), 1.0)
        f, df, ddf = _smoothstep(s)
        p0 = np.array(self.start, dtype=float)
        dp = np.array(self.end, dtype=float) - p0
        dp[2] = (dp[2] + np.pi) % (2 * np.pi) - np.pi  # shortest yaw change
        xyyaw = p0 + f * dp
        v = df / D * dp
        a = ddf / D**2 * dp
        # z: up then down, each half a zero-slope cubic
        half = 0.5 * D
        if s < 0.5:
            g, dg, ddg = _smoothstep(s * 2)
            z, vz, az = h_apex * g, h_apex * dg / half, h_apex * ddg / half**2
        else:
            g, dg, ddg = _smoothstep(s * 2 - 1)
            z, vz, az = h_apex * (1 - g), -h_apex * dg / half, -h_apex * ddg / half**2
        pose = np.array([xyyaw[0], xyyaw[1], z, xyyaw[2]])
        twist = np.array([v[0], v[1], vz, 0.0, 0.0, v[2]])
        acc = np.array([a[0], a[1], az, 0.0, 0.0, a[2]])
        return pose, twist, acc


class ContactSchedule:
    """Which feet touch the ground when, derived from footsteps and blend windows."""

    def __init__(self, footsteps: list[Footstep], trajectory: SmoothedDcm):
        self.footsteps = footsteps
        self.trajectory = trajectory
        pieces = trajectory.pieces
        has_standing = pieces[0].stance is None and len(pieces) > 1 and \
            footsteps[1].impact_time > footsteps[0].impact_time

        def window(k):
            idx = k - 1 if has_standing else k - 2
            if idx < 0:
                t = footsteps[0].impact_time
                return t, t
            return trajectory.windows[idx]

        self.swings: list[Swing] = []
        for k in range(2, len(footsteps)):
            lift = window(k - 1)[1]
            touch = window(k)[0]
            if not touch > lift:
                raise InvalidTiming(f"footstep {k}: swing has no time between lift-off and touchdown")
            a, c = footsteps[k - 2], footsteps[k]
            self.swings.append(Swing(c.side, lift, touch, a.pose, c.pose))
        self.initial = {s.side: s.pose for s in footsteps[:2]}

    def foot(self, side: Side, t: float, h_apex: float):
        pose = self.initial[side]
        for sw in self.swings:
            if sw.side is not side:
                continue
            if sw.t_lift <= t < sw.t_touch:
                return sw.evaluate(t, h_apex)
            if t >= sw.t_touch:
                pose = sw.end
        return np.array([pose[0], pose[1], 0.0, pose[2]]), np.zeros(6), np.zeros(6)

    def phase(self, t: float) -> Phase:
        for sw in self.swings:
            if sw.t_lift <= t < sw.t_touch:
                return Phase.RIGHT_SS if sw.side is Side.LEFT else Phase.LEFT_SS
        return Phase.DS

    def in_contact(self, side: Side, t: float) -> bool:
        return not any(sw.side is side and sw.t_lift <= t < sw.t_touch for sw in self.swings)


@dataclass
class FootSamples:
    pose: np.ndarray   # (N, 4): x, y, z, yaw
    twist: np.ndarray  # (N, 6): linear; angular
    acc: np.ndarray    # (N, 6)

    def transform(self, k: int) -> np.ndarray:
        x, y, z, yaw = self.pose[k]
        c, s = np.cos(yaw), np.sin(yaw)
        H = np.eye(4)
        H[:2, :2] = [[c, -s], [s, c]]
        H[:3, 3] = [x, y, z]
        return H


def swing_trajectory(footsteps: list[Footstep], h_apex: float, T: float, trajectory: SmoothedDcm,
                     t: np.ndarray | None = None):
    """Sampled poses, twists and accelerations for both feet plus the phase tags."""
    sched = ContactSchedule(footsteps, trajectory)
    if t is None:
        from .dcm import sample_times
        t = sample_times(trajectory.t_start, trajectory.t_end, T)
    feet = {}
    for side in Side:
        P, V, A = np.empty((t.size, 4)), np.empty((t.size, 6)), np.empty((t.size, 6))
        for k, tk in enumerate(t):
            P[k], V[k], A[k] = sched.foot(side, tk, h_apex)
        feet[side] = FootSamples(P, V, A)
    phases = [sched.phase(tk) for tk in t]
    return feet, phases, sched


@dataclass(frozen=True)
class PlannerConfig:
    speed: float = 0.15
    turn_rate: float = 0.0
    horizon: float = 8.0
    bounds: StepBounds = field(default_factory=StepBounds)
    t_init: float = 1.0
    t_final: float = 1.0
    ds_fraction: float = 0.2
    zmp_rate_limit: float | None = 0.5
    ds_max_fraction: float = 0.8
    h_apex: float = 0.03
    period: float = 0.01
    terminal_rule: TerminalRule = TerminalRule.LAST_FOOT
    first_swing: Side = Side.LEFT


@dataclass
class ReferenceTrajectories:
    period: float
    t: np.ndarray
    xi: np.ndarray
    xi_dot: np.ndarray
    zmp: np.ndarray
    com: np.ndarray
    com_vel: np.ndarray
    com_height: float
    left: FootSamples
    right: FootSamples
    phase: list
    footsteps: list
    pieces: list
    ds_durations: np.ndarray
    constants: PendulumConstants
    schedule: ContactSchedule

    def __len__(self) -> int:
        return self.t.size

    def foot(self, side: Side) -> FootSamples:
        return self.left if side is Side.LEFT else self.right

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def to_csv(self, path) -> None:
        cols = ["t", "xi_x", "xi_y", "xid_x", "xid_y", "zmp_x", "zmp_y", "com_x", "com_y", "comv_x", "comv_y",
                "lf_x", "lf_y", "lf_z", "lf_yaw", "rf_x", "rf_y", "rf_z", "rf_yaw", "phase"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k in range(len(self)):
                vals = [self.t[k], *self.xi[k], *self.xi_dot[k], *self.zmp[k], *self.com[k], *self.com_vel[k],
                        *self.left.pose[k], *self.right.pose[k]]
                w.writerow([repr(float(v)) for v in vals] + [self.phase[k].value])


def build_references(config: PlannerConfig, constants: PendulumConstants, left_start, right_start,
                     com0=None) -> ReferenceTrajectories:
    """Footsteps, DCM pieces, blends, ZMP/CoM and foot trajectories in one pass."""
    steps = plan_footsteps(left_start, right_start, config.speed, config.turn_rate, config.horizon,
                           config.bounds, config.t_init, config.first_swing)
    return references_from_footsteps(steps, config, constants, com0)


def references_from_footsteps(steps: list[Footstep], config: PlannerConfig, constants: PendulumConstants,
                              com0=None) -> ReferenceTrajectories:
    b = constants.b
    pieces = plan_dcm(steps, constants, config.terminal_rule, config.t_final)
    ds = double_support_durations(pieces, b, config.ds_fraction, config.zmp_rate_limit, config.period,
                                  config.ds_max_fraction)
    sampled = smooth_dcm(pieces, ds, config.period, b)
    if com0 is None:
        com0 = sampled.xi[0]
    zmp, com, comv = derive_zmp_com(sampled, constants, com0)
    feet, phases, sched = swing_trajectory(steps, config.h_apex, config.period, sampled.trajectory, sampled.t)
    return ReferenceTrajectories(config.period, sampled.t, sampled.xi, sampled.xi_dot, zmp, com, comv,
                                 constants.z0, feet[Side.LEFT], feet[Side.RIGHT], phases, steps, pieces, ds,
                                 constants, sched)
