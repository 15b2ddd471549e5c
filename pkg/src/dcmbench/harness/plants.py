"""Simulation plants: the planar LIPM and a kinematic full body on rigid contacts."""
from __future__ import annotations

import numpy as np

from ..estimation import base_velocity
from ..rigidbody import RobotModel, RobotState
from ..rigidbody import kinematics as kin
from ..rigidbody.spatial import inv_transform, log_so3, rot_z, yaw_of
from ..wbc import integrate_joint_positions
from .lipm import consistent_zmp, lipm_step


def lag_factor(period: float, time_constant: float) -> float:
    """Per-tick gain of a first-order lag discretized exactly."""
    return float(1.0 - np.exp(-period / time_constant))


class LipmPlant:
    """CoM on the LIPM; the ZMP is whatever realizes the (possibly lagged) commanded velocity."""

    def __init__(self, p0, v0, b: float, period: float, mode: str = "position", lag: float = 0.03):
        self.p = np.array(p0, dtype=float)[:2]
        self.v = np.array(v0, dtype=float)[:2]
        self.b, self.period, self.mode = float(b), float(period), mode
        self.alpha = lag_factor(period, lag)

    @property
    def dcm(self) -> np.ndarray:
        return self.p + self.b * self.v

    def push(self, dxi) -> None:
        """Instantaneous DCM shift through a CoM velocity jump."""
        self.v = self.v + np.asarray(dxi, dtype=float) / self.b

    def step(self, v_cmd) -> np.ndarray:
        """Advance one period; returns the ZMP applied over it."""
        v_cmd = np.asarray(v_cmd, dtype=float)[:2]
        target = v_cmd if self.mode == "position" else self.v + self.alpha * (v_cmd - self.v)
        r = consistent_zmp(self.p, self.v, target, self.b, self.period)
        self.p, self.v = lipm_step(self.p, self.v, r, self.b, self.period)
        return r


def flat_on_ground(H) -> np.ndarray:
    """Pose with the same position and yaw but no roll or pitch."""
    out = np.array(H, dtype=float)
    out[:3, :3] = rot_z(yaw_of(out[:3, :3]))
    return out


class KinematicPlant:
    """Joints follow the commanded velocities (exactly or through a lag).

    The floating base is not integrated: it is re-derived every tick from the
    anchor foot, which is held at its world pose (rigid contact).
    """

    def __init__(self, model: RobotModel, state: RobotState, period: float, mode: str = "position",
                 lag: float = 0.03, anchor: str = "left_foot", contacts=None):
        self.model, self.period, self.mode = model, float(period), mode
        self.alpha = lag_factor(period, lag)
        self.state = state.copy()
        self.sd = np.zeros(model.n)
        self.limits = model.position_limits()
        self.anchor = anchor
        self.world_H_anchor = kin.frame_pose(model, self.state, anchor)
        # other frames in contact -> world pose they are held at
        self.held = {f: kin.frame_pose(model, self.state, f) for f in (contacts or ()) if f != anchor}

    def set_anchor(self, frame: str) -> None:
        if frame != self.anchor:
            held = self.held.pop(frame, None)
            self.world_H_anchor = held if held is not None else kin.frame_pose(self.model, self.state, frame)
            self.anchor = frame

    def applied_velocity(self, sd_cmd) -> np.ndarray:
        sd_cmd = np.asarray(sd_cmd, dtype=float)
        return sd_cmd.copy() if self.mode == "position" else self.sd + self.alpha * (sd_cmd - self.sd)

    def _base_from_anchor(self, s) -> tuple[np.ndarray, np.ndarray]:
        zero = RobotState(np.zeros(3), np.eye(3), s)
        H = self.world_H_anchor @ inv_transform(kin.frame_pose(self.model, zero, self.anchor))
        return H[:3, 3].copy(), H[:3, :3].copy()

    def _close_chains(self, s, iterations: int = 4, tol: float = 1e-12) -> np.ndarray:
        """Minimum-norm joint correction that puts the held contact frames back on their poses."""
        if not self.held:
            return s
        for _ in range(iterations):
            p, R = self._base_from_anchor(s)
            st = RobotState(p, R, s)
            d = kin.compute(self.model, st)
            Ja = kin.frame_jacobian(self.model, st, self.anchor, d)
            # base motion that keeps the anchor still, per unit joint velocity
            base_map = -np.linalg.solve(Ja[:, :6], Ja[:, 6:])
            errs, rows = [], []
            for frame, H_ref in self.held.items():
                H = kin.frame_pose(self.model, st, frame, d)
                errs.append(np.concatenate([H[:3, 3] - H_ref[:3, 3], log_so3(H[:3, :3] @ H_ref[:3, :3].T)]))
                J = kin.frame_jacobian(self.model, st, frame, d)
                rows.append(J[:, 6:] + J[:, :6] @ base_map)
            e = np.concatenate(errs)
            if np.max(np.abs(e)) < tol:
                break
            s = s - np.linalg.lstsq(np.vstack(rows), e, rcond=None)[0]
        return s

    def step(self, sd_cmd, contacts=()) -> np.ndarray:
        """Advance one period; returns the velocity ``nu`` realized over it (at the start pose).

        ``contacts`` lists the frames in rigid contact at the end of the tick.
        Frames other than the anchor are held where they touched down, with
        the sole flat.
        """
        st = self.state
        self.held = {f: H for f, H in self.held.items() if f in contacts and f != self.anchor}
        sd = self.applied_velocity(sd_cmd)
        s_new = integrate_joint_positions(st.joint_positions, sd, self.period, self.limits)
        landing = [f for f in contacts if f != self.anchor and f not in self.held]
        if landing:
            p, R = self._base_from_anchor(s_new)
            moved = RobotState(p, R, s_new)
            for frame in landing:
                self.held[frame] = flat_on_ground(kin.frame_pose(self.model, moved, frame))
        s_new = np.clip(self._close_chains(s_new), *self.limits)
        sd = (s_new - st.joint_positions) / self.period  # what the contacts and the clamp let through
        nu = np.concatenate([base_velocity(self.model, st, sd, self.anchor), sd])
        p, R = self._base_from_anchor(s_new)
        new = RobotState(p, R, s_new)
        vb = base_velocity(self.model, new, sd, self.anchor)
        self.state = new.with_velocity(np.concatenate([vb, sd]))
        self.sd = sd
        return nu


def normal_forces(stance: str | None, zmp, left_sole, right_sole, weight: float) -> dict:
    """Ground-truth normal forces.

    In single support the stance foot carries the weight.  In double support
    each foot takes a share inversely related to the ZMP distance from its
    sole (``left_sole`` and ``right_sole`` are polygons), so a foot is fully
    unloaded once the ZMP lies inside the other sole.
    """
    if stance == "left_foot":
        return {"left_foot": weight, "right_foot": 0.0}
    if stance == "right_foot":
        return {"left_foot": 0.0, "right_foot": weight}
    r = np.asarray(zmp, dtype=float)
    d_l = float(np.linalg.norm(r - left_sole.project(r)))
    d_r = float(np.linalg.norm(r - right_sole.project(r)))
    a = 0.5 if d_l + d_r == 0.0 else d_r / (d_l + d_r)
    return {"left_foot": a * weight, "right_foot": (1 - a) * weight}
