"""Floating-base estimation from leg kinematics and contact switching.

The base pose is chained from a foot assumed rigidly attached to the ground;
contact events come from a hysteresis trigger on the foot normal forces.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .rigidbody import RobotModel, RobotState
from .rigidbody import kinematics as kin
from .rigidbody.spatial import inv_transform


class ContactState(enum.Enum):
    ACTIVE = "Active"
    INACTIVE = "Inactive"


class NoFixedFrame(RuntimeError):
    pass


class NumericallySingular(RuntimeError):
    pass


@dataclass(frozen=True)
class SchmittSettings:
    on_threshold: float = 30.0
    off_threshold: float = 10.0
    on_dwell: float = 0.05
    off_dwell: float = 0.05

    def __post_init__(self):
        if not self.off_threshold < self.on_threshold:
            raise ValueError("off_threshold must be below on_threshold")
        if self.on_dwell < 0 or self.off_dwell < 0:
            raise ValueError("dwell times must be non-negative")


@dataclass(frozen=True)
class TriggerState:
    state: ContactState = ContactState.INACTIVE
    pending_since: float | None = None  # start of the current run beyond the opposite threshold
    last_time: float = -np.inf


_DWELL_EPS = 1e-9


def update_contact(trigger: TriggerState, force: float, t: float,
                   settings: SchmittSettings) -> tuple[TriggerState, ContactState]:
    """Feed one normal-force sample; returns the new trigger and its output."""
    if t < trigger.last_time:
        raise ValueError("timestamps must be nondecreasing")
    if trigger.state is ContactState.INACTIVE:
        crossing, dwell, target = force >= settings.on_threshold, settings.on_dwell, ContactState.ACTIVE
    else:
        crossing, dwell, target = force <= settings.off_threshold, settings.off_dwell, ContactState.INACTIVE
    if not crossing:
        new = TriggerState(trigger.state, None, t)
    else:
        since = trigger.pending_since if trigger.pending_since is not None else t
        if t - since >= dwell - _DWELL_EPS:
            new = TriggerState(target, None, t)
        else:
            new = TriggerState(trigger.state, since, t)
    return new, new.state


@dataclass
class OdometryState:
    fixed_frame: str
    world_H_fixed: np.ndarray
    contacts: dict = field(default_factory=dict)   # frame -> ContactState
    triggers: dict = field(default_factory=dict)   # frame -> TriggerState


def _fixed_H_base(model: RobotModel, s, frame: str) -> np.ndarray:
    st = RobotState(np.zeros(3), np.eye(3), np.asarray(s, dtype=float))
    return inv_transform(kin.frame_pose(model, st, frame))


def base_pose(odom: OdometryState, model: RobotModel, s) -> np.ndarray:
    """``world_H_base = world_H_fixed * fixed_H_base(s)``."""
    if odom.fixed_frame is None:
        raise NoFixedFrame("no foot is in rigid contact")
    return odom.world_H_fixed @ _fixed_H_base(model, s, odom.fixed_frame)


def switch_fixed_frame(odom: OdometryState, model: RobotModel, s, new_frame: str) -> OdometryState:
    """Re-anchor on ``new_frame`` through the relative transform of the two frames at ``s``."""
    if new_frame == odom.fixed_frame:
        return odom
    st = RobotState(np.zeros(3), np.eye(3), np.asarray(s, dtype=float))
    old_H_new = inv_transform(kin.frame_pose(model, st, odom.fixed_frame)) @ kin.frame_pose(model, st, new_frame)
    return OdometryState(new_frame, odom.world_H_fixed @ old_H_new, dict(odom.contacts), dict(odom.triggers))


def base_velocity(model: RobotModel, state: RobotState, joint_velocities, fixed_frame: str,
                  max_condition: float = 1e12) -> np.ndarray:
    """Base (linear; angular) velocity making the fixed frame's twist vanish."""
    st = state.with_velocity(np.concatenate([np.zeros(6), np.asarray(joint_velocities, dtype=float)]))
    J = kin.frame_jacobian(model, st, fixed_frame)
    Jb, Js = J[:, :6], J[:, 6:]
    if np.linalg.cond(Jb) > max_condition:
        raise NumericallySingular(f"base block of the {fixed_frame} Jacobian is singular")
    return -np.linalg.solve(Jb, Js @ st.joint_velocities)


class LeggedOdometry:
    """Stateful estimator: contact triggers, fixed-frame bookkeeping, base pose and velocity.

    With both feet active the current fixed frame is kept until the other
    foot's own Inactive-to-Active event, which moves the anchor to it.
    """

    def __init__(self, model: RobotModel, feet, initial_frame: str, world_H_fixed=None,
                 settings: SchmittSettings | None = None, initially_active=None):
        self.model = model
        self.feet = tuple(feet)
        self.settings = settings or SchmittSettings()
        active = set(initially_active if initially_active is not None else [initial_frame])
        H0 = np.eye(4) if world_H_fixed is None else np.asarray(world_H_fixed, dtype=float)
        self.state = OdometryState(
            initial_frame, H0,
            {f: ContactState.ACTIVE if f in active else ContactState.INACTIVE for f in self.feet},
            {f: TriggerState(ContactState.ACTIVE if f in active else ContactState.INACTIVE) for f in self.feet})
        self.events: list[tuple[float, str, ContactState]] = []

    @property
    def fixed_frame(self) -> str | None:
        return self.state.fixed_frame

    def update(self, t: float, s, normal_forces: dict) -> np.ndarray:
        """Process force samples at time ``t`` and return the base pose estimate."""
        odom = self.state
        rising = []
        for f in self.feet:
            trig, out = update_contact(odom.triggers[f], float(normal_forces.get(f, 0.0)), t, self.settings)
            if out is not odom.contacts[f]:
                self.events.append((t, f, out))
                if out is ContactState.ACTIVE:
                    rising.append(f)
            odom.triggers[f] = trig
            odom.contacts[f] = out
        active = [f for f in self.feet if odom.contacts[f] is ContactState.ACTIVE]
        new = odom.fixed_frame
        if rising and rising[-1] != new:
            new = rising[-1]
        elif new not in active:
            new = active[0] if active else None
        if new is None:
            # anchor kept so estimation can resume when a contact returns
            raise NoFixedFrame("no foot is in rigid contact")
        odom = switch_fixed_frame(odom, self.model, s, new)
        self.state = odom
        return base_pose(odom, self.model, s)

    def velocity(self, state: RobotState, joint_velocities) -> np.ndarray:
        return base_velocity(self.model, state, joint_velocities, self.state.fixed_frame)
