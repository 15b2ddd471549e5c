"""Floating-base robot model and state containers.

Velocity convention: ``nu = (p_dot_B, omega_B, s_dot)`` where ``p_dot_B`` is the
time derivative of the base position in the inertial frame and ``omega_B`` is
the right-trivialized angular velocity, ``skew(omega_B) = R_dot R'``.  Frame
twists returned by the kinematics use the same mixed form: linear velocity of
the frame origin and angular velocity, both in inertial coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spatial import is_rotation, orthonormalize


class ModelError(ValueError):
    """Invalid model description; carries the offending source line if known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class FrameNotFound(KeyError):
    pass


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    inertia: np.ndarray  # about the link CoM, link axes
    com: np.ndarray      # CoM offset in link frame


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    axis: np.ndarray     # unit vector in the joint (child) frame
    origin: np.ndarray   # 4x4 parent_H_child at zero position
    position_limits: tuple = (-np.inf, np.inf)
    velocity_limit: float = np.inf
    torque_limit: float = np.inf


@dataclass(frozen=True)
class Frame:
    name: str
    link: str
    origin: np.ndarray   # 4x4 link_H_frame


@dataclass(frozen=True)
class FootGeometry:
    length: float
    width: float


class RobotModel:
    """Tree-structured floating-base model built from revolute joints.

    The model is immutable after construction; evaluation routines only read
    from it.
    """

    def __init__(self, links, joints, base: str, frames=(), foot: FootGeometry | None = None,
                 roles: dict | None = None, name: str = "robot"):
        self.name = name
        self.links: tuple[Link, ...] = tuple(links)
        self.joints: tuple[Joint, ...] = tuple(joints)
        self.base = base
        self.frames: tuple[Frame, ...] = tuple(frames)
        self.foot = foot or FootGeometry(0.19, 0.09)
        self.roles = dict(roles or {})
        self._build_topology()

    # -- construction ------------------------------------------------------
    def _build_topology(self):
        self.link_index = {l.name: i for i, l in enumerate(self.links)}
        if len(self.link_index) != len(self.links):
            raise ModelError("duplicate link names")
        if self.base not in self.link_index:
            raise ModelError(f"base link {self.base!r} is not defined")
        self.joint_index = {j.name: i for i, j in enumerate(self.joints)}
        if len(self.joint_index) != len(self.joints):
            raise ModelError("duplicate joint names")
        for l in self.links:
            if not l.mass > 0:
                raise ModelError(f"link {l.name!r}: mass must be positive")
            I = np.asarray(l.inertia)
            if I.shape != (3, 3) or np.max(np.abs(I - I.T)) > 1e-12 or np.linalg.eigvalsh(I)[0] <= 0:
                raise ModelError(f"link {l.name!r}: inertia must be symmetric positive definite")
        parent_joint = {}
        for k, j in enumerate(self.joints):
            for ln in (j.parent, j.child):
                if ln not in self.link_index:
                    raise ModelError(f"joint {j.name!r} references unknown link {ln!r}")
            if j.child == self.base:
                raise ModelError(f"joint {j.name!r}: base link cannot be a child")
            if j.child in parent_joint:
                raise ModelError(f"link {j.child!r} has more than one parent joint (loop)")
            parent_joint[j.child] = k
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError(f"joint {j.name!r}: axis must have unit norm")
            if not is_rotation(j.origin[:3, :3]):
                raise ModelError(f"joint {j.name!r}: origin rotation is not in SO(3)")
            lo, hi = j.position_limits
            if not lo < hi:
                raise ModelError(f"joint {j.name!r}: position limits must satisfy lower < upper")
        # topological order of joints from the base outwards
        order, reached = [], {self.base}
        pending = list(range(len(self.joints)))
        while pending:
            progressed = False
            for k in list(pending):
                if self.joints[k].parent in reached:
                    order.append(k)
                    reached.add(self.joints[k].child)
                    pending.remove(k)
                    progressed = True
            if not progressed:
                names = [self.joints[k].name for k in pending]
                raise ModelError(f"joints {names} are not connected to the base")
        if len(reached) != len(self.links):
            missing = sorted(set(self.link_index) - reached)
            raise ModelError(f"links {missing} are not connected to the base")
        self.joint_order = tuple(order)
        self.parent_joint_of_link = {self.link_index[c]: k for c, k in parent_joint.items()}
        # ancestor joints per link (path from base)
        n_l = len(self.links)
        self.link_support = [[] for _ in range(n_l)]
        for k in order:
            j = self.joints[k]
            p = self.link_index[j.parent]
            c = self.link_index[j.child]
            self.link_support[c] = self.link_support[p] + [k]
        # joint subtree membership: subtree_links[k] = links moved by joint k
        self.subtree_links = [[] for _ in self.joints]
        for li, sup in enumerate(self.link_support):
            for k in sup:
                self.subtree_links[k].append(li)
        self.frame_index = {f.name: i for i, f in enumerate(self.frames)}
        for f in self.frames:
            if f.link not in self.link_index:
                raise ModelError(f"frame {f.name!r} attached to unknown link {f.link!r}")
        for role, fname in self.roles.items():
            if fname not in self.frame_index and fname not in self.link_index:
                raise ModelError(f"role {role!r} refers to unknown frame {fname!r}")
        self.total_mass = float(sum(l.mass for l in self.links))

    # -- queries -----------------------------------------------------------
    @property
    def n(self) -> int:
        """Number of joints."""
        return len(self.joints)

    @property
    def nv(self) -> int:
        return len(self.joints) + 6

    def resolve_frame(self, frame: str) -> tuple[int, np.ndarray]:
        """Return ``(link index, link_H_frame)``; link names are frames too."""
        if frame in self.roles:
            frame = self.roles[frame]
        if frame in self.frame_index:
            f = self.frames[self.frame_index[frame]]
            return self.link_index[f.link], f.origin
        if frame in self.link_index:
            return self.link_index[frame], np.eye(4)
        raise FrameNotFound(frame)

    def role(self, name: str) -> str:
        return self.roles.get(name, name)

    def position_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.position_limits[0] for j in self.joints])
        hi = np.array([j.position_limits[1] for j in self.joints])
        return lo, hi

    def velocity_limits(self) -> np.ndarray:
        return np.array([j.velocity_limit for j in self.joints])

    def torque_limits(self) -> np.ndarray:
        return np.array([j.torque_limit for j in self.joints])

    def neutral_state(self) -> "RobotState":
        return RobotState.zero(self.n)


@dataclass
class RobotState:
    base_position: np.ndarray
    base_rotation: np.ndarray
    joint_positions: np.ndarray
    base_linear_velocity: np.ndarray = field(default=None)
    base_angular_velocity: np.ndarray = field(default=None)
    joint_velocities: np.ndarray = field(default=None)

    def __post_init__(self):
        self.base_position = np.asarray(self.base_position, dtype=float).reshape(3)
        self.base_rotation = np.asarray(self.base_rotation, dtype=float).reshape(3, 3)
        self.joint_positions = np.asarray(self.joint_positions, dtype=float).reshape(-1)
        n = self.joint_positions.size
        if self.base_linear_velocity is None:
            self.base_linear_velocity = np.zeros(3)
        if self.base_angular_velocity is None:
            self.base_angular_velocity = np.zeros(3)
        if self.joint_velocities is None:
            self.joint_velocities = np.zeros(n)
        self.base_linear_velocity = np.asarray(self.base_linear_velocity, dtype=float).reshape(3)
        self.base_angular_velocity = np.asarray(self.base_angular_velocity, dtype=float).reshape(3)
        self.joint_velocities = np.asarray(self.joint_velocities, dtype=float).reshape(n)

    @classmethod
    def zero(cls, n: int) -> "RobotState":
        return cls(np.zeros(3), np.eye(3), np.zeros(n))

    @property
    def nu(self) -> np.ndarray:
        return np.concatenate([self.base_linear_velocity, self.base_angular_velocity,
                               self.joint_velocities])

    def with_velocity(self, nu) -> "RobotState":
        nu = np.asarray(nu, dtype=float)
        return RobotState(self.base_position.copy(), self.base_rotation.copy(),
                          self.joint_positions.copy(), nu[:3], nu[3:6], nu[6:])

    def copy(self) -> "RobotState":
        return self.with_velocity(self.nu)

    @property
    def base_transform(self) -> np.ndarray:
        H = np.eye(4)
        H[:3, :3] = self.base_rotation
        H[:3, 3] = self.base_position
        return H

    def validate(self, tol: float = 1e-9) -> None:
        if not is_rotation(self.base_rotation, tol):
            raise ValueError("base_rotation is not in SO(3)")

    def renormalized(self) -> "RobotState":
        s = self.copy()
        s.base_rotation = orthonormalize(s.base_rotation)
        return s


@dataclass
class ContactWrench:
    """Contact wrench in the contact body frame: force then torque."""

    frame: str
    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.torque = np.asarray(self.torque, dtype=float).reshape(3)

    @classmethod
    def from_vector(cls, frame: str, w) -> "ContactWrench":
        w = np.asarray(w, dtype=float)
        return cls(frame, w[:3], w[3:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])
