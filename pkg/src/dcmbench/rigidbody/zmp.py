"""Local and global zero-moment point from contact wrenches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ContactWrench

F_MIN = 1.0
COPLANAR_TOL = 1e-6


class ZmpUndefined(ValueError):
    """Normal force too small for the ZMP to be defined (contact breaking)."""


class NonCoplanarContacts(ValueError):
    pass


def local_zmp(wrench: ContactWrench, f_min: float = F_MIN) -> np.ndarray:
    """ZMP in the contact body frame: ``(-f_ay / f_lz, f_ax / f_lz)``."""
    fz = wrench.force[2]
    if abs(fz) < f_min:
        raise ZmpUndefined(f"normal force {fz:.6g} N below {f_min} N on {wrench.frame}")
    return np.array([-wrench.torque[1] / fz, wrench.torque[0] / fz])


@dataclass
class Contact:
    wrench: ContactWrench
    pose: np.ndarray  # 4x4 world_H_contact


def _check_coplanar(contacts, tol):
    H0 = contacts[0].pose
    n0 = H0[:3, 2]
    for c in contacts[1:]:
        n = c.pose[:3, 2]
        offset = float(n0 @ (c.pose[:3, 3] - H0[:3, 3]))
        if np.linalg.norm(np.cross(n0, n)) > tol or abs(offset) > tol:
            raise NonCoplanarContacts(f"contact {c.wrench.frame} is not coplanar with {contacts[0].wrench.frame}")


def global_zmp(contacts, f_min: float = F_MIN, coplanar_tol: float = COPLANAR_TOL) -> np.ndarray:
    """Normal-force-weighted combination of the local ZMPs, in the inertial frame.

    ``contacts`` is a sequence of :class:`Contact` or ``(wrench, pose)`` pairs.
    Individual contacts may carry less than ``f_min``; only the total is checked.
    """
    cs = [c if isinstance(c, Contact) else Contact(*c) for c in contacts]
    if not cs:
        raise ZmpUndefined("no contacts")
    _check_coplanar(cs, coplanar_tol)
    total = sum(c.wrench.force[2] for c in cs)
    if abs(total) < f_min:
        raise ZmpUndefined(f"total normal force {total:.6g} N below {f_min} N")
    acc = np.zeros(3)
    for c in cs:
        # fz * local ZMP, without dividing by a possibly tiny per-contact fz
        m = np.array([-c.wrench.torque[1], c.wrench.torque[0], 0.0])
        acc += c.wrench.force[2] * c.pose[:3, 3] + c.pose[:3, :3] @ m
    return acc[:2] / total
