"""Floating-base rigid-body model, kinematics, dynamics and ZMP."""
from .dynamics import DEFAULT_GRAVITY, bias_forces, gravity_forces, kinetic_energy, mass_matrix, selector
from .kinematics import (ComState, KinematicsData, bias_acceleration, com_state, compute, frame_jacobian,
                         frame_pose, frame_twist)
from .loader import load_model, loads_model, mini_biped
from .model import (ContactWrench, FootGeometry, Frame, FrameNotFound, Joint, Link, ModelError, RobotModel,
                    RobotState)
from .zmp import Contact, NonCoplanarContacts, ZmpUndefined, global_zmp, local_zmp
