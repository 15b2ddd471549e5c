"""Whole-body QP layers: velocity-level (kinematic) and torque-level (dynamic)."""
from .kinematic import (FEET, FootReference, IkInfeasible, KinematicGains, KinematicIntegrals, KinematicSolution,
                        KinematicTaskReferences, build_and_solve, com_velocity_correction, converge_pose, foot_twist_des,
                        integrate_configuration, integrate_joint_positions, torso_angular_velocity_des)
from .torque import (FootMotion, TorqueGains, TorqueProblem, TorqueQpInfeasible, TorqueSolution, TorqueTaskReferences,
                     WrenchFeasibilitySet, ZmpRefInfeasible, build_qp as build_torque_qp,
                     build_and_solve as solve_torque, check_zmp_reference, forward_acceleration, linear_pid,
                     rotational_pid, zmp_equality)
