"""Simplified-model control: instantaneous and receding-horizon DCM laws, ZMP-CoM loop."""
from .laws import (DcmGains, InstantaneousDcmController, IntegralState, InvalidGains, ZmpComController,
                   ZmpComGains, dcm_feedback, error_system_matrix, instantaneous_dcm, zmp_com_control)
from .mpc import MpcDcmController, MpcInfeasible, MpcResult, MpcSettings, build_qp, mpc_dcm, prediction_matrices
from .polygon import Polygon, foot_corners, from_points, support_polygon
