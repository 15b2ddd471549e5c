"""Closed-loop experiments, plants, logging and metrics."""
from .config import (CoMTracking, Disturbances, ExperimentConfig, Impulse, arch_label, config_from_dict,
                     dump_config, load_config, parse_arch, with_overrides)
from .io import ControlTickLog, export, log_columns, read_log, read_metrics, write_log, write_metrics
from .lipm import consistent_zmp, discretize, lipm_step
from .metrics import Metrics, VelocityUndefined, compute_metrics, positive_work, specific_energetic_cost
from .plants import KinematicPlant, LipmPlant
from .runner import ExperimentAborted, ExperimentResult, plan, run_experiment
