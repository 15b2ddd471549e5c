"""Footstep, swing-foot and DCM reference planning."""
from .dcm import (DcmPiece, InvalidTiming, PendulumConstants, SampledDcm, SmoothedDcm, TerminalRule,
                  derive_zmp_com, double_support_durations, plan_dcm, sample_times, smooth_dcm)
from .footsteps import (Footstep, PlanInfeasible, midline_anchor, Side, StepBounds, Unicycle, dump_footsteps, load_footsteps,
                        plan_footsteps, step_length, validate_footsteps, walking_velocity)
from .references import (ContactSchedule, FootSamples, Phase, PlannerConfig, ReferenceTrajectories, Swing,
                         build_references, references_from_footsteps, swing_trajectory)
