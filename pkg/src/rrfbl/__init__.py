"""Trajectory-tracking control lab for a 2-DOF planar RR manipulator.

Plant model, error-space Lyapunov machinery, three feedback-linearization
controllers (plain, bound-based robust, adaptive robust), a Gaussian-process
torque model, a fixed-step closed-loop simulator and an experiment CLI.
"""

from .bounds import StateBox, UncertaintyBounds, compute_bounds, rho_static, trajectory_qm
from .controllers import (
    ControlOutput,
    DynamicsModel,
    ParametricModel,
    RhoLaw,
    RobustState,
    control_step,
    eta_diagnostic,
    rho_derivative,
    robust_term,
)
from .lyapunov import LyapunovDesign, build_design, error_state, lyapunov_sample
from .rr_dynamics import (
    NOMINAL_PARAMS,
    JointState,
    ManipulatorParams,
    coriolis_matrix,
    forward_dynamics,
    gravity_vector,
    mass_matrix,
    perturb_params,
)
from .sim import SimConfig, SimLog, SimulationError, replay_check, run
from .trajectory import ReferenceTrajectory, ReferenceSample, TrajectoryConfig, sample_frequencies

__all__ = [
    "ControlOutput",
    "DynamicsModel",
    "JointState",
    "LyapunovDesign",
    "ManipulatorParams",
    "NOMINAL_PARAMS",
    "ParametricModel",
    "ReferenceSample",
    "ReferenceTrajectory",
    "RhoLaw",
    "RobustState",
    "SimConfig",
    "SimLog",
    "SimulationError",
    "StateBox",
    "TrajectoryConfig",
    "UncertaintyBounds",
    "build_design",
    "compute_bounds",
    "control_step",
    "coriolis_matrix",
    "error_state",
    "eta_diagnostic",
    "forward_dynamics",
    "gravity_vector",
    "lyapunov_sample",
    "mass_matrix",
    "perturb_params",
    "replay_check",
    "rho_derivative",
    "rho_static",
    "robust_term",
    "run",
    "sample_frequencies",
    "trajectory_qm",
]
