"""Control laws: plain feedback linearization, its bound-based robust
variant and the adaptive robust variant.

All three share tau = Mhat(q) a + nhat(q, qd) with
a = qdd_ref + Kp e + Kd ed + w; they differ only in how the robust term w
is sized.  The plain law uses w = 0, the bound-based law recomputes the
static gain from the uncertainty bounds at the current ||xi||, and the
adaptive law integrates rho according to the selected update rule.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .bounds import UncertaintyBounds, rho_static
from .lyapunov import LyapunovDesign, error_state
from .rr_dynamics import JointState, ManipulatorParams, bias_vector, mass_matrix
from .trajectory import ReferenceSample


class DynamicsModel(ABC):
    """What a controller may ask of a dynamics model: Mhat and nhat."""

    @abstractmethod
    def mass_estimate(self, q: np.ndarray) -> np.ndarray:
        """Symmetric 2x2 inertia estimate Mhat(q)."""

    @abstractmethod
    def bias_estimate(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        """Coriolis-plus-gravity estimate nhat(q, qd)."""


class ParametricModel(DynamicsModel):
    """Closed-form model evaluated on a (possibly perturbed) parameter set."""

    def __init__(self, params: ManipulatorParams):
        self.params = params

    def mass_estimate(self, q: np.ndarray) -> np.ndarray:
        return mass_matrix(self.params, q)

    def bias_estimate(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        return bias_vector(self.params, q, qd)


class RhoLaw(enum.Enum):
    """Sizing rule for the robust gain rho."""

    NONE = "none"
    STATIC = "static"
    BASIC = "basic"
    DEADBAND = "deadband"


ADAPTIVE_LAWS = (RhoLaw.BASIC, RhoLaw.DEADBAND)


@dataclass
class RobustState:
    """Mutable robust-term state owned by exactly one simulation run."""

    law: RhoLaw
    rho: float = 0.0
    k_rho: float = 0.0
    bounds: UncertaintyBounds | None = None
    rho_offset: float = 0.01

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError("rho must be nonnegative")
        if self.law in ADAPTIVE_LAWS and self.k_rho <= 0.0:
            raise ValueError(f"law {self.law.value} requires k_rho > 0")
        if self.law is RhoLaw.STATIC and self.bounds is None:
            raise ValueError("static law requires uncertainty bounds")


@dataclass
class ControlOutput:
    """Torque command plus the pieces it decomposes into."""

    tau: np.ndarray
    a: np.ndarray
    w: np.ndarray
    rho: float


def robust_term(rho: float, z: np.ndarray, eps: float) -> np.ndarray:
    """Saturated unit-vector term: rho z/||z|| outside the layer, rho z/eps inside."""
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    if eps <= 0.0:
        raise ValueError("eps must be strictly positive")
    znorm = float(np.linalg.norm(z))
    if znorm >= eps:
        return (rho / znorm) * z
    return (rho / eps) * z


def rho_derivative(
    law: RhoLaw, vdot: float, znorm: float, eps: float, eps1: float, k_rho: float
) -> float:
    """Growth rate of rho under the selected update rule.

    basic:    k_rho iff Vdot >= 0     and ||z|| >= eps
    deadband: k_rho iff Vdot >= -eps1 and ||z|| >= eps
    static / none: always 0.
    """
    if law in ADAPTIVE_LAWS and k_rho <= 0.0:
        raise ValueError("adaptive laws require k_rho > 0")
    if znorm < eps:
        return 0.0
    if law is RhoLaw.BASIC and vdot >= 0.0:
        return k_rho
    if law is RhoLaw.DEADBAND and vdot >= -eps1:
        return k_rho
    return 0.0


def control_step(
    model: DynamicsModel,
    design: LyapunovDesign,
    ref: ReferenceSample,
    state: JointState,
    robust: RobustState,
) -> ControlOutput:
    """One controller evaluation at the current state and reference."""
    err = error_state(state.q, state.qd, ref.q_ref, ref.qd_ref)
    if robust.law is RhoLaw.NONE:
        rho = 0.0
        w = np.zeros(design.dof)
    else:
        if robust.law is RhoLaw.STATIC:
            xi_norm = float(np.linalg.norm(err.xi))
            rho = rho_static(robust.bounds, design.K, xi_norm, robust.rho_offset)
        else:
            rho = robust.rho
        z = (design.Q @ err.xi)[design.dof :]
        w = robust_term(rho, z, design.eps)
    a = ref.qdd_ref + design.Kp @ err.e + design.Kd @ err.ed + w
    tau = model.mass_estimate(state.q) @ a + model.bias_estimate(state.q, state.qd)
    return ControlOutput(tau=tau, a=a, w=w, rho=rho)


def eta_diagnostic(
    true_params: ManipulatorParams,
    model: DynamicsModel,
    state: JointState,
    a: np.ndarray,
) -> np.ndarray:
    """Lumped mismatch eta = (I - M^-1 Mhat) a - M^-1 (nhat - n).

    Needs the true model, so it is a simulator-side diagnostic only; no
    controller may consume it.
    """
    M = mass_matrix(true_params, state.q)
    n = bias_vector(true_params, state.q, state.qd)
    mhat_a = model.mass_estimate(state.q) @ a
    ntilde = model.bias_estimate(state.q, state.qd) - n
    return a - np.linalg.solve(M, mhat_a + ntilde)
