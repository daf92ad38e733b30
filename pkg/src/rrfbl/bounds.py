"""Numerical uncertainty bounds for the robust controller.

alpha bounds ||I - M^-1 Mhat|| over the joint-angle box, phi bounds the
bias mismatch ||nhat - n|| over the state box, q_m bounds the reference
acceleration and m_min/m_max bracket ||M^-1||.  Suprema are grid maxima
inflated by a safety margin; refinement stability is checked in tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .rr_dynamics import ManipulatorParams, bias_vector, mass_matrix
from .trajectory import ReferenceTrajectory


@dataclass(frozen=True)
class StateBox:
    """Sampling domain for the bound suprema."""

    q_min: float = -np.pi
    q_max: float = np.pi
    qd_min: float = -5.0
    qd_max: float = 5.0
    xi_norm_max: float = 10.0

    def __post_init__(self):
        # degenerate (single-point) axes are allowed, empty ones are not
        if self.q_min > self.q_max or self.qd_min > self.qd_max:
            raise ValueError("state box must be nonempty")
        if self.xi_norm_max <= 0.0:
            raise ValueError("xi_norm_max must be positive")

    def contains(self, q: np.ndarray, qd: np.ndarray) -> bool:
        return bool(
            (q >= self.q_min).all()
            and (q <= self.q_max).all()
            and (qd >= self.qd_min).all()
            and (qd <= self.qd_max).all()
        )


@dataclass(frozen=True)
class UncertaintyBounds:
    """alpha, phi, q_m and the inverse-inertia norm bracket [m_min, m_max]."""

    alpha: float
    phi: float
    q_m: float
    m_min: float
    m_max: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        for name in ("phi", "q_m", "m_max"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if not 0.0 < self.m_min <= self.m_max:
            raise ValueError("need 0 < m_min <= m_max")


def _q_grid(box: StateBox, density: int) -> np.ndarray:
    axis = np.linspace(box.q_min, box.q_max, density)
    return np.array(list(itertools.product(axis, axis)))


def estimate_alpha(
    true_params: ManipulatorParams,
    hat_params: ManipulatorParams,
    box: StateBox,
    grid_density: int = 25,
    margin: float = 1.1,
) -> float:
    """Grid supremum of ||I - M(q)^-1 Mhat(q)||_2 over the box, times margin.

    Raises if the inflated estimate reaches 1: the model is then too far
    from nominal for the static robust bound to exist.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    worst = 0.0
    eye = np.eye(2)
    for q in _q_grid(box, grid_density):
        gap = eye - np.linalg.solve(mass_matrix(true_params, q), mass_matrix(hat_params, q))
        worst = max(worst, np.linalg.norm(gap, 2))
    alpha = worst * margin
    if alpha >= 1.0:
        raise ValueError(
            f"alpha estimate {alpha:.4f} >= 1: model mismatch too large for a static bound"
        )
    return alpha


def estimate_phi(
    true_params: ManipulatorParams,
    hat_params: ManipulatorParams,
    box: StateBox,
    grid_density: int = 9,
    margin: float = 1.1,
) -> float:
    """Grid supremum of ||nhat(q,qd) - n(q,qd)|| over the box, times margin."""
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    q_axis = np.linspace(box.q_min, box.q_max, grid_density)
    qd_axis = np.linspace(box.qd_min, box.qd_max, grid_density)
    worst = 0.0
    for q1, q2 in itertools.product(q_axis, q_axis):
        q = np.array([q1, q2])
        for qd1, qd2 in itertools.product(qd_axis, qd_axis):
            qd = np.array([qd1, qd2])
            gap = bias_vector(hat_params, q, qd) - bias_vector(true_params, q, qd)
            worst = max(worst, float(np.linalg.norm(gap)))
    return worst * margin


def inverse_inertia_bounds(
    params: ManipulatorParams,
    box: StateBox,
    grid_density: int = 25,
    margin: float = 1.1,
) -> tuple[float, float]:
    """Bracket (m_min, m_max) of ||M(q)^-1||_2 over the box, margin applied outward."""
    values = [
        np.linalg.norm(np.linalg.inv(mass_matrix(params, q)), 2)
        for q in _q_grid(box, grid_density)
    ]
    return min(values) / margin, max(values) * margin


def trajectory_qm(traj: ReferenceTrajectory, method: str = "analytic") -> float:
    """Bound on sup_t ||qdd_ref(t)||.

    analytic: A * sqrt(sum_i (sum_j w_ij^2)^2), which dominates the true
    supremum.  sampled: dense max over 50 s (diagnostic; not guaranteed to
    dominate between samples).
    """
    A = traj.config.amplitude
    w = traj.frequencies
    if method == "analytic":
        per_joint = (w * w).sum(axis=1)
        return float(A * np.sqrt((per_joint**2).sum()))
    if method == "sampled":
        times = np.linspace(0.0, 50.0, 200_001)
        worst = 0.0
        for t in times:
            worst = max(worst, float(np.linalg.norm(traj.evaluate(t).qdd_ref)))
        return worst
    raise ValueError(f"unknown method {method!r}")


def rho_static(
    bounds: UncertaintyBounds,
    K: np.ndarray,
    xi_norm: float,
    offset: float = 0.01,
) -> float:
    """Static robust gain: (alpha q_m + alpha ||K|| ||xi|| + m_max phi) / (1 - alpha) + offset.

    The strict positive offset keeps the inequality rho > ||eta|| strict.
    """
    if offset <= 0.0:
        raise ValueError("offset must be strictly positive")
    k_norm = float(np.linalg.norm(K, 2))
    a = bounds.alpha
    return (a * bounds.q_m + a * k_norm * xi_norm + bounds.m_max * bounds.phi) / (1.0 - a) + offset


def compute_bounds(
    true_params: ManipulatorParams,
    hat_params: ManipulatorParams,
    box: StateBox,
    traj: ReferenceTrajectory,
    grid_density_q: int = 25,
    grid_density_state: int = 9,
    margin: float = 1.1,
) -> UncertaintyBounds:
    """Assemble the full bound set for one (true, model) pair and trajectory."""
    alpha = estimate_alpha(true_params, hat_params, box, grid_density_q, margin)
    phi = estimate_phi(true_params, hat_params, box, grid_density_state, margin)
    m_min, m_max = inverse_inertia_bounds(true_params, box, grid_density_q, margin)
    return UncertaintyBounds(
        alpha=alpha, phi=phi, q_m=trajectory_qm(traj), m_min=m_min, m_max=m_max
    )
