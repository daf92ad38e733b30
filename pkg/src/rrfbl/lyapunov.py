"""Error-space machinery: gain matrices, Lyapunov matrix and derived samples.

The tracking-error state is xi = [e; ed].  With stacked gains the error
dynamics matrix is Htilde = [[0, I], [-Kp, -Kd]] and the input map is
D = [[0], [I]].  Q solves the continuous Lyapunov equation
Htilde^T Q + Q Htilde = -P with P = I, which makes V = xi^T Q xi a valid
Lyapunov function for the unforced error dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class ErrorState:
    """Tracking error e = q_ref - q, ed = qd_ref - qd and the stacked xi."""

    e: np.ndarray
    ed: np.ndarray

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate((self.e, self.ed))


@dataclass(frozen=True)
class LyapunovDesign:
    """Immutable controller design: gains, error-space matrices and layer radii."""

    Kp: np.ndarray
    Kd: np.ndarray
    Htilde: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    K: np.ndarray
    eps: float
    eps1: float

    @property
    def dof(self) -> int:
        return self.Kp.shape[0]


@dataclass
class LyapunovSample:
    """V, Vdot and the switching vector z = D^T Q xi at one instant."""

    V: float
    Vdot: float
    z: np.ndarray
    znorm: float


def _spd_check(name: str, A: np.ndarray, tol: float = 0.0) -> None:
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError(f"{name} is not symmetric")
    smallest = np.linalg.eigvalsh(A)[0]
    if smallest <= tol:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {smallest})")


def build_design(
    kp: float, kd: float, eps: float = 0.5, eps1: float = 0.01, dof: int = 2
) -> LyapunovDesign:
    """Construct the error-space design for diagonal gains Kp = kp I, Kd = kd I.

    Solves Htilde^T Q + Q Htilde = -I for Q and verifies that Q and P are
    symmetric positive definite, that the Lyapunov residual is below 1e-10
    and that all three blocks Q11, Q12, Q22 are full rank.
    """
    if kp <= 0.0 or kd <= 0.0:
        raise ValueError("gains kp and kd must be strictly positive")
    if eps <= 0.0 or eps1 <= 0.0:
        raise ValueError("eps and eps1 must be strictly positive")
    eye = np.eye(dof)
    zero = np.zeros((dof, dof))
    Kp = kp * eye
    Kd = kd * eye
    Htilde = np.block([[zero, eye], [-Kp, -Kd]])
    D = np.vstack((zero, eye))
    P = np.eye(2 * dof)
    Q = scipy.linalg.solve_continuous_lyapunov(Htilde.T, -P)
    Q = 0.5 * (Q + Q.T)

    residual = np.linalg.norm(Htilde.T @ Q + Q @ Htilde + P, 2)
    if residual >= 1e-10:
        raise ValueError(f"Lyapunov equation residual too large: {residual}")
    _spd_check("Q", Q)
    _spd_check("P", P)
    for name, block in (
        ("Q11", Q[:dof, :dof]),
        ("Q12", Q[:dof, dof:]),
        ("Q22", Q[dof:, dof:]),
    ):
        if np.linalg.matrix_rank(block) < dof:
            raise ValueError(f"block {name} of Q is rank deficient")

    K = np.hstack((Kp, Kd))
    return LyapunovDesign(
        Kp=Kp, Kd=Kd, Htilde=Htilde, D=D, Q=Q, P=P, K=K, eps=float(eps), eps1=float(eps1)
    )


def error_state(
    q: np.ndarray, qd: np.ndarray, q_ref: np.ndarray, qd_ref: np.ndarray
) -> ErrorState:
    """Tracking error of the current state against the reference."""
    return ErrorState(e=np.asarray(q_ref) - np.asarray(q), ed=np.asarray(qd_ref) - np.asarray(qd))


def lyapunov_sample(
    design: LyapunovDesign, err: ErrorState, xidot: np.ndarray
) -> LyapunovSample:
    """Evaluate V = xi^T Q xi, Vdot = xidot^T Q xi + xi^T Q xidot and z = D^T Q xi.

    xidot must be the instantaneous state derivative [ed; edd] supplied from
    the true accelerations; no finite differencing happens here.
    """
    xi = err.xi
    Qxi = design.Q @ xi
    dof = design.dof
    z = Qxi[dof:]
    return LyapunovSample(
        V=float(xi @ Qxi),
        Vdot=float(2.0 * (xidot @ Qxi)),
        z=z,
        znorm=float(np.linalg.norm(z)),
    )


def vdot_from_trace(v: np.ndarray, step: float) -> np.ndarray:
    """Central-difference Vdot from a logged V trace (post-processing only).

    One-sided differences at the ends.  The simulator logs the exact Vdot;
    this exists for checking logs that only carry V.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need a 1-D trace with at least two samples")
    return np.gradient(v, step)
