"""Closed-form rigid-body dynamics of a 2-DOF planar RR manipulator.

Joint convention: q1 is measured from the positive x-axis, q2 relative to
link 1, gravity acts along -y.  The Coriolis matrix uses the Christoffel
construction, so dM/dt - 2C is skew-symmetric.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Nominal parameter set used throughout the experiments.
NOMINAL_PARAMS_DICT = {
    "m1": 7.8,
    "m2": 4.5,
    "l1": 0.3,
    "l2": 0.15,
    "lc1": 0.1554,
    "lc2": 0.0341,
    "I1": 0.176,
    "I2": 0.0411,
    "grav": 9.8,
}

_PERTURBED_FIELDS = ("m1", "m2", "l1", "l2", "lc1", "lc2", "I1", "I2")


@dataclass(frozen=True)
class ManipulatorParams:
    """Physical constants of the RR arm.

    Masses in kg, lengths in m, link inertias (about the center of mass)
    in kg m^2, gravitational acceleration in m/s^2.
    """

    m1: float
    m2: float
    l1: float
    l2: float
    lc1: float
    lc2: float
    I1: float
    I2: float
    grav: float = 9.8

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2", "lc1", "lc2", "I1", "I2"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"parameter {name} must be strictly positive, got {value}")
        if self.lc1 > self.l1 or self.lc2 > self.l2:
            raise ValueError("center-of-mass distance must not exceed the link length")
        if not np.isfinite(self.grav) or self.grav < 0.0:
            raise ValueError(f"grav must be finite and nonnegative, got {self.grav}")


NOMINAL_PARAMS = ManipulatorParams(**NOMINAL_PARAMS_DICT)


@dataclass
class JointState:
    """Configuration-space state: joint angles q (rad) and velocities qd (rad/s)."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if self.q.shape != (2,) or self.qd.shape != (2,):
            raise ValueError("JointState requires 2-vectors q and qd")
        if not (np.isfinite(self.q).all() and np.isfinite(self.qd).all()):
            raise ValueError("JointState entries must be finite")


@dataclass
class DynamicsEval:
    """One evaluation of the manipulator model: M, C, g and n = C qd + g."""

    M: np.ndarray
    C: np.ndarray
    g: np.ndarray
    n: np.ndarray


def _coeffs(p: ManipulatorParams) -> tuple[float, float, float, float, float]:
    """Constant groupings (a, b, d, ga, gb) of the closed-form model.

    M11 = a + 2 b cos q2, M12 = d + b cos q2, M22 = d;
    gravity = [ga cos q1 + gb cos(q1+q2), gb cos(q1+q2)].
    """
    a = p.I1 + p.I2 + p.m1 * p.lc1**2 + p.m2 * (p.l1**2 + p.lc2**2)
    b = p.m2 * p.l1 * p.lc2
    d = p.I2 + p.m2 * p.lc2**2
    ga = (p.m1 * p.lc1 + p.m2 * p.l1) * p.grav
    gb = p.m2 * p.lc2 * p.grav
    return a, b, d, ga, gb


def mass_matrix(params: ManipulatorParams, q: np.ndarray) -> np.ndarray:
    """Symmetric positive definite inertia matrix M(q)."""
    a, b, d, _, _ = _coeffs(params)
    c2 = np.cos(q[1])
    m12 = d + b * c2
    return np.array([[a + 2.0 * b * c2, m12], [m12, d]])


def coriolis_matrix(params: ManipulatorParams, state: JointState) -> np.ndarray:
    """Coriolis/centrifugal matrix C(q, qd) from Christoffel symbols."""
    _, b, _, _, _ = _coeffs(params)
    h = -b * np.sin(state.q[1])
    qd1, qd2 = state.qd
    return np.array([[h * qd2, h * (qd1 + qd2)], [-h * qd1, 0.0]])


def gravity_vector(params: ManipulatorParams, q: np.ndarray) -> np.ndarray:
    """Gravity torque g(q), the gradient of the potential energy."""
    _, _, _, ga, gb = _coeffs(params)
    c1 = np.cos(q[0])
    c12 = np.cos(q[0] + q[1])
    return np.array([ga * c1 + gb * c12, gb * c12])


def bias_vector(params: ManipulatorParams, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """n(q, qd) = C(q, qd) qd + g(q) in one fused evaluation."""
    _, b, _, ga, gb = _coeffs(params)
    s2 = np.sin(q[1])
    c1 = np.cos(q[0])
    c12 = np.cos(q[0] + q[1])
    h = -b * s2
    qd1, qd2 = qd
    n1 = h * qd2 * qd1 + h * (qd1 + qd2) * qd2 + ga * c1 + gb * c12
    n2 = -h * qd1 * qd1 + gb * c12
    return np.array([n1, n2])


def evaluate_dynamics(params: ManipulatorParams, state: JointState) -> DynamicsEval:
    """All model terms at one state."""
    M = mass_matrix(params, state.q)
    C = coriolis_matrix(params, state)
    g = gravity_vector(params, state.q)
    return DynamicsEval(M=M, C=C, g=g, n=C @ state.qd + g)


def acceleration(
    params: ManipulatorParams, q: np.ndarray, qd: np.ndarray, tau: np.ndarray
) -> np.ndarray:
    """qdd = M(q)^-1 (tau - C(q,qd) qd - g(q)) via the closed-form 2x2 solve."""
    a, b, d, ga, gb = _coeffs(params)
    c2 = np.cos(q[1])
    s2 = np.sin(q[1])
    m11 = a + 2.0 * b * c2
    m12 = d + b * c2
    det = m11 * d - m12 * m12
    if abs(det) < 1e-12 * max(abs(m11), abs(d), 1.0):
        raise ValueError(f"mass matrix numerically singular at q={q} (det={det})")
    h = -b * s2
    qd1, qd2 = qd
    c1 = np.cos(q[0])
    c12 = np.cos(q[0] + q[1])
    r1 = tau[0] - (h * qd2 * qd1 + h * (qd1 + qd2) * qd2 + ga * c1 + gb * c12)
    r2 = tau[1] - (-h * qd1 * qd1 + gb * c12)
    return np.array([(d * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det])


def forward_dynamics(
    params: ManipulatorParams, state: JointState, tau: np.ndarray
) -> np.ndarray:
    """Joint acceleration under applied torque tau."""
    return acceleration(params, state.q, state.qd, np.asarray(tau, dtype=float))


def perturb_params(
    params: ManipulatorParams, relative_scale: float, seed: int
) -> ManipulatorParams:
    """Multiplicatively perturbed copy of the link parameters.

    Each of m1, m2, l1, l2, lc1, lc2, I1, I2 is scaled by (1 + delta) with
    delta ~ U(-relative_scale, +relative_scale); grav is left untouched.
    Draws are resampled if the perturbed set violates the parameter
    invariants. Deterministic under seed.
    """
    if not 0.0 <= relative_scale < 1.0:
        raise ValueError(f"relative_scale must lie in [0, 1), got {relative_scale}")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        deltas = rng.uniform(-relative_scale, relative_scale, size=len(_PERTURBED_FIELDS))
        updates = {
            name: getattr(params, name) * (1.0 + delta)
            for name, delta in zip(_PERTURBED_FIELDS, deltas)
        }
        try:
            return dataclasses.replace(params, **updates)
        except ValueError:
            continue
    raise ValueError("could not draw a perturbation satisfying the parameter invariants")


def load_params(path: str | Path) -> ManipulatorParams:
    """Read a parameter set from a plain-text key-value file.

    Accepted lines: ``key = value``, blank lines and ``#`` comments.
    Keys must be exactly m1, m2, l1, l2, lc1, lc2, I1, I2, grav.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in NOMINAL_PARAMS_DICT:
            raise ValueError(f"{path}:{lineno}: unknown parameter key {key!r}")
        values[key] = float(value.strip())
    missing = sorted(set(NOMINAL_PARAMS_DICT) - set(values))
    if missing:
        raise ValueError(f"{path}: missing parameter keys: {', '.join(missing)}")
    return ManipulatorParams(**values)


def save_params(params: ManipulatorParams, path: str | Path) -> None:
    """Write a parameter set in the plain-text key-value format."""
    lines = [f"{name} = {getattr(params, name):.17g}" for name in NOMINAL_PARAMS_DICT]
    Path(path).write_text("\n".join(lines) + "\n")
