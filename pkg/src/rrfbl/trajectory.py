"""Reference trajectories: per-joint sums of random sinusoids.

Each joint tracks q_ref_i(t) = A * sum_j sin(w_ij * t) with N angular
frequencies drawn independently per joint from U(omega_min, omega_max).
Velocity and acceleration references are the exact analytic derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DOF = 2


@dataclass(frozen=True)
class TrajectoryConfig:
    """Amplitude, component count, frequency band and seed of the reference."""

    amplitude: float = 0.1
    n_components: int = 3
    omega_min: float = np.pi
    omega_max: float = 3.0 * np.pi
    seed: int = 0

    def __post_init__(self):
        # amplitude 0 is allowed: it degenerates to a rest reference at the origin.
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")
        if self.n_components < 1:
            raise ValueError("need at least one sinusoidal component")
        if not 0.0 < self.omega_min <= self.omega_max:
            raise ValueError("need 0 < omega_min <= omega_max")


@dataclass
class ReferenceSample:
    """Reference position, velocity and acceleration at one instant."""

    q_ref: np.ndarray
    qd_ref: np.ndarray
    qdd_ref: np.ndarray


def sample_frequencies(config: TrajectoryConfig) -> np.ndarray:
    """Draw the (DOF, N) frequency table, deterministic under the config seed."""
    rng = np.random.default_rng(config.seed)
    return rng.uniform(config.omega_min, config.omega_max, size=(DOF, config.n_components))


class ReferenceTrajectory:
    """A sampled frequency table bound to its config; evaluate is pure."""

    def __init__(self, config: TrajectoryConfig, frequencies: np.ndarray | None = None):
        self.config = config
        if frequencies is None:
            frequencies = sample_frequencies(config)
        frequencies = np.asarray(frequencies, dtype=float)
        if frequencies.shape != (DOF, config.n_components):
            raise ValueError(
                f"frequency table must have shape {(DOF, config.n_components)}, "
                f"got {frequencies.shape}"
            )
        self.frequencies = frequencies

    def evaluate(self, t: float) -> ReferenceSample:
        """Analytic reference (position, velocity, acceleration) at time t."""
        w = self.frequencies
        wt = w * t
        s = np.sin(wt)
        c = np.cos(wt)
        A = self.config.amplitude
        return ReferenceSample(
            q_ref=A * s.sum(axis=1),
            qd_ref=A * (w * c).sum(axis=1),
            qdd_ref=-A * (w * w * s).sum(axis=1),
        )
