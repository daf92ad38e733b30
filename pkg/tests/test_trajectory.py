import numpy as np
import pytest

from rrfbl.trajectory import ReferenceTrajectory, TrajectoryConfig, sample_frequencies


def test_config_validation():
    with pytest.raises(ValueError):
        TrajectoryConfig(amplitude=-0.1)
    with pytest.raises(ValueError):
        TrajectoryConfig(n_components=0)
    with pytest.raises(ValueError):
        TrajectoryConfig(omega_min=2.0, omega_max=1.0)


def test_frequencies_deterministic_and_in_range():
    cfg = TrajectoryConfig(seed=7)
    w1 = sample_frequencies(cfg)
    w2 = sample_frequencies(cfg)
    assert np.all(w1 == w2)
    assert w1.shape == (2, 3)
    assert np.all(w1 >= np.pi) and np.all(w1 <= 3.0 * np.pi)


def test_degenerate_band_pins_frequencies():
    cfg = TrajectoryConfig(omega_min=np.pi, omega_max=np.pi, seed=3)
    assert np.all(sample_frequencies(cfg) == np.pi)


def test_evaluate_at_zero():
    traj = ReferenceTrajectory(TrajectoryConfig(seed=11))
    ref = traj.evaluate(0.0)
    assert np.all(ref.q_ref == 0.0)
    assert np.all(ref.qdd_ref == 0.0)
    expected_qd = traj.config.amplitude * traj.frequencies.sum(axis=1)
    assert np.abs(ref.qd_ref - expected_qd).max() < 1e-14


def test_derivatives_match_finite_differences():
    traj = ReferenceTrajectory(TrajectoryConfig(seed=5))
    h = 1e-5
    for t in np.linspace(0.0, 4.0, 37):
        plus = traj.evaluate(t + h)
        minus = traj.evaluate(t - h)
        mid = traj.evaluate(t)
        qd_fd = (plus.q_ref - minus.q_ref) / (2.0 * h)
        qdd_fd = (plus.qd_ref - minus.qd_ref) / (2.0 * h)
        assert np.abs(mid.qd_ref - qd_fd).max() < 1e-6
        assert np.abs(mid.qdd_ref - qdd_fd).max() < 1e-6


def test_acceleration_bound():
    traj = ReferenceTrajectory(TrajectoryConfig(seed=13))
    A = traj.config.amplitude
    bound = A * np.sqrt(2.0) * (traj.frequencies**2).sum(axis=1).max()
    for t in np.linspace(0.0, 20.0, 5001):
        assert np.linalg.norm(traj.evaluate(t).qdd_ref) <= bound + 1e-12


def test_trajectory_bounded_for_all_time():
    traj = ReferenceTrajectory(TrajectoryConfig(seed=2))
    A, N = traj.config.amplitude, traj.config.n_components
    pos_bound = A * N * np.sqrt(2.0)
    vel_bound = A * traj.frequencies.sum(axis=1).max() * np.sqrt(2.0)
    for t in np.linspace(0.0, 100.0, 2000):
        ref = traj.evaluate(t)
        assert np.linalg.norm(ref.q_ref) <= pos_bound + 1e-12
        assert np.linalg.norm(ref.qd_ref) <= vel_bound + 1e-12


def test_frequency_table_shape_enforced():
    cfg = TrajectoryConfig(seed=1)
    with pytest.raises(ValueError):
        ReferenceTrajectory(cfg, frequencies=np.ones((2, 5)))
