"""Per-joint Gaussian-process torque regression and component extraction.

Each joint torque is regressed independently on x = (q, qd, qdd) with an
RBF kernel (per-dimension lengthscales by default, isotropic on request).
Hyperparameters maximize the log marginal likelihood by projected gradient
ascent in log space with Armijo backtracking.  The inertia and bias
estimates come out of the black-box torque predictor by probing unit
accelerations: nhat = mu(q, qd, 0) and column i of Mhat is
mu(q, qd, e_i) - nhat.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .controllers import DynamicsModel
from .rr_dynamics import ManipulatorParams, bias_vector, mass_matrix
from .trajectory import ReferenceTrajectory

logger = logging.getLogger(__name__)

INPUT_DIM = 6
DATASET_COLUMNS = "t,q1,q2,qd1,qd2,qdd1,qdd2,tau1,tau2"

JITTER_START = 1e-10
JITTER_MAX = 1e-6

LOG_BOUNDS_LENGTHSCALE = (np.log(1e-4), np.log(1e5))
LOG_BOUNDS_SIGNAL = (np.log(1e-8), np.log(1e10))
LOG_BOUNDS_NOISE = (np.log(1e-10), np.log(1e6))


@dataclass(frozen=True)
class RbfHyperparams:
    """Positive RBF kernel hyperparameters."""

    lengthscales: np.ndarray  # shape (INPUT_DIM,)
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", np.asarray(self.lengthscales, dtype=float)
        )
        if self.lengthscales.shape != (INPUT_DIM,):
            raise ValueError(f"lengthscales must have shape ({INPUT_DIM},)")
        if (self.lengthscales <= 0.0).any():
            raise ValueError("lengthscales must be strictly positive")
        if self.signal_variance <= 0.0 or self.noise_variance <= 0.0:
            raise ValueError("signal and noise variances must be strictly positive")


@dataclass
class GpDataset:
    """Training inputs (n, 6) and per-joint torque targets (n, 2)."""

    t: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.ndim != 2 or self.inputs.shape[1] != INPUT_DIM:
            raise ValueError(f"inputs must be (n, {INPUT_DIM})")
        if self.targets.shape != (self.inputs.shape[0], 2):
            raise ValueError("need one 2-joint target row per input row")
        if self.t.shape != (self.inputs.shape[0],):
            raise ValueError("need one timestamp per sample")
        if not np.isfinite(self.inputs).all() or not np.isfinite(self.targets).all():
            raise ValueError("dataset entries must be finite")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def rbf_kernel(x1: np.ndarray, x2: np.ndarray, hp: RbfHyperparams) -> float:
    """sigma_f^2 exp(-1/2 sum_d (x1_d - x2_d)^2 / l_d^2)."""
    diff = (np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)) / hp.lengthscales
    return float(hp.signal_variance * np.exp(-0.5 * np.dot(diff, diff)))


def _kernel_matrix(X1: np.ndarray, X2: np.ndarray, hp: RbfHyperparams) -> np.ndarray:
    S1 = X1 / hp.lengthscales
    S2 = X2 / hp.lengthscales
    sq = (
        (S1**2).sum(axis=1)[:, None]
        + (S2**2).sum(axis=1)[None, :]
        - 2.0 * S1 @ S2.T
    )
    return hp.signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def generate_dataset(
    true_params: ManipulatorParams,
    traj: ReferenceTrajectory,
    duration: float = 50.0,
    sample_rate: float = 1.0,
) -> GpDataset:
    """Inverse dynamics of the true model along the reference trajectory.

    Sampling [0, duration) at sample_rate gives round(duration*sample_rate)
    rows; the defaults give exactly 50 samples.
    """
    count = int(round(duration * sample_rate))
    if count < 1:
        raise ValueError("need at least one sample")
    t = np.arange(count) / sample_rate
    inputs = np.empty((count, INPUT_DIM))
    targets = np.empty((count, 2))
    for i, ti in enumerate(t):
        ref = traj.evaluate(ti)
        inputs[i, 0:2] = ref.q_ref
        inputs[i, 2:4] = ref.qd_ref
        inputs[i, 4:6] = ref.qdd_ref
        targets[i] = mass_matrix(true_params, ref.q_ref) @ ref.qdd_ref + bias_vector(
            true_params, ref.q_ref, ref.qd_ref
        )
    return GpDataset(t=t, inputs=inputs, targets=targets)


# --- marginal likelihood ----------------------------------------------------
#
# theta packs the log hyperparameters: [log l_1..l_6, log sf2, log sn2] for
# the per-dimension kernel, [log l, log sf2, log sn2] when isotropic.


def _theta_to_hp(theta: np.ndarray, isotropic: bool) -> RbfHyperparams:
    theta = np.asarray(theta, dtype=float)
    n_ls = 1 if isotropic else INPUT_DIM
    ls = np.exp(theta[:n_ls])
    if isotropic:
        ls = np.full(INPUT_DIM, ls[0])
    return RbfHyperparams(
        lengthscales=ls,
        signal_variance=float(np.exp(theta[n_ls])),
        noise_variance=float(np.exp(theta[n_ls + 1])),
    )


def _hp_to_theta(hp: RbfHyperparams, isotropic: bool) -> np.ndarray:
    if isotropic:
        ls = [float(np.log(hp.lengthscales[0]))]
    else:
        ls = list(np.log(hp.lengthscales))
    return np.array(ls + [np.log(hp.signal_variance), np.log(hp.noise_variance)])


def _theta_bounds(isotropic: bool) -> tuple[np.ndarray, np.ndarray]:
    n_ls = 1 if isotropic else INPUT_DIM
    lo = np.array([LOG_BOUNDS_LENGTHSCALE[0]] * n_ls + [LOG_BOUNDS_SIGNAL[0], LOG_BOUNDS_NOISE[0]])
    hi = np.array([LOG_BOUNDS_LENGTHSCALE[1]] * n_ls + [LOG_BOUNDS_SIGNAL[1], LOG_BOUNDS_NOISE[1]])
    return lo, hi


def log_marginal_likelihood(
    X: np.ndarray, y: np.ndarray, theta: np.ndarray, isotropic: bool = False
) -> tuple[float, np.ndarray]:
    """Value and gradient of log p(y | X, theta) in log-hyperparameter space.

    Returns (-inf, zeros) when the kernel matrix fails to factorize, which
    makes the ascent reject that step.
    """
    hp = _theta_to_hp(theta, isotropic)
    n = X.shape[0]
    K = _kernel_matrix(X, X, hp)
    Ky = K + hp.noise_variance * np.eye(n)
    try:
        L = scipy.linalg.cholesky(Ky, lower=True)
    except scipy.linalg.LinAlgError:
        return -np.inf, np.zeros_like(theta)
    alpha = scipy.linalg.cho_solve((L, True), y)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.log(np.diag(L)).sum())
        - 0.5 * n * np.log(2.0 * np.pi)
    )

    # dlml/dtheta_j = 1/2 tr((alpha alpha^T - Ky^-1) dKy/dtheta_j)
    inner = np.outer(alpha, alpha) - scipy.linalg.cho_solve((L, True), np.eye(n))
    grad = np.empty_like(theta)
    if isotropic:
        sq = _scaled_sqdist(X, hp.lengthscales)
        grad[0] = 0.5 * float((inner * (K * sq)).sum())
        n_ls = 1
    else:
        n_ls = INPUT_DIM
        for d in range(INPUT_DIM):
            diff = (X[:, d][:, None] - X[:, d][None, :]) / hp.lengthscales[d]
            grad[d] = 0.5 * float((inner * (K * diff**2)).sum())
    grad[n_ls] = 0.5 * float((inner * K).sum())
    grad[n_ls + 1] = 0.5 * hp.noise_variance * float(np.trace(inner))
    return lml, grad


def _scaled_sqdist(X: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    S = X / lengthscales
    return (
        (S**2).sum(axis=1)[:, None]
        + (S**2).sum(axis=1)[None, :]
        - 2.0 * S @ S.T
    )


def _ascend(
    X: np.ndarray,
    y: np.ndarray,
    theta0: np.ndarray,
    isotropic: bool,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, float]:
    """Projected gradient ascent with Armijo backtracking; monotone by design."""
    lo, hi = _theta_bounds(isotropic)
    theta = np.clip(theta0, lo, hi)
    value, grad = log_marginal_likelihood(X, y, theta, isotropic)
    if not np.isfinite(value):
        return theta, value
    step = 0.1
    for _ in range(max_iter):
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            break
        accepted = False
        for _ in range(40):
            trial = np.clip(theta + step * grad, lo, hi)
            trial_value, trial_grad = log_marginal_likelihood(X, y, trial, isotropic)
            if trial_value >= value + 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
            if step < 1e-14:
                break
        if not accepted:
            break
        improvement = trial_value - value
        theta, value, grad = trial, trial_value, trial_grad
        step = min(step * 2.0, 1.0)
        if improvement < tol:
            break
    return theta, value


@dataclass
class GpJointModel:
    """One fitted joint: training data, hyperparameters and solved weights."""

    X: np.ndarray
    y: np.ndarray
    hp: RbfHyperparams
    L: np.ndarray
    weights: np.ndarray
    jitter: float
    log_marginal: float

    def predict(self, x: np.ndarray) -> float:
        """Posterior mean at one input."""
        k_star = _kernel_matrix(np.asarray(x, dtype=float)[None, :], self.X, self.hp)[0]
        return float(k_star @ self.weights)


def _factorize(X: np.ndarray, y: np.ndarray, hp: RbfHyperparams) -> tuple[np.ndarray, np.ndarray, float]:
    """Cholesky of K + sn2 I with jitter escalation 1e-10 -> 1e-6."""
    n = X.shape[0]
    Ky = _kernel_matrix(X, X, hp) + hp.noise_variance * np.eye(n)
    jitter = 0.0
    while True:
        try:
            L = scipy.linalg.cholesky(Ky + jitter * np.eye(n), lower=True)
            break
        except scipy.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise ValueError(
                    "kernel matrix is not positive definite even with jitter "
                    f"{JITTER_MAX:g}: degenerate dataset"
                )
    weights = scipy.linalg.cho_solve((L, True), y)
    return L, weights, jitter


def build_joint_model(X: np.ndarray, y: np.ndarray, hp: RbfHyperparams) -> GpJointModel:
    """Factorize and solve the weights for fixed hyperparameters."""
    L, weights, jitter = _factorize(X, y, hp)
    lml, _ = log_marginal_likelihood(X, y, _hp_to_theta(hp, isotropic=False))
    return GpJointModel(X=X, y=y, hp=hp, L=L, weights=weights, jitter=jitter, log_marginal=lml)


def default_init_hyperparams(dataset: GpDataset, joint: int) -> RbfHyperparams:
    """Data-scaled starting point: lengthscale = input std, sf2 = var(y)."""
    spread = dataset.inputs.std(axis=0)
    spread = np.where(spread > 1e-12, spread, 1.0)
    var_y = float(dataset.targets[:, joint].var())
    var_y = max(var_y, 1e-8)
    return RbfHyperparams(
        lengthscales=spread,
        signal_variance=var_y,
        noise_variance=1e-4 * var_y,
    )


def fit(
    dataset: GpDataset,
    init_hp: RbfHyperparams | None = None,
    n_starts: int = 4,
    max_iter: int = 500,
    tol: float = 1e-8,
    seed: int = 0,
    isotropic: bool = False,
) -> list[GpJointModel]:
    """Fit one GP per joint by multi-start ascent on the marginal likelihood.

    The returned hyperparameters never score below the initial ones.
    """
    if len(dataset) < 2:
        raise ValueError("need at least two samples to fit")
    rng = np.random.default_rng(seed)
    models = []
    for joint in range(2):
        y = dataset.targets[:, joint]
        hp0 = init_hp if init_hp is not None else default_init_hyperparams(dataset, joint)
        theta0 = _hp_to_theta(hp0, isotropic)
        best_theta, best_value = _ascend(
            dataset.inputs, y, theta0, isotropic, max_iter, tol
        )
        for _ in range(n_starts - 1):
            jittered = theta0 + rng.uniform(-np.log(3.0), np.log(3.0), size=theta0.size)
            theta, value = _ascend(dataset.inputs, y, jittered, isotropic, max_iter, tol)
            if value > best_value:
                best_theta, best_value = theta, value
        hp = _theta_to_hp(best_theta, isotropic)
        L, weights, jitter = _factorize(dataset.inputs, y, hp)
        models.append(
            GpJointModel(
                X=dataset.inputs,
                y=y,
                hp=hp,
                L=L,
                weights=weights,
                jitter=jitter,
                log_marginal=best_value,
            )
        )
    return models


def predict_torque(models: list, x: np.ndarray) -> np.ndarray:
    """Posterior-mean torque of both joints at x = (q, qd, qdd)."""
    return np.array([m.predict(x) for m in models])


def extract_components(
    models: list, q: np.ndarray, qd: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Recover (Mhat, nhat) from the torque predictor by acceleration probes.

    nhat is the prediction at zero acceleration; column i of Mhat is the
    prediction increment for a unit acceleration of joint i.  Mhat is
    symmetrized; positive definiteness is NOT enforced here (the
    model wrapper regularizes when the controller consumes it).
    """
    x = np.concatenate((q, qd, np.zeros(2)))
    nhat = predict_torque(models, x)
    Mhat = np.empty((2, 2))
    for i in range(2):
        x[4:6] = 0.0
        x[4 + i] = 1.0
        Mhat[:, i] = predict_torque(models, x) - nhat
    Mhat = 0.5 * (Mhat + Mhat.T)
    return Mhat, nhat


class GpDynamicsModel(DynamicsModel):
    """Controller-facing wrapper: symmetrized, PD-regularized Mhat and nhat.

    When the extracted Mhat has an eigenvalue below the floor, lambda I is
    added with lambda = max(0, floor - min eigenvalue); occurrences are
    counted and reported once.
    """

    PD_FLOOR = 1e-3

    def __init__(self, models: list):
        self.models = models
        self.regularization_events = 0
        self._warned = False

    def mass_estimate(self, q: np.ndarray) -> np.ndarray:
        # The true inertia depends only on q, so the acceleration probes run
        # at zero velocity; for a predictor exactly linear in qdd the choice
        # of probe velocity is immaterial.
        Mhat, _ = extract_components(self.models, q, np.zeros(2))
        smallest = float(np.linalg.eigvalsh(Mhat)[0])
        if smallest < self.PD_FLOOR:
            Mhat = Mhat + (self.PD_FLOOR - smallest) * np.eye(2)
            self.regularization_events += 1
            if not self._warned:
                logger.warning(
                    "extracted inertia estimate not positive definite "
                    "(min eigenvalue %.3g); regularizing with a %.0e floor",
                    smallest,
                    self.PD_FLOOR,
                )
                self._warned = True
        return Mhat

    def bias_estimate(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        x = np.concatenate((q, qd, np.zeros(2)))
        return predict_torque(self.models, x)


# --- persistence ------------------------------------------------------------


def save_dataset_csv(dataset: GpDataset, path: str | Path) -> None:
    lines = [DATASET_COLUMNS]
    for i in range(len(dataset)):
        row = np.concatenate(([dataset.t[i]], dataset.inputs[i], dataset.targets[i]))
        lines.append(",".join("%.17g" % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset_csv(path: str | Path) -> GpDataset:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != DATASET_COLUMNS:
        raise ValueError(f"{path}: expected header {DATASET_COLUMNS!r}")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return GpDataset(t=data[:, 0], inputs=data[:, 1:7], targets=data[:, 7:9])


def save_hyperparams(models: list, path: str | Path) -> None:
    """Plain-text key-value record of both joints' fitted hyperparameters."""
    lines = []
    for joint, model in enumerate(models, start=1):
        for d in range(INPUT_DIM):
            lines.append(f"joint{joint}.lengthscale{d + 1} = {model.hp.lengthscales[d]:.17g}")
        lines.append(f"joint{joint}.signal_variance = {model.hp.signal_variance:.17g}")
        lines.append(f"joint{joint}.noise_variance = {model.hp.noise_variance:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_hyperparams(path: str | Path) -> list[RbfHyperparams]:
    values: dict[str, float] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = float(value.strip())
    result = []
    for joint in (1, 2):
        ls = np.array([values[f"joint{joint}.lengthscale{d + 1}"] for d in range(INPUT_DIM)])
        result.append(
            RbfHyperparams(
                lengthscales=ls,
                signal_variance=values[f"joint{joint}.signal_variance"],
                noise_variance=values[f"joint{joint}.noise_variance"],
            )
        )
    return result
