"""Experiment harness and command-line interface.

Subcommands: experiment1 (perturbed model, bound-based robust vs adaptive),
experiment2 (GP model, plain vs adaptive), bounds, gen-dataset, fit-gp and
simulate.  Configuration is an INI file with one section per module; every
key can be overridden on the command line with --set section.key=value.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 regression against a recorded experiment fixture.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gp_model
from .bounds import StateBox, UncertaintyBounds, compute_bounds, rho_static
from .controllers import ParametricModel, RhoLaw
from .lyapunov import build_design
from .rr_dynamics import NOMINAL_PARAMS_DICT, ManipulatorParams, perturb_params
from .sim import SimConfig, SimLog, SimulationError, replay_check, run
from .trajectory import ReferenceTrajectory, TrajectoryConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FIXTURE = 4

POST_TRANSIENT_FRACTION = 0.6  # report statistics over the final 60% of a run


class ConfigError(Exception):
    """Bad configuration file, key or value."""


class FixtureRegression(Exception):
    """An experiment violated a recorded acceptance fixture."""


DEFAULTS = {
    "dynamics": {
        **{k: repr(v) for k, v in NOMINAL_PARAMS_DICT.items()},
        "perturb_scale": "0.1",
        "perturb_seed": "42",
    },
    "trajectory": {
        "amplitude": "0.1",
        "n_components": "3",
        "omega_min": repr(float(np.pi)),
        "omega_max": repr(float(3.0 * np.pi)),
        "seed": "7",
    },
    "controller": {
        "kp": "100.0",
        "kd": "20.0",
        # eps 0.5 keeps the layer of the published setup; the experiment
        # commands override it to match the z-scale of this design (see
        # the shipped experiment configs)
        "eps": "0.5",
        "eps1": "0.01",
        "law": "basic",
        "k_rho": "1000.0",
        "rho_offset": "0.01",
    },
    "bounds": {
        "q_min": repr(float(-np.pi)),
        "q_max": repr(float(np.pi)),
        "qd_min": "-5.0",
        "qd_max": "5.0",
        "xi_norm_max": "10.0",
        "grid_density_q": "25",
        "grid_density_state": "9",
        "margin": "1.1",
    },
    "gp": {
        "dataset_seed": "101",
        "dataset_duration": "50.0",
        "sample_rate": "1.0",
        "n_starts": "4",
        "max_iter": "500",
        "tol": "1e-8",
        "seed": "0",
        "isotropic": "false",
    },
    "sim": {
        "duration": "10.0",
        "step": "0.001",
        "substeps": "1",
        "e0_1": "0.0",
        "e0_2": "0.0",
        "model": "exact",
    },
}

# the boundary layer the experiments run with: scaled to the z magnitudes of
# the Q that solves the Lyapunov equation for P = I (measured ~3e-3 peak)
EXPERIMENT_OVERRIDES = {
    "experiment1": {("controller", "eps"): "0.0005", ("controller", "k_rho"): "1000.0"},
    "experiment2": {("controller", "eps"): "0.0005", ("controller", "k_rho"): "500.0"},
}


def load_config(
    path: str | None, overrides: list[str], command: str | None = None
) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    cfg.optionxform = str  # keys are case-sensitive (I1, I2)
    cfg.read_dict(DEFAULTS)
    for (section, key), value in EXPERIMENT_OVERRIDES.get(command, {}).items():
        cfg.set(section, key, value)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            read = cfg.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not read:
            raise ConfigError(f"could not read config file: {path}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not cfg.has_section(section):
            raise ConfigError(f"unknown config section {section!r} in --set {item!r}")
        if key not in DEFAULTS.get(section, {}):
            raise ConfigError(f"unknown config key {section}.{key!r} in --set {item!r}")
        cfg.set(section, key, value)
    _validate_known_keys(cfg, path)
    return cfg


def _validate_known_keys(cfg: configparser.ConfigParser, path: str | None) -> None:
    for section in cfg.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{path or 'config'}: unknown section [{section}]")
        for key in cfg[section]:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{path or 'config'}: unknown key {key!r} in [{section}]")


def _getfloat(cfg, section, key) -> float:
    try:
        return cfg.getfloat(section, key)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {cfg.get(section, key)!r}: not a number") from exc


def _getint(cfg, section, key) -> int:
    try:
        return cfg.getint(section, key)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {cfg.get(section, key)!r}: not an integer") from exc


def _getbool(cfg, section, key) -> bool:
    try:
        return cfg.getboolean(section, key)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {cfg.get(section, key)!r}: not a boolean") from exc


def build_params(cfg) -> ManipulatorParams:
    try:
        return ManipulatorParams(
            **{k: _getfloat(cfg, "dynamics", k) for k in NOMINAL_PARAMS_DICT}
        )
    except ValueError as exc:
        raise ConfigError(f"[dynamics]: {exc}") from exc


def build_trajectory(cfg, seed: int | None = None) -> ReferenceTrajectory:
    try:
        tc = TrajectoryConfig(
            amplitude=_getfloat(cfg, "trajectory", "amplitude"),
            n_components=_getint(cfg, "trajectory", "n_components"),
            omega_min=_getfloat(cfg, "trajectory", "omega_min"),
            omega_max=_getfloat(cfg, "trajectory", "omega_max"),
            seed=seed if seed is not None else _getint(cfg, "trajectory", "seed"),
        )
    except ValueError as exc:
        raise ConfigError(f"[trajectory]: {exc}") from exc
    return ReferenceTrajectory(tc)


def build_lyapunov_design(cfg):
    try:
        return build_design(
            kp=_getfloat(cfg, "controller", "kp"),
            kd=_getfloat(cfg, "controller", "kd"),
            eps=_getfloat(cfg, "controller", "eps"),
            eps1=_getfloat(cfg, "controller", "eps1"),
        )
    except ValueError as exc:
        raise ConfigError(f"[controller]: {exc}") from exc


def build_box(cfg) -> StateBox:
    try:
        return StateBox(
            q_min=_getfloat(cfg, "bounds", "q_min"),
            q_max=_getfloat(cfg, "bounds", "q_max"),
            qd_min=_getfloat(cfg, "bounds", "qd_min"),
            qd_max=_getfloat(cfg, "bounds", "qd_max"),
            xi_norm_max=_getfloat(cfg, "bounds", "xi_norm_max"),
        )
    except ValueError as exc:
        raise ConfigError(f"[bounds]: {exc}") from exc


def _parse_law(cfg) -> RhoLaw:
    name = cfg.get("controller", "law").strip().lower()
    try:
        return RhoLaw(name)
    except ValueError as exc:
        valid = ", ".join(law.value for law in RhoLaw)
        raise ConfigError(f"[controller] law = {name!r}: expected one of {valid}") from exc


def _sim_config(cfg, model, traj, design, law, bounds=None) -> SimConfig:
    try:
        return SimConfig(
            true_params=build_params(cfg),
            model=model,
            trajectory=traj,
            design=design,
            law=law,
            k_rho=_getfloat(cfg, "controller", "k_rho"),
            bounds=bounds,
            rho_offset=_getfloat(cfg, "controller", "rho_offset"),
            duration=_getfloat(cfg, "sim", "duration"),
            step=_getfloat(cfg, "sim", "step"),
            substeps=_getint(cfg, "sim", "substeps"),
            e0=np.array([_getfloat(cfg, "sim", "e0_1"), _getfloat(cfg, "sim", "e0_2")]),
        )
    except ValueError as exc:
        raise ConfigError(f"[sim]: {exc}") from exc


# --- report -----------------------------------------------------------------


@dataclass
class ControllerSummary:
    """Post-transient statistics of one run, derived from its (replayed) log."""

    label: str
    rms_error: float
    max_error: float
    terminal_rho: float
    peak_torque: float
    torque_total_variation: float
    csv_path: str


@dataclass
class ExperimentReport:
    """Quantitative summary of one experiment."""

    name: str
    controllers: list[ControllerSummary]
    metadata: dict = field(default_factory=dict)
    bounds: UncertaintyBounds | None = None
    warnings: list[str] = field(default_factory=list)

    def write_text(self, path: Path) -> None:
        lines = [f"experiment: {self.name}", ""]
        for key, value in self.metadata.items():
            lines.append(f"{key} = {value}")
        if self.bounds is not None:
            lines.append("")
            lines.append("uncertainty bounds:")
            for name in ("alpha", "phi", "q_m", "m_min", "m_max"):
                lines.append(f"  {name} = {getattr(self.bounds, name):.6g}")
        for summary in self.controllers:
            lines.append("")
            lines.append(f"[{summary.label}]")
            lines.append(f"  rms_error_post_transient = {summary.rms_error:.6e}")
            lines.append(f"  max_error = {summary.max_error:.6e}")
            lines.append(f"  terminal_rho = {summary.terminal_rho:.6g}")
            lines.append(f"  peak_torque = {summary.peak_torque:.6g}")
            lines.append(f"  torque_total_variation = {summary.torque_total_variation:.6g}")
            lines.append(f"  csv = {summary.csv_path}")
        for warning in self.warnings:
            lines.append("")
            lines.append(f"warning: {warning}")
        path.write_text("\n".join(lines) + "\n")

    def write_csv(self, path: Path) -> None:
        header = (
            "controller,rms_error_post_transient,max_error,terminal_rho,"
            "peak_torque,torque_total_variation,csv"
        )
        rows = [header]
        for s in self.controllers:
            rows.append(
                f"{s.label},{s.rms_error:.17g},{s.max_error:.17g},{s.terminal_rho:.17g},"
                f"{s.peak_torque:.17g},{s.torque_total_variation:.17g},{s.csv_path}"
            )
        path.write_text("\n".join(rows) + "\n")


def summarize(label: str, log: SimLog, csv_path: Path) -> ControllerSummary:
    start = int((1.0 - POST_TRANSIENT_FRACTION) * len(log))
    err_norm = np.linalg.norm(log.e, axis=1)
    return ControllerSummary(
        label=label,
        rms_error=float(np.sqrt((err_norm[start:] ** 2).mean())),
        max_error=float(err_norm.max()),
        terminal_rho=float(log.rho[-1]),
        peak_torque=float(np.abs(log.tau).max()),
        torque_total_variation=float(np.abs(np.diff(log.tau, axis=0)).sum()),
        csv_path=str(csv_path),
    )


def _run_checked(config: SimConfig, label: str, outdir: Path) -> tuple[SimLog, Path]:
    log = run(config)
    if not replay_check(log, config):
        raise SimulationError(f"replay check failed for {label}")
    path = outdir / f"{label}.csv"
    log.save_csv(path)
    return log, path


def _assert_states_in_box(
    log: SimLog, box: StateBox, traj: ReferenceTrajectory, label: str
) -> None:
    """The bound suprema are only valid over the box they were sampled on."""
    qd_ref = np.array([traj.evaluate(t).qd_ref for t in log.t])
    qd = qd_ref - log.ed
    ok = (
        (log.q >= box.q_min).all()
        and (log.q <= box.q_max).all()
        and (qd >= box.qd_min).all()
        and (qd <= box.qd_max).all()
    )
    if not ok:
        raise SimulationError(f"{label}: simulated states left the bound-estimation box")


# --- commands ----------------------------------------------------------------


def cmd_experiment1(cfg, outdir: Path) -> ExperimentReport:
    """Bound-based robust vs adaptive robust control on a perturbed model."""
    true_params = build_params(cfg)
    hat_params = perturb_params(
        true_params,
        _getfloat(cfg, "dynamics", "perturb_scale"),
        _getint(cfg, "dynamics", "perturb_seed"),
    )
    traj = build_trajectory(cfg)
    design = build_lyapunov_design(cfg)
    box = build_box(cfg)
    bounds = compute_bounds(
        true_params,
        hat_params,
        box,
        traj,
        grid_density_q=_getint(cfg, "bounds", "grid_density_q"),
        grid_density_state=_getint(cfg, "bounds", "grid_density_state"),
        margin=_getfloat(cfg, "bounds", "margin"),
    )
    model = ParametricModel(hat_params)

    cfg_rfbl = _sim_config(cfg, model, traj, design, RhoLaw.STATIC, bounds=bounds)
    log_rfbl, path_rfbl = _run_checked(cfg_rfbl, "rfbl", outdir)
    cfg_arfbl = _sim_config(cfg, model, traj, design, RhoLaw.BASIC)
    log_arfbl, path_arfbl = _run_checked(cfg_arfbl, "arfbl", outdir)

    for label, log in (("rfbl", log_rfbl), ("arfbl", log_arfbl)):
        _assert_states_in_box(log, box, traj, label)

    summaries = [
        summarize("rfbl", log_rfbl, path_rfbl),
        summarize("arfbl", log_arfbl, path_arfbl),
    ]
    report = ExperimentReport(
        name="experiment1",
        controllers=summaries,
        metadata={
            "model": "perturbed",
            "perturb_scale": cfg.get("dynamics", "perturb_scale"),
            "perturb_seed": cfg.get("dynamics", "perturb_seed"),
            "trajectory_seed": cfg.get("trajectory", "seed"),
            "kp": cfg.get("controller", "kp"),
            "kd": cfg.get("controller", "kd"),
            "eps": cfg.get("controller", "eps"),
            "k_rho": cfg.get("controller", "k_rho"),
            "rho_static_mean": f"{log_rfbl.rho.mean():.6g}",
        },
        bounds=bounds,
    )

    rfbl_rms = summaries[0].rms_error
    arfbl_rms = summaries[1].rms_error
    if arfbl_rms > 2.0 * rfbl_rms:
        raise FixtureRegression(
            f"adaptive controller post-transient RMS {arfbl_rms:.3e} exceeds twice the "
            f"bound-based controller's {rfbl_rms:.3e}"
        )
    return report


def _fit_gp_models(cfg):
    true_params = build_params(cfg)
    ds_traj = build_trajectory(cfg, seed=_getint(cfg, "gp", "dataset_seed"))
    dataset = gp_model.generate_dataset(
        true_params,
        ds_traj,
        duration=_getfloat(cfg, "gp", "dataset_duration"),
        sample_rate=_getfloat(cfg, "gp", "sample_rate"),
    )
    models = gp_model.fit(
        dataset,
        n_starts=_getint(cfg, "gp", "n_starts"),
        max_iter=_getint(cfg, "gp", "max_iter"),
        tol=_getfloat(cfg, "gp", "tol"),
        seed=_getint(cfg, "gp", "seed"),
        isotropic=_getbool(cfg, "gp", "isotropic"),
    )
    return dataset, models


def cmd_experiment2(cfg, outdir: Path) -> ExperimentReport:
    """Plain vs adaptive robust feedback linearization on a learned model."""
    traj = build_trajectory(cfg)
    design = build_lyapunov_design(cfg)
    dataset, models = _fit_gp_models(cfg)
    gp_model.save_dataset_csv(dataset, outdir / "gp_dataset.csv")
    gp_model.save_hyperparams(models, outdir / "gp_hyperparams.txt")
    model = gp_model.GpDynamicsModel(models)

    cfg_fbl = _sim_config(cfg, model, traj, design, RhoLaw.NONE)
    log_fbl, path_fbl = _run_checked(cfg_fbl, "fbl", outdir)
    cfg_arfbl = _sim_config(cfg, model, traj, design, RhoLaw.BASIC)
    log_arfbl, path_arfbl = _run_checked(cfg_arfbl, "arfbl_gp", outdir)

    summaries = [
        summarize("fbl", log_fbl, path_fbl),
        summarize("arfbl", log_arfbl, path_arfbl),
    ]
    report = ExperimentReport(
        name="experiment2",
        controllers=summaries,
        metadata={
            "model": "gp",
            "dataset_seed": cfg.get("gp", "dataset_seed"),
            "dataset_samples": str(len(dataset)),
            "trajectory_seed": cfg.get("trajectory", "seed"),
            "kp": cfg.get("controller", "kp"),
            "kd": cfg.get("controller", "kd"),
            "eps": cfg.get("controller", "eps"),
            "k_rho": cfg.get("controller", "k_rho"),
            "mass_regularization_events": str(model.regularization_events),
        },
    )

    fbl_rms = summaries[0].rms_error
    arfbl_rms = summaries[1].rms_error
    if not np.isfinite(arfbl_rms):
        raise FixtureRegression("adaptive controller error diverged")
    if arfbl_rms >= fbl_rms:
        raise FixtureRegression(
            f"adaptive controller RMS {arfbl_rms:.3e} is not strictly below the plain "
            f"controller's {fbl_rms:.3e}"
        )
    if summaries[1].peak_torque > summaries[0].peak_torque:
        message = (
            f"adaptive peak torque {summaries[1].peak_torque:.4g} exceeds plain "
            f"controller's {summaries[0].peak_torque:.4g}"
        )
        logger.warning(message)
        report.warnings.append(message)
    return report


def cmd_bounds(cfg, outdir: Path) -> UncertaintyBounds:
    """Compute and persist the uncertainty bounds for the perturbed model."""
    true_params = build_params(cfg)
    hat_params = perturb_params(
        true_params,
        _getfloat(cfg, "dynamics", "perturb_scale"),
        _getint(cfg, "dynamics", "perturb_seed"),
    )
    traj = build_trajectory(cfg)
    bounds = compute_bounds(
        true_params,
        hat_params,
        build_box(cfg),
        traj,
        grid_density_q=_getint(cfg, "bounds", "grid_density_q"),
        grid_density_state=_getint(cfg, "bounds", "grid_density_state"),
        margin=_getfloat(cfg, "bounds", "margin"),
    )
    lines = [f"{name} = {getattr(bounds, name):.17g}" for name in ("alpha", "phi", "q_m", "m_min", "m_max")]
    (outdir / "bounds.txt").write_text("\n".join(lines) + "\n")
    return bounds


def cmd_gen_dataset(cfg, outdir: Path) -> Path:
    """Generate the inverse-dynamics training dataset CSV."""
    true_params = build_params(cfg)
    ds_traj = build_trajectory(cfg, seed=_getint(cfg, "gp", "dataset_seed"))
    dataset = gp_model.generate_dataset(
        true_params,
        ds_traj,
        duration=_getfloat(cfg, "gp", "dataset_duration"),
        sample_rate=_getfloat(cfg, "gp", "sample_rate"),
    )
    path = outdir / "gp_dataset.csv"
    gp_model.save_dataset_csv(dataset, path)
    return path


def cmd_fit_gp(cfg, outdir: Path, dataset_path: str | None = None) -> Path:
    """Fit the per-joint GP models and persist their hyperparameters."""
    if dataset_path is not None:
        dataset = gp_model.load_dataset_csv(dataset_path)
        models = gp_model.fit(
            dataset,
            n_starts=_getint(cfg, "gp", "n_starts"),
            max_iter=_getint(cfg, "gp", "max_iter"),
            tol=_getfloat(cfg, "gp", "tol"),
            seed=_getint(cfg, "gp", "seed"),
            isotropic=_getbool(cfg, "gp", "isotropic"),
        )
    else:
        _, models = _fit_gp_models(cfg)
    path = outdir / "gp_hyperparams.txt"
    gp_model.save_hyperparams(models, path)
    return path


def cmd_simulate(cfg, outdir: Path) -> Path:
    """One closed-loop run with the configured controller and model."""
    true_params = build_params(cfg)
    traj = build_trajectory(cfg)
    design = build_lyapunov_design(cfg)
    law = _parse_law(cfg)
    selection = cfg.get("sim", "model").strip().lower()
    bounds = None
    if selection == "exact":
        model = ParametricModel(true_params)
    elif selection == "perturbed":
        model = ParametricModel(
            perturb_params(
                true_params,
                _getfloat(cfg, "dynamics", "perturb_scale"),
                _getint(cfg, "dynamics", "perturb_seed"),
            )
        )
    elif selection == "gp":
        _, models = _fit_gp_models(cfg)
        model = gp_model.GpDynamicsModel(models)
    else:
        raise ConfigError(f"[sim] model = {selection!r}: expected exact, perturbed or gp")
    if law is RhoLaw.STATIC:
        if selection != "perturbed":
            raise ConfigError("the static law needs the perturbed model (computable bounds)")
        bounds = compute_bounds(
            true_params,
            model.params,
            build_box(cfg),
            traj,
            grid_density_q=_getint(cfg, "bounds", "grid_density_q"),
            grid_density_state=_getint(cfg, "bounds", "grid_density_state"),
            margin=_getfloat(cfg, "bounds", "margin"),
        )
    sim_cfg = _sim_config(cfg, model, traj, design, law, bounds=bounds)
    log, path = _run_checked(sim_cfg, f"sim_{law.value}_{selection}", outdir)
    print(f"wrote {path} ({len(log)} rows)")
    return path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rrfbl", description="RR-arm feedback-linearization experiments"
    )
    parser.add_argument("--config", help="INI config file (defaults built in)")
    parser.add_argument(
        "--outdir", default="rrfbl_out", help="directory for CSV logs and reports"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("experiment1", help="perturbed model: bound-based vs adaptive robust")
    sub.add_parser("experiment2", help="GP model: plain vs adaptive robust")
    sub.add_parser("bounds", help="compute uncertainty bounds for the perturbed model")
    sub.add_parser("gen-dataset", help="generate the GP training dataset")
    fit = sub.add_parser("fit-gp", help="fit GP hyperparameters")
    fit.add_argument("--dataset", help="existing dataset CSV (default: regenerate)")
    sub.add_parser("simulate", help="single closed-loop run per config")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config, args.overrides, command=args.command)
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "experiment1":
            report = cmd_experiment1(cfg, outdir)
        elif args.command == "experiment2":
            report = cmd_experiment2(cfg, outdir)
        elif args.command == "bounds":
            bounds = cmd_bounds(cfg, outdir)
            print(f"alpha={bounds.alpha:.6g} phi={bounds.phi:.6g} q_m={bounds.q_m:.6g}")
            return EXIT_OK
        elif args.command == "gen-dataset":
            print(f"wrote {cmd_gen_dataset(cfg, outdir)}")
            return EXIT_OK
        elif args.command == "fit-gp":
            print(f"wrote {cmd_fit_gp(cfg, outdir, args.dataset)}")
            return EXIT_OK
        else:
            cmd_simulate(cfg, outdir)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FixtureRegression as exc:
        print(f"fixture regression: {exc}", file=sys.stderr)
        return EXIT_FIXTURE
    except (SimulationError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    report.write_text(outdir / "report.txt")
    report.write_csv(outdir / "report.csv")
    print((outdir / "report.txt").read_text())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
