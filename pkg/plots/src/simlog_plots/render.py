"""Deterministic figure rendering from simulation CSV logs.

The input contract is the exact column header written by the simulator;
anything else is rejected with the offending header in the message.  Output
images carry fixed metadata so identical inputs give identical bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

EXPECTED_HEADER = (
    "t,q1,q2,qref1,qref2,e1,e2,ed1,ed2,tau1,tau2,rho,V,Vdot,znorm,eta1,eta2,w1,w2"
)

PNG_METADATA = {"Software": "simlog-plots"}

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


class FigureKind(enum.Enum):
    TRACKING_PANEL = "tracking_panel"
    RHO_TRACE = "rho_trace"


@dataclass
class SimColumns:
    """One parsed log: named views into the CSV columns."""

    name: str
    t: np.ndarray
    q: np.ndarray
    q_ref: np.ndarray
    e: np.ndarray
    tau: np.ndarray
    rho: np.ndarray


@dataclass
class PlotSpec:
    """Inputs, figure kind and output path of one rendering job."""

    inputs: list[str | Path]
    kind: FigureKind
    out: str | Path
    overlay: str | Path | None = None

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        if isinstance(self.kind, str):
            self.kind = FigureKind(self.kind)


def load_log(path: str | Path) -> SimColumns:
    """Parse one CSV log, enforcing the exact simulator header."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input CSV does not exist: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].strip():
        raise ValueError(f"{path}: empty file, expected header {EXPECTED_HEADER!r}")
    header = lines[0].strip()
    if header != EXPECTED_HEADER:
        raise ValueError(
            f"{path}: column mismatch, expected {EXPECTED_HEADER!r} but found {header!r}"
        )
    if len(lines) < 2:
        raise ValueError(f"{path}: no data rows")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return SimColumns(
        name=path.stem,
        t=data[:, 0],
        q=data[:, 1:3],
        q_ref=data[:, 3:5],
        e=data[:, 5:7],
        tau=data[:, 9:11],
        rho=data[:, 11],
    )


def _render_tracking_panel(logs: list[SimColumns], out: Path) -> None:
    ncols = len(logs)
    fig, axes = plt.subplots(
        3, ncols, figsize=(4.6 * ncols, 7.2), sharex=True, squeeze=False, layout="constrained"
    )
    for col, log in enumerate(logs):
        ax_pos, ax_err, ax_tau = axes[0][col], axes[1][col], axes[2][col]
        for joint in range(2):
            color = COLORS[joint]
            ax_pos.plot(log.t, log.q[:, joint], color=color, lw=1.0, label=f"q{joint + 1}")
            ax_pos.plot(
                log.t, log.q_ref[:, joint], color=color, lw=1.0, ls="--",
                label=f"q{joint + 1} ref",
            )
            ax_err.plot(log.t, log.e[:, joint], color=color, lw=1.0, label=f"e{joint + 1}")
            ax_tau.plot(log.t, log.tau[:, joint], color=color, lw=0.8, label=f"tau{joint + 1}")
        ax_pos.set_title(log.name)
        ax_pos.set_ylabel("position [rad]")
        ax_err.set_ylabel("tracking error [rad]")
        ax_tau.set_ylabel("torque [N m]")
        ax_tau.set_xlabel("time [s]")
        for ax in (ax_pos, ax_err, ax_tau):
            ax.grid(True, alpha=0.3)
            ax.legend(loc="upper right", fontsize=7)
    fig.savefig(out, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def _render_rho_trace(logs: list[SimColumns], overlay: SimColumns | None, out: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0), layout="constrained")
    for i, log in enumerate(logs):
        ax.plot(log.t, log.rho, color=COLORS[i % len(COLORS)], lw=1.2, label=log.name)
    if overlay is not None:
        ax.plot(
            overlay.t, overlay.rho, color="black", lw=1.2, ls="--",
            label=f"{overlay.name} (reference)",
        )
    ax.set_xlabel("time [s]")
    ax.set_ylabel("robust gain rho")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def render(spec: PlotSpec) -> Path:
    """Render one figure; the output file appears only on success."""
    logs = [load_log(p) for p in spec.inputs]
    overlay = load_log(spec.overlay) if spec.overlay is not None else None
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.kind is FigureKind.TRACKING_PANEL:
        _render_tracking_panel(logs, out)
    else:
        _render_rho_trace(logs, overlay, out)
    return out
