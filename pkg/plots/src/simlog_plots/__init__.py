"""Batch figure rendering for manipulator-control simulation logs.

Reads the simulator's CSV schema (the sole interface to the producing
package) and renders either a stacked tracking panel per controller or an
overlay of the robust-gain traces.
"""

from .render import FigureKind, PlotSpec, SimColumns, load_log, render

__all__ = ["FigureKind", "PlotSpec", "SimColumns", "load_log", "render"]
