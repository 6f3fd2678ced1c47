"""Exponential Euler integration of dX = AX dt + G B(t, X) dt + G dW.

One step reads ``X_{k+1} = e^{dA}(X_k + d G B(t_k, X_k)) + eta_k`` where
``eta_k`` is an exact draw of the stochastic convolution over the step.
Each panel also stores the Brownian increments ``dW_k`` jointly sampled
with ``eta_k``, so stochastic integrals against W can be formed on the
same path.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .drift_models import ZERO, DriftSpec, evaluate
from .errors import DimensionMismatch, DriftEvaluationError, InvalidArgument
from .gaussian_law import sample_increments
from .wave_group import apply_G, group_apply
from .rng import as_stream
from .spectral_core import ModeSpectrum, check_state

PATH_CHUNK = 256


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise InvalidArgument(f"time grid needs t1 > t0, got [{self.t0}, {self.t1}]")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgument(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.t1, self.n_steps * factor)


@dataclass(frozen=True)
class NoisePanel:
    """Pre-drawn increments for ``n_paths`` paths.

    ``eta`` has shape ``(n_paths, n_steps, 2n)`` and ``dW`` shape
    ``(n_paths, n_steps, n)``.
    """

    eta: np.ndarray
    dW: np.ndarray
    seed: int
    fingerprint: str
    dt: float

    @property
    def n_paths(self) -> int:
        return int(self.eta.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.eta.shape[1])

    def paths(self, sl) -> "NoisePanel":
        return NoisePanel(self.eta[sl], self.dW[sl], self.seed, self.fingerprint, self.dt)


def draw_noise_panel(spectrum: ModeSpectrum, grid: TimeGrid, seed, n_paths: int = 1,
                     stream_label="panel") -> NoisePanel:
    """Independent exact increments over every step of ``grid``.

    Each mode consumes its own stream path by path, so the increments of a
    given path do not change when more paths or more modes are drawn.
    """
    stream = as_stream(seed).spawn(stream_label)
    eta, dW = sample_increments(spectrum, grid.dt, stream, (n_paths, grid.n_steps))
    return NoisePanel(eta, dW, int(as_stream(seed).seed), spectrum.fingerprint(), grid.dt)


def zero_panel(spectrum: ModeSpectrum, grid: TimeGrid, n_paths: int = 1) -> NoisePanel:
    return NoisePanel(np.zeros((n_paths, grid.n_steps, spectrum.dim)),
                      np.zeros((n_paths, grid.n_steps, spectrum.n_modes)), -1,
                      spectrum.fingerprint(), grid.dt)


def coarsen_panel(panel: NoisePanel, spectrum: ModeSpectrum) -> NoisePanel:
    """Merge consecutive step pairs exactly: ``eta = e^{dA} eta_1 + eta_2``."""
    if panel.n_steps % 2:
        raise InvalidArgument("cannot coarsen a panel with an odd number of steps")
    e1, e2 = panel.eta[:, 0::2], panel.eta[:, 1::2]
    eta = group_apply(spectrum, panel.dt, e1) + e2
    dW = panel.dW[:, 0::2] + panel.dW[:, 1::2]
    return NoisePanel(eta, dW, panel.seed, panel.fingerprint, 2 * panel.dt)


@dataclass(frozen=True)
class Trajectory:
    """States at every grid node: ``(n_paths, n_steps + 1, 2n)``."""

    states: np.ndarray
    grid: TimeGrid

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[:, -1]


def _check_panel(spectrum, grid, panel):
    if panel.fingerprint != spectrum.fingerprint():
        raise DimensionMismatch("noise panel was drawn for a different spectrum")
    if panel.n_steps != grid.n_steps or not np.isclose(panel.dt, grid.dt, rtol=1e-12, atol=0):
        raise DimensionMismatch("noise panel does not match the time grid")


def _integrate(spectrum, drift, x0, grid, eta):
    n_paths = eta.shape[0]
    dt = grid.dt
    t_nodes = grid.nodes
    states = np.empty((n_paths, grid.n_steps + 1, spectrum.dim))
    X = np.broadcast_to(x0, (n_paths, spectrum.dim)).copy()
    states[:, 0] = X
    active = drift.kind != ZERO
    for k in range(grid.n_steps):
        if active:
            try:
                b = evaluate(drift, t_nodes[k], X, spectrum)
            except Exception as exc:  # noqa: BLE001 - re-raised with step context
                raise DriftEvaluationError(f"drift evaluation failed at step {k}: {exc}",
                                           step=k) from exc
            X = X + dt * apply_G(spectrum, b)
        X = group_apply(spectrum, dt, X) + eta[:, k]
        states[:, k + 1] = X
    return states


def simulate(spectrum: ModeSpectrum, drift: DriftSpec, x0, grid: TimeGrid, panel: NoisePanel,
             threads: int = 1) -> Trajectory:
    """Integrate every path of ``panel`` from ``x0`` (a state or per-path states).

    Paths are processed in fixed chunks of ``PATH_CHUNK`` so the arithmetic
    per path does not depend on ``threads``.
    """
    x0 = check_state(x0, spectrum)
    _check_panel(spectrum, grid, panel)
    x0 = np.broadcast_to(x0, (panel.n_paths, spectrum.dim))
    chunks = [slice(i, min(i + PATH_CHUNK, panel.n_paths))
              for i in range(0, panel.n_paths, PATH_CHUNK)]

    def run(sl):
        return _integrate(spectrum, drift, x0[sl], grid, panel.eta[sl])

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(sl) for sl in chunks]
    return Trajectory(np.concatenate(parts, axis=0), grid)


def simulate_deterministic(spectrum: ModeSpectrum, drift: DriftSpec, x0,
                           grid: TimeGrid) -> Trajectory:
    return simulate(spectrum, drift, x0, grid, zero_panel(spectrum, grid))


def couple(spectrum: ModeSpectrum, drift_a: DriftSpec, drift_b: DriftSpec, x0_a, x0_b,
           grid: TimeGrid, panel: NoisePanel, threads: int = 1):
    """Two solutions driven by the same noise increments."""
    return (simulate(spectrum, drift_a, x0_a, grid, panel, threads),
            simulate(spectrum, drift_b, x0_b, grid, panel, threads))


def write_trajectory_csv(traj: Trajectory, path, path_index: int = 0) -> None:
    n = traj.states.shape[-1] // 2
    header = ["t"] + [f"{c}{m}" for m in range(1, n + 1) for c in ("y", "w")]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, row in zip(traj.grid.nodes, traj.states[path_index]):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
