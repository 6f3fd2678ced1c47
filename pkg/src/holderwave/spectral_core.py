"""Eigenstructure of the spatial operator and phase-space coordinates.

States of H = U x V' are stored as flat arrays of length ``2 * n_modes``
ordered ``(y1, w1, y2, w2, ...)``, where ``y`` is the displacement
coefficient and ``w = z / mu`` the metric-normalized velocity.  With this
normalization the H-norm is the Euclidean norm and the wave group acts by
plane rotations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import polygamma

from .errors import DimensionMismatch, InvalidArgument, UnsupportedModel

WAVE1D = "wave1d"
PLATE = "plate_asymptotic"
CUSTOM = "custom"


@dataclass(frozen=True)
class ModeSpectrum:
    """Eigenvalues ``lambdas`` of the positive operator and their model.

    ``param`` is the interval length for ``wave1d``, the area for
    ``plate_asymptotic`` and ``None`` for ``custom``.
    """

    model: str
    param: float | None
    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "mus", np.sqrt(lam))
        self.mus.setflags(write=False)

    @property
    def n_modes(self) -> int:
        return int(self.lambdas.size)

    @property
    def dim(self) -> int:
        return 2 * self.n_modes

    @property
    def length(self) -> float:
        if self.model != WAVE1D:
            raise UnsupportedModel(f"model {self.model!r} has no spatial grid realization")
        return float(self.param)

    def truncate(self, n_modes: int) -> "ModeSpectrum":
        if not 1 <= n_modes <= self.n_modes:
            raise InvalidArgument(f"cannot truncate {self.n_modes} modes to {n_modes}")
        return ModeSpectrum(self.model, self.param, self.lambdas[:n_modes].copy())

    def fingerprint(self) -> str:
        vals = ",".join(repr(float(v)) for v in self.lambdas)
        return f"{self.model}:{self.param!r}:{vals}"

    def describe(self) -> dict:
        return {"model": self.model, "param": self.param, "n_modes": self.n_modes}


def _check_positive(name, value):
    if not np.isfinite(value) or value <= 0:
        raise InvalidArgument(f"{name} must be positive, got {value!r}")


def build_spectrum(model: str, n_modes: int | None = None, *, length: float | None = None,
                   area: float | None = None, values=None) -> ModeSpectrum:
    """Build a spectrum for one of the supported models.

    Parameters
    ----------
    model : {"wave1d", "plate_asymptotic", "custom"}
    n_modes : int
        Number of retained modes. For ``custom`` it defaults to ``len(values)``
        and otherwise truncates the supplied list.
    length : float
        Interval length L for ``wave1d`` (default pi): ``lambda_n = (n pi / L)^2``.
    area : float
        Domain area f for ``plate_asymptotic``: ``lambda_n = (4 pi n)^2 / f^2``.
    values : sequence of float
        Eigenvalues for ``custom``; sorted ascending.
    """
    if model == CUSTOM:
        if values is None:
            raise InvalidArgument("custom spectrum requires values")
        lam = np.sort(np.asarray(values, dtype=float).ravel())
        if lam.size == 0:
            raise InvalidArgument("custom spectrum requires at least one value")
        if n_modes is not None:
            if int(n_modes) < 1 or int(n_modes) > lam.size:
                raise InvalidArgument(f"n_modes={n_modes} incompatible with {lam.size} values")
            lam = lam[: int(n_modes)]
        if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise InvalidArgument("custom eigenvalues must be positive")
        return ModeSpectrum(CUSTOM, None, lam)

    if n_modes is None or int(n_modes) != n_modes or n_modes < 1:
        raise InvalidArgument(f"n_modes must be a positive integer, got {n_modes!r}")
    n = np.arange(1, int(n_modes) + 1, dtype=float)
    if model == WAVE1D:
        L = np.pi if length is None else float(length)
        _check_positive("length", L)
        return ModeSpectrum(WAVE1D, L, (n * np.pi / L) ** 2)
    if model == PLATE:
        if area is None:
            raise InvalidArgument("plate_asymptotic requires area")
        f = float(area)
        _check_positive("area", f)
        return ModeSpectrum(PLATE, f, (4.0 * np.pi * n) ** 2 / f**2)
    raise InvalidArgument(f"unknown spectrum model {model!r}")


def spectrum_from_config(block: dict) -> ModeSpectrum:
    block = dict(block)
    model = block.pop("model", WAVE1D)
    return build_spectrum(model, block.pop("n_modes", None), **block)


def trace_lambda_inverse(spectrum: ModeSpectrum) -> float:
    return float(np.sum(1.0 / spectrum.lambdas))


def trace_lambda_inverse_tail(spectrum: ModeSpectrum) -> float:
    """Sum of ``1/lambda_n`` over the discarded modes ``n > N``.

    Returns ``nan`` for custom spectra, whose tail is unknown.
    """
    N = spectrum.n_modes
    tail = float(polygamma(1, N + 1))  # sum_{n > N} 1/n^2
    if spectrum.model == WAVE1D:
        return (spectrum.param / np.pi) ** 2 * tail
    if spectrum.model == PLATE:
        return (spectrum.param / (4.0 * np.pi)) ** 2 * tail
    return float("nan")


def trace_lambda_inverse_limit(spectrum: ModeSpectrum) -> float:
    """Full series value of ``sum 1/lambda_n`` for the built-in models."""
    if spectrum.model == WAVE1D:
        return spectrum.param**2 / 6.0
    if spectrum.model == PLATE:
        return spectrum.param**2 / 96.0
    return float("nan")


# phase-space helpers ------------------------------------------------------

def check_state(x, spectrum: ModeSpectrum) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (spectrum.dim,):
        raise DimensionMismatch(
            f"state has trailing dimension {x.shape[-1:]}, expected {spectrum.dim}")
    return x


def split(x: np.ndarray):
    """Return views ``(y, w)`` with shape ``(..., n_modes)``."""
    pairs = x.reshape(x.shape[:-1] + (-1, 2))
    return pairs[..., 0], pairs[..., 1]


def join(y, w) -> np.ndarray:
    y, w = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(w, dtype=float))
    return np.stack([y, w], axis=-1).reshape(y.shape[:-1] + (-1,))


def phase_state(spectrum: ModeSpectrum, y=None, z=None) -> np.ndarray:
    """Assemble a state from displacement ``y`` and raw velocity ``z``."""
    n = spectrum.n_modes
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    z = np.zeros(n) if z is None else np.asarray(z, dtype=float)
    if y.shape[-1] != n or z.shape[-1] != n:
        raise DimensionMismatch(f"expected {n} coefficients per component")
    return join(y, z / spectrum.mus)


def raw_velocity(x, spectrum: ModeSpectrum) -> np.ndarray:
    x = check_state(x, spectrum)
    return split(x)[1] * spectrum.mus


class Norms(NamedTuple):
    h_norm: np.ndarray | float
    k_norm: np.ndarray | float


def norms(x, spectrum: ModeSpectrum) -> Norms:
    """H-norm and the stronger K = V x U norm of a state (or batch)."""
    x = check_state(x, spectrum)
    y, w = split(x)
    h = np.linalg.norm(x, axis=-1)
    k = np.sqrt(np.sum(spectrum.lambdas * (y**2 + w**2), axis=-1))
    return Norms(h, k)


# physical grid ------------------------------------------------------------

@dataclass(frozen=True)
class FieldGrid:
    """Midpoint grid on ``[0, L]`` with equal quadrature weights."""

    points: np.ndarray
    weights: np.ndarray
    length: float

    @classmethod
    def uniform(cls, length: float, n_points: int) -> "FieldGrid":
        _check_positive("length", length)
        if n_points < 1:
            raise InvalidArgument("grid needs at least one point")
        h = length / n_points
        pts = (np.arange(n_points) + 0.5) * h
        return cls(pts, np.full(n_points, h), float(length))

    @property
    def size(self) -> int:
        return int(self.points.size)


def default_grid(spectrum: ModeSpectrum, factor: int = 16) -> FieldGrid:
    return FieldGrid.uniform(spectrum.length, factor * spectrum.n_modes)


def basis_matrix(grid: FieldGrid, spectrum: ModeSpectrum) -> np.ndarray:
    """Values ``phi_n(xi_j)`` with shape ``(n_modes, n_points)``."""
    L = spectrum.length
    if abs(grid.length - L) > 1e-12 * L:
        raise InvalidArgument(f"grid length {grid.length} does not match spectrum length {L}")
    if grid.size < 2 * spectrum.n_modes:
        raise InvalidArgument(
            f"grid of {grid.size} points too coarse for {spectrum.n_modes} modes")
    return _basis(L, spectrum.n_modes, grid.points.tobytes())


@lru_cache(maxsize=64)
def _basis(L, n_modes, points_bytes):
    pts = np.frombuffer(points_bytes)
    n = np.arange(1, n_modes + 1)[:, None]
    out = np.sqrt(2.0 / L) * np.sin(n * np.pi * pts[None, :] / L)
    out.setflags(write=False)
    return out


def synthesize(coeffs, grid: FieldGrid, spectrum: ModeSpectrum) -> np.ndarray:
    """Evaluate ``sum_n c_n phi_n`` on the grid; leading axes are batch axes."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != spectrum.n_modes:
        raise DimensionMismatch("coefficient count does not match spectrum")
    return coeffs @ basis_matrix(grid, spectrum)


def analyze(field, grid: FieldGrid, spectrum: ModeSpectrum) -> np.ndarray:
    """Quadrature projection of a grid field onto the retained modes."""
    field = np.asarray(field, dtype=float)
    if field.shape[-1] != grid.size:
        raise DimensionMismatch("field size does not match grid")
    return field @ (basis_matrix(grid, spectrum) * grid.weights).T
