"""The wave group e^{tA}, its generator and the noise channel G."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .spectral_core import ModeSpectrum, check_state, join, split


def rotation(spectrum: ModeSpectrum, t):
    """Return ``(cos(mu t), sin(mu t))`` broadcast as ``(..., n_modes)``."""
    theta = np.asarray(t, dtype=float)[..., None] * spectrum.mus
    return np.cos(theta), np.sin(theta)


def group_apply(spectrum: ModeSpectrum, t, x) -> np.ndarray:
    """Apply ``e^{tA}`` to a state or batch of states.

    ``t`` may be a scalar or an array broadcastable against the batch shape
    of ``x``. Negative times are allowed since A generates a group.
    """
    x = check_state(x, spectrum)
    c, s = rotation(spectrum, t)
    y, w = split(x)
    return join(c * y + s * w, -s * y + c * w)


def generator_apply(spectrum: ModeSpectrum, x) -> np.ndarray:
    x = check_state(x, spectrum)
    y, w = split(x)
    mu = spectrum.mus
    return join(mu * w, -mu * y)


def apply_G(spectrum: ModeSpectrum, a) -> np.ndarray:
    """Embed a U-direction into H: velocity slot with raw value ``a``."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1:] != (spectrum.n_modes,):
        raise DimensionMismatch(f"expected {spectrum.n_modes} U-coefficients, got {a.shape}")
    return join(np.zeros_like(a), a / spectrum.mus)


def apply_G_adjoint(spectrum: ModeSpectrum, h) -> np.ndarray:
    h = check_state(h, spectrum)
    return split(h)[1] / spectrum.mus


def G_matrix(spectrum: ModeSpectrum) -> np.ndarray:
    """Dense ``(2n, n)`` matrix of G in normalized coordinates."""
    return apply_G(spectrum, np.eye(spectrum.n_modes)).T
