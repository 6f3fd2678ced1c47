"""Explicit null controls, steering, and minimal control energy.

For a state ``k = G a`` the control ``u = psi_2 + psi_1'`` built from
``psi(t) = -phi(t) e^{tA} k`` steers ``k`` to zero at time T, where ``phi``
is the normalized bump ``t^2 (T - t)^2 / (T^5 / 30)``. Per mode

    u_n(t) = -a_n (phi'(t) sin(mu t) / mu + 2 phi(t) cos(mu t)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import HorizonMismatch, InvalidArgument
from .gaussian_law import covariance, gamma_apply
from .wave_group import group_apply
from .spectral_core import ModeSpectrum, check_state, join


@lru_cache(maxsize=32)
def _gauss_legendre(order: int):
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _nodes(T, order):
    x, w = _gauss_legendre(int(order))
    return 0.5 * T * (x + 1.0), 0.5 * T * w


def bump_phi(t, T):
    """Normalized bump with unit integral on ``[0, T]``."""
    T = float(T)
    if not T > 0:
        raise InvalidArgument("horizon must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > T):
        raise InvalidArgument("bump_phi evaluated outside [0, T]")
    return 30.0 * t**2 * (T - t) ** 2 / T**5


def bump_phi_prime(t, T):
    T = float(T)
    t = np.asarray(t, dtype=float)
    return 60.0 * t * (T - t) * (T - 2.0 * t) / T**5


@dataclass(frozen=True)
class ControlSignal:
    """A control ``u: [0, T] -> U`` with an exact evaluator.

    ``mus`` bounds the oscillation frequencies present in ``u`` and drives
    the quadrature order.
    """

    T: float
    evaluate: Callable
    mus: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __call__(self, t) -> np.ndarray:
        return self.evaluate(np.asarray(t, dtype=float))

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        if not np.isclose(self.T, other.T, rtol=1e-15, atol=0):
            raise HorizonMismatch("controls with different horizons cannot be added")
        f, g = self.evaluate, other.evaluate
        return ControlSignal(self.T, lambda t: f(t) + g(t), np.maximum(self.mus, other.mus),
                             {"kind": "sum", "terms": [self.descriptor, other.descriptor]})

    def samples(self, n_nodes: int = 101):
        t = np.linspace(0.0, self.T, n_nodes)
        return t, self(t)

    def quad_order(self, minimum: int = 16) -> int:
        return max(int(minimum), int(np.ceil(8.0 * float(np.max(self.mus)) * self.T)))


def null_control(spectrum: ModeSpectrum, T: float, a) -> ControlSignal:
    a = np.asarray(a, dtype=float)
    if a.shape != (spectrum.n_modes,):
        raise InvalidArgument("amplitude vector does not match spectrum")
    T = float(T)
    bump_phi(0.0, T)
    mu = spectrum.mus

    def u(t):
        tt = np.asarray(t, dtype=float)[..., None]
        phi = 30.0 * tt**2 * (T - tt) ** 2 / T**5
        dphi = 60.0 * tt * (T - tt) * (T - 2.0 * tt) / T**5
        return -a * (dphi * np.sin(mu * tt) / mu + 2.0 * phi * np.cos(mu * tt))

    return ControlSignal(T, u, mu.copy(), {"kind": "null", "amplitudes": a.tolist(),
                                           "mus": mu.tolist()})


def constant_control(spectrum: ModeSpectrum, T: float, c) -> ControlSignal:
    c = np.asarray(c, dtype=float)
    n = spectrum.n_modes
    return ControlSignal(float(T), lambda t: np.broadcast_to(c, np.shape(t) + (n,)).copy(),
                         np.zeros(n), {"kind": "constant", "value": c.tolist()})


def steer(spectrum: ModeSpectrum, T: float, x0, control: ControlSignal, n_quad=None) -> np.ndarray:
    """Terminal state ``e^{TA} x0 + int_0^T e^{(T-s)A} G u(s) ds`` by Gauss-Legendre.

    The order is ``max(16, ceil(8 mu_max T))`` unless ``n_quad`` is larger.
    """
    x0 = check_state(x0, spectrum)
    if not np.isclose(control.T, T, rtol=1e-12, atol=0):
        raise HorizonMismatch(f"control horizon {control.T} differs from T={T}")
    order = control.quad_order(16 if n_quad is None else n_quad)
    order = max(order, int(np.ceil(8.0 * float(spectrum.mus.max()) * T)))
    s, w = _nodes(T, order)
    u = control(s)  # (order, n)
    mu = spectrum.mus
    arg = mu * (T - s)[:, None]
    # e^{rA} (0, u/mu) = (sin(mu r) u/mu, cos(mu r) u/mu)
    iy = w @ (np.sin(arg) * u / mu)
    iw = w @ (np.cos(arg) * u / mu)
    return group_apply(spectrum, T, x0) + join(iy, iw)


def control_energy(control: ControlSignal, n_quad=None) -> float:
    """``(int_0^T |u(s)|^2 ds)^{1/2}``."""
    s, w = _nodes(control.T, control.quad_order(16 if n_quad is None else n_quad))
    return float(np.sqrt(w @ np.sum(control(s) ** 2, axis=-1)))


def minimal_energy(spectrum: ModeSpectrum, t: float, h, eps=None) -> float:
    """Minimal energy ``|Q_t^{-1/2} e^{tA} h|`` of a control steering ``h`` to zero."""
    return float(np.linalg.norm(gamma_apply(covariance(spectrum, t), spectrum, h, eps)))
