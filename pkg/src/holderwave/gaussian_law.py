"""Law of the stochastic convolution and the operator Gamma_t = Q_t^{-1/2} e^{tA}.

Per mode with frequency mu and theta = mu t the covariance block in
normalized coordinates is

    q_yy = (2 theta - sin 2 theta) / (4 mu^3)
    q_yw = sin^2 theta / (2 mu^3)
    q_ww = (2 theta + sin 2 theta) / (4 mu^3)

with eigenvalues (theta +- |sin theta|) / (2 mu^3). Differences of the
form ``x - sin x`` are evaluated by their Taylor series near zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InvalidArgument, SingularityError
from .wave_group import group_apply
from .rng import RngStream, as_stream
from .spectral_core import ModeSpectrum, check_state, join, split

_SERIES_CUTOFF = 1.0


def x_minus_sin(x):
    """``x - sin(x)`` without cancellation for small ``|x|``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    term = xs * x2 / 6.0
    acc = term.copy()
    for k in range(2, 10):
        term = -term * x2 / ((2 * k) * (2 * k + 1))
        acc = acc + term
    return np.where(small, acc, x - np.sin(x))


def block_entries(mus, t):
    """Closed-form ``(q_yy, q_yw, q_ww, det, lam_big, lam_small)``, broadcast in ``mus, t``."""
    mus = np.asarray(mus, dtype=float)
    t = np.asarray(t, dtype=float)
    theta = mus * t
    mu3 = mus**3
    s = np.sin(theta)
    qyy = x_minus_sin(2 * theta) / (4 * mu3)
    qww = (2 * theta + np.sin(2 * theta)) / (4 * mu3)
    qyw = s * s / (2 * mu3)
    lam_big = (theta + np.abs(s)) / (2 * mu3)
    lam_small = np.where(s >= 0, x_minus_sin(theta), theta + s) / (2 * mu3)
    det = lam_big * lam_small
    return qyy, qyw, qww, det, lam_big, lam_small


@dataclass(frozen=True)
class ModeBlockCovariance:
    """Per-mode 2x2 blocks of Q_t together with their eigen-decompositions.

    ``angle`` is the orientation of the leading eigenvector; ``eigvals``
    holds ``(large, small)`` per mode.
    """

    t: float
    mus: np.ndarray
    qyy: np.ndarray
    qyw: np.ndarray
    qww: np.ndarray
    det: np.ndarray
    eigvals: np.ndarray
    angle: np.ndarray

    @property
    def n_modes(self) -> int:
        return int(self.mus.size)

    @property
    def blocks(self) -> np.ndarray:
        """Dense ``(n_modes, 2, 2)`` array."""
        return np.stack([np.stack([self.qyy, self.qyw], -1),
                         np.stack([self.qyw, self.qww], -1)], -2)

    @property
    def traces(self) -> np.ndarray:
        return self.qyy + self.qww

    def trace(self) -> float:
        return float(np.sum(self.traces))

    def dense(self) -> np.ndarray:
        """Full ``(2n, 2n)`` covariance matrix in interleaved ordering."""
        n = self.n_modes
        out = np.zeros((2 * n, 2 * n))
        for m in range(n):
            out[2 * m:2 * m + 2, 2 * m:2 * m + 2] = self.blocks[m]
        return out

    def chol(self) -> np.ndarray:
        """Lower Cholesky factors ``(n_modes, 2, 2)``; raises on indefinite blocks."""
        bad = np.flatnonzero((self.qyy < 0) | (self.qww < 0) | (self.det < 0))
        if bad.size:
            m = int(bad[0])
            raise DegeneracyError(f"covariance block of mode {m + 1} is not positive semi-definite",
                                  mode=m + 1)
        L = np.zeros((self.n_modes, 2, 2))
        a = self.qyy
        pos = a > 0
        ra = np.sqrt(a)
        L[:, 0, 0] = ra
        L[:, 1, 0] = np.where(pos, self.qyw / np.where(pos, ra, 1.0), 0.0)
        L[:, 1, 1] = np.where(pos, np.sqrt(self.det / np.where(pos, a, 1.0)), np.sqrt(self.qww))
        return L

    def floor(self, eps=None) -> np.ndarray:
        """Per-mode spectral floor; default ``1e-14 * trace(block)``."""
        if eps is None:
            return 1e-14 * self.traces
        eps = float(eps)
        if eps < 0:
            raise InvalidArgument("spectral floor must be non-negative")
        return np.full(self.n_modes, eps)

    def _eig_apply(self, v, power, eps):
        lam = self.eigvals
        fl = self.floor(eps)
        if eps is not None and float(eps) == 0.0 and np.any(lam < 1e-300):
            m = int(np.flatnonzero((lam < 1e-300).any(axis=-1))[0])
            raise SingularityError(f"Q_t block of mode {m + 1} is numerically singular")
        scale = np.maximum(lam, fl[:, None]) ** power
        c, s = np.cos(self.angle), np.sin(self.angle)
        y, w = split(v)
        p1 = (c * y + s * w) * scale[:, 0]
        p2 = (-s * y + c * w) * scale[:, 1]
        return join(c * p1 - s * p2, s * p1 + c * p2)

    def inv_sqrt_apply(self, v, eps=None) -> np.ndarray:
        return self._eig_apply(np.asarray(v, dtype=float), -0.5, eps)

    def sqrt_apply(self, v) -> np.ndarray:
        return self._eig_apply(np.asarray(v, dtype=float), 0.5, 0.0)

    def apply(self, v) -> np.ndarray:
        return self._eig_apply(np.asarray(v, dtype=float), 1.0, 0.0)


def covariance(spectrum: ModeSpectrum, t: float) -> ModeBlockCovariance:
    t = float(t)
    if not np.isfinite(t) or t <= 0:
        raise InvalidArgument(f"covariance requires t > 0, got {t}")
    qyy, qyw, qww, det, big, small = block_entries(spectrum.mus, t)
    angle = 0.5 * np.arctan2(2 * qyw, qyy - qww)
    return ModeBlockCovariance(t, spectrum.mus, qyy, qyw, qww, det,
                               np.stack([big, small], -1), angle)


def sample_convolution(cov: ModeBlockCovariance, rng_stream, size=()) -> np.ndarray:
    """Exact draws of N(0, Q_t) with shape ``(*size, 2 n_modes)``."""
    L = cov.chol()
    z = as_stream(rng_stream).normals(cov.n_modes, size, 2)
    draws = np.einsum("...mk,mjk->...mj", z, L)
    return draws.reshape(draws.shape[:-2] + (-1,))


def gamma_apply(cov: ModeBlockCovariance, spectrum: ModeSpectrum, x, eps=None) -> np.ndarray:
    """``Q_t^{-1/2} e^{tA} x`` with per-mode eigenvalue floor ``eps``."""
    x = check_state(x, spectrum)
    return cov.inv_sqrt_apply(group_apply(spectrum, cov.t, x), eps)


def cameron_martin_weight(cov: ModeBlockCovariance, spectrum: ModeSpectrum, k, y_sample,
                          eps=None) -> np.ndarray:
    """``<Gamma_t k, Q_t^{-1/2} y>`` for one direction and a batch of samples."""
    gk = gamma_apply(cov, spectrum, k, eps)
    y = check_state(y_sample, spectrum)
    return cov.inv_sqrt_apply(y, eps) @ gk


def increment_law(spectrum: ModeSpectrum, dt: float):
    """Joint law of one step ``(eta, dW)`` of the convolution and its driving noise.

    Returns ``(cov, cross)`` where ``cross[:, 0:2]`` is ``Cov(eta_y, dW)``,
    ``Cov(eta_w, dW)`` per mode; ``Var(dW) = dt``.
    """
    cov = covariance(spectrum, dt)
    mu = spectrum.mus
    theta = mu * dt
    cross = np.stack([2.0 * np.sin(theta / 2) ** 2, np.sin(theta)], -1) / mu[:, None] ** 2
    return cov, cross


def sample_increments(spectrum: ModeSpectrum, dt: float, stream: RngStream, shape=()):
    """Draw ``(eta, dW)`` jointly: eta ~ N(0, Q_dt) in H, dW ~ N(0, dt) per mode.

    ``eta`` has shape ``(*shape, 2n)`` and ``dW`` shape ``(*shape, n)``.
    """
    cov, cross = increment_law(spectrum, dt)
    z = stream.normals(spectrum.n_modes, shape, 3)
    dW = np.sqrt(dt) * z[..., 0]
    # conditional covariance of eta given dW
    syy = np.maximum(cov.qyy - cross[:, 0] ** 2 / dt, 0.0)
    syw = cov.qyw - cross[:, 0] * cross[:, 1] / dt
    sww = np.maximum(cov.qww - cross[:, 1] ** 2 / dt, 0.0)
    l11 = np.sqrt(syy)
    safe = l11 > 0
    l21 = np.where(safe, syw / np.where(safe, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(sww - l21**2, 0.0))
    ey = cross[:, 0] / dt * dW + l11 * z[..., 1]
    ew = cross[:, 1] / dt * dW + l21 * z[..., 1] + l22 * z[..., 2]
    return join(ey, ew), dW
