"""Monte Carlo evaluation of the Ornstein-Uhlenbeck semigroup and its derivatives.

``R_t Phi(x) = E Phi(e^{tA} x + Y)`` with ``Y ~ N(0, Q_t)``. Derivatives use
the Cameron-Martin weight ``<Gamma_t k, Q_t^{-1/2} Y>``, which has mean zero;
``Phi(e^{tA} x)`` is subtracted inside every derivative estimator as a
control variate without introducing bias.

Samples are generated from a fixed stream per seed and rescaled by the
covariance factor of each ``t``, so sweeps over ``t`` and over directions
share common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument
from .gaussian_law import covariance, gamma_apply, sample_convolution
from .wave_group import apply_G, group_apply
from .rng import as_stream
from .spectral_core import ModeSpectrum, check_state, trace_lambda_inverse_tail


@dataclass(frozen=True)
class TestFunctional:
    """Bounded H-valued test function ``Phi``.

    ``direction`` selects the scalar ``s = <direction, x>`` a functional
    depends on and ``output`` the H-vector it is multiplied with.
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    direction: np.ndarray | None = None
    output: np.ndarray | None = None
    alpha: float = 1.0
    clip: float = np.inf
    index: int = 0
    value: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, value):
        return cls("constant", value=np.asarray(value, dtype=float))

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def coordinate(cls, mode: int, component: str = "y"):
        """``Phi(x) = x_i e_i`` for the coordinate ``(mode, component)``, mode 1-based."""
        if component not in ("y", "w") or mode < 1:
            raise InvalidArgument("coordinate needs mode >= 1 and component 'y' or 'w'")
        return cls("coordinate", index=2 * (mode - 1) + (component == "w"))

    @classmethod
    def bounded_sine(cls, frequency, output):
        """``Phi(x) = sin(<frequency, x>) output``."""
        return cls("bounded_sine", direction=np.asarray(frequency, dtype=float),
                   output=np.asarray(output, dtype=float))

    @classmethod
    def holder_power(cls, alpha, direction, output=None, clip=np.inf):
        """``Phi(x) = sign(s) min(|s|, clip)^alpha output`` with ``s = <direction, x>``.

        ``alpha = 0`` gives the sign (step) functional.
        """
        if not 0 <= alpha <= 1:
            raise InvalidArgument("holder_power needs 0 <= alpha <= 1")
        d = np.asarray(direction, dtype=float)
        e = d / np.linalg.norm(d) if output is None else np.asarray(output, dtype=float)
        return cls("holder_power", direction=d, output=e, alpha=float(alpha), clip=float(clip))

    @property
    def sup_norm(self) -> float:
        if self.kind == "constant":
            return float(np.linalg.norm(self.value))
        if self.kind == "bounded_sine":
            return float(np.linalg.norm(self.output))
        if self.kind == "holder_power":
            cap = 1.0 if self.alpha == 0 else self.clip**self.alpha
            return float(cap * np.linalg.norm(self.output))
        return float("inf")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(self.value, x.shape).copy()
        if self.kind == "identity":
            return x.copy()
        if self.kind == "coordinate":
            out = np.zeros_like(x)
            out[..., self.index] = x[..., self.index]
            return out
        s = x @ self.direction
        if self.kind == "bounded_sine":
            return np.sin(s)[..., None] * self.output
        if self.kind == "holder_power":
            mag = np.minimum(np.abs(s), self.clip)
            amp = np.sign(s) if self.alpha == 0 else np.sign(s) * mag**self.alpha
            return amp[..., None] * self.output
        raise InvalidArgument(f"unknown test functional {self.kind!r}")


class Estimate(NamedTuple):
    value: np.ndarray
    stderr: np.ndarray


def _samples(spectrum, t, n_mc, seed, label="semigroup"):
    if n_mc < 2:
        raise InvalidArgument("n_mc must be at least 2")
    cov = covariance(spectrum, t)
    return cov, sample_convolution(cov, as_stream(seed).spawn(label), int(n_mc))


def _mean_se(samples):
    n = samples.shape[0]
    return Estimate(samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(n))


def semigroup_value(spectrum: ModeSpectrum, phi: TestFunctional, t: float, x, n_mc: int,
                    seed) -> Estimate:
    x = check_state(x, spectrum)
    _, y = _samples(spectrum, t, n_mc, seed)
    return _mean_se(phi(group_apply(spectrum, t, x) + y))


def derivative_cm_many(spectrum: ModeSpectrum, phi: TestFunctional, t: float, x, ks, n_mc: int,
                       seed, eps=None, second=None) -> Estimate:
    """Derivatives along each row of ``ks`` from one shared sample set.

    With ``second`` (an H-direction ``h``) the estimator uses the second-order
    weight ``<Gamma k, Q^{-1/2}y><Gamma h, Q^{-1/2}y> - <Gamma k, Gamma h>``.
    Returns values and standard errors of shape ``(len(ks), 2n)``.
    """
    x = check_state(x, spectrum)
    ks = np.atleast_2d(check_state(ks, spectrum))
    cov, y = _samples(spectrum, t, n_mc, seed)
    base = group_apply(spectrum, t, x)
    f = phi(base + y) - phi(base)
    qy = cov.inv_sqrt_apply(y, eps)
    gk = gamma_apply(cov, spectrum, ks, eps)
    weights = qy @ gk.T
    if second is not None:
        gh = gamma_apply(cov, spectrum, check_state(second, spectrum), eps)
        weights = weights * (qy @ gh)[:, None] - gk @ gh
    n = weights.shape[0]
    mean = weights.T @ f / n
    second_moment = (weights**2).T @ (f**2) / n
    var = np.maximum(second_moment - mean**2, 0.0) * n / (n - 1)
    return Estimate(mean, np.sqrt(var / n))


def derivative_cm(spectrum: ModeSpectrum, phi: TestFunctional, t: float, x, k, n_mc: int, seed,
                  eps=None) -> Estimate:
    """Directional derivative ``nabla_k R_t Phi(x)`` by the Cameron-Martin formula."""
    est = derivative_cm_many(spectrum, phi, t, x, np.asarray(k)[None], n_mc, seed, eps)
    return Estimate(est.value[0], est.stderr[0])


def derivative2_cm(spectrum: ModeSpectrum, phi: TestFunctional, t: float, x, k, xi, n_mc: int,
                   seed, eps=None) -> Estimate:
    """Second derivative ``nabla^2 R_t Phi(x)(k, G xi)``."""
    h = apply_G(spectrum, xi)
    est = derivative_cm_many(spectrum, phi, t, x, np.asarray(k)[None], n_mc, seed, eps, second=h)
    return Estimate(est.value[0], est.stderr[0])


def gradG_hs_norm(spectrum: ModeSpectrum, phi: TestFunctional, t: float, x, n_mc: int, seed,
                  eps=None) -> float:
    """Hilbert-Schmidt norm of ``xi -> nabla_{G xi} R_t Phi(x)`` over the retained U-basis."""
    ks = apply_G(spectrum, np.eye(spectrum.n_modes))
    est = derivative_cm_many(spectrum, phi, t, x, ks, n_mc, seed, eps)
    return float(np.sqrt(np.sum(est.value**2)))


def hs_tail_bound(spectrum: ModeSpectrum, t: float, sup_norm: float, c: float = 1.0) -> float:
    """``(c / sqrt(t)) sup|Phi| sqrt(sum_{n > N} 1/lambda_n)`` for the discarded directions."""
    return c / np.sqrt(t) * sup_norm * np.sqrt(trace_lambda_inverse_tail(spectrum))


class Fit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def scaling_fit(ts, values) -> Fit:
    """Least-squares line through ``(log t, log value)``."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.shape != values.shape or ts.size < 3:
        raise InvalidArgument("scaling_fit needs at least three matching points")
    if np.any(~(ts > 0)) or np.any(~(values > 0)):
        raise InvalidArgument("scaling_fit needs positive inputs")
    lx, ly = np.log(ts), np.log(values)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return Fit(float(slope), float(intercept), float(r2))


def derivative_sweep(spectrum: ModeSpectrum, phi: TestFunctional, ts, x, k, n_mc: int, seed,
                     eps=None, second=None):
    """Norms of the (second) directional derivative over ``ts`` with common random numbers.

    Returns ``(norms, stderrs)`` where the standard error of the norm is the
    root-sum-square of the componentwise errors.
    """
    norms, ses = [], []
    for t in ts:
        if second is None:
            est = derivative_cm(spectrum, phi, t, x, k, n_mc, seed, eps)
        else:
            est = derivative2_cm(spectrum, phi, t, x, k, second, n_mc, seed, eps)
        norms.append(float(np.linalg.norm(est.value)))
        ses.append(float(np.linalg.norm(est.stderr)))
    return np.asarray(norms), np.asarray(ses)
