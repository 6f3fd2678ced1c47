"""Hölder drifts B(t, .): H -> U.

Nemytskii drifts act through the displacement only: the displacement is
synthesized on a physical grid, the scalar reaction ``b(tau, xi, y)`` is
applied pointwise, and the result is projected back onto the modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DimensionMismatch, InvalidArgument, UnsupportedModel
from .rng import RngStream
from .spectral_core import (WAVE1D, FieldGrid, ModeSpectrum, analyze, check_state, default_grid,
                       split, synthesize)

NEMYTSKII = "nemytskii"
CLOSED_FORM = "closed_form"
ZERO = "zero"


@dataclass(frozen=True)
class DriftSpec:
    """A bounded drift with declared Hölder data.

    For ``nemytskii`` drifts ``b(tau, xi, y)`` is vectorized: ``tau`` is a
    scalar or has a trailing singleton axis, ``xi`` is the grid and ``y``
    the synthesized displacement. For ``closed_form`` drifts
    ``fn(t, x, spectrum)`` returns U-coefficients for a batch of states.
    """

    kind: str
    alpha: float = 1.0
    bound: float = 0.0
    holder_const: float = 0.0
    b: Callable | None = None
    fn: Callable | None = None
    grid: FieldGrid | None = None
    grid_factor: int = 16
    name: str = ""
    params: dict = field(default_factory=dict)

    @property
    def holder_norm(self) -> float:
        """``sup |B| + [B]_alpha``, the quantity entering the horizon bound."""
        return self.bound + self.holder_const

    def evaluate(self, t, x, spectrum: ModeSpectrum) -> np.ndarray:
        return evaluate(self, t, x, spectrum)

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, "alpha": self.alpha, "bound": self.bound,
                "holder_const": self.holder_const, **self.params}


def evaluate(drift: DriftSpec, t, x, spectrum: ModeSpectrum) -> np.ndarray:
    """Evaluate ``B(t, x)`` for a state or batch of states; returns ``(..., n_modes)``."""
    x = check_state(x, spectrum)
    if drift.kind == ZERO:
        return np.zeros(x.shape[:-1] + (spectrum.n_modes,))
    if drift.kind == CLOSED_FORM:
        out = np.asarray(drift.fn(t, x, spectrum), dtype=float)
        return np.broadcast_to(out, x.shape[:-1] + (spectrum.n_modes,))
    if drift.kind == NEMYTSKII:
        if spectrum.model != WAVE1D:
            raise UnsupportedModel("Nemytskii drifts need a wave1d spectrum with a spatial grid")
        grid = drift.grid or default_grid(spectrum, drift.grid_factor)
        y = synthesize(split(x)[0], grid, spectrum)
        tau = np.asarray(t, dtype=float)
        if tau.ndim:
            tau = tau[..., None]
        values = drift.b(tau, grid.points, y)
        return analyze(np.broadcast_to(values, y.shape), grid, spectrum)
    raise InvalidArgument(f"unknown drift kind {drift.kind!r}")


# built-in drifts ----------------------------------------------------------

def zero_drift() -> DriftSpec:
    return DriftSpec(ZERO, alpha=1.0, bound=0.0, holder_const=0.0, name="zero")


def counterexample_b(xi, y, T_horizon):
    """Reaction term whose equation from zero data has the solutions 0 and tau^8 sin xi.

    The fourth root of ``sin(xi) y^3`` is the signed real root, and the
    saturated branch ``|y| >= 2 T^8`` carries the sign of ``y`` so that b is
    continuous; for ``y >= 0`` this is exactly the reaction term with
    indicator cut-offs.
    """
    T8 = float(T_horizon) ** 8
    y = np.asarray(y, dtype=float)
    m = np.minimum(np.abs(y), 2.0 * T8)
    s4 = np.maximum(np.sin(xi), 0.0) ** 0.25
    return np.sign(y) * (56.0 * s4 * m**0.75 + m)


def counterexample_drift(T_horizon: float, length: float = np.pi) -> DriftSpec:
    T = float(T_horizon)
    if not T > 0:
        raise InvalidArgument("counterexample horizon must be positive")
    alpha = 0.75
    sup_b = 56.0 * (8.0 * T**24) ** 0.25 + 2.0 * T**8
    scalar_holder = 56.0 * 2.0**0.25 + (4.0 * T**8) ** 0.25
    return DriftSpec(
        NEMYTSKII, alpha=alpha, bound=sup_b * np.sqrt(length),
        holder_const=scalar_holder * length ** ((1 - alpha) / 2),
        b=lambda tau, xi, y: counterexample_b(xi, y, T),
        name="counterexample", params={"T_horizon": T})


def bounded_sine_drift(c: float = 1.0, alpha: float = 0.9, length: float = np.pi) -> DriftSpec:
    """``b = c sin(y)``; Lipschitz, declared with Hölder exponent ``alpha``."""
    c = float(c)
    return DriftSpec(
        NEMYTSKII, alpha=alpha, bound=abs(c) * np.sqrt(length),
        holder_const=abs(c) * 2.0 ** (1 - alpha) * length ** ((1 - alpha) / 2),
        b=lambda tau, xi, y: c * np.sin(y),
        name="bounded_sine", params={"c": c})


def holder_power_drift(c: float = 1.0, alpha: float = 0.8, clip: float = 1.0,
                       length: float = np.pi) -> DriftSpec:
    """``b = c sign(y) min(|y|, clip)^alpha``."""
    c, alpha, clip = float(c), float(alpha), float(clip)
    if not 0 < alpha <= 1 or clip <= 0:
        raise InvalidArgument("holder_power needs 0 < alpha <= 1 and clip > 0")
    return DriftSpec(
        NEMYTSKII, alpha=alpha, bound=abs(c) * clip**alpha * np.sqrt(length),
        holder_const=abs(c) * 2.0 ** (1 - alpha) * length ** ((1 - alpha) / 2),
        b=lambda tau, xi, y: c * np.sign(y) * np.minimum(np.abs(y), clip) ** alpha,
        name="holder_power", params={"c": c, "clip": clip})


def constant_drift(values) -> DriftSpec:
    """Closed-form drift equal to a fixed U-vector."""
    c = np.array(values, dtype=float)
    c.setflags(write=False)

    def fn(t, x, spectrum):
        if c.size != spectrum.n_modes:
            raise DimensionMismatch("constant drift length does not match spectrum")
        return c

    return DriftSpec(CLOSED_FORM, alpha=1.0, bound=float(np.linalg.norm(c)), holder_const=0.0,
                     fn=fn, name="constant", params={"values": c.tolist()})


def closed_form_drift(fn, alpha=1.0, bound=np.inf, holder_const=np.inf, name="closed_form"):
    return DriftSpec(CLOSED_FORM, alpha=alpha, bound=bound, holder_const=holder_const, fn=fn,
                     name=name)


def nemytskii_drift(b, alpha=1.0, bound=np.inf, holder_const=np.inf, grid=None,
                    grid_factor=16, name="nemytskii"):
    return DriftSpec(NEMYTSKII, alpha=alpha, bound=bound, holder_const=holder_const, b=b,
                     grid=grid, grid_factor=grid_factor, name=name)


def drift_from_config(block: dict, spectrum: ModeSpectrum) -> DriftSpec:
    block = dict(block)
    name = block.pop("name", "zero")
    length = spectrum.param if spectrum.model == WAVE1D else np.pi
    if name == "zero":
        drift = zero_drift()
    elif name == "counterexample":
        drift = counterexample_drift(block.pop("T_horizon", 1.0), length)
    elif name == "bounded_sine":
        drift = bounded_sine_drift(block.pop("c", 1.0), block.pop("alpha", 0.9), length)
    elif name == "holder_power":
        drift = holder_power_drift(block.pop("c", 1.0), block.pop("alpha", 0.8),
                                   block.pop("clip", 1.0), length)
    elif name == "constant":
        drift = constant_drift(block.pop("values"))
    else:
        raise InvalidArgument(f"unknown drift {name!r}")
    if "grid_factor" in block:
        drift = replace(drift, grid_factor=int(block.pop("grid_factor")))
    if block:
        raise InvalidArgument(f"unused drift parameters: {sorted(block)}")
    return drift


# mollification ------------------------------------------------------------

def _bump(r2):
    inside = r2 < 1.0
    return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)


def mollifier_nodes(k: int, dim: int, n_quad: int = 8, n_pairs: int = 32, seed: int = 0):
    """Offsets and weights of a bump kernel of radius ``1/k`` in ``min(k, dim)`` coordinates.

    Product Gauss-Legendre for up to three coordinates, antithetic Monte
    Carlo beyond. Weights are positive and sum to one; the offset set is
    symmetric, so affine functions are reproduced exactly.
    """
    if int(k) != k or k < 1:
        raise InvalidArgument(f"mollification index must be a positive integer, got {k!r}")
    D = min(int(k), dim)
    radius = 1.0 / k
    if D <= 3:
        x, w = leggauss(n_quad)
        grids = np.meshgrid(*([x] * D), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], -1)
        wts = np.prod(np.meshgrid(*([w] * D), indexing="ij"), axis=0).ravel()
        wts = wts * _bump(np.sum(pts**2, -1))
    else:
        gen = RngStream(seed).generator("mollifier", k, D)
        g = gen.standard_normal((n_pairs, D))
        r = gen.random(n_pairs) ** (1.0 / D)
        half = g / np.linalg.norm(g, axis=1, keepdims=True) * r[:, None]
        pts = np.concatenate([half, -half])
        wts = _bump(np.sum(pts**2, -1))
    keep = wts > 0
    pts, wts = pts[keep] * radius, wts[keep]
    return pts, wts / wts.sum(), D


def mollify(drift: DriftSpec, k: int, spectrum: ModeSpectrum, n_quad: int = 8,
            n_pairs: int = 32, seed: int = 0) -> DriftSpec:
    """Smooth ``B`` by a bump kernel on the projection onto the first ``k`` coordinates."""
    offsets, weights, D = mollifier_nodes(k, spectrum.dim, n_quad, n_pairs, seed)

    def fn(t, x, sp):
        base = np.array(x, dtype=float)
        base[..., D:] = 0.0
        pts = base[..., None, :].repeat(offsets.shape[0], axis=-2)
        pts[..., :D] += offsets
        vals = evaluate(drift, np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t,
                        pts, sp)
        return np.einsum("...jm,j->...m", vals, weights)

    return DriftSpec(CLOSED_FORM, alpha=drift.alpha, bound=drift.bound,
                     holder_const=drift.holder_const, fn=fn, name=f"{drift.name}~{k}",
                     params={**drift.params, "mollify_k": int(k)})


# Hölder diagnostics -------------------------------------------------------

def holder_probe(drift: DriftSpec, spectrum: ModeSpectrum, n_pairs: int = 64,
                 scales=None, seed: int = 0, t: float = 0.0, base_radius=None) -> dict:
    """Estimate the Hölder exponent of ``B(t, .)`` by log-regression.

    For each scale ``s`` pairs ``(x, x + h)`` with ``|h| = s`` are drawn;
    base points have norm about ``s`` unless ``base_radius`` fixes it. The
    slope of the per-scale mean log-increment against ``log s`` is returned
    as ``alpha_hat``.
    """
    scales = np.logspace(-4, -1, 7) if scales is None else np.asarray(scales, dtype=float)
    gen = RngStream(seed).generator("holder_probe")
    dim = spectrum.dim
    logs = []
    for s in scales:
        g = gen.standard_normal((n_pairs, dim))
        h = gen.standard_normal((n_pairs, dim))
        h *= s / np.linalg.norm(h, axis=1, keepdims=True)
        radius = s if base_radius is None else float(base_radius)
        x = g * radius / np.sqrt(dim)
        dB = np.linalg.norm(evaluate(drift, t, x + h, spectrum) - evaluate(drift, t, x, spectrum),
                            axis=-1)
        logs.append(np.log(dB[dB > 0]).mean() if np.any(dB > 0) else -np.inf)
    logs = np.asarray(logs)
    if not np.all(np.isfinite(logs)):
        return {"alpha_hat": float("nan"), "const_hat": 0.0, "degenerate": True}
    slope, intercept = np.polyfit(np.log(scales), logs, 1)
    return {"alpha_hat": float(slope), "const_hat": float(np.exp(intercept)), "degenerate": False}
