"""Picard solver for the auxiliary function v and the identities it satisfies.

v solves

    v(t, x) = int_t^T R_{s-t}[ e^{-(s-t)A} (G B(s, .) + nabla^G v(s, .) B(s, .)) ](x) ds,
    v(T, .) = 0,

on a truncation with ``d`` modes (H has dimension ``D = 2d``). v is stored on
a tensor grid over ``[-M, M]^D`` at uniform time nodes and interpolated
multilinearly in space and linearly in time; gradients come from the
interpolant. Gaussian expectations use tensor Gauss-Hermite rules in the
eigenbasis of each covariance block, and the time integral uses composite
Gauss-Legendre with the substitution ``s = t + u^2`` on the first panel,
which absorbs the ``(s - t)^{-1/2}`` growth of derivative weights.
"""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .drift_models import DriftSpec, evaluate, zero_drift
from .errors import DivergenceError, DomainEscape, InfeasibleError, InvalidArgument
from .gaussian_law import covariance
from .wave_group import G_matrix, apply_G, group_apply
from .mild_integrator import NoisePanel, TimeGrid, draw_noise_panel, simulate
from .spectral_core import ModeSpectrum, build_spectrum, check_state


class DomainEscapeWarning(UserWarning):
    pass


@dataclass
class VField:
    """Grid representation of ``v`` on ``times x [-M, M]^D``.

    ``values`` has shape ``(n_time, n_space, ..., n_space, D)``. The
    ``clamped`` counter records evaluations that fell outside the box and
    were clamped onto it.
    """

    spectrum: ModeSpectrum
    times: np.ndarray
    axis: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    clamped: int = 0

    @property
    def D(self) -> int:
        return self.spectrum.dim

    @property
    def M(self) -> float:
        return float(self.axis[-1])

    @property
    def h(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def n_space(self) -> int:
        return int(self.axis.size)

    def nodes(self) -> np.ndarray:
        """Space nodes in C order, shape ``(n_space**D, D)``."""
        mesh = np.meshgrid(*([self.axis] * self.D), indexing="ij")
        return np.stack([m.ravel() for m in mesh], -1)

    def cell_centers(self) -> np.ndarray:
        mid = 0.5 * (self.axis[1:] + self.axis[:-1])
        mesh = np.meshgrid(*([mid] * self.D), indexing="ij")
        return np.stack([m.ravel() for m in mesh], -1)

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.times.size, -1, self.D)

    def with_values(self, values) -> "VField":
        return VField(self.spectrum, self.times, self.axis, values, dict(self.metadata))

    # interpolation ------------------------------------------------------

    def _time_weights(self, t):
        t = np.asarray(t, dtype=float)
        times = self.times
        tc = np.clip(t, times[0], times[-1])
        it = np.clip(np.searchsorted(times, tc, side="right") - 1, 0, times.size - 2)
        ft = (tc - times[it]) / (times[it + 1] - times[it])
        return it, ft

    def _space_weights(self, x):
        M, h, n = self.M, self.h, self.n_space
        outside = np.any(np.abs(x) > M * (1 + 1e-12), axis=-1)
        count = int(np.count_nonzero(outside))
        if count:
            self.clamped += count
        u = (np.clip(x, -M, M) + M) / h
        idx = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        frac = u - idx
        return idx, frac

    def _corners(self, x):
        """Yield ``(flat_index, weight, weight_gradient)`` for each cell corner."""
        idx, frac = self._space_weights(x)
        D, n, h = self.D, self.n_space, self.h
        strides = n ** np.arange(D - 1, -1, -1)
        base = idx @ strides
        lo = [1.0 - frac[..., j] for j in range(D)]
        hi = [frac[..., j] for j in range(D)]
        for bits in itertools.product((0, 1), repeat=D):
            factors = [hi[j] if b else lo[j] for j, b in enumerate(bits)]
            w = factors[0].copy()
            for f in factors[1:]:
                w *= f
            grad = np.empty(frac.shape)
            for k in range(D):
                g = np.full(frac.shape[:-1], (1.0 if bits[k] else -1.0) / h)
                for j in range(D):
                    if j != k:
                        g *= factors[j]
                grad[..., k] = g
            yield base + int(np.dot(bits, strides)), w, grad

    def _slicer(self, t, x_shape):
        """Function mapping flat node indices to time-interpolated values."""
        V = self.flat()
        if np.ndim(t) == 0:
            it, ft = self._time_weights(t)
            Vt = (1 - ft) * V[int(it)] + ft * V[int(it) + 1]
            return lambda flat: Vt[flat]
        it, ft = self._time_weights(t)
        it = np.broadcast_to(it, x_shape[:-1])
        ft = np.broadcast_to(ft, x_shape[:-1])[..., None]
        return lambda flat: (1 - ft) * V[it, flat] + ft * V[it + 1, flat]

    def value(self, t, x) -> np.ndarray:
        x = check_state(x, self.spectrum)
        at = self._slicer(t, x.shape)
        out = np.zeros(x.shape)
        for flat, w, _ in self._corners(x):
            out += w[..., None] * at(flat)
        return out

    def grad(self, t, x) -> np.ndarray:
        """Jacobian ``J[..., i, j] = d v_i / d x_j``."""
        x = check_state(x, self.spectrum)
        at = self._slicer(t, x.shape)
        out = np.zeros(x.shape + (self.D,))
        for flat, _, g in self._corners(x):
            out += at(flat)[..., :, None] * g[..., None, :]
        return out

    def grad_G(self, t, x) -> np.ndarray:
        """``nabla^G v`` as a ``(..., D, d)`` array."""
        return self.grad(t, x) @ G_matrix(self.spectrum)

    def directional(self, t, x, direction) -> np.ndarray:
        """``nabla v(t, x) direction`` without forming the Jacobian."""
        x = check_state(x, self.spectrum)
        at = self._slicer(t, x.shape)
        out = np.zeros(x.shape)
        for flat, _, g in self._corners(x):
            out += np.einsum("...k,...k->...", g, direction)[..., None] * at(flat)
        return out

    def sup_grad_norm(self) -> float:
        """Max operator norm of ``nabla v`` over time nodes and cell centres."""
        centers = self.cell_centers()
        best = 0.0
        for t in self.times:
            J = self.grad(t, centers)
            best = max(best, float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1)))))
        return best

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=-1)))

    # serialization ------------------------------------------------------

    def save(self, prefix) -> tuple[Path, Path]:
        """Write ``<prefix>.json`` (header) and ``<prefix>.csv`` (values)."""
        prefix = Path(prefix)
        header = {"spectrum": {"model": self.spectrum.model, "param": self.spectrum.param,
                               "lambdas": self.spectrum.lambdas.tolist()},
                  "times": self.times.tolist(), "axis": self.axis.tolist(),
                  "shape": list(self.values.shape), "metadata": self.metadata}
        jpath, cpath = prefix.with_suffix(".json"), prefix.with_suffix(".csv")
        jpath.write_text(json.dumps(header, indent=2, sort_keys=True))
        nodes = self.nodes()
        with open(cpath, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t"] + [f"x{j}" for j in range(self.D)] + [f"v{j}" for j in range(self.D)])
            for i, t in enumerate(self.times):
                for node, val in zip(nodes, self.flat()[i]):
                    wr.writerow([repr(float(t))] + [repr(float(a)) for a in node]
                                + [repr(float(a)) for a in val])
        return jpath, cpath

    @classmethod
    def load(cls, prefix) -> "VField":
        prefix = Path(prefix)
        header = json.loads(prefix.with_suffix(".json").read_text())
        sp = header["spectrum"]
        spectrum = build_spectrum("custom", values=sp["lambdas"])
        spectrum = ModeSpectrum(sp["model"], sp["param"], spectrum.lambdas)
        D = spectrum.dim
        data = np.loadtxt(prefix.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        values = data[:, 1 + D:].reshape(header["shape"])
        return cls(spectrum, np.asarray(header["times"]), np.asarray(header["axis"]), values,
                   header["metadata"])


@dataclass(frozen=True)
class QuadratureRule:
    """Per-mode Gauss-Hermite order and Gauss-Legendre time rule."""

    gh_order: int = 6
    gl_order: int = 6
    n_panels: int = 2

    def gaussian_nodes(self, cov, d):
        """Nodes ``z`` of N(0, Q) in H, weights, and whitened nodes ``Q^{-1/2} z``."""
        x, w = hermgauss(self.gh_order)
        x = np.sqrt(2.0) * x
        w = w / np.sqrt(np.pi)
        g1, g2 = np.meshgrid(x, x, indexing="ij")
        pair = np.stack([g1.ravel(), g2.ravel()], -1)  # standard normal pairs
        pw = np.outer(w, w).ravel()
        per_mode = []
        for m in range(d):
            lam = cov.eigvals[m]
            c, s = np.cos(cov.angle[m]), np.sin(cov.angle[m])
            V = np.array([[c, -s], [s, c]])
            z = (pair * np.sqrt(lam)) @ V.T
            white = pair @ V.T
            per_mode.append((z, white))
        q = pair.shape[0]
        grids = np.meshgrid(*([np.arange(q)] * d), indexing="ij")
        combos = np.stack([g.ravel() for g in grids], -1)
        nodes = np.concatenate([per_mode[m][0][combos[:, m]] for m in range(d)], axis=-1)
        white = np.concatenate([per_mode[m][1][combos[:, m]] for m in range(d)], axis=-1)
        weights = np.prod(pw[combos], axis=-1)
        return nodes, weights / weights.sum(), white

    def time_nodes(self, t, T):
        """Nodes and weights on ``[t, T]``; first panel mapped by ``s = t + u^2``."""
        x, w = leggauss(self.gl_order)
        length = (T - t) / self.n_panels
        root = np.sqrt(length)
        u = 0.5 * root * (x + 1)
        s = [t + u**2]
        ws = [0.5 * root * w * 2 * u]
        for p in range(1, self.n_panels):
            a = t + p * length
            s.append(a + 0.5 * length * (x + 1))
            ws.append(0.5 * length * w)
        return np.concatenate(s), np.concatenate(ws)


def default_box(spectrum: ModeSpectrum, T: float, x0=None) -> float:
    x0n = 0.0 if x0 is None else float(np.linalg.norm(x0))
    return 4.0 * np.sqrt(covariance(spectrum, T).trace()) + x0n


class PicardOperator:
    """The affine map ``v_in -> v_out`` on fixed grids.

    Drift values at every quadrature point are computed once; each
    application only re-evaluates the interpolated gradient of ``v_in``.
    """

    def __init__(self, spectrum: ModeSpectrum, drift: DriftSpec, T: float, n_time: int,
                 n_space: int, quad: QuadratureRule | None = None, M: float | None = None,
                 x0=None, escape_tol: float = 0.01):
        if spectrum.n_modes > 3:
            raise InvalidArgument("the grid solver supports at most 3 modes")
        if n_time < 2 or n_space < 2:
            raise InvalidArgument("grids need at least two nodes per axis")
        self.spectrum = spectrum
        self.drift = drift
        self.T = float(T)
        self.quad = quad or QuadratureRule()
        self.M = default_box(spectrum, T, x0) if M is None else float(M)
        self.times = np.linspace(0.0, self.T, n_time)
        self.axis = np.linspace(-self.M, self.M, n_space)
        template = VField(spectrum, self.times, self.axis,
                          np.zeros((n_time,) + (n_space,) * spectrum.dim + (spectrum.dim,)))
        self.grid_nodes = template.nodes()
        self.batches = []  # (i, s, r, weight, z, white, B)
        d = spectrum.n_modes
        trusted = np.linalg.norm(self.grid_nodes, axis=-1) <= 0.5 * self.M
        escaped_mass, inner_mass, total_mass, escaped_points = 0.0, 0.0, 0.0, 0
        for i, t in enumerate(self.times[:-1]):
            s_nodes, s_w = self.quad.time_nodes(t, self.T)
            for s, w in zip(s_nodes, s_w):
                r = s - t
                cov = covariance(spectrum, r)
                z, qw, white = self.quad.gaussian_nodes(cov, d)
                P = group_apply(spectrum, r, self.grid_nodes)[:, None, :] + z[None]
                out = np.any(np.abs(P) > self.M, axis=-1)
                escaped_points += int(np.count_nonzero(out))
                escaped_mass += float(np.sum(out * qw))
                inner_mass += float(np.sum(out[trusted] * qw))
                total_mass += 1.0
                B = evaluate(drift, s, P.reshape(-1, spectrum.dim), spectrum)
                self.batches.append((i, s, r, w, z, qw, white, B.reshape(P.shape[:-1] + (d,))))
        n_nodes = self.grid_nodes.shape[0]
        self.escape_stats = {
            "escaped_points": escaped_points,
            "escaped_mass_fraction": escaped_mass / max(total_mass * n_nodes, 1.0),
            "trusted_mass_fraction": inner_mass / max(total_mass * int(trusted.sum()), 1.0),
            "box_half_width": float(self.M)}
        if self.escape_stats["trusted_mass_fraction"] > escape_tol:
            raise DomainEscape("quadrature mass leaving the box from the trusted region "
                               "|x| <= M/2 exceeds tolerance; enlarge M", self.escape_stats)
        if escaped_points:
            warnings.warn(f"{escaped_points} quadrature points clamped onto the box "
                          f"(mass fraction {self.escape_stats['escaped_mass_fraction']:.3g})",
                          DomainEscapeWarning, stacklevel=2)
        # contribution of G B, independent of v_in
        self.constant = np.zeros((n_time, self.grid_nodes.shape[0], spectrum.dim))
        for i, s, r, w, z, qw, white, B in self.batches:
            gb = apply_G(spectrum, B)
            mean = np.einsum("pqj,q->pj", gb, qw)
            self.constant[i] += w * group_apply(spectrum, -r, mean)

    def empty_field(self, metadata=None) -> VField:
        shape = (self.times.size,) + (self.axis.size,) * self.spectrum.dim + (self.spectrum.dim,)
        return VField(self.spectrum, self.times, self.axis, np.zeros(shape), dict(metadata or {}))

    def apply(self, v_in: VField) -> VField:
        out = self.constant.copy()
        sp = self.spectrum
        for i, s, r, w, z, qw, white, B in self.batches:
            P = group_apply(sp, r, self.grid_nodes)[:, None, :] + z[None]
            gb = apply_G(sp, B)
            dd = v_in.directional(s, P, gb)
            mean = np.einsum("pqj,q->pj", dd, qw)
            out[i] += w * group_apply(sp, -r, mean)
        out[-1] = 0.0
        v_out = v_in.with_values(out.reshape(v_in.values.shape))
        v_out.clamped = v_in.clamped
        return v_out

    def gradient_cm(self, v: VField, t_index: int, x) -> np.ndarray:
        """``nabla^G v(t_i, x)`` from the Cameron-Martin form of the fixed-point integrand.

        Returns ``(..., D, d)``; requires fresh drift evaluations at ``x``.
        """
        sp = self.spectrum
        x = check_state(x, sp)
        t = self.times[t_index]
        out = np.zeros(x.shape + (sp.n_modes,))
        if t_index == self.times.size - 1:
            return out
        s_nodes, s_w = self.quad.time_nodes(t, self.T)
        Ge = apply_G(sp, np.eye(sp.n_modes))  # (d, D)
        for s, w in zip(s_nodes, s_w):
            r = s - t
            cov = covariance(sp, r)
            z, qw, white = self.quad.gaussian_nodes(cov, sp.n_modes)
            P = group_apply(sp, r, x)[..., None, :] + z
            B = evaluate(self.drift, s, P, sp)
            gb = apply_G(sp, B)
            F = gb + v.directional(s, P, gb)
            gam = cov.inv_sqrt_apply(group_apply(sp, r, Ge))  # (d, D)
            cm = white @ gam.T  # (Q, d)
            mean = np.einsum("...qi,qm,q->...im", F, cm, qw)
            # transport each column by e^{-rA}
            mean = np.swapaxes(group_apply(sp, -r, np.swapaxes(mean, -1, -2)), -1, -2)
            out += w * mean
        return out


def picard_step(spectrum_d: ModeSpectrum, drift: DriftSpec, v_in: VField,
                quad: QuadratureRule | None = None, T: float | None = None) -> VField:
    """One application of the fixed-point map on the grids of ``v_in``."""
    T = float(v_in.times[-1]) if T is None else float(T)
    op = PicardOperator(spectrum_d, drift, T, v_in.times.size, v_in.n_space, quad, M=v_in.M)
    return op.apply(v_in)


@dataclass
class SolveResult:
    field: VField
    diffs: list
    grad_diffs: list
    weighted_diffs: list
    ratios: list
    iterations: int
    operator: PicardOperator


def _grad_G_nodes(v: VField) -> np.ndarray:
    centers = v.cell_centers()
    return np.stack([v.grad_G(t, centers) for t in v.times])


def random_field(op: PicardOperator, amplitude: float, seed: int) -> VField:
    """Smooth bounded initial field ``amplitude * sin(<k, x> + phase)`` per component."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7])))
    D = op.spectrum.dim
    freq = gen.standard_normal((D, D)) / op.M
    phase = gen.uniform(0, 2 * np.pi, D)
    v = op.empty_field()
    vals = amplitude * np.sin(op.grid_nodes @ freq.T + phase)
    tt = (op.T - op.times) / op.T
    v.values[...] = (tt[:, None, None] * vals[None]).reshape(v.values.shape)
    return v


def solve_v(spectrum_d: ModeSpectrum, drift: DriftSpec, T: float, n_time: int = 17,
            n_space: int = 33, quad: QuadratureRule | None = None, tol: float = 1e-9,
            max_iter: int = 60, v0: VField | None = None, beta: float = 1.0,
            operator: PicardOperator | None = None, M: float | None = None,
            x0=None) -> SolveResult:
    """Iterate the Picard map until value and ``nabla^G`` differences drop below ``tol``."""
    if drift.alpha <= 2.0 / 3.0:
        warnings.warn("drift Hölder exponent <= 2/3; the fixed-point theory does not apply",
                      stacklevel=2)
    op = operator or PicardOperator(spectrum_d, drift, T, n_time, n_space, quad, M=M, x0=x0)
    meta = {"alpha": drift.alpha, "B_alpha_norm": drift.holder_norm, "beta": beta,
            "T": op.T, "box_half_width": op.M, "escape": op.escape_stats}
    v = v0 if v0 is not None else op.empty_field(meta)
    v.metadata.update(meta)
    diffs, gdiffs, wdiffs, ratios = [], [], [], []
    gG = _grad_G_nodes(v)
    weight = np.exp(beta * op.times)
    for it in range(1, max_iter + 1):
        v_new = op.apply(v)
        delta = v_new.values - v.values
        per_t = np.max(np.abs(delta.reshape(op.times.size, -1)), axis=1)
        gG_new = _grad_G_nodes(v_new)
        diffs.append(float(per_t.max()))
        gdiffs.append(float(np.max(np.abs(gG_new - gG))))
        wdiffs.append(float(np.max(weight * per_t)))
        if len(diffs) > 1 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        v, gG = v_new, gG_new
        if diffs[-1] < tol and gdiffs[-1] < tol:
            v.metadata.update({"iterations": it, "ratios": ratios})
            return SolveResult(v, diffs, gdiffs, wdiffs, ratios, it, op)
    raise DivergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} steps", ratios)


# horizon selection ---------------------------------------------------------

def _h_exponent(alpha):
    if not alpha > 2.0 / 3.0:
        raise InfeasibleError(f"alpha={alpha} <= 2/3: the horizon integral diverges")
    if alpha > 1:
        raise InvalidArgument("alpha must not exceed 1")
    return (3.0 * alpha - 2.0) / 2.0


def h_function(r, alpha, c):
    """``h(r) = int_0^r c s^{-(4 - 3 alpha)/2} ds``."""
    p = _h_exponent(alpha)
    return c * np.asarray(r, dtype=float) ** p / p


def horizon_bound(alpha: float, B_alpha_norm: float, c_calibrated: float, T: float) -> float:
    """Smallest ``S`` in ``[0, T]`` with ``h(T - S) * B_alpha_norm <= 1/4``.

    ``T - S`` is then the longest horizon on which the contraction
    condition holds.
    """
    p = _h_exponent(alpha)
    if c_calibrated <= 0 or B_alpha_norm <= 0:
        raise InvalidArgument("calibration constant and drift norm must be positive")
    r_star = (0.25 * p / (c_calibrated * B_alpha_norm)) ** (1.0 / p)
    return max(0.0, float(T) - r_star)


def calibrate_h_constant(spectrum_d: ModeSpectrum, drift: DriftSpec, T0: float,
                         n_time: int = 9, n_space: int = 25,
                         quad: QuadratureRule | None = None) -> dict:
    """Fit ``c`` in ``h`` from the gradient produced by one Picard step from zero.

    On horizon ``T0``, ``g1 = sup |nabla v_1|`` is matched to
    ``h(T0) * |B|_alpha``.
    """
    op = PicardOperator(spectrum_d, drift, T0, n_time, n_space, quad)
    v1 = op.apply(op.empty_field())
    g1 = v1.sup_grad_norm()
    p = _h_exponent(drift.alpha)
    c = g1 / (T0**p / p * drift.holder_norm)
    return {"c": float(c), "g1": float(g1), "T0": float(T0)}


def self_consistent_horizon(spectrum_d: ModeSpectrum, drift: DriftSpec, T: float,
                            n_time: int = 9, n_space: int = 25,
                            quad: QuadratureRule | None = None, xtol: float = 1e-3) -> dict:
    """Calibrate ``c`` at the horizon it predicts.

    ``r*(T0) = T - horizon_bound(..., c(T0), T)`` decreases in ``T0``; the
    root of ``r*(T0) = T0`` is the horizon whose calibrated contraction
    estimate is exactly 1/4. Returns the calibration at that root together
    with ``S``. If even ``T0 = T`` satisfies ``r*(T0) >= T0`` then ``S = 0``.
    """
    cache = {}

    def gap(log_t0):
        t0 = float(np.exp(log_t0))
        cal = calibrate_h_constant(spectrum_d, drift, t0, n_time, n_space, quad)
        r = float(T) - horizon_bound(drift.alpha, drift.holder_norm, cal["c"], T)
        cache[log_t0] = cal
        return np.log(r) - log_t0

    hi = np.log(T)
    if gap(hi) >= 0:
        cal = cache[hi]
    else:
        lo = hi
        while gap(lo) < 0:
            lo -= np.log(4.0)
            if lo < np.log(T) - 20:
                raise InfeasibleError("no self-consistent horizon found")
        root = brentq(gap, lo, hi, xtol=xtol)
        cal = calibrate_h_constant(spectrum_d, drift, float(np.exp(root)), n_time, n_space, quad)
    S = horizon_bound(drift.alpha, drift.holder_norm, cal["c"], T)
    return dict(cal, S=float(S), horizon=float(T) - S)


# residual checks -----------------------------------------------------------

def _suffix_transport(spectrum, times, c):
    """``sum_{k >= j} e^{-(t_k - t_j) A} c_k`` for every j; ``c`` has shape (P, N, D)."""
    back = group_apply(spectrum, -times, c)
    acc = np.cumsum(back[:, ::-1], axis=1)[:, ::-1]
    return group_apply(spectrum, times, acc)


def bsde_residual(spectrum_d: ModeSpectrum, drift: DriftSpec, v: VField, n_paths: int,
                  grid: TimeGrid, seed, x0=None, panel: NoisePanel | None = None) -> dict:
    """Path-averaged sup-residual of the mild backward equation along OU paths.

    With ``Y = v(t, Xi)``, ``Z = nabla^G v(t, Xi)`` the residual at node j is
    ``Y_j - sum_{k >= j} e^{-(t_k - t_j)A} [(G B_k + Z_k B_k) dt - Z_k dW_k]``.
    """
    sp = spectrum_d
    x0 = np.zeros(sp.dim) if x0 is None else check_state(x0, sp)
    panel = panel or draw_noise_panel(sp, grid, seed, n_paths, stream_label="bsde")
    xi = simulate(sp, zero_drift(), x0, grid, panel).states  # (P, N+1, D)
    t = grid.nodes
    Xk = xi[:, :-1]
    tk = t[:-1]
    Y = v.value(t[None, :], xi)
    Z = v.grad_G(tk[None, :], Xk)  # (P, N, D, d)
    B = evaluate(drift, tk[None, :], Xk, sp)
    integrand = apply_G(sp, B) + np.einsum("pnij,pnj->pni", Z, B)
    c = integrand * grid.dt - np.einsum("pnij,pnj->pni", Z, panel.dW)
    tail = _suffix_transport(sp, tk, c)
    resid = np.linalg.norm(Y[:, :-1] - tail, axis=-1)
    resid = np.concatenate([resid, np.linalg.norm(Y[:, -1:], axis=-1)], axis=1)
    sup = resid.max(axis=1)
    return {"mean_residual": float(sup.mean()),
            "stderr": float(sup.std(ddof=1) / np.sqrt(sup.size)) if sup.size > 1 else 0.0}


def zvonkin_residual(spectrum_d: ModeSpectrum, drift: DriftSpec, v: VField, x0, grid: TimeGrid,
                     panel: NoisePanel) -> float:
    """Sup over nodes of ``|X_tau - RHS_tau|`` for the drift-free representation of X.

    ``RHS = e^{tau A}(x + v(0, x)) - v(tau, X_tau) + int e^{(tau-s)A} nabla^G v dW
    + int e^{(tau-s)A} G dW``, both stochastic integrals assembled from the
    increments of ``panel``; averaged over its paths.
    """
    sp = spectrum_d
    x0 = check_state(x0, sp)
    X = simulate(sp, drift, x0, grid, panel).states
    t = grid.nodes
    N = grid.n_steps
    Z = v.grad_G(t[None, :-1], X[:, :-1])
    ito = np.einsum("pnij,pnj->pni", Z, panel.dW)
    # forward transports: sum_{k < j} e^{(t_j - t_k)A} a_k and convolution from eta
    fwd_ito = np.zeros_like(X)
    conv = np.zeros_like(X)
    for j in range(N):
        fwd_ito[:, j + 1] = group_apply(sp, grid.dt, fwd_ito[:, j] + ito[:, j])
        conv[:, j + 1] = group_apply(sp, grid.dt, conv[:, j]) + panel.eta[:, j]
    v0 = v.value(0.0, x0)
    lin = group_apply(sp, t - t[0], np.broadcast_to(x0 + v0, (t.size, sp.dim)))
    rhs = lin[None] - v.value(t[None, :], X) + fwd_ito + conv
    return float(np.linalg.norm(X - rhs, axis=-1).max(axis=1).mean())
