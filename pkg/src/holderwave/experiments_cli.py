"""The six canonical experiments and their command-line front end.

Every experiment takes a JSON config with blocks ``spectrum``, ``drift``,
``grid``, ``mc`` and one experiment-specific block. Missing keys are filled
from ``DEFAULTS`` and the merged config is echoed into ``report.json``.
Numeric tables go to CSV with shortest round-trip float formatting, so a
fixed seed reproduces them byte for byte at any thread count.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .control_energy import control_energy, minimal_energy, null_control, steer
from .drift_models import (DriftSpec, constant_drift, counterexample_b, drift_from_config, mollify)
from .errors import HolderWaveError, InvalidArgument
from .kolmogorov_fixpoint import (PicardOperator, QuadratureRule, bsde_residual, random_field,
                                  self_consistent_horizon, solve_v, zvonkin_residual)
from .mild_integrator import (TimeGrid, coarsen_panel, draw_noise_panel, simulate,
                              simulate_deterministic, write_trajectory_csv)
from .smoothing_semigroup import (TestFunctional, derivative_sweep, gradG_hs_norm, hs_tail_bound,
                                  scaling_fit)
from .spectral_core import WAVE1D, spectrum_from_config
from .wave_group import apply_G

EXPERIMENTS = ("counterexample", "lipschitz", "smoothing", "control", "fixpoint", "mollification")

_PERTURBATION = {"mode": 1, "component": "w"}

DEFAULTS = {
    "counterexample": {
        "spectrum": {"model": "wave1d", "n_modes": 8, "length": float(np.pi)},
        "drift": {"name": "counterexample", "T_horizon": 1.0},
        "grid": {"n_tau": 200, "n_xi": 200, "n_steps": 200},
        "mc": {"seed": 0},
        "counterexample": {"residual_tol": 1e-8, "branch_tol": 1e-6},
    },
    "lipschitz": {
        "spectrum": {"model": "wave1d", "n_modes": 8, "length": float(np.pi)},
        "drift": {"name": "counterexample", "T_horizon": 1.0},
        "grid": {"T": 0.3, "n_steps": 100},
        "mc": {"n_paths": 1000, "seed": 3},
        "lipschitz": {"deltas": [0.1, 0.01, 0.001], "perturbation": _PERTURBATION,
                      "ratio_window": 3.0, "mollified_k": [4], "mollified_paths": 200,
                      "monotone_ks": [2, 4, 8, 16], "monotone_paths": 200},
    },
    "smoothing": {
        "spectrum": {"model": "wave1d", "n_modes": 8, "length": float(np.pi)},
        "drift": {"name": "zero"},
        "grid": {"ts": [0.05, 0.1, 0.2, 0.4, 0.8]},
        "mc": {"n_mc": 200000, "seed": 1},
        "smoothing": {"direction": {"mode": 1, "component": "y"}, "holder_alpha": 0.8,
                      "gradient_window": [-1.65, -1.35], "hs_window": [-0.65, -0.35],
                      "holder_window": 0.2},
    },
    "control": {
        "spectrum": {"model": "wave1d", "n_modes": 8, "length": float(np.pi)},
        "drift": {"name": "zero"},
        "grid": {"steer_T": [0.1, 1.0, 5.0], "energy_T": np.logspace(-2, 1, 7).tolist(),
                 "energy_t": [0.02, 0.05, 0.1, 0.2, 0.5]},
        "mc": {"seed": 0},
        "control": {"steer_tol": 1e-6, "energy_ratio_max": 3.0, "generic_decay": 2.0,
                    "generic_window": [-1.65, -1.35], "image_window": [-0.65, -0.35]},
    },
    "fixpoint": {
        "spectrum": {"model": "wave1d", "n_modes": 1, "length": float(np.pi)},
        "drift": {"name": "bounded_sine", "c": 1.0, "alpha": 0.9},
        "grid": {"T_max": 1.0, "n_time": 17, "n_space": 33, "gh_order": 6, "gl_order": 6,
                 "n_panels": 2, "calibration_n_time": 9, "calibration_n_space": 25,
                 "levels": [{"n_steps": 16, "n_time": 9, "n_space": 17, "gh_order": 4},
                            {"n_steps": 32, "n_time": 17, "n_space": 25, "gh_order": 5},
                            {"n_steps": 64, "n_time": 33, "n_space": 33, "gh_order": 6}]},
        "mc": {"n_paths": 400, "seed": 5},
        "fixpoint": {"tol": 1e-9, "max_iter": 60, "beta": 1.0, "random_amplitude": 0.5,
                     "grad_bound": 1.0 / 3.0 + 0.05, "uniqueness_factor": 5.0,
                     "sustained": 4, "x0": [0.2, 0.1], "constant_values": [0.7],
                     "order_min": 0.8, "identification_rel_tol": 0.05,
                     "probe_points": [[0.1, 0.2], [-0.3, 0.05], [0.0, 0.0], [0.4, -0.3]]},
    },
    "mollification": {
        "spectrum": {"model": "wave1d", "n_modes": 8, "length": float(np.pi)},
        "drift": {"name": "counterexample", "T_horizon": 1.0},
        "grid": {"T": 0.3, "n_steps": 100},
        "mc": {"n_paths": 400, "seed": 3},
        "mollification": {"ks": [2, 4, 8, 16, 32]},
    },
}

ANCHORS = {
    "counterexample": "are both solutions to equation",
    "lipschitz": "pathwise uniqueness holds; <= c_T |x1 - x2|^2",
    "smoothing": "the Ornstein-Uhlenbeck semigroup",
    "holder": "c/t^{(3/2)(1-alpha)}",
    "control": "the minimal energy steering an",
    "fixpoint": "unique solution u in E_0",
    "gradient": "<= 1/3",
    "identification": "can be identified with",
    "zvonkin": "removing the term",
    "mollification": "by the pointwise convergence of",
}


@dataclass
class Verdict:
    name: str
    anchor: str
    passed: bool
    measured: object
    tolerance: object


@dataclass
class Report:
    experiment: str
    config: dict
    tables: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failures(self) -> list:
        return [v.name for v in self.verdicts if not v.passed]

    def check(self, name, anchor_key, passed, measured, tolerance):
        self.verdicts.append(Verdict(name, ANCHORS[anchor_key], bool(passed), _plain(measured),
                                     _plain(tolerance)))

    def to_json(self) -> str:
        return json.dumps(_plain(asdict(self)), indent=2, sort_keys=True)


def _plain(obj):
    """Convert numpy containers and scalars into JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


def _merge(base, user):
    out = copy.deepcopy(base)
    for key, value in (user or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(experiment: str, user: dict | None = None, seed=None) -> dict:
    """Defaults merged with ``user``; ``seed`` overrides ``mc.seed``."""
    if experiment not in DEFAULTS:
        raise InvalidArgument(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    user = dict(user or {})
    user.pop("experiment", None)
    unknown = set(user) - set(DEFAULTS[experiment])
    if unknown:
        raise InvalidArgument(f"unknown config blocks for {experiment}: {sorted(unknown)}")
    base = DEFAULTS[experiment]
    if "drift" in user and user["drift"].get("name", base["drift"]["name"]) != base["drift"]["name"]:
        base = dict(base, drift={})  # a different drift does not inherit default parameters
    config = _merge(base, user)
    if seed is not None:
        config["mc"]["seed"] = int(seed)
    return config


def write_table(out_dir: Path, name: str, header, rows) -> str:
    path = Path(out_dir) / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])
    return path.name


def _perturbation(spectrum, spec):
    mode, comp = int(spec["mode"]), spec["component"]
    if not 1 <= mode <= spectrum.n_modes or comp not in ("y", "w"):
        raise InvalidArgument(f"invalid perturbation direction {spec!r}")
    e = np.zeros(spectrum.dim)
    e[2 * (mode - 1) + (comp == "w")] = 1.0
    return e


def _provenance(config):
    digest = hashlib.sha256(json.dumps(_plain(config), sort_keys=True).encode()).hexdigest()
    return {"seed": config["mc"]["seed"], "rng": "Philox via SeedSequence([seed, *labels])",
            "config_sha256": digest, "package_version": __version__,
            "numpy": np.__version__, "python": platform.python_version()}


# counterexample -------------------------------------------------------------

def counterexample_residuals(T_horizon: float, n_tau: int, n_xi: int, b=counterexample_b):
    """Analytic residuals ``y_tt - y_xixi - b(xi, y)`` of ``y = 0`` and ``y = tau^8 sin xi``.

    The grid covers ``tau^8 < 2 T^8`` and ``xi in [0, pi]``.
    """
    T = float(T_horizon)
    if not T > 0:
        raise InvalidArgument("counterexample horizon must be positive")
    tau = np.linspace(0.0, 2.0 ** 0.125 * T, n_tau, endpoint=False)
    xi = np.linspace(0.0, np.pi, n_xi)
    tt, xx = np.meshgrid(tau, xi, indexing="ij")
    zero = -np.asarray(b(xx, np.zeros_like(tt), T))
    y = tt**8 * np.sin(xx)
    lhs = 56.0 * tt**6 * np.sin(xx) + tt**8 * np.sin(xx)
    branch = lhs - np.asarray(b(xx, y, T))
    return tau, xi, zero, branch


def run_counterexample(config: dict, out_dir, threads: int = 1) -> Report:
    report = Report("counterexample", config)
    sp = spectrum_from_config(config["spectrum"])
    if sp.model != WAVE1D or not np.isclose(sp.length, np.pi):
        raise InvalidArgument("the counterexample is posed on wave1d with length pi")
    T = float(config["drift"]["T_horizon"])
    g = config["grid"]
    opts = config["counterexample"]
    tau, xi, zero, branch = counterexample_residuals(T, g["n_tau"], g["n_xi"])
    rows = [(float(t), float(x), float(z), float(r))
            for t, zr, br in zip(tau, zero, branch) for x, z, r in zip(xi, zr, br)]
    report.tables["residuals"] = write_table(out_dir, "residuals", ["tau", "xi", "residual_zero",
                                                                    "residual_branch"], rows)
    rz, rb = float(np.max(np.abs(zero))), float(np.max(np.abs(branch)))
    tol = opts["residual_tol"]
    report.check("zero_solution_residual", "counterexample", rz <= tol, rz, tol)
    report.check("branch_solution_residual", "counterexample", rb <= tol, rb, tol)
    report.check("deterministic non-uniqueness exhibited", "counterexample",
                 rz <= tol and rb <= tol, {"zero": rz, "branch": rb}, tol)

    drift = drift_from_config(config["drift"], sp)
    grid = TimeGrid(0.0, T, int(g["n_steps"]))
    traj = simulate_deterministic(sp, drift, np.zeros(sp.dim), grid)
    write_trajectory_csv(traj, Path(out_dir) / "deterministic.csv")
    report.tables["deterministic"] = "deterministic.csv"
    t = grid.nodes
    branch_state = np.zeros((t.size, sp.dim))
    # tau^8 sin xi has y_1 = tau^8 sqrt(pi/2) and w_1 = 8 tau^7 sqrt(pi/2) / mu_1
    branch_state[:, 0] = t**8 * np.sqrt(np.pi / 2)
    branch_state[:, 1] = 8 * t**7 * np.sqrt(np.pi / 2) / sp.mus[0]
    states = traj.states[0]
    d0 = float(np.max(np.linalg.norm(states, axis=-1)))
    d1 = float(np.max(np.linalg.norm(states - branch_state, axis=-1)))
    report.extra["distance_to_zero"] = d0
    report.extra["distance_to_branch"] = d1
    report.check("deterministic run follows one analytic solution", "counterexample",
                 min(d0, d1) <= opts["branch_tol"], {"zero": d0, "branch": d1},
                 opts["branch_tol"])
    return report


# lipschitz and mollification --------------------------------------------------

def _sup_mean_sq(a, b):
    return float(np.max(np.mean(np.sum((a - b) ** 2, axis=-1), axis=0)))


def lipschitz_ratios(sp, drift, x1, direction, deltas, grid, panel, threads=1):
    base = simulate(sp, drift, x1, grid, panel, threads).states
    return [_sup_mean_sq(simulate(sp, drift, x1 + d * direction, grid, panel, threads).states,
                         base) / d**2 for d in deltas]


def mollification_gaps(sp, drift, ks, x0, grid, panel, threads=1):
    base = simulate(sp, drift, x0, grid, panel, threads).states
    return [_sup_mean_sq(simulate(sp, mollify(drift, k, sp), x0, grid, panel, threads).states,
                         base) for k in ks]


def _spread(values):
    values = np.asarray(values, dtype=float)
    return float(values.max() / values.min())


def run_lipschitz(config: dict, out_dir, threads: int = 1) -> Report:
    report = Report("lipschitz", config)
    sp = spectrum_from_config(config["spectrum"])
    drift = drift_from_config(config["drift"], sp)
    g, mc, opts = config["grid"], config["mc"], config["lipschitz"]
    grid = TimeGrid(0.0, float(g["T"]), int(g["n_steps"]))
    panel = draw_noise_panel(sp, grid, mc["seed"], int(mc["n_paths"]))
    e = _perturbation(sp, opts["perturbation"])
    x1 = np.zeros(sp.dim)
    deltas = [float(d) for d in opts["deltas"]]
    rows = []
    stoch = lipschitz_ratios(sp, drift, x1, e, deltas, grid, panel, threads)
    rows += [("stochastic", drift.name, d, r) for d, r in zip(deltas, stoch)]
    det = []
    for d in deltas:
        a = simulate_deterministic(sp, drift, x1, grid).states
        b = simulate_deterministic(sp, drift, x1 + d * e, grid).states
        det.append(_sup_mean_sq(b, a) / d**2)
    rows += [("deterministic", drift.name, d, r) for d, r in zip(deltas, det)]
    small = panel.paths(slice(0, int(opts["mollified_paths"])))
    moll_spreads = {}
    for k in opts["mollified_k"]:
        mk = mollify(drift, int(k), sp)
        ratios = lipschitz_ratios(sp, mk, x1, e, deltas, grid, small, threads)
        rows += [("stochastic", mk.name, d, r) for d, r in zip(deltas, ratios)]
        moll_spreads[mk.name] = _spread(ratios)
    report.tables["ratios"] = write_table(out_dir, "ratios", ["noise", "drift", "delta", "ratio"],
                                          rows)
    window = float(opts["ratio_window"])
    report.check("stochastic ratio stable across delta", "lipschitz", _spread(stoch) <= window,
                 _spread(stoch), window)
    for name, spread in moll_spreads.items():
        report.check(f"stochastic ratio stable across delta ({name})", "lipschitz",
                     spread <= window, spread, window)
    report.check("deterministic run departs from the trivial branch", "counterexample",
                 _spread(det) > window, _spread(det), f"> {window}")
    ks = [int(k) for k in opts["monotone_ks"]]
    gaps = mollification_gaps(sp, drift, ks, x1, grid,
                              panel.paths(slice(0, int(opts["monotone_paths"]))), threads)
    report.tables["mollification"] = write_table(out_dir, "mollification", ["k", "sup_mean_sq"],
                                                 list(zip(ks, gaps)))
    report.check("mollified solutions approach the original", "mollification",
                 bool(np.all(np.diff(gaps) < 0)), gaps, "strictly decreasing in k")
    return report


def run_mollification(config: dict, out_dir, threads: int = 1) -> Report:
    report = Report("mollification", config)
    sp = spectrum_from_config(config["spectrum"])
    drift = drift_from_config(config["drift"], sp)
    g, mc = config["grid"], config["mc"]
    grid = TimeGrid(0.0, float(g["T"]), int(g["n_steps"]))
    panel = draw_noise_panel(sp, grid, mc["seed"], int(mc["n_paths"]))
    ks = [int(k) for k in config["mollification"]["ks"]]
    gaps = mollification_gaps(sp, drift, ks, np.zeros(sp.dim), grid, panel, threads)
    report.tables["mollification"] = write_table(out_dir, "mollification", ["k", "sup_mean_sq"],
                                                 list(zip(ks, gaps)))
    report.check("sup E|X^B - X^{B^k}|^2 decreasing in k", "mollification",
                 bool(np.all(np.diff(gaps) < 0)), gaps, "strictly decreasing in k")
    return report


# smoothing ----------------------------------------------------------------

def _in_window(value, window):
    return window[0] <= value <= window[1]


def run_smoothing(config: dict, out_dir, threads: int = 1) -> Report:
    report = Report("smoothing", config)
    sp = spectrum_from_config(config["spectrum"])
    ts = [float(t) for t in config["grid"]["ts"]]
    mc, opts = config["mc"], config["smoothing"]
    n_mc, seed = int(mc["n_mc"]), mc["seed"]
    d = _perturbation(sp, opts["direction"])
    x = np.zeros(sp.dim)
    step = TestFunctional.holder_power(0.0, d)
    grad, grad_se = derivative_sweep(sp, step, ts, x, d, n_mc, seed)
    hs = np.array([gradG_hs_norm(sp, step, t, x, n_mc, seed) for t in ts])
    tails = np.array([hs_tail_bound(sp, t, step.sup_norm) for t in ts])
    alpha = float(opts["holder_alpha"])
    hp = TestFunctional.holder_power(alpha, d)
    hgrad, hgrad_se = derivative_sweep(sp, hp, ts, x, d, n_mc, seed)
    rows = list(zip(ts, grad, grad_se, hs, tails, hgrad, hgrad_se))
    report.tables["smoothing"] = write_table(
        out_dir, "smoothing", ["t", "grad_step", "grad_step_se", "gradG_hs", "hs_tail_bound",
                               "grad_holder", "grad_holder_se"], rows)
    f_grad, f_hs, f_h = scaling_fit(ts, grad), scaling_fit(ts, hs), scaling_fit(ts, hgrad)
    report.extra["fits"] = {"grad_step": f_grad._asdict(), "gradG_hs": f_hs._asdict(),
                            "grad_holder": f_h._asdict()}
    report.check("gradient of R_t Phi scales like t^{-3/2}", "smoothing",
                 _in_window(f_grad.slope, opts["gradient_window"]), f_grad.slope,
                 opts["gradient_window"])
    report.check("nabla^G R_t Phi scales like t^{-1/2}", "smoothing",
                 _in_window(f_hs.slope, opts["hs_window"]), f_hs.slope, opts["hs_window"])
    target = -1.5 * (1.0 - alpha)
    win = float(opts["holder_window"])
    report.check("Hölder data improve the gradient exponent", "holder",
                 abs(f_h.slope - target) <= win, f_h.slope, [target - win, target + win])
    return report


# control --------------------------------------------------------------------

def run_control(config: dict, out_dir, threads: int = 1) -> Report:
    report = Report("control", config)
    sp = spectrum_from_config(config["spectrum"])
    g, opts = config["grid"], config["control"]
    a = np.ones(sp.n_modes)
    k = apply_G(sp, a)
    steer_rows = []
    for T in g["steer_T"]:
        T = float(T)
        end = steer(sp, T, k, null_control(sp, T, a))
        steer_rows.append((T, float(np.linalg.norm(end) / np.linalg.norm(k))))
    worst = max(r for _, r in steer_rows)
    report.tables["steering"] = write_table(out_dir, "steering", ["T", "relative_error"],
                                            steer_rows)
    report.check("null control steers G a to zero", "control", worst <= opts["steer_tol"], worst,
                 opts["steer_tol"])
    e_rows = []
    for T in g["energy_T"]:
        T = float(T)
        e = control_energy(null_control(sp, T, a))
        e_rows.append((T, e, e * np.sqrt(T)))
    prod = [r[2] for r in e_rows]
    report.tables["energy"] = write_table(out_dir, "energy", ["T", "energy", "energy_sqrtT"],
                                          e_rows)
    report.check("energy * sqrt(T) uniformly bounded", "control",
                 _spread(prod) <= opts["energy_ratio_max"], _spread(prod),
                 opts["energy_ratio_max"])
    n = np.arange(1, sp.n_modes + 1, dtype=float)
    wts = n ** -float(opts["generic_decay"])
    generic = np.stack([wts, wts], -1).ravel()
    ts = [float(t) for t in g["energy_t"]]
    gen_e = [minimal_energy(sp, t, generic) for t in ts]
    img_e = [minimal_energy(sp, t, k) for t in ts]
    report.tables["minimal_energy"] = write_table(out_dir, "minimal_energy",
                                                  ["t", "generic", "image_of_G"],
                                                  list(zip(ts, gen_e, img_e)))
    fg, fi = scaling_fit(ts, gen_e), scaling_fit(ts, img_e)
    report.extra["fits"] = {"generic": fg._asdict(), "image_of_G": fi._asdict()}
    report.check("generic minimal energy is O(t^{-3/2})", "control",
                 _in_window(fg.slope, opts["generic_window"]), fg.slope, opts["generic_window"])
    report.check("minimal energy on Im(G) is O(t^{-1/2})", "control",
                 _in_window(fi.slope, opts["image_window"]), fi.slope, opts["image_window"])
    return report


# fixed point ----------------------------------------------------------------

def _quad(cfg, gh=None):
    return QuadratureRule(int(gh or cfg["gh_order"]), int(cfg["gl_order"]), int(cfg["n_panels"]))


def _residual_levels(sp, drift, T, levels, g, opts, mc, x0):
    """bsde and Zvonkin residuals over nested refinement levels sharing one Brownian path."""
    finest = TimeGrid(0.0, T, int(levels[-1]["n_steps"]))
    panels = [draw_noise_panel(sp, finest, mc["seed"], int(mc["n_paths"]), "refinement")]
    for _ in levels[:-1]:
        panels.append(coarsen_panel(panels[-1], sp))
    panels = panels[::-1]
    out = []
    for lev, panel in zip(levels, panels):
        grid = TimeGrid(0.0, T, int(lev["n_steps"]))
        if panel.n_steps != grid.n_steps:
            raise InvalidArgument("refinement levels must double the step count")
        res = solve_v(sp, drift, T, int(lev["n_time"]), int(lev["n_space"]),
                      _quad(g, lev["gh_order"]), float(opts["tol"]), int(opts["max_iter"]),
                      x0=x0)
        b = bsde_residual(sp, drift, res.field, panel.n_paths, grid, None, x0=x0, panel=panel)
        z = zvonkin_residual(sp, drift, res.field, x0, grid, panel)
        out.append((grid.n_steps, b["mean_residual"], b["stderr"], z))
    return out


def run_fixpoint(config: dict, out_dir, threads: int = 1) -> Report:
    report = Report("fixpoint", config)
    sp = spectrum_from_config(config["spectrum"])
    drift = drift_from_config(config["drift"], sp)
    g, mc, opts = config["grid"], config["mc"], config["fixpoint"]
    quad = _quad(g)
    cal = self_consistent_horizon(sp, drift, float(g["T_max"]), int(g["calibration_n_time"]),
                                  int(g["calibration_n_space"]), quad)
    T = cal["horizon"]
    report.extra["calibration"] = cal
    x0 = np.asarray(opts["x0"], dtype=float)
    op = PicardOperator(sp, drift, T, int(g["n_time"]), int(g["n_space"]), quad, x0=x0)
    tol = float(opts["tol"])
    r0 = solve_v(sp, drift, T, tol=tol, max_iter=int(opts["max_iter"]), beta=float(opts["beta"]),
                 operator=op)
    r1 = solve_v(sp, drift, T, tol=tol, max_iter=int(opts["max_iter"]), beta=float(opts["beta"]),
                 operator=op, v0=random_field(op, float(opts["random_amplitude"]), mc["seed"]))
    rows = [("zero", i + 1, d, gd, wd) for i, (d, gd, wd) in
            enumerate(zip(r0.diffs, r0.grad_diffs, r0.weighted_diffs))]
    rows += [("random", i + 1, d, gd, wd) for i, (d, gd, wd) in
             enumerate(zip(r1.diffs, r1.grad_diffs, r1.weighted_diffs))]
    report.tables["picard"] = write_table(out_dir, "picard", ["init", "iteration", "sup_diff",
                                                              "sup_gradG_diff", "weighted_diff"],
                                          rows)
    r0.field.save(Path(out_dir) / "vfield")
    report.tables["vfield"] = "vfield.csv"
    ratios = r0.ratios
    need = int(opts["sustained"])
    tail = ratios[-need:]
    report.extra.update({"horizon": T, "S": cal["S"], "iterations": r0.iterations,
                         "ratios": ratios, "escape": op.escape_stats,
                         "v_sup_norm": r0.field.sup_norm()})
    report.check("Picard differences decay geometrically", "fixpoint",
                 len(tail) >= need and max(tail) < 1.0, tail, f"< 1 over {need} iterations")
    gmax = r0.field.sup_grad_norm()
    report.check("max grid |nabla v| on the short horizon", "gradient",
                 gmax <= opts["grad_bound"], gmax, opts["grad_bound"])
    gap = float(np.max(np.abs(r0.field.values - r1.field.values)))
    report.check("two initializations reach the same field", "fixpoint",
                 gap <= opts["uniqueness_factor"] * tol, gap, opts["uniqueness_factor"] * tol)

    probes = np.asarray(opts["probe_points"], dtype=float)
    sup_g = float(np.max(np.abs(np.stack([r0.field.grad_G(t, probes) for t in op.times]))))
    worst = 0.0
    id_rows = []
    for i in range(op.times.size - 1):
        a = r0.field.grad_G(op.times[i], probes)
        b = op.gradient_cm(r0.field, i, probes)
        worst = max(worst, float(np.max(np.abs(a - b))))
        id_rows += [(float(op.times[i]), *map(float, p), float(x), float(y))
                    for p, x, y in zip(probes, a[..., 0, 0], b[..., 0, 0])]
    report.tables["identification"] = write_table(
        out_dir, "identification", ["t", "x0", "x1", "interp_gradG_00", "cm_gradG_00"], id_rows)
    rel = float(opts["identification_rel_tol"])
    report.check("interpolant and Cameron-Martin nabla^G v agree", "identification",
                 worst <= rel * max(sup_g, tol), worst, rel * sup_g)

    levels = g["levels"]
    lev_rows = []
    bounded = _residual_levels(sp, drift, T, levels, g, opts, mc, x0)
    const = _residual_levels(sp, constant_drift(opts["constant_values"]), T, levels, g, opts, mc,
                             x0)
    for name, res in (("bounded_sine", bounded), ("constant", const)):
        lev_rows += [(name, n, b, se, z) for n, b, se, z in res]
    report.tables["residuals"] = write_table(out_dir, "residuals", ["drift", "n_steps", "bsde",
                                                                    "bsde_se", "zvonkin"], lev_rows)
    bs, zs = [r[1] for r in bounded], [r[3] for r in bounded]
    report.check("bsde residual decreases under refinement", "identification",
                 bool(np.all(np.diff(bs) < 0)), bs, "strictly decreasing")
    report.check("Zvonkin residual decreases under refinement", "zvonkin",
                 bool(np.all(np.diff(zs) < 0)), zs, "strictly decreasing")
    orders = {}
    for key, col in (("bsde", 1), ("zvonkin", 3)):
        vals = np.array([r[col] for r in const])
        orders[key] = np.log2(vals[:-1] / vals[1:]).tolist()
    order_min = float(opts["order_min"])
    report.check("constant-drift residual order", "zvonkin",
                 min(min(o) for o in orders.values()) >= order_min, orders, order_min)
    return report


RUNNERS = {
    "counterexample": run_counterexample,
    "lipschitz": run_lipschitz,
    "smoothing": run_smoothing,
    "control": run_control,
    "fixpoint": run_fixpoint,
    "mollification": run_mollification,
}


def run_experiment(experiment: str, config: dict | None, out_dir, seed=None,
                   threads: int = 1) -> Report:
    """Resolve the config, run one experiment, and write ``report.json``."""
    config = resolve_config(experiment, config, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            report = RUNNERS[experiment](config, out, threads)
        except HolderWaveError as exc:
            if exc.args:
                exc.args = (f"{experiment}: {exc.args[0]}",) + exc.args[1:]
            raise
    report.wall_clock = time.perf_counter() - start
    report.provenance = _provenance(config)
    report.provenance["threads"] = int(threads)
    report.extra["warnings"] = sorted({str(w.message) for w in caught})
    (out / "report.json").write_text(report.to_json())
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holderwave",
                                     description="Run one stochastic wave experiment.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="JSON config; missing keys use defaults")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="override mc.seed")
    parser.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = json.loads(args.config.read_text()) if args.config else None
        report = run_experiment(args.experiment, user, args.out, args.seed, args.threads)
    except (HolderWaveError, ValueError, OSError, KeyError, TypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.measured}")
    if not report.passed:
        print(json.dumps({"failed": report.failures()}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
