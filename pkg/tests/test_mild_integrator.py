import csv

import numpy as np
import pytest

from holderwave.drift_models import (bounded_sine_drift, closed_form_drift, constant_drift,
                                     zero_drift)
from holderwave.errors import DimensionMismatch, DriftEvaluationError, InvalidArgument
from holderwave.gaussian_law import covariance
from holderwave.mild_integrator import (PATH_CHUNK, TimeGrid, coarsen_panel, couple,
                                        draw_noise_panel, simulate, simulate_deterministic,
                                        write_trajectory_csv, zero_panel)
from holderwave.spectral_core import build_spectrum, norms
from holderwave.wave_group import group_apply

SP = build_spectrum("wave1d", 4)


def test_time_grid_validation():
    with pytest.raises(InvalidArgument):
        TimeGrid(1.0, 1.0, 10)
    with pytest.raises(InvalidArgument):
        TimeGrid(0.0, 1.0, 0)
    g = TimeGrid(0.0, 1.0, 4)
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.refine().n_steps == 8


def test_zero_noise_reproduces_group_orbit():
    grid = TimeGrid(0.0, 3.0, 300)
    x0 = np.array([1.0, -0.5, 0.2, 0.3, 0.0, 0.1, -0.7, 0.4])
    states = simulate_deterministic(SP, zero_drift(), x0, grid).states[0]
    orbit = group_apply(SP, grid.nodes, np.broadcast_to(x0, (grid.n_steps + 1, 8)))
    np.testing.assert_allclose(states, orbit, atol=1e-12)
    energy = [norms(s, SP).h_norm for s in states]
    np.testing.assert_allclose(energy, np.linalg.norm(x0), rtol=1e-12)


def test_zero_drift_zero_data_stays_zero():
    grid = TimeGrid(0.0, 1.0, 10)
    assert np.all(simulate_deterministic(SP, bounded_sine_drift(), np.zeros(8), grid).states == 0)


def test_panel_determinism_and_prefix_stability():
    grid = TimeGrid(0.0, 1.0, 5)
    a = draw_noise_panel(SP, grid, 7, 10)
    b = draw_noise_panel(SP, grid, 7, 10)
    np.testing.assert_array_equal(a.eta, b.eta)
    np.testing.assert_array_equal(a.dW, b.dW)
    assert not np.array_equal(a.eta, draw_noise_panel(SP, grid, 8, 10).eta)
    big = draw_noise_panel(SP, grid, 7, 25)
    np.testing.assert_array_equal(big.eta[:10], a.eta)


def test_per_step_covariance_mc():
    grid = TimeGrid(0.0, 0.2, 1)
    panel = draw_noise_panel(SP, grid, 1, 10000)
    eta = panel.eta[:, 0]
    cov = covariance(SP, 0.2).dense()
    emp = np.cov(eta.T)
    se = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / eta.shape[0])
    assert np.all(np.abs(emp - cov) <= 3.5 * se + 1e-16)


def test_coarsened_panel_gives_same_linear_solution():
    fine = TimeGrid(0.0, 1.0, 16)
    panel = draw_noise_panel(SP, fine, 3, 5)
    coarse = coarsen_panel(panel, SP)
    x0 = np.ones(8)
    a = simulate(SP, zero_drift(), x0, fine, panel).states[:, ::2]
    b = simulate(SP, zero_drift(), x0, TimeGrid(0.0, 1.0, 8), coarse).states
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(coarse.dW.sum(axis=1), panel.dW.sum(axis=1), atol=1e-14)


def test_bounded_drift_strong_order_on_fixed_noise():
    drift = bounded_sine_drift()
    x0 = np.array([0.5, 0.2, -0.1, 0.3, 0.0, 0.0, 0.1, 0.0])
    n_fine = 512
    panels = [draw_noise_panel(SP, TimeGrid(0.0, 1.0, n_fine), 4, 20)]
    for _ in range(4):
        panels.append(coarsen_panel(panels[-1], SP))
    ends = [simulate(SP, drift, x0, TimeGrid(0.0, 1.0, p.n_steps), p).endpoint for p in panels]
    errs = [np.mean(np.linalg.norm(e - ends[0], axis=1)) for e in ends[1:]]
    orders = np.log2(np.array(errs[1:]) / np.array(errs[:-1]))
    assert np.all(orders >= 0.8)


def test_manufactured_solution():
    # y = sin(tau) sin(2 xi) needs forcing 3 sin(tau) sin(2 xi) on mode 2
    sp = build_spectrum("wave1d", 2)
    c = np.sqrt(np.pi / 2)  # sin(2 xi) = c * phi_2
    force = closed_form_drift(lambda t, x, s: np.stack(
        [np.zeros_like(np.asarray(t) * x[..., 0]), 3 * c * np.sin(t) + 0 * x[..., 0]], -1))
    T = 1.0
    x0 = np.array([0.0, 0.0, 0.0, c / 2])  # y = 0, z = c, w = z / mu_2
    exact = np.array([0.0, 0.0, c * np.sin(T), c * np.cos(T) / 2])
    errs = [np.linalg.norm(simulate_deterministic(sp, force, x0, TimeGrid(0, T, n)).endpoint[0]
                           - exact) for n in (50, 100, 200)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.8)
    assert errs[-1] < 1e-2


def test_couple_identical_inputs_bit_for_bit():
    grid = TimeGrid(0.0, 0.5, 20)
    panel = draw_noise_panel(SP, grid, 2, 3)
    a, b = couple(SP, bounded_sine_drift(), bounded_sine_drift(), np.ones(8), np.ones(8), grid,
                  panel)
    np.testing.assert_array_equal(a.states, b.states)


def test_threads_do_not_change_results():
    grid = TimeGrid(0.0, 0.5, 10)
    panel = draw_noise_panel(SP, grid, 2, 2 * PATH_CHUNK + 17)
    a = simulate(SP, bounded_sine_drift(), np.zeros(8), grid, panel, threads=1)
    b = simulate(SP, bounded_sine_drift(), np.zeros(8), grid, panel, threads=3)
    np.testing.assert_array_equal(a.states, b.states)


def test_panel_mismatch_errors():
    grid = TimeGrid(0.0, 1.0, 4)
    panel = draw_noise_panel(SP, grid, 0, 2)
    with pytest.raises(DimensionMismatch):
        simulate(SP, zero_drift(), np.zeros(8), TimeGrid(0.0, 1.0, 5), panel)
    with pytest.raises(DimensionMismatch):
        simulate(build_spectrum("wave1d", 3), zero_drift(), np.zeros(6), grid,
                 zero_panel(SP, grid))


def test_drift_failure_reports_step():
    def bad(t, x, sp):
        if t > 0.35:
            raise RuntimeError("boom")
        return np.zeros(x.shape[:-1] + (4,))

    grid = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(DriftEvaluationError) as info:
        simulate_deterministic(SP, closed_form_drift(bad), np.zeros(8), grid)
    assert info.value.step == 4


def test_constant_drift_mean_path():
    # with constant force c the mean solves the linear equation; zero noise panel gives it
    grid = TimeGrid(0.0, 1.0, 2000)
    c = np.array([1.0, 0.0, 0.0, 0.0])
    end = simulate_deterministic(SP, constant_drift(c), np.zeros(8), grid).endpoint[0]
    # int_0^1 e^{(1-s)A} G c ds, mode 1 (mu = 1): (1 - cos 1, sin 1)
    assert end[0] == pytest.approx(1 - np.cos(1.0), abs=1e-3)
    assert end[1] == pytest.approx(np.sin(1.0), abs=1e-3)


def test_trajectory_csv(tmp_path):
    grid = TimeGrid(0.0, 1.0, 3)
    traj = simulate_deterministic(SP, zero_drift(), np.full(8, 0.1), grid)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "y1", "w1", "y2", "w2", "y3", "w3", "y4", "w4"]
    assert len(rows) == 5
    assert float(rows[2][1]) == traj.states[0, 1, 0]
