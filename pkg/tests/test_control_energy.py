import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from holderwave.control_energy import (ControlSignal, bump_phi, bump_phi_prime,
                                       constant_control, control_energy, minimal_energy,
                                       null_control, steer)
from holderwave.errors import HorizonMismatch, InvalidArgument
from holderwave.spectral_core import build_spectrum
from holderwave.wave_group import apply_G, group_apply

SP = build_spectrum("wave1d", 4)


@pytest.mark.parametrize("T", [0.1, 1.0, 7.0])
def test_bump_normalization(T):
    assert quad(lambda t: bump_phi(t, T), 0, T)[0] == pytest.approx(1.0, rel=1e-12)
    assert bump_phi(0.0, T) == 0 and bump_phi(T, T) == 0
    h = 1e-6 * T
    t = 0.3 * T
    fd = (bump_phi(t + h, T) - bump_phi(t - h, T)) / (2 * h)
    assert bump_phi_prime(t, T) == pytest.approx(fd, rel=1e-6)


def test_bump_domain():
    with pytest.raises(InvalidArgument):
        bump_phi(1.5, 1.0)
    with pytest.raises(InvalidArgument):
        bump_phi(0.5, 0.0)


@pytest.mark.parametrize("T", [0.1, 1.0, 5.0])
def test_null_control_steers_to_zero(T):
    a = np.array([1.0, -2.0, 0.5, 3.0])
    k = apply_G(SP, a)
    end = steer(SP, T, k, null_control(SP, T, a))
    assert np.linalg.norm(end) <= 1e-9 * np.linalg.norm(k)


def test_zero_control_is_free_evolution():
    x0 = np.arange(1.0, 9.0)
    end = steer(SP, 2.0, x0, constant_control(SP, 2.0, np.zeros(4)))
    np.testing.assert_allclose(end, group_apply(SP, 2.0, x0), atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_steer_is_affine_in_control(a, b):
    T = 1.3
    ua, ub = null_control(SP, T, np.array(a)), constant_control(SP, T, np.array(b))
    zero = np.zeros(8)
    lhs = steer(SP, T, zero, ua + ub)
    rhs = steer(SP, T, zero, ua) + steer(SP, T, zero, ub)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_horizon_mismatch():
    u = null_control(SP, 1.0, np.ones(4))
    with pytest.raises(HorizonMismatch):
        u + null_control(SP, 2.0, np.ones(4))
    with pytest.raises(HorizonMismatch):
        steer(SP, 2.0, np.zeros(8), u)


def test_constant_control_energy():
    c = np.array([1.0, 2.0, 0.0, -2.0])
    assert control_energy(constant_control(SP, 4.0, c)) == pytest.approx(3.0 * 2.0)


def test_null_control_energy_by_quadrature():
    T = 0.7
    u = null_control(SP, T, np.ones(4))
    ref = quad(lambda t: np.sum(u(t) ** 2), 0, T, limit=200)[0]
    assert control_energy(u) == pytest.approx(np.sqrt(ref), rel=1e-10)


def _least_squares_energy(sp, t, h, n=4000):
    # piecewise-constant controls; minimal L2 norm of u with int e^{(t-s)A} G u ds = -e^{tA} h
    s = (np.arange(n) + 0.5) * t / n
    ds = t / n
    cols = []
    for m in range(sp.n_modes):
        a = np.zeros((n, sp.n_modes))
        a[:, m] = 1.0
        cols.append(group_apply(sp, t - s, apply_G(sp, a)) * ds)
    M = np.concatenate(cols, axis=0).reshape(sp.n_modes, n, sp.dim).transpose(2, 0, 1)
    M = M.reshape(sp.dim, -1)
    target = -group_apply(sp, t, h)
    u = np.linalg.lstsq(M, target, rcond=None)[0]
    return np.sqrt(np.sum(u**2) * ds)


@pytest.mark.parametrize("t", [0.2, 1.0])
def test_minimal_energy_against_least_squares(t):
    sp = build_spectrum("wave1d", 3)
    h = np.array([1.0, 0.5, -0.3, 0.2, 0.1, 0.4])
    assert minimal_energy(sp, t, h) == pytest.approx(_least_squares_energy(sp, t, h), rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 5.0))
def test_null_control_is_not_cheaper_than_minimum(T):
    a = np.array([1.0, 0.0, -1.0, 2.0])
    k = apply_G(SP, a)
    assert control_energy(null_control(SP, T, a)) >= minimal_energy(SP, T, k) * (1 - 1e-9)


def test_control_signal_samples():
    u = constant_control(SP, 1.0, np.ones(4))
    t, vals = u.samples(5)
    assert vals.shape == (5, 4)
    assert isinstance(u, ControlSignal)
    assert u.quad_order() == 16
