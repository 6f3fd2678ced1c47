import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from holderwave.errors import DimensionMismatch
from holderwave.spectral_core import build_spectrum
from holderwave.wave_group import (G_matrix, apply_G, apply_G_adjoint, generator_apply,
                                   group_apply)

SP = build_spectrum("wave1d", 3, length=2.0)
states = arrays(np.float64, 6, elements=st.floats(-100, 100))
times = st.floats(-10, 10)


def _generator_matrix(sp):
    A = np.zeros((sp.dim, sp.dim))
    for m in range(sp.dim // 2):
        e = np.zeros(sp.dim)
        e[2 * m] = 1
        A[:, 2 * m] = generator_apply(sp, e)
        e = np.zeros(sp.dim)
        e[2 * m + 1] = 1
        A[:, 2 * m + 1] = generator_apply(sp, e)
    return A


def test_group_matches_matrix_exponential():
    A = _generator_matrix(SP)
    x = np.arange(1.0, 7.0)
    for t in (0.3, -1.7, 5.0):
        np.testing.assert_allclose(group_apply(SP, t, x), expm(t * A) @ x, atol=1e-12)


def test_generator_is_skew():
    A = _generator_matrix(SP)
    np.testing.assert_allclose(A, -A.T, atol=0)


def test_wave_dynamics_in_raw_coordinates():
    # y(t) = y0 cos(mu t) + z0 sin(mu t) / mu solves y'' = -lambda y
    sp = build_spectrum("wave1d", 1)
    mu = sp.mus[0]
    y0, z0, t = 0.7, -1.3, 0.9
    y, w = group_apply(sp, t, np.array([y0, z0 / mu]))
    assert y == pytest.approx(y0 * np.cos(mu * t) + z0 * np.sin(mu * t) / mu)
    assert w * mu == pytest.approx(-y0 * mu * np.sin(mu * t) + z0 * np.cos(mu * t))


@settings(max_examples=60, deadline=None)
@given(states, times, times)
def test_group_law_and_isometry(x, s, t):
    scale = max(np.linalg.norm(x), 1.0)
    lhs = group_apply(SP, s, group_apply(SP, t, x))
    assert np.linalg.norm(lhs - group_apply(SP, s + t, x)) <= 1e-12 * scale
    assert abs(np.linalg.norm(group_apply(SP, t, x)) - np.linalg.norm(x)) <= 1e-12 * scale
    assert np.linalg.norm(group_apply(SP, -t, group_apply(SP, t, x)) - x) <= 1e-12 * scale


def test_group_identity_at_zero():
    x = np.arange(6.0)
    np.testing.assert_array_equal(group_apply(SP, 0.0, x), x)


def test_batched_times():
    x = np.ones((4, 6))
    t = np.array([0.0, 0.5, 1.0, 2.0])
    out = group_apply(SP, t, x)
    for i in range(4):
        np.testing.assert_allclose(out[i], group_apply(SP, t[i], x[i]))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-10, 10)), states)
def test_G_adjoint(a, h):
    assert np.dot(apply_G(SP, a), h) == pytest.approx(np.dot(a, apply_G_adjoint(SP, h)),
                                                      rel=1e-12, abs=1e-9)


def test_G_matrix_and_norm():
    a = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(G_matrix(SP) @ a, apply_G(SP, a))
    # |G a|_H^2 = sum a_n^2 / lambda_n
    assert np.linalg.norm(apply_G(SP, a)) ** 2 == pytest.approx(np.sum(a**2 / SP.lambdas))
    with pytest.raises(DimensionMismatch):
        apply_G(SP, np.ones(2))
