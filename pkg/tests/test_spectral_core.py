import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from holderwave.errors import DimensionMismatch, InvalidArgument, UnsupportedModel
from holderwave.spectral_core import (FieldGrid, analyze, basis_matrix, build_spectrum,
                                      default_grid, join, norms, phase_state, raw_velocity,
                                      spectrum_from_config, split, synthesize,
                                      trace_lambda_inverse, trace_lambda_inverse_limit,
                                      trace_lambda_inverse_tail)


def test_wave1d_eigenvalues_default_length():
    sp = build_spectrum("wave1d", 4)
    np.testing.assert_array_equal(sp.lambdas, [1.0, 4.0, 9.0, 16.0])
    assert sp.length == pytest.approx(np.pi)
    assert sp.dim == 8


def test_wave1d_general_length():
    sp = build_spectrum("wave1d", 3, length=2.0)
    np.testing.assert_allclose(sp.lambdas, (np.arange(1, 4) * np.pi / 2.0) ** 2)


def test_plate_eigenvalues():
    sp = build_spectrum("plate_asymptotic", 3, area=2.0)
    np.testing.assert_allclose(sp.lambdas, (4 * np.pi * np.arange(1, 4)) ** 2 / 4.0)
    with pytest.raises(UnsupportedModel):
        sp.length


def test_custom_values_sorted():
    sp = build_spectrum("custom", values=[9.0, 1.0, 4.0])
    np.testing.assert_array_equal(sp.lambdas, [1.0, 4.0, 9.0])
    assert sp.truncate(2).n_modes == 2


@pytest.mark.parametrize("kwargs", [dict(model="wave1d", n_modes=0),
                                    dict(model="wave1d", n_modes=2.5),
                                    dict(model="plate_asymptotic", n_modes=2),
                                    dict(model="custom", values=[1.0, -2.0]),
                                    dict(model="custom"),
                                    dict(model="nope", n_modes=3)])
def test_invalid_spectra(kwargs):
    with pytest.raises(InvalidArgument):
        build_spectrum(**kwargs)


def test_spectrum_from_config():
    sp = spectrum_from_config({"model": "wave1d", "n_modes": 2, "length": np.pi})
    np.testing.assert_array_equal(sp.lambdas, [1.0, 4.0])


def test_trace_helpers_against_sum():
    sp = build_spectrum("wave1d", 10)
    assert trace_lambda_inverse(sp) == pytest.approx(np.sum(1.0 / np.arange(1, 11) ** 2))
    assert trace_lambda_inverse(sp) + trace_lambda_inverse_tail(sp) == pytest.approx(np.pi**2 / 6)
    assert trace_lambda_inverse_limit(sp) == pytest.approx(np.pi**2 / 6)
    plate = build_spectrum("plate_asymptotic", 5, area=3.0)
    assert trace_lambda_inverse_limit(plate) == pytest.approx(9.0 / 96)
    assert (trace_lambda_inverse(plate) + trace_lambda_inverse_tail(plate)
            == pytest.approx(9.0 / 96))


def test_split_join_roundtrip():
    x = np.arange(6.0)
    y, w = split(x)
    np.testing.assert_array_equal(y, [0, 2, 4])
    np.testing.assert_array_equal(w, [1, 3, 5])
    np.testing.assert_array_equal(join(y, w), x)


def test_phase_state_normalizes_velocity():
    sp = build_spectrum("wave1d", 3)
    x = phase_state(sp, y=[1.0, 2.0, 3.0], z=[2.0, 4.0, 6.0])
    np.testing.assert_allclose(split(x)[1], [2.0, 2.0, 2.0])
    np.testing.assert_allclose(raw_velocity(x, sp), [2.0, 4.0, 6.0])
    with pytest.raises(DimensionMismatch):
        phase_state(sp, y=[1.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-1e3, 1e3)))
def test_h_norm_is_euclidean(x):
    sp = build_spectrum("wave1d", 4)
    n = norms(x, sp)
    assert n.h_norm == pytest.approx(np.linalg.norm(x), rel=4e-16, abs=0)
    y, w = split(x)
    assert n.k_norm == pytest.approx(np.sqrt(np.sum(sp.lambdas * y**2 + sp.lambdas * w**2)),
                                     rel=1e-12, abs=1e-300)


def test_check_state_rejects_wrong_dimension():
    sp = build_spectrum("wave1d", 2)
    with pytest.raises(DimensionMismatch):
        norms(np.zeros(3), sp)


def test_basis_orthonormal_under_midpoint_rule():
    sp = build_spectrum("wave1d", 5, length=2.0)
    grid = default_grid(sp)
    B = basis_matrix(grid, sp)
    gram = (B * grid.weights) @ B.T
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-12)


def test_synthesize_analyze_roundtrip(rng):
    sp = build_spectrum("wave1d", 6)
    grid = default_grid(sp)
    a = rng.standard_normal(6)
    np.testing.assert_allclose(analyze(synthesize(a, grid, sp), grid, sp), a, atol=1e-12)


def test_analyze_matches_projection_integral():
    sp = build_spectrum("wave1d", 3)
    grid = FieldGrid.uniform(np.pi, 2000)
    f = lambda xi: xi * (np.pi - xi)  # noqa: E731
    ref = [quad(lambda s: f(s) * np.sqrt(2 / np.pi) * np.sin(n * s), 0, np.pi)[0]
           for n in (1, 2, 3)]
    np.testing.assert_allclose(analyze(f(grid.points), grid, sp), ref, atol=1e-6)


def test_grid_validation():
    sp = build_spectrum("wave1d", 4)
    with pytest.raises(InvalidArgument):
        basis_matrix(FieldGrid.uniform(1.0, 64), sp)
    with pytest.raises(InvalidArgument):
        basis_matrix(FieldGrid.uniform(np.pi, 4), sp)
