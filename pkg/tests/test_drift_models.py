import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from holderwave.drift_models import (bounded_sine_drift, closed_form_drift, constant_drift,
                                     counterexample_b, counterexample_drift, drift_from_config,
                                     evaluate, holder_power_drift, holder_probe, mollifier_nodes,
                                     mollify, nemytskii_drift, zero_drift)
from holderwave.errors import InvalidArgument, UnsupportedModel
from holderwave.spectral_core import build_spectrum

SP = build_spectrum("wave1d", 4)


def test_counterexample_branch_identity():
    tau = np.linspace(0, 1.05, 30)[:, None]
    xi = np.linspace(0, np.pi, 31)[None, :]
    y = tau**8 * np.sin(xi)
    lhs = 56 * tau**6 * np.sin(xi) + tau**8 * np.sin(xi)
    assert np.max(np.abs(lhs - counterexample_b(xi, y, 1.0))) <= 1e-12
    assert np.all(counterexample_b(xi, 0.0 * y, 1.0) == 0)


def test_counterexample_is_odd_and_saturates():
    xi = np.linspace(0.1, 3.0, 20)
    y = np.linspace(0.0, 5.0, 20)
    np.testing.assert_array_equal(counterexample_b(xi, -y, 1.0), -counterexample_b(xi, y, 1.0))
    above = counterexample_b(xi, np.full(20, 3.0), 1.0)
    np.testing.assert_allclose(above, counterexample_b(xi, np.full(20, 2.0), 1.0))


def test_counterexample_mutation_is_detected():
    def dropped(xi, y, T):
        m = np.minimum(np.abs(y), 2 * T**8)
        return np.sign(y) * 56 * np.sin(xi) ** 0.25 * m**0.75

    tau, xi = 0.9, 1.2
    y = tau**8 * np.sin(xi)
    resid = 56 * tau**6 * np.sin(xi) + y - dropped(xi, y, 1.0)
    assert resid == pytest.approx(y, rel=1e-12)


def test_counterexample_horizon_validation():
    with pytest.raises(InvalidArgument):
        counterexample_drift(0.0)


def _holder_pairs(drift, sp, x, h):
    bx = evaluate(drift, 0.0, x, sp)
    bxh = evaluate(drift, 0.0, x + h, sp)
    return np.linalg.norm(bx), np.linalg.norm(bxh - bx), np.linalg.norm(h)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-3, 3)),
       arrays(np.float64, 8, elements=st.floats(-1, 1)))
@pytest.mark.parametrize("drift", [counterexample_drift(1.0), bounded_sine_drift(),
                                   holder_power_drift()], ids=lambda d: d.name)
def test_declared_bound_and_holder_constant(drift, x, h):
    size, inc, step = _holder_pairs(drift, SP, x, h)
    assert size <= drift.bound * (1 + 1e-9)
    assert inc <= drift.holder_const * step**drift.alpha * (1 + 1e-9) + 1e-12


def test_constant_field_projection():
    # b = 1 projects onto sqrt(2/pi) (1 - (-1)^n) / n
    n = np.arange(1, 5)
    ref = np.sqrt(2 / np.pi) * (1 - (-1.0) ** n) / n
    errs = []
    for factor in (16, 32):
        one = nemytskii_drift(lambda tau, xi, y: np.ones_like(y), grid_factor=factor)
        errs.append(np.max(np.abs(evaluate(one, 0.0, np.zeros(8), SP) - ref)))
    assert errs[0] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)  # midpoint rule is second order


def test_bounded_sine_linearization():
    drift = bounded_sine_drift()
    x = np.zeros(8)
    x[0] = 1e-6
    out = evaluate(drift, 0.0, x, SP)
    np.testing.assert_allclose(out, [1e-6, 0, 0, 0], atol=1e-13)


def test_zero_and_closed_form():
    x = np.ones((3, 8))
    assert np.all(evaluate(zero_drift(), 0.0, x, SP) == 0)
    c = constant_drift([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(evaluate(c, 0.5, x, SP), np.tile([1.0, 2.0, 3.0, 4.0], (3, 1)))


def test_nemytskii_needs_wave1d():
    plate = build_spectrum("plate_asymptotic", 2, area=1.0)
    with pytest.raises(UnsupportedModel):
        evaluate(bounded_sine_drift(), 0.0, np.zeros(4), plate)


def test_drift_config_errors():
    with pytest.raises(InvalidArgument):
        drift_from_config({"name": "unknown"}, SP)
    with pytest.raises(InvalidArgument):
        drift_from_config({"name": "zero", "c": 2.0}, SP)
    assert drift_from_config({"name": "bounded_sine", "grid_factor": 8}, SP).grid_factor == 8


def test_holder_probe_exponents():
    assert holder_probe(bounded_sine_drift(), SP)["alpha_hat"] == pytest.approx(1.0, abs=0.05)
    assert holder_probe(counterexample_drift(1.0), SP)["alpha_hat"] == pytest.approx(0.75,
                                                                                       abs=0.05)
    assert holder_probe(zero_drift(), SP)["degenerate"]


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
def test_mollifier_weights(k):
    pts, w, D = mollifier_nodes(k, 8)
    assert D == min(k, 8)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(w > 0)
    assert np.all(np.linalg.norm(pts, axis=1) <= 1.0 / k + 1e-15)
    np.testing.assert_allclose(w @ pts, 0.0, atol=1e-15)


def test_mollify_reproduces_affine_drifts(rng):
    A = rng.standard_normal((4, 8))
    lin = closed_form_drift(lambda t, x, sp: x @ A.T + 1.0)
    x = rng.standard_normal((5, 8))
    for k in (2, 3, 4, 8):
        np.testing.assert_allclose(evaluate(mollify(lin, k, SP), 0.0, x, SP)[..., :],
                                   _proj_affine(A, x, k), atol=1e-12)


def _proj_affine(A, x, k):
    # mollified drift sees the state projected onto its first min(k, dim) coordinates
    D = min(k, x.shape[-1])
    xp = x.copy()
    xp[:, D:] = 0
    return xp @ A.T + 1.0


def test_mollification_converges_pointwise():
    drift = bounded_sine_drift()
    x = np.linspace(-0.5, 0.5, 8)
    ref = evaluate(drift, 0.0, x, SP)
    errs = [np.linalg.norm(evaluate(mollify(drift, k, SP), 0.0, x, SP) - ref) for k in (8, 16, 64)]
    assert errs[0] > errs[1] > errs[2]


def test_mollify_rejects_bad_index():
    with pytest.raises(InvalidArgument):
        mollify(bounded_sine_drift(), 0, SP)
