"""Spectral laboratory for semilinear stochastic wave equations with Hölder drift."""

__version__ = "0.1.0"

from .control_energy import (ControlSignal, bump_phi, control_energy, minimal_energy,
                             null_control, steer)
from .drift_models import (DriftSpec, bounded_sine_drift, constant_drift, counterexample_b,
                           counterexample_drift, evaluate, holder_power_drift, holder_probe,
                           mollify, zero_drift)
from .errors import *  # noqa: F401,F403
from .gaussian_law import (ModeBlockCovariance, cameron_martin_weight, covariance, gamma_apply,
                           sample_convolution)
from .kolmogorov_fixpoint import (PicardOperator, QuadratureRule, VField, bsde_residual,
                                  horizon_bound, picard_step, solve_v, zvonkin_residual)
from .mild_integrator import (NoisePanel, TimeGrid, Trajectory, couple, draw_noise_panel,
                              simulate, simulate_deterministic)
from .smoothing_semigroup import (TestFunctional, derivative_cm, gradG_hs_norm, scaling_fit,
                                  semigroup_value)
from .spectral_core import (FieldGrid, ModeSpectrum, analyze, build_spectrum, norms,
                            synthesize, trace_lambda_inverse)
from .wave_group import apply_G, generator_apply, group_apply
