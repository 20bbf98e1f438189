# tests/test_pulse_physics.py

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from src.errors import InvalidParameterError, NoSolutionError, NumericalIntegrationError
from src.pulse_physics import (
    DEFAULT_GAMMA,
    K_EFF,
    STEPS_PER_PULSE,
    PulseConfig,
    T_of_theta,
    blackman,
    closed_form_phase,
    finite_pulse_phase,
    fit_acceleration,
    fit_gamma,
    theta_of_T,
)

A_EXT = 32.2e-3


def test_blackman_pulse_has_the_expected_area():
    t = np.linspace(0.0, 1.0, 20_001)
    assert simpson(blackman(t, 1.0), x=t) == pytest.approx(0.42, abs=1e-8)
    assert blackman(-0.1, 1.0) == 0.0


def test_omega0_makes_the_first_pulse_a_beam_splitter():
    cfg = PulseConfig(tau_s=1e-4)
    assert cfg.omega0 * 0.42 * cfg.tau_s == pytest.approx(math.pi / 2)


def test_closed_form_value_and_zero_time():
    cfg = PulseConfig(A_EXT, 1.7e-3)
    assert theta_of_T(cfg) == pytest.approx(3.0237, abs=2e-3)
    assert theta_of_T(cfg.at(0.0)) == 0.0


def test_closed_form_inverse_round_trip():
    cfg = PulseConfig(A_EXT)
    for T in np.linspace(0.2e-3, 5e-3, 25):
        assert T_of_theta(cfg, theta_of_T(cfg.at(T))) == pytest.approx(T, rel=1e-12)


def test_inverse_errors():
    with pytest.raises(InvalidParameterError):
        T_of_theta(PulseConfig(0.0), 1.0)
    with pytest.raises(NoSolutionError):
        T_of_theta(PulseConfig(A_EXT), -1e3)


def test_invalid_pulse_config():
    with pytest.raises(InvalidParameterError):
        PulseConfig(tau_s=0.0)
    with pytest.raises(InvalidParameterError):
        PulseConfig(T_s=float("inf"))


def test_finite_pulse_requires_separated_pulses():
    with pytest.raises(InvalidParameterError):
        finite_pulse_phase(PulseConfig(A_EXT, T_s=1e-4, tau_s=1e-4))


def test_finite_pulse_phase_is_zero_without_acceleration():
    assert finite_pulse_phase(PulseConfig(0.0, 1e-3)) == 0.0


def test_short_pulses_approach_the_instantaneous_limit():
    T = 1e-3
    theta = finite_pulse_phase(PulseConfig(A_EXT, T, tau_s=T / 1000))
    assert theta > 0
    assert theta == pytest.approx(2 * K_EFF * A_EXT * T * T, rel=1e-3)


def test_finite_pulse_phase_matches_closed_form():
    cfg = PulseConfig(A_EXT, 2e-3, tau_s=1e-4)
    assert finite_pulse_phase(cfg) == pytest.approx(theta_of_T(cfg), rel=1e-3)


def test_non_converging_integral_reports_diagnostics():
    with pytest.raises(NumericalIntegrationError) as info:
        finite_pulse_phase(PulseConfig(A_EXT, 1e-3), max_refinements=0)
    assert "steps" in info.value.diagnostics


def test_fit_gamma_reproduces_the_finite_pulse_coefficient():
    gamma = fit_gamma(1e-4, np.linspace(1e-3, 3e-3, 21), A_EXT)
    assert gamma == pytest.approx(DEFAULT_GAMMA, abs=5e-4)


def test_fit_acceleration_recovers_a_noiseless_series():
    template = PulseConfig(1.0, tau_s=1e-4)
    T = np.linspace(1e-3, 3e-3, 21)
    theta = closed_form_phase(T, A_EXT, 1e-4)
    a_ext, stderr = fit_acceleration(T, theta, template)
    assert a_ext == pytest.approx(A_EXT, rel=1e-12)
    assert stderr < 1e-12


def test_phase_increases_with_interrogation_time():
    theta = [finite_pulse_phase(PulseConfig(A_EXT, T, tau_s=1e-4)) for T in np.linspace(1.1e-3, 3e-3, 12)]
    assert np.all(np.diff(theta) > 0)


def test_halving_the_accepted_step_changes_the_phase_by_less_than_the_tolerance():
    cfg = PulseConfig(A_EXT, 1.7e-3, tau_s=1e-4)
    coarse = finite_pulse_phase(cfg)
    fine = finite_pulse_phase(cfg, steps_per_pulse=2 * STEPS_PER_PULSE)
    assert abs(fine - coarse) <= 1e-6 * abs(fine)


def test_fit_gamma_is_a_pulse_shape_constant():
    gamma = fit_gamma(2e-4, np.linspace(1e-3, 3e-3, 21), A_EXT)
    assert gamma == pytest.approx(DEFAULT_GAMMA, rel=0.05)
