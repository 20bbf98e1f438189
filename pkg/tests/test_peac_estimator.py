# tests/test_peac_estimator.py

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from src.errors import (
    BranchDegenerateError,
    DegenerateRangeError,
    IncompleteDatasetError,
    InconsistentAmplitudeError,
    InvalidParameterError,
    SingularParameterError,
    UndefinedPhaseError,
)
from src.peac_estimator import (
    MERGE_THRESHOLD,
    Histogram,
    PdfParams,
    ThreeStateBranches,
    arcsine_pdf,
    build_histogram,
    collapse_amplitude,
    count_modes,
    fit_channel_suite,
    fit_collapse_curve,
    fit_histogram,
    initial_guesses,
    measure_merge_threshold,
    merge_threshold_curvature,
    nearest_branch,
    pdf_eval,
    reconstruct_theta_from_diff,
    reconstruct_theta_three_state,
    reconstruct_theta_two_state,
    sqrt_rule_bins,
    unwrap,
    unwrap_three_state,
)
from src.pulse_physics import PulseConfig, closed_form_phase
from src.signal_model import SQRT2, MixtureModel


def _fringe(amplitude, sigma, n, seed=0, mean=0.0):
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return mean + amplitude * np.cos(phi) + rng.normal(0.0, sigma, n)


# ---------------------------------------------------------------------------
# Histogram
# ---------------------------------------------------------------------------


def test_square_root_rule():
    assert sqrt_rule_bins(300) == 18
    assert sqrt_rule_bins(100) == 10
    assert build_histogram(_fringe(0.8, 0.06, 300)).nbins == 18


def test_histogram_density_integrates_to_one():
    h = build_histogram(_fringe(0.8, 0.06, 1000))
    assert h.total == 1000
    assert float(np.sum(h.density * h.widths)) == pytest.approx(1.0)


def test_histogram_rejects_degenerate_input():
    with pytest.raises(DegenerateRangeError):
        build_histogram([0.3, 0.3, 0.3])
    with pytest.raises(InvalidParameterError):
        build_histogram([0.3])
    with pytest.raises(InvalidParameterError):
        build_histogram([0.1, float("nan"), 0.2])


# ---------------------------------------------------------------------------
# Density
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("amplitude,sigma", [(0.8, 0.06), (0.1, 0.06), (0.8, 0.5), (0.0, 0.1)])
def test_pdf_is_normalised(amplitude, sigma):
    p = PdfParams(amplitude, 0.1, sigma)
    reach = amplitude + 8 * sigma
    s = np.arange(p.mean - reach, p.mean + reach, sigma / 20)
    assert simpson(pdf_eval(s, p), x=s) == pytest.approx(1.0, abs=1e-6)


def test_zero_amplitude_pdf_is_gaussian():
    s = np.linspace(-0.5, 0.5, 11)
    expected = np.exp(-0.5 * (s / 0.1) ** 2) / (0.1 * math.sqrt(2 * math.pi))
    assert np.allclose(pdf_eval(s, PdfParams(0.0, 0.0, 0.1)), expected, rtol=1e-10)


@pytest.mark.parametrize("amplitude,sigma", [(0.8, 0.063), (0.05, 0.3), (1.2, 0.01)])
def test_pdf_is_symmetric_about_the_mean(amplitude, sigma):
    p = PdfParams(amplitude, 0.2, sigma)
    x = np.linspace(0.0, amplitude + 4 * sigma, 57)
    assert np.allclose(pdf_eval(0.2 + x, p), pdf_eval(0.2 - x, p), rtol=0.0, atol=1e-10)


def test_small_sigma_approaches_the_arcsine_density():
    assert pdf_eval(0.5, PdfParams(1.0, 0.0, 1e-4)) == pytest.approx(1 / (math.pi * math.sqrt(0.75)), rel=1e-3)
    s = np.array([-0.6, -0.3, 0.0, 0.3, 0.6])
    assert np.allclose(pdf_eval(s, PdfParams(1.0, 0.0, 1e-3)), arcsine_pdf(s, 1.0), rtol=1e-3)


def test_pdf_scalar_and_singular_sigma():
    assert isinstance(pdf_eval(0.2, PdfParams(0.5, 0.0, 0.1)), float)
    with pytest.raises(SingularParameterError):
        pdf_eval(0.0, PdfParams(0.5, 0.0, 0.0))


def test_pdf_params_validation():
    with pytest.raises(InvalidParameterError):
        PdfParams(-0.1, 0.0, 0.1)
    with pytest.raises(InvalidParameterError):
        PdfParams(0.5, float("inf"), 0.1)
    assert PdfParams(0.5, 0.0, 0.1).double_peak
    assert not PdfParams(0.15, 0.0, 0.1).double_peak


def test_mode_count_changes_across_the_merge_threshold():
    assert count_modes(PdfParams(1.5, 0.0, 1.0)) == 1
    assert count_modes(PdfParams(2.2, 0.0, 1.0)) == 2


def test_measured_merge_threshold():
    assert 1.77 <= measure_merge_threshold() <= 1.79


def test_curvature_merge_threshold():
    assert merge_threshold_curvature() == pytest.approx(MERGE_THRESHOLD, abs=1e-3)


# ---------------------------------------------------------------------------
# Guesses and fits
# ---------------------------------------------------------------------------


def test_initial_guesses_are_in_the_right_range():
    h = build_histogram(_fringe(0.8, 0.05, 20_000, seed=1))
    guess = initial_guesses(h)
    assert not guess.low_confidence
    assert guess.params.amplitude == pytest.approx(0.8, rel=0.5)
    assert 0.5 * 0.05 <= guess.params.sigma <= 2.5 * 0.05
    assert guess.params.mean == pytest.approx(0.0, abs=0.02)


def test_peak_in_the_edge_bin_gives_a_low_confidence_guess():
    h = Histogram(np.linspace(0.0, 5.0, 6), np.array([1, 2, 5, 10, 20]), 38, 2.0)
    guess = initial_guesses(h)
    assert guess.low_confidence
    assert guess.params.sigma == pytest.approx(2.0 * math.sqrt(-1 / (2 * math.log(0.25))))
    with pytest.raises(InvalidParameterError):
        initial_guesses(h, k=1.5)


def test_edge_bin_guess_stays_quiet_at_warning_level(caplog):
    h = Histogram(np.linspace(0.0, 5.0, 6), np.array([1, 2, 5, 10, 20]), 38, 2.0)
    with caplog.at_level("WARNING", logger="src.peac_estimator"):
        assert initial_guesses(h).low_confidence
    assert caplog.records == []


def test_partly_filled_edge_bin_does_not_trigger_the_inward_search():
    counts = np.array([12, 34, 23, 15, 12, 12, 15, 23, 33, 10])
    h = Histogram(np.linspace(-1.0, 1.0, 11), counts, int(counts.sum()), 0.0)
    guess = initial_guesses(h)
    assert not guess.low_confidence
    # crossing of 34/4 between the edge-bin centre (12) and the range edge (0)
    s_k = -0.9 - 0.1 * (12 - 8.5) / 12
    sigma = abs(-0.7 - s_k) * math.sqrt(-1 / (2 * math.log(0.25)))
    assert guess.params.sigma == pytest.approx(sigma)
    assert guess.params.amplitude == pytest.approx(0.7 + sigma)


def test_initial_guesses_at_replication_noise():
    within = 0
    for seed in range(1000):
        guess = initial_guesses(build_histogram(_fringe(0.824, 0.063, 300, seed=seed))).params
        if abs(guess.sigma / 0.063 - 1) <= 0.5 and abs(guess.amplitude / 0.824 - 1) <= 0.5:
            within += 1
    assert within >= 950


def test_histogram_fit_recovers_parameters():
    fit = fit_histogram(_fringe(0.8, 0.063, 20_000, seed=2, mean=0.05))
    assert fit.converged
    assert fit.params.amplitude == pytest.approx(0.8, abs=0.02)
    assert fit.params.sigma == pytest.approx(0.063, abs=0.015)
    assert fit.params.mean == pytest.approx(0.05, abs=0.01)


def test_histogram_fit_respects_amplitude_bounds():
    fit = fit_histogram(_fringe(0.8, 0.063, 5000, seed=3), bounds=(0.0, 0.5))
    assert 0.0 <= fit.params.amplitude <= 0.5


def test_channel_suite_recovers_the_phase():
    rng = np.random.default_rng(4)
    n, a0, theta = 5000, 0.8, 1.2
    phi = rng.uniform(0.0, 2 * np.pi, n)
    plus = a0 * np.cos(phi + theta / 2) + rng.normal(0.0, 0.05, n)
    minus = a0 * np.cos(phi - theta / 2) + rng.normal(0.0, 0.05, n)
    suite = fit_channel_suite({"plus": plus, "minus": minus})
    assert suite.a0 == pytest.approx(a0, abs=0.03)
    assert suite.sum.params.amplitude <= SQRT2 * suite.a0
    assert reconstruct_theta_two_state(suite.sum.params.amplitude, suite.a0) == pytest.approx(theta, abs=0.06)
    assert reconstruct_theta_from_diff(suite.diff.params.amplitude, suite.a0) == pytest.approx(theta, abs=0.06)
    assert set(suite.to_dict()) == {"a0", "plus", "minus", "sum", "diff"}


def test_zero_amplitude_data_fits_a_single_peak():
    fit = fit_histogram(_fringe(0.0, 0.063, 5000, seed=5))
    assert not fit.params.double_peak
    assert fit.params.amplitude <= MERGE_THRESHOLD * 0.063


def _two_state_channels(theta, a0=0.8, sigma=0.05, n=5000, seed=6):
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    plus = a0 * np.cos(phi + theta / 2) + rng.normal(0.0, sigma, n)
    minus = a0 * np.cos(phi - theta / 2) + rng.normal(0.0, sigma, n)
    return {"plus": plus, "minus": minus}


def test_channel_suite_in_phase_and_anti_phase():
    in_phase = fit_channel_suite(_two_state_channels(0.0))
    assert in_phase.sum.params.amplitude == pytest.approx(SQRT2 * in_phase.a0, rel=0.03)
    assert in_phase.diff.params.amplitude <= 0.12

    anti_phase = fit_channel_suite(_two_state_channels(math.pi))
    assert anti_phase.sum.params.amplitude <= 0.12
    assert anti_phase.diff.params.amplitude == pytest.approx(SQRT2 * anti_phase.a0, rel=0.03)


@pytest.mark.parametrize("theta", [0.6, math.pi / 2, 2.4])
def test_principal_axis_energy_is_conserved(theta):
    suite = fit_channel_suite(_two_state_channels(theta))
    energy = suite.sum.params.amplitude**2 + suite.diff.params.amplitude**2
    assert energy == pytest.approx(2 * suite.a0**2, rel=0.05)


def test_channel_suite_needs_both_state_channels():
    with pytest.raises(IncompleteDatasetError):
        fit_channel_suite({"plus": _fringe(0.8, 0.05, 100)})


# ---------------------------------------------------------------------------
# Phase reconstruction
# ---------------------------------------------------------------------------


def test_two_state_round_trip():
    a0 = 0.79
    for theta in np.linspace(0.05, math.pi, 50):
        a_sum = SQRT2 * a0 * math.cos(theta / 2)
        a_diff = SQRT2 * a0 * math.sin(theta / 2)
        assert reconstruct_theta_two_state(a_sum, a0) == pytest.approx(theta, abs=1e-9)
        assert reconstruct_theta_from_diff(a_diff, a0) == pytest.approx(theta, abs=1e-9)


def test_two_state_edge_values():
    assert reconstruct_theta_two_state(SQRT2 * 0.8, 0.8) == 0.0
    assert reconstruct_theta_two_state(0.0, 0.8) == pytest.approx(math.pi)
    # within the clamp tolerance
    assert reconstruct_theta_two_state(SQRT2 * 0.8 * (1 + 1e-7), 0.8) == 0.0


def test_two_state_inversion_errors():
    with pytest.raises(InconsistentAmplitudeError):
        reconstruct_theta_two_state(1.2, 0.8)
    with pytest.raises(UndefinedPhaseError):
        reconstruct_theta_two_state(0.5, 0.0)
    with pytest.raises(InvalidParameterError):
        reconstruct_theta_from_diff(-0.1, 0.8)


@pytest.mark.parametrize("theta", [0.5, 1.3, 2.0, 2.7, 3.5, 4.2])
def test_three_state_round_trip(theta):
    model = MixtureModel.from_imbalance(0.42, 0.18, 0.79, theta)
    a_all = 0.79 * math.hypot(0.18 * math.sin(theta / 2), 0.42 + 0.58 * math.cos(theta / 2))
    branches = reconstruct_theta_three_state(a_all, model)
    assert min(abs(b - theta) for b in branches if not math.isnan(b)) < 1e-8


def test_three_state_inversion_errors():
    model = MixtureModel.from_imbalance(0.42, 0.18, 0.79)
    with pytest.raises(InconsistentAmplitudeError):
        reconstruct_theta_three_state(0.01, model)
    with pytest.raises(BranchDegenerateError):
        reconstruct_theta_three_state(0.3, MixtureModel(0.5, 0.5, 0.0, 0.79))
    with pytest.raises(UndefinedPhaseError):
        reconstruct_theta_three_state(0.3, MixtureModel(0.42, 0.4, 0.18, 0.0))


def test_nearest_branch():
    assert nearest_branch(0.3, 6.0) == pytest.approx(2 * math.pi - 0.3)
    assert nearest_branch(0.3, 0.2) == pytest.approx(0.3)
    # equidistant candidates resolve to the lower one
    assert nearest_branch(0.5, 0.0) == pytest.approx(-0.5)
    assert nearest_branch(math.pi, 2 * math.pi) == pytest.approx(math.pi)


def test_unwrap_quadratic_series_with_quadratic_prediction():
    k = np.arange(60)
    truth = 0.3 + 0.05 * k + 0.01 * k * k
    assert np.allclose(unwrap(np.mod(truth, 2 * np.pi), order=2), truth, atol=1e-9)


def test_unwrap_linear_series_with_linear_prediction():
    truth = 0.2 + 0.37 * np.arange(40)
    folded = np.abs(np.angle(np.exp(1j * truth)))
    assert np.allclose(unwrap(folded, order=1), truth, atol=1e-9)


def test_unwrap_edge_cases():
    assert unwrap([]).size == 0
    assert unwrap([-0.4])[0] == pytest.approx(0.4)
    with pytest.raises(InvalidParameterError):
        unwrap([0.1, 0.2], order=3)


# ---------------------------------------------------------------------------
# Collapse curve
# ---------------------------------------------------------------------------


def test_collapse_fit_recovers_noiseless_parameters():
    template = PulseConfig(32.2e-3, tau_s=1e-4)
    T = np.linspace(1e-3, 3e-3, 21)
    amplitudes = collapse_amplitude(T, 33.1e-3, 0.42, 0.18, 0.79, template)
    result = fit_collapse_curve(T, amplitudes, template)
    assert result.converged
    assert result.a_ext == pytest.approx(33.1e-3, rel=1e-6)
    assert result.lambda_0 == pytest.approx(0.42, abs=1e-5)
    assert result.delta_lambda == pytest.approx(0.18, abs=1e-5)
    assert result.a0 == pytest.approx(0.79, abs=1e-5)
    assert set(result.to_dict()["stderr"]) == {"a_ext_m_per_s2", "lambda0", "delta_lambda", "a0"}


def test_collapse_fit_needs_four_points():
    template = PulseConfig()
    with pytest.raises(InvalidParameterError):
        fit_collapse_curve([1e-3, 2e-3, 3e-3], [0.5, 0.4, 0.3], template)


def test_collapse_fit_with_one_percent_amplitude_noise():
    template = PulseConfig(32.2e-3, tau_s=1e-4)
    T = np.linspace(1e-3, 3e-3, 21)
    clean = collapse_amplitude(T, 32.2e-3, 0.42, 0.18, 0.79, template)
    for seed in range(10):
        noisy = clean * (1 + 0.01 * np.random.default_rng(seed).standard_normal(T.size))
        result = fit_collapse_curve(T, noisy, template)
        assert result.a_ext == pytest.approx(32.2e-3, rel=0.01)


def test_collapse_fit_of_a_balanced_mixture():
    template = PulseConfig(32.2e-3, tau_s=1e-4)
    T = np.linspace(1e-3, 3e-3, 21)
    result = fit_collapse_curve(T, collapse_amplitude(T, 32.2e-3, 0.42, 0.0, 0.79, template), template)
    assert result.delta_lambda == pytest.approx(0.0, abs=0.02)
    assert result.a_ext == pytest.approx(32.2e-3, rel=1e-3)
    assert result.lambda_0 == pytest.approx(0.42, abs=1e-3)


# ---------------------------------------------------------------------------
# Three-state series
# ---------------------------------------------------------------------------


def test_three_state_series_follows_the_true_branch():
    template = PulseConfig(32.2e-3, tau_s=1e-4)
    T = np.linspace(1e-3, 3e-3, 21)
    truth = closed_form_phase(T, 32.2e-3, 1e-4)
    model = MixtureModel.from_imbalance(0.42, 0.18, 0.79)
    amplitudes = collapse_amplitude(T, 32.2e-3, 0.42, 0.18, 0.79, template)
    branches = [reconstruct_theta_three_state(a, model) for a in amplitudes]
    # the series crosses both the branch merge near theta = 5 and theta = 2 pi
    assert truth[0] < 5.0 and truth[-1] > 2 * math.pi
    assert np.allclose(unwrap_three_state(branches, start=truth[0]), truth, atol=1e-6)


def test_three_state_series_skips_points_without_a_branch():
    branches = [
        ThreeStateBranches(0.4, 3.0),
        ThreeStateBranches(float("nan"), float("nan")),
        ThreeStateBranches(1.2, 2.6),
        ThreeStateBranches(1.6, float("nan")),
    ]
    series = unwrap_three_state(branches, order=0)
    assert series[0] == pytest.approx(0.4)
    assert math.isnan(series[1])
    assert series[2:] == pytest.approx([1.2, 1.6])
    assert unwrap_three_state([]).size == 0
    with pytest.raises(InvalidParameterError):
        unwrap_three_state(branches, order=5)


def test_three_state_series_bridges_a_missing_point_near_the_branch_merge():
    template = PulseConfig(32.2e-3, tau_s=1e-4)
    T = np.linspace(1e-3, 3e-3, 11)
    truth = closed_form_phase(T, 32.2e-3, 1e-4)
    model = MixtureModel.from_imbalance(0.42, 0.18, 0.79)
    amplitudes = collapse_amplitude(T, 32.2e-3, 0.42, 0.18, 0.79, template)
    branches = [reconstruct_theta_three_state(a, model) for a in amplitudes]
    gap = int(np.argmin(np.abs(truth - 5.0)))
    branches[gap] = ThreeStateBranches(float("nan"), float("nan"))
    keep = np.arange(T.size) != gap
    for times in (T, None):
        series = unwrap_three_state(branches, start=truth[0], times=times)
        assert math.isnan(series[gap])
        assert np.allclose(series[keep], truth[keep], atol=1e-6)
    with pytest.raises(InvalidParameterError):
        unwrap_three_state(branches, times=T[:-1])
