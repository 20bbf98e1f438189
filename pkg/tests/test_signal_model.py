# tests/test_signal_model.py

import math

import numpy as np
import pytest

from src.errors import DivisionDegenerateError, InvalidParameterError, PhysicalityWarning
from src.signal_model import (
    MixtureModel,
    ScanConfig,
    SignalParams,
    amplitude_three_state,
    draw_phases,
    generate_samples,
    normalize_ports,
    offset_phase_three_state,
    rotate_bivariate,
    simulate_port_counts,
    substream,
    sum_diff,
    superpose_cosines,
    three_state_terms,
)


def test_noiseless_samples_sit_on_the_fringe_maximum():
    values = generate_samples(SignalParams(0.5), 0.0, ScanConfig((0.0,), 4, seed=1), 12)
    assert np.all(values == 0.5)


def test_zero_amplitude_samples_equal_the_baseline():
    scan = ScanConfig.evenly_spaced(5, 3, seed=2)
    values = generate_samples(SignalParams(0.0, 0.2), 1.3, scan, 15)
    assert np.allclose(values, 0.2, rtol=0, atol=1e-15)


def test_uniform_phase_sample_spread_matches_model():
    params = SignalParams(0.824, 0.0, 0.063)
    scan = ScanConfig(phase_stable=False, seed=7)
    values = generate_samples(params, 0.0, scan, 100_000)
    expected = math.sqrt(0.824**2 / 2 + 0.063**2)
    assert values.std() == pytest.approx(expected, rel=0.01)


def test_same_seed_gives_identical_samples():
    scan = ScanConfig(phase_stable=False, seed=11)
    params = SignalParams(0.6, 0.1, 0.05)
    a = generate_samples(params, 0.4, scan, 500)
    b = generate_samples(params, 0.4, scan, 500)
    assert np.array_equal(a, b)


def test_stepped_scan_repeats_each_phase():
    scan = ScanConfig((0.0, 1.0, 2.0), repetitions=2)
    assert np.array_equal(draw_phases(scan, 7), [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 0.0])


def test_substreams_are_reproducible_and_distinct():
    a = substream(5, 1, 2).random(4)
    b = substream(5, 1, 2).random(4)
    c = substream(5, 2, 1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_invalid_signal_parameters_are_rejected():
    with pytest.raises(InvalidParameterError):
        SignalParams(-0.1)
    with pytest.raises(InvalidParameterError):
        SignalParams(0.5, float("nan"))
    with pytest.raises(InvalidParameterError):
        SignalParams(0.5, 0.0, -1.0)
    with pytest.raises(InvalidParameterError):
        ScanConfig((0.0,), repetitions=0)


def test_unphysical_signal_warns_but_is_accepted():
    with pytest.warns(PhysicalityWarning):
        params = SignalParams(0.9, 0.2)
    assert params.amplitude == 0.9


# ---------------------------------------------------------------------------
# Harmonic addition
# ---------------------------------------------------------------------------


def test_single_cosine_is_returned_unchanged():
    amplitude, offset = superpose_cosines([1.0], [0.3])
    assert amplitude == pytest.approx(1.0, abs=1e-15)
    assert offset == pytest.approx(0.3, abs=1e-15)


def test_cancelling_cosines_give_zero_amplitude_and_zero_offset():
    assert superpose_cosines([1.0, 1.0], [0.0, math.pi]) == (0.0, 0.0)


def test_empty_superposition_is_rejected():
    with pytest.raises(InvalidParameterError):
        superpose_cosines([], [])


def test_superposition_matches_brute_force_maximum():
    rng = np.random.default_rng(3)
    phi = np.linspace(0.0, 2.0 * np.pi, 20_001)
    for _ in range(50):
        n = rng.integers(1, 6)
        weights = rng.uniform(-1.0, 1.0, n)
        phases = rng.uniform(-np.pi, np.pi, n)
        total = (weights[:, None] * np.cos(phi[None, :] + phases[:, None])).sum(axis=0)
        amplitude, offset = superpose_cosines(weights, phases)
        assert amplitude == pytest.approx(total.max(), abs=1e-6)
        assert np.allclose(total, amplitude * np.cos(phi + offset), atol=1e-12)


def test_three_state_amplitude_examples():
    assert amplitude_three_state(MixtureModel(1.0, 0.0, 0.0, 0.79, 1.234)) == pytest.approx(0.79)
    assert amplitude_three_state(MixtureModel.two_state(0.8, math.pi)) == pytest.approx(0, abs=1e-12)
    model = MixtureModel.from_imbalance(0.42, 0.18, 0.79, math.pi)
    assert amplitude_three_state(model) == pytest.approx(0.361, abs=1e-3)


def test_three_state_closed_form_agrees_with_harmonic_addition():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        lam = rng.uniform(0.0, 1.0, 3)
        model = MixtureModel(lam[0], lam[1], lam[2], rng.uniform(0.1, 1.0), rng.uniform(0, 4 * np.pi))
        amplitude, offset = superpose_cosines(*three_state_terms(model))
        assert amplitude_three_state(model) == pytest.approx(amplitude, abs=1e-10)
        if amplitude > 1e-6:
            gap = np.angle(np.exp(1j * (offset_phase_three_state(model) - offset)))
            assert abs(gap) < 1e-10


def test_mixture_derived_quantities():
    model = MixtureModel.from_imbalance(0.42, 0.18, 0.79)
    assert model.delta_lambda == pytest.approx(0.18)
    assert model.big_lambda == pytest.approx(1.0)
    assert MixtureModel.two_state(0.8).big_lambda == pytest.approx(math.sqrt(2))
    with pytest.raises(InvalidParameterError):
        MixtureModel(-0.1, 0.5, 0.5, 0.8)


# ---------------------------------------------------------------------------
# Rotation and ports
# ---------------------------------------------------------------------------


def test_rotation_examples():
    assert rotate_bivariate(1.0, 1.0, math.pi / 4) == pytest.approx(math.sqrt(2))
    assert rotate_bivariate(1.0, 1.0, 3 * math.pi / 4) == pytest.approx(0.0, abs=1e-15)
    assert rotate_bivariate(0.3, -0.1, math.pi / 4) == pytest.approx(0.1414213562, abs=1e-9)


def test_rotation_preserves_sum_of_squares():
    rng = np.random.default_rng(5)
    s_minus, s_plus = rng.normal(size=(2, 200))
    for alpha in rng.uniform(0, 2 * np.pi, 20):
        r1 = rotate_bivariate(s_minus, s_plus, alpha)
        r2 = rotate_bivariate(s_minus, s_plus, alpha + math.pi / 2)
        assert np.allclose(r1**2 + r2**2, s_minus**2 + s_plus**2, atol=1e-12)


def test_sum_diff_are_the_diagonal_rotations():
    rng = np.random.default_rng(6)
    s_plus, s_minus = rng.normal(size=(2, 50))
    s_sum, s_diff = sum_diff(s_plus, s_minus)
    assert np.allclose(s_sum, rotate_bivariate(s_minus, s_plus, math.pi / 4), atol=1e-15)
    assert np.allclose(s_diff, rotate_bivariate(s_minus, s_plus, 3 * math.pi / 4), atol=1e-15)


def test_normalize_ports():
    assert normalize_ports(100, 100) == 0.0
    assert normalize_ports(150, 50) == 0.5
    with pytest.raises(DivisionDegenerateError):
        normalize_ports(0, 0)


def test_port_counts_reduce_to_a_homoscedastic_fringe():
    rng = np.random.default_rng(8)
    phi = rng.uniform(0.0, 2 * np.pi, 20_000)
    n0, n1 = simulate_port_counts(1000.0, 1000.0, 400.0, 20.0, phi, rng)
    signal = normalize_ports(n0, n1)
    design = np.column_stack([np.cos(phi), np.ones_like(phi)])
    (amplitude, offset), *_ = np.linalg.lstsq(design, signal, rcond=None)
    assert amplitude == pytest.approx(0.4, rel=0.02)
    assert abs(offset) < 0.01
