import csv
import math

import numpy as np
import pytest

from spinlock.phasespace import (
    SProfile,
    fit_s_profile,
    q_function,
    q_function_bloch,
    q_grid,
    s_function,
    s_function_bloch,
    s_function_quadrature,
    s_profile,
)
from spinlock.quantum import IDENTITY, KET_1, KET_PLUS, bloch_array, pure_state, random_density, rho_from_bloch
from spinlock.sync import OPERATING_EPSILON, OPERATING_RATES, DriveParams, limit_cycle, steady_bloch

DRIVE = DriveParams(OPERATING_EPSILON, 0.0, math.pi / 2)
# [DERIVED] closed-form contrast at the operating point, mpmath evaluation
ORACLE_CONTRAST = 0.0530081581674683


def test_q_of_simple_states():
    theta = np.linspace(0, math.pi, 9)[:, None]
    phi = np.linspace(0, 2 * math.pi, 7)[None, :]
    np.testing.assert_allclose(q_function(IDENTITY / 2, theta, phi), 1 / (4 * math.pi), atol=1e-15)
    q1 = q_function(pure_state(KET_1), theta, phi)
    np.testing.assert_allclose(q1, np.broadcast_to((1 + np.cos(theta)) / (4 * math.pi), q1.shape), atol=1e-15)
    assert q_function(pure_state(KET_1), 0.0, 0.3) == pytest.approx(1 / (2 * math.pi))


def test_q_of_limit_cycle_is_ring():
    rho = rho_from_bloch(limit_cycle(OPERATING_RATES))
    theta = np.linspace(0, math.pi, 33)[:, None]
    phi = np.linspace(0, 2 * math.pi, 16)[None, :]
    q = q_function(rho, theta, phi)
    mz = limit_cycle(OPERATING_RATES).mz
    np.testing.assert_allclose(q, np.broadcast_to((1 + mz * np.cos(theta)) / (4 * math.pi), q.shape), atol=1e-15)
    assert mz == pytest.approx(-0.705, abs=5e-4)


def test_q_matrix_and_bloch_forms_agree(rng):
    theta = rng.uniform(0, math.pi, 50)
    phi = rng.uniform(0, 2 * math.pi, 50)
    for _ in range(20):
        rho = random_density(rng, 2)
        m = bloch_array(rho)
        np.testing.assert_allclose(q_function(rho, theta, phi), q_function_bloch(m, theta, phi), atol=1e-12)


def test_q_grid_normalization_and_positivity(rng):
    for _ in range(10):
        grid = q_grid(random_density(rng, 2))
        assert grid.values.shape == (64, 128)
        assert np.all(grid.values >= 0)
        assert grid.normalization() == pytest.approx(1.0, abs=1e-6)


def test_q_grid_rejects_tiny_resolution():
    with pytest.raises(ValueError):
        q_grid(IDENTITY / 2, 1, 8)


def test_q_grid_csv(tmp_path):
    grid = q_grid(IDENTITY / 2, 5, 4)
    path = tmp_path / "q.csv"
    grid.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["theta", "phi", "q"] and len(rows) == 21
    assert float(rows[1][2]) == pytest.approx(1 / (4 * math.pi), rel=1e-16)


def test_s_function_examples():
    phi = np.linspace(0, 2 * math.pi, 64)
    np.testing.assert_allclose(s_function(rho_from_bloch(limit_cycle(OPERATING_RATES)), phi), 0.0, atol=1e-17)
    s_plus = s_function(pure_state(KET_PLUS), phi)
    assert s_plus.max() == pytest.approx(1 / 8) and phi[np.argmax(s_plus)] == 0.0


def test_s_function_of_synchronized_state():
    rho = rho_from_bloch(steady_bloch(OPERATING_RATES, DRIVE))
    assert s_function(rho, math.pi) == pytest.approx(ORACLE_CONTRAST / 2, rel=1e-10)
    assert s_function(rho, math.pi) == pytest.approx(0.0265, abs=1e-4)
    phi = np.linspace(0, 2 * math.pi, 4097)
    assert phi[np.argmax(s_function(rho, phi))] == pytest.approx(math.pi, abs=2e-3)


def test_s_quadrature_matches_closed_form(rng):
    phi = np.linspace(0, 2 * math.pi, 33)
    worst = 0.0
    for _ in range(100):
        rho = random_density(rng, 2)
        worst = max(worst, np.max(np.abs(s_function_quadrature(rho, phi) - s_function(rho, phi))))
    assert worst <= 1e-8


def test_s_integrates_to_zero(rng):
    phi = np.arange(256) * 2 * math.pi / 256
    for _ in range(20):
        s = s_function(random_density(rng, 2), phi)
        assert abs(np.mean(s) * 2 * math.pi) <= 1e-8


def test_fit_exact_synthetic_profile():
    phi = np.arange(16) * 2 * math.pi / 16
    prof = fit_s_profile(SProfile(phi, 0.025 * np.cos(phi - math.pi)))
    assert prof.fitted_contrast == pytest.approx(0.05, rel=1e-12)
    assert prof.fitted_phase == pytest.approx(math.pi, abs=1e-12)


def test_fit_synchronized_state_on_sixteen_nodes():
    rho = rho_from_bloch(steady_bloch(OPERATING_RATES, DRIVE))
    prof = fit_s_profile(s_profile(rho, 16))
    assert prof.fitted_contrast == pytest.approx(ORACLE_CONTRAST, rel=1e-10)
    assert prof.fitted_phase == pytest.approx(math.pi, abs=1e-9)


def test_fit_noise_robustness():
    rho = rho_from_bloch(steady_bloch(OPERATING_RATES, DRIVE))
    clean = s_profile(rho, 128)
    for seed in range(100):
        noisy = clean.values + np.random.default_rng(seed).normal(0, 1e-4, clean.values.shape)
        fit = fit_s_profile(SProfile(clean.phi_nodes, noisy))
        assert abs(fit.fitted_contrast - ORACLE_CONTRAST) / ORACLE_CONTRAST < 0.05


def test_fit_zero_profile():
    phi = np.arange(16) * 2 * math.pi / 16
    prof = fit_s_profile(SProfile(phi, np.zeros(16)))
    assert prof.fitted_contrast == 0 and prof.fitted_phase is None


def test_fit_requires_full_period():
    phi = np.linspace(0, math.pi, 16)
    with pytest.raises(ValueError):
        fit_s_profile(SProfile(phi, np.cos(phi)))


def test_s_is_first_harmonic(rng):
    for _ in range(50):
        rho = random_density(rng, 2)
        prof = fit_s_profile(s_profile(rho, 64))
        assert prof.residual_rms <= 1e-12
        m = bloch_array(rho)
        assert prof.fitted_contrast == pytest.approx(math.hypot(m[0], m[1]) / 4, rel=1e-10)


def test_s_bloch_form():
    assert s_function_bloch((0.4, 0.0, 0.1), 0.0) == pytest.approx(0.05)
