import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinlock.errors import DegenerateModelError, NoPhasePreference, ZeroContrastError
from spinlock.lindblad import integrate, steady_state, suggest_dt
from spinlock.phasespace import s_function_bloch
from spinlock.quantum import KET_1, SIGMA_Y, SIGMA_Z, bloch_array, pure_state, rho_from_bloch
from spinlock.sync import (
    KHZ,
    OPERATING_EPSILON,
    OPERATING_RATES,
    DriveParams,
    RateSet,
    bandwidth_3db,
    build_rotating_model,
    contrast,
    critical_epsilon,
    deformation,
    forced_oscillation_frequency,
    half_max_detuning,
    limit_cycle,
    limit_cycle_theta0,
    phase_shift,
    steady_bloch,
    sync_analytics,
    sync_phase,
)

GG = OPERATING_RATES.gamma_g
DRIVE = DriveParams(OPERATING_EPSILON, 0.0, math.pi / 2)

# [DERIVED] values from a hand-derived Bloch system in 40-digit arithmetic
# (mpmath: linear solve, numeric differentiation and root finding)
ORACLE_STEADY = (-0.212032632669873, 0.0, -0.587786665249395)
ORACLE_CONTRAST = 0.0530081581674683
ORACLE_EPS_C = 4.18517084852101  # units of gamma_g
ORACLE_HALF_WIDTH = 10.7894329381386  # units of gamma_g, eps = 1.87 gamma_g
ORACLE_DEFORM_375 = 0.313797844330017
ORACLE_THETA0 = 2.35272772363787


def test_rate_set():
    r = RateSet(1.0, 2.0, 3.0)
    assert r.gamma_t == 15.0
    with pytest.raises(ValueError):
        RateSet(-1.0, 1.0)
    assert RateSet.from_khz(1.27, 7.33).gamma_g == pytest.approx(2 * math.pi * 1270)
    assert r.scaled(2).gamma_t == 30.0


def test_drive_phase_normalized():
    assert DriveParams(1.0, 0.0, 3 * math.pi / 2).varphi == pytest.approx(-math.pi / 2)
    assert DriveParams(1.0, 0.0, -math.pi).varphi == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        DriveParams(-1.0)


def test_limit_cycle_values():
    assert limit_cycle(OPERATING_RATES).mz == pytest.approx(-0.705, abs=5e-4)
    assert limit_cycle(RateSet(3.0, 3.0)) == (0.0, 0.0, 0.0)
    assert limit_cycle(RateSet(3.0, 0.0)).mz == 1.0
    with pytest.raises(DegenerateModelError):
        limit_cycle(RateSet(0.0, 0.0, 1.0))


def test_limit_cycle_theta0():
    assert limit_cycle_theta0(OPERATING_RATES) == pytest.approx(ORACLE_THETA0, rel=1e-12)
    assert limit_cycle_theta0(OPERATING_RATES) == pytest.approx(math.acos(-0.705), abs=1e-3)
    assert limit_cycle_theta0(RateSet(2.0, 2.0)) == pytest.approx(math.pi / 2)
    assert limit_cycle_theta0(RateSet(2.0, 0.0)) == 0.0


def test_steady_bloch_examples():
    assert steady_bloch(OPERATING_RATES, DriveParams(0.0)) == pytest.approx(tuple(limit_cycle(OPERATING_RATES)), abs=1e-15)
    m = steady_bloch(OPERATING_RATES, DRIVE)
    assert m == pytest.approx(ORACLE_STEADY, abs=1e-12)
    assert m.mx < 0 and m.my == pytest.approx(0, abs=1e-15)
    assert steady_bloch(RateSet(5.0, 5.0, 1.0), DriveParams(3.0, 2.0, 0.7)) == (0.0, 0.0, 0.0)
    with pytest.raises(DegenerateModelError):
        steady_bloch(RateSet(0, 0, 0), DriveParams(1.0))


def test_steady_bloch_matches_numeric_at_operating_point():
    rho = steady_state(build_rotating_model(OPERATING_RATES, DRIVE))
    np.testing.assert_allclose(bloch_array(rho), steady_bloch(OPERATING_RATES, DRIVE), atol=1e-8)


def test_sync_analytics():
    a = sync_analytics(OPERATING_RATES, DRIVE)
    assert a.contrast == pytest.approx(ORACLE_CONTRAST, rel=1e-12)
    assert a.contrast == pytest.approx(0.053, abs=5e-4)
    assert a.sync_phase == pytest.approx(math.pi, abs=1e-12)
    assert a.phase_shift == 0.0
    equal = sync_analytics(RateSet(1.0, 1.0), DRIVE)
    assert equal.sync_phase is None and equal.contrast == 0
    with pytest.raises(NoPhasePreference):
        sync_phase(RateSet(1.0, 1.0), DRIVE)


def test_contrast_vanishes_far_off_resonance():
    c = [contrast(OPERATING_RATES, OPERATING_EPSILON, d * GG) for d in (1e2, 1e4, 1e6)]
    assert c[0] > c[1] > c[2] and c[2] < 1e-6


def test_critical_epsilon():
    ec = critical_epsilon(OPERATING_RATES)
    assert ec / GG == pytest.approx(ORACLE_EPS_C, rel=1e-6)
    assert ec / GG == pytest.approx(4.18, rel=0.02)
    h = ec * 1e-4
    slope = (contrast(OPERATING_RATES, ec + h) - contrast(OPERATING_RATES, ec - h)) / (2 * h)
    assert abs(slope * ec / contrast(OPERATING_RATES, ec)) <= 1e-6
    assert critical_epsilon(OPERATING_RATES.scaled(2)) == pytest.approx(2 * ec, rel=1e-6)


def test_bandwidth():
    half = half_max_detuning(OPERATING_RATES, 1.87 * GG)
    assert half / GG == pytest.approx(ORACLE_HALF_WIDTH, rel=1e-6)
    assert half / GG == pytest.approx(10.7, rel=0.02)
    assert bandwidth_3db(OPERATING_RATES, 1.87 * GG) == pytest.approx(2 * half, rel=1e-12)
    c0 = contrast(OPERATING_RATES, 1.87 * GG)
    assert contrast(OPERATING_RATES, 1.87 * GG, half) == pytest.approx(c0 / 2, rel=1e-5)
    widths = [bandwidth_3db(OPERATING_RATES, e * GG) for e in np.linspace(0.5, 5, 19)]
    assert np.all(np.diff(widths) > 0)
    with pytest.raises(ZeroContrastError):
        bandwidth_3db(OPERATING_RATES, 0.0)


def test_deformation():
    assert deformation(OPERATING_RATES, 0.0) == 0.0
    assert deformation(OPERATING_RATES, 1e4 * GG) == pytest.approx(-limit_cycle(OPERATING_RATES).mz, rel=1e-6)
    assert deformation(OPERATING_RATES, 3.75 * GG) == pytest.approx(ORACLE_DEFORM_375, rel=1e-12)
    eps = 3.75 * GG
    rho = steady_state(build_rotating_model(OPERATING_RATES, DriveParams(eps)))
    numeric = bloch_array(rho)[2] - limit_cycle(OPERATING_RATES).mz
    assert deformation(OPERATING_RATES, eps) == pytest.approx(numeric, abs=1e-8)


def test_deformation_monotone_when_damping_dominates():
    eps = np.linspace(0, 60, 601) * GG
    for delta in (0.0, 7 * GG):
        p = np.array([deformation(OPERATING_RATES, e, delta) for e in eps])
        assert np.all(np.diff(p) >= -1e-15)


def test_rotating_hamiltonian_form():
    drive = DriveParams(3.0, 2.0, math.pi / 2)
    model = build_rotating_model(OPERATING_RATES, drive)
    np.testing.assert_allclose(model.hamiltonian, 0.5 * (2.0 * SIGMA_Z + 3.0 * SIGMA_Y), atol=1e-15)
    rho = steady_state(build_rotating_model(OPERATING_RATES, DriveParams(0.0)))
    np.testing.assert_allclose(bloch_array(rho), tuple(limit_cycle(OPERATING_RATES)), atol=1e-12)


def test_first_stage_relaxation_toward_limit_cycle():
    model = build_rotating_model(OPERATING_RATES, DriveParams(0.0))
    traj = integrate(model, pure_state(KET_1), (0.0, 200e-6), suggest_dt(model))
    mz = traj.bloch[:, 2]
    assert mz[0] == 1.0 and np.all(np.diff(mz) < 0)
    assert -0.705 < mz[-1] < -0.69


def test_forced_oscillation_frequency_matches_eigenvalues():
    # [DERIVED] imaginary part of the Bloch-matrix eigenvalues (mpmath): 28.6860819719703 gamma_g
    assert forced_oscillation_frequency(OPERATING_RATES, 28.7 * GG) / GG == pytest.approx(28.6860819719703, rel=1e-12)
    assert forced_oscillation_frequency(OPERATING_RATES, 0.1 * GG) == 0.0


rates_st = st.floats(0.1, 10.0).map(lambda x: x * KHZ)


@settings(max_examples=200, deadline=None, derandomize=True)
@given(rates_st, rates_st, rates_st, st.floats(0, 30), st.floats(-30, 30), st.floats(-math.pi, math.pi))
def test_analytic_vs_numeric_steady_state(gg, gd, gz, eps, delta, phi):
    rates = RateSet(gg, gd, gz)
    drive = DriveParams(eps * gg, delta * gg, phi)
    numeric = bloch_array(steady_state(build_rotating_model(rates, drive)))
    assert np.max(np.abs(numeric - np.asarray(steady_bloch(rates, drive)))) <= 1e-7


@settings(max_examples=100, deadline=None, derandomize=True)
@given(rates_st, rates_st, rates_st, st.floats(0.01, 30), st.floats(-30, 30), st.floats(-math.pi, math.pi))
def test_s_maximum_at_sync_phase(gg, gd, gz, eps, delta, phi):
    if abs(gg - gd) < 1e-3 * (gg + gd):
        return
    rates = RateSet(gg, gd, gz)
    drive = DriveParams(eps * gg, delta * gg, phi)
    m = steady_bloch(rates, drive)
    phi_s = sync_phase(rates, drive)
    argmax = math.atan2(m.my, m.mx)
    assert abs(math.remainder(argmax - phi_s, 2 * math.pi)) <= 1e-9
    peak = s_function_bloch(m, phi_s)
    assert peak == pytest.approx(contrast(rates, drive.epsilon, drive.delta) / 2, rel=1e-10, abs=1e-16)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(rates_st, rates_st, st.floats(0, 50), st.floats(-30, 30), st.floats(-math.pi, math.pi))
def test_unsynchronizable_is_exactly_zero(g, gz, eps, delta, phi):
    rates = RateSet(g, g, gz)
    assert steady_bloch(rates, DriveParams(eps * g, delta * g, phi)) == (0.0, 0.0, 0.0)


def test_phase_shift_sign():
    assert phase_shift(OPERATING_RATES, 5 * GG) > 0
    rho = rho_from_bloch(steady_bloch(OPERATING_RATES, DRIVE))
    assert bloch_array(rho)[0] < 0
