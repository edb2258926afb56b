"""Acceptance criteria 1-11.

Each test records ``(passed, detail)`` in ``conftest.ACCEPTANCE``; the
terminal summary prints one PASS/FAIL line per criterion.  Runtimes exclude
the one-time numba compilation, which the ``warm_kernels`` fixture triggers
before anything is timed.
"""

import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE, COMPUTE_TIMES, GG, lab_run, operating_reduction, phase_distance, reduction_ladder

from spinlock.effective import YbLevelScheme, yb_effective_rates, yb_rates_closed_form
from spinlock.estimation import MeasurementConfig, extract_rates, tomography_resonant
from spinlock.labframe import LabFrameConfig, extract_phase, simulate_lab, spectrum
from spinlock.lindblad import integrate, integrate_bloch, steady_state, suggest_dt
from spinlock.phasespace import fit_s_profile, q_grid, s_function, s_profile
from spinlock.quantum import KET_1, bloch_array, pure_state, random_density, rho_from_bloch
from spinlock.runner import preset_config, run
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
    half_max_detuning,
    limit_cycle,
    steady_bloch,
    sync_phase,
)

DRIVE = DriveParams(OPERATING_EPSILON, 0.0, math.pi / 2)
STEADY_WINDOW = (300e-6, 2000e-6)
PHASE_WINDOW = (1250e-6, 2000e-6)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    model = build_rotating_model(OPERATING_RATES, DRIVE)
    integrate(model, pure_state(KET_1), (0.0, 1e-6), 1e-7)
    integrate_bloch(model, (0, 0, 1), (0.0, 1e-6), 1e-7)
    lab = LabFrameConfig(OPERATING_RATES, epsilon=OPERATING_EPSILON, duration=1e-7)
    simulate_lab(lab, pure_state(KET_1))


def record(n: int, checks: list) -> None:
    """Store the verdict for criterion ``n`` and fail the test if any check fails."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name}={'ok' if good else 'NO'} ({info})" for name, good, info in checks)
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_limit_cycle():
    t0 = time.perf_counter()
    lc = limit_cycle(OPERATING_RATES)
    numeric = bloch_array(steady_state(build_rotating_model(OPERATING_RATES, DriveParams(0.0))))
    model = build_rotating_model(OPERATING_RATES, DriveParams(0.0))
    dt = 200e-6 / math.ceil(200e-6 / suggest_dt(model))
    traj = integrate(model, pure_state(KET_1), (0.0, 200e-6), dt)
    gap = float(np.linalg.norm(traj.bloch[-1] - lc.as_array()))
    elapsed = time.perf_counter() - t0
    record(
        1,
        [
            ("analytic", lc.mx == 0 and lc.my == 0 and abs(lc.mz + 0.705) <= 5e-4, f"mz={lc.mz:.6f}"),
            ("numeric", np.max(np.abs(numeric - lc.as_array())) <= 1e-7, f"dev={np.max(np.abs(numeric - lc.as_array())):.1e}"),
            ("relax200us", gap <= 1e-3, f"gap={gap:.2e} at t={traj.times[-1] * 1e6:.1f}us, need<=1e-3"),
            ("runtime", elapsed < 1.0, f"{elapsed:.2f}s"),
        ],
    )


def test_criterion_02_synchronized_phase():
    t0 = time.perf_counter()
    analytic = sync_phase(OPERATING_RATES, DRIVE)
    res = run(preset_config("fig2"))
    fitted = res.report["s_phase"][2]
    state = res.data.trajectory.states[-1]
    grid_phi = np.linspace(0, 2 * math.pi, 20001)
    argmax = grid_phi[np.argmax(s_function(state, grid_phi))]
    elapsed = time.perf_counter() - t0
    record(
        2,
        [
            ("analytic", abs(analytic - math.pi) <= 1e-6, f"phi_s={analytic:.9f}"),
            ("t=400us fit", phase_distance(fitted, math.pi) <= 0.01, f"phase={fitted:.5f}"),
            ("t=400us argmax", phase_distance(argmax, math.pi) <= 0.01, f"argmax={argmax:.5f}"),
            ("runtime", elapsed < 1.0, f"{elapsed:.2f}s"),
        ],
    )


def test_criterion_03_contrast():
    c = contrast(OPERATING_RATES, OPERATING_EPSILON)
    # the measured 0.055(1) sits above the model value; the gap is attributed to
    # experimental systematics and is reported, not tested
    record(
        3,
        [
            ("analytic", abs(c - 0.0530) <= 5e-4, f"C={c:.6f}"),
            ("vs measured 0.055(1)", True, f"diff={0.055 - c:+.4f}, documented"),
        ],
    )


def test_criterion_04_bandwidth():
    t0 = time.perf_counter()
    eps = 1.87 * GG
    half = half_max_detuning(OPERATING_RATES, eps) / GG
    full = bandwidth_3db(OPERATING_RATES, eps) / GG
    elapsed = time.perf_counter() - t0
    record(
        4,
        [
            ("half", abs(half / 10.7 - 1) <= 0.02, f"{half:.4f} Gg"),
            ("full", abs(full / 21.4 - 1) <= 0.02, f"{full:.4f} Gg"),
            ("runtime", elapsed < 1.0, f"{elapsed:.3f}s"),
        ],
    )


def test_criterion_05_critical_strength():
    t0 = time.perf_counter()
    ec = critical_epsilon(OPERATING_RATES) / GG
    elapsed = time.perf_counter() - t0
    record(
        5,
        [
            ("eps_c", abs(ec / 4.18 - 1) <= 0.02, f"{ec:.5f} Gg"),
            ("runtime", elapsed < 1.0, f"{elapsed:.3f}s"),
        ],
    )


def test_criterion_06_deformation_saturation():
    t0 = time.perf_counter()
    p50 = deformation(OPERATING_RATES, 50 * GG)
    limit = -limit_cycle(OPERATING_RATES).mz
    elapsed = time.perf_counter() - t0
    record(
        6,
        [
            ("p(50 Gg)", abs(p50 - 0.705) <= 0.005, f"{p50:.5f}, need 0.705+-0.005"),
            ("eps->inf limit", abs(limit - 0.705) <= 0.005, f"{limit:.5f}"),
            ("runtime", elapsed < 1.0, f"{elapsed:.3f}s"),
        ],
    )


def test_criterion_07_forced_oscillation():
    t0 = time.perf_counter()
    cfg = preset_config("fig4c", {"params": {"epsilons": [{"value": 28.7, "unit": "gamma_g"}]}})
    (trace,) = run(cfg).report["traces"]
    freq = trace["fitted_frequency_over_gamma_g"]
    elapsed = time.perf_counter() - t0
    record(
        7,
        [
            ("fit", freq is not None and 27.1 <= freq <= 28.3, f"{freq:.4f} Gg, need [27.1, 28.3]"),
            ("runtime", elapsed < 10.0, f"{elapsed:.2f}s"),
        ],
    )


def test_criterion_08_entrainment():
    checks = []
    for offset in (0.0, -5.0, 10.0):
        cfg, tr = lab_run(offset)
        sp = spectrum(tr.times, tr.bloch[:, 0], STEADY_WINDOW)
        bins = (sp.peak - cfg.omega) / sp.bin_width
        checks.append((f"peak{offset:+g}Gg", abs(bins) <= 1, f"{bins:+.3f} bins"))
    cfg0, tr0 = lab_run(-5.0)
    cfg1, tr1 = lab_run(-5.0, math.pi / 2)
    p0 = extract_phase(tr0.times, tr0.bloch[:, 0], cfg0.omega, PHASE_WINDOW)
    p1 = extract_phase(tr1.times, tr1.bloch[:, 0], cfg1.omega, PHASE_WINDOW)
    shift = math.remainder(p1 - p0, 2 * math.pi)
    checks.append(("phase shift", abs(shift - math.pi / 2) <= 0.05, f"{shift:.4f} rad"))
    elapsed = sum(v for k, v in COMPUTE_TIMES.items() if isinstance(k, tuple) and k[0] == "lab")
    checks.append(("runtime", elapsed < 300, f"{elapsed:.1f}s"))
    record(8, checks)


def test_criterion_09_effective_operators(rng):
    scheme, rep = operating_reduction()
    ratios, devs, slope = reduction_ladder()
    worst = 0.0
    for _ in range(20):
        gamma = 2 * math.pi * rng.uniform(5e6, 40e6)
        delta_p = 2 * math.pi * rng.uniform(1e6, 20e6)
        rabi_g, rabi_d = 2 * math.pi * rng.uniform(1e4, 1e6, 2)
        s = YbLevelScheme.symmetric(rabi_g, rabi_d, gamma=gamma, delta_p=delta_p, raman_detuning=0.0)
        got, want = yb_effective_rates(s), yb_rates_closed_form(s)
        for name in ("gamma_g", "gamma_d", "gamma_z"):
            worst = max(worst, abs(getattr(got, name) / getattr(want, name) - 1))
    elapsed = COMPUTE_TIMES.get("reduction", 0.0) + COMPUTE_TIMES.get("ladder", 0.0)
    record(
        9,
        [
            ("deviation", rep.max_bloch_deviation <= 0.03, f"{rep.max_bloch_deviation:.4f}"),
            ("slope", abs(slope - 2) <= 0.3, f"{slope:.3f}"),
            ("closed form", worst <= 1e-12, f"rel={worst:.1e}"),
            ("runtime", elapsed < 120, f"{elapsed:.1f}s"),
        ],
    )


def test_criterion_10_rate_extraction():
    t0 = time.perf_counter()
    est = extract_rates(OPERATING_RATES, MeasurementConfig(shots=500))
    coh = 2 * OPERATING_RATES.gamma_z + (OPERATING_RATES.gamma_g + OPERATING_RATES.gamma_d) / 2
    sigma = math.hypot(est.errors["gamma_sum"], 0.39 * KHZ)
    elapsed = time.perf_counter() - t0
    rg = est.gamma_g / OPERATING_RATES.gamma_g - 1
    rd = est.gamma_d / OPERATING_RATES.gamma_d - 1
    rc = est.gamma_coherence / coh - 1
    record(
        10,
        [
            ("gamma_g", abs(rg) <= 0.1, f"{rg:+.3f}"),
            ("gamma_d", abs(rd) <= 0.1, f"{rd:+.3f}"),
            ("sum vs 8.59(39)", abs(est.gamma_sum - 8.59 * KHZ) <= 2 * sigma,
             f"{est.gamma_sum / KHZ:.2f}({est.errors['gamma_sum'] / KHZ:.2f}) 2pi kHz"),
            ("coherence", abs(rc) <= 0.1, f"{rc:+.3f}"),
            ("runtime", elapsed < 30, f"{elapsed:.2f}s"),
        ],
    )


def _min_eig(states):
    a, d = states[:, 0, 0].real, states[:, 1, 1].real
    b = np.abs(states[:, 0, 1])
    return 0.5 * (a + d - np.sqrt((a - d) ** 2 + 4 * b**2))


def test_criterion_11_property_suites():
    t0 = time.perf_counter()
    checks = []
    model = build_rotating_model(OPERATING_RATES, DRIVE)
    dt = suggest_dt(model)
    s = integrate(model, pure_state(KET_1), (0.0, 10**6 * dt), dt).states
    inv = (
        np.max(np.abs(np.trace(s, axis1=1, axis2=2) - 1)) <= 1e-9
        and np.max(np.abs(s - np.conj(np.swapaxes(s, 1, 2)))) <= 1e-12
        and np.min(_min_eig(s)) >= -1e-8
    )
    checks.append(("1e6-step invariants", bool(inv), f"{s.shape[0] - 1} steps"))
    del s

    horizon = 200e-6
    ref = integrate(model, pure_state(KET_1), (0.0, horizon), horizon / 10240, sample_every=10**9).final
    errs = [
        np.max(np.abs(integrate(model, pure_state(KET_1), (0.0, horizon), horizon / n, sample_every=10**9).final - ref))
        for n in (40, 80, 160)
    ]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    checks.append(("RK4 order", min(ratios) >= 8, f"ratios {ratios[0]:.1f}, {ratios[1]:.1f}"))

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        gg, gd, gz = rng.uniform(0.1, 10, 3) * KHZ
        drive = DriveParams(rng.uniform(0, 30) * gg, rng.uniform(-30, 30) * gg, rng.uniform(-math.pi, math.pi))
        rates = RateSet(gg, gd, gz)
        num = bloch_array(steady_state(build_rotating_model(rates, drive)))
        worst = max(worst, float(np.max(np.abs(num - np.asarray(steady_bloch(rates, drive))))))
    checks.append(("steady states", worst <= 1e-7, f"200 models, max dev {worst:.1e}"))

    norm_dev = max(abs(q_grid(random_density(rng, 2)).normalization() - 1) for _ in range(10))
    checks.append(("Q normalization", norm_dev <= 1e-6, f"{norm_dev:.1e}"))
    resid = max(fit_s_profile(s_profile(random_density(rng, 2), 64)).residual_rms for _ in range(50))
    checks.append(("S first harmonic", resid <= 1e-12, f"rms {resid:.1e}"))

    state = rho_from_bloch((0.3, -0.2, 0.5))
    shots = np.array([1e2, 1e3, 1e4])
    rms = []
    for n in shots:
        err = [
            np.sum((np.asarray(tomography_resonant(state, MeasurementConfig(int(n), 0.0, seed))) - (0.3, -0.2, 0.5)) ** 2)
            for seed in range(100)
        ]
        rms.append(math.sqrt(np.mean(err)))
    slope = np.polyfit(np.log(shots), np.log(rms), 1)[0]
    checks.append(("tomography 1/sqrt(N)", abs(slope + 0.5) <= 0.1, f"slope {slope:.3f}"))

    elapsed = time.perf_counter() - t0
    checks.append(("runtime", elapsed < 120, f"{elapsed:.1f}s"))
    record(11, checks)
