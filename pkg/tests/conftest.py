import math
import time

import numpy as np
import pytest

from spinlock.labframe import LabFrameConfig, simulate_lab
from spinlock.quantum import rho_from_bloch
from spinlock.sync import OPERATING_EPSILON, OPERATING_RATES, limit_cycle

GG = OPERATING_RATES.gamma_g

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_LAB_CACHE: dict = {}
# wall time of the first (uncached) computation, keyed like the caches
COMPUTE_TIMES: dict = {}


def lab_run(offset_gg: float, varphi: float = 0.0, epsilon: float = OPERATING_EPSILON):
    """Cached 2 ms lab-frame run from the limit cycle with the drive at ``omega_q + offset``."""
    key = (offset_gg, varphi, epsilon)
    if key not in _LAB_CACHE:
        base = LabFrameConfig(OPERATING_RATES)
        cfg = LabFrameConfig(
            OPERATING_RATES,
            epsilon=epsilon,
            omega=base.omega_q + offset_gg * GG,
            varphi=varphi,
        )
        rho0 = rho_from_bloch(limit_cycle(OPERATING_RATES))
        t0 = time.perf_counter()
        _LAB_CACHE[key] = (cfg, simulate_lab(cfg, rho0))
        COMPUTE_TIMES[("lab", key)] = time.perf_counter() - t0
    return _LAB_CACHE[key]


@pytest.fixture(scope="session")
def lab_runs():
    return lab_run


def phase_distance(a: float, b: float) -> float:
    return abs(math.remainder(a - b, 2 * math.pi))


_REDUCTION_CACHE: dict = {}


def operating_reduction():
    """Full vs effective run over 400 us for the operating-point rates (cached)."""
    from spinlock.effective import LAB_SCHEME_RATES, YbLevelScheme, validate_reduction

    if "report" not in _REDUCTION_CACHE:
        scheme = YbLevelScheme.for_rates(*LAB_SCHEME_RATES)
        t0 = time.perf_counter()
        _REDUCTION_CACHE["report"] = (scheme, validate_reduction(scheme, 400e-6))
        COMPUTE_TIMES["reduction"] = time.perf_counter() - t0
    return _REDUCTION_CACHE["report"]


def reduction_ladder():
    """Three-point Rabi ladder without repump leakage (cached)."""
    from spinlock.effective import LAB_SCHEME_RATES, YbLevelScheme, reduction_scaling

    if "ladder" not in _REDUCTION_CACHE:
        scheme = YbLevelScheme.for_rates(*LAB_SCHEME_RATES, rabi_r1=0.0)
        t0 = time.perf_counter()
        _REDUCTION_CACHE["ladder"] = reduction_scaling(scheme)
        COMPUTE_TIMES["ladder"] = time.perf_counter() - t0
    return _REDUCTION_CACHE["ladder"]
