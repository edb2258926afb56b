"""Rotating-frame model of a dissipative qubit locked to an external drive.

All rates and frequencies are angular frequencies in rad/s.  The qubit sees

    H = (Delta / 2) sigma_z + (epsilon / 2) sigma_phi,
    dissipation = (Gamma_g/2) D[sigma_+] + (Gamma_d/2) D[sigma_-] + (Gamma_z/2) D[sigma_z],

with ``sigma_phi = cos(phi) sigma_x + sin(phi) sigma_y``.  The closed forms
below (stationary Bloch vector, contrast, locked phase, ...) are exact for
this model; :func:`build_rotating_model` produces the same model for the
numerical engine so both routes can be checked against each other.

Contrast convention: ``contrast`` is the peak-to-peak amplitude of the
S-function, so ``max_phi S = contrast / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, NoPhasePreference, ZeroContrastError
from .lindblad import LindbladTerm, OpenSystemModel
from .quantum import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z, BlochVector, sigma_phi

TWO_PI = 2 * math.pi
KHZ = TWO_PI * 1e3
MHZ = TWO_PI * 1e6


def wrap_phase(x: float) -> float:
    """Fold an angle into ``(-pi, pi]``."""
    y = math.remainder(x, TWO_PI)
    return math.pi if y == -math.pi else y


def wrap_2pi(x: float) -> float:
    y = math.fmod(x, TWO_PI)
    if y < 0:
        y += TWO_PI
    return 0.0 if y >= TWO_PI else y


@dataclass(frozen=True)
class RateSet:
    """Gain, damping and dephasing rates (rad/s)."""

    gamma_g: float
    gamma_d: float
    gamma_z: float = 0.0

    def __post_init__(self):
        for name in ("gamma_g", "gamma_d", "gamma_z"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite non-negative rate, got {value}")

    @property
    def gamma_t(self) -> float:
        return self.gamma_g + self.gamma_d + 4 * self.gamma_z

    @classmethod
    def from_khz(cls, gamma_g: float, gamma_d: float, gamma_z: float = 0.0) -> "RateSet":
        """Rates given as ``2 pi x kHz`` numbers."""
        return cls(gamma_g * KHZ, gamma_d * KHZ, gamma_z * KHZ)

    def scaled(self, factor: float) -> "RateSet":
        return RateSet(self.gamma_g * factor, self.gamma_d * factor, self.gamma_z * factor)


# Operating point of the trapped-ion experiment.
OPERATING_RATES = RateSet.from_khz(1.27, 7.33, 4.42)
OPERATING_EPSILON = 2.37 * KHZ


@dataclass(frozen=True)
class DriveParams:
    """Drive strength ``epsilon``, detuning ``delta = omega_q - omega`` and phase."""

    epsilon: float
    delta: float = 0.0
    varphi: float = math.pi / 2

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        object.__setattr__(self, "varphi", wrap_phase(float(self.varphi)))


@dataclass(frozen=True)
class SyncAnalytics:
    steady_bloch: BlochVector
    contrast: float
    phase_shift: float
    sync_phase: float | None


def _require_relaxing(rates: RateSet) -> None:
    if rates.gamma_g + rates.gamma_d <= 0:
        raise DegenerateModelError("gain and damping are both zero: the limit cycle is undefined")


def limit_cycle(rates: RateSet) -> BlochVector:
    """Drive-free stationary Bloch vector ``(0, 0, (Gg - Gd) / (Gg + Gd))``."""
    _require_relaxing(rates)
    return BlochVector(0.0, 0.0, (rates.gamma_g - rates.gamma_d) / (rates.gamma_g + rates.gamma_d))


def limit_cycle_theta0(rates: RateSet) -> float:
    """Polar angle of the latitude circle carrying the limit cycle."""
    return math.acos(limit_cycle(rates).mz)


def _denominator(rates: RateSet, epsilon, delta):
    gt = rates.gamma_t
    return (16 * np.square(delta) + gt**2) * (rates.gamma_g + rates.gamma_d) + 8 * gt * np.square(epsilon)


def steady_bloch(rates: RateSet, drive: DriveParams) -> BlochVector:
    """Closed-form stationary Bloch vector of the driven rotating-frame model."""
    eps, delta, phi = drive.epsilon, drive.delta, drive.varphi
    gt = rates.gamma_t
    den = float(_denominator(rates, eps, delta))
    if not den > 0:
        raise DegenerateModelError("all rates vanish: no unique stationary state")
    pre = 4 * eps * (rates.gamma_g - rates.gamma_d) / den
    mx = pre * (4 * delta * math.cos(phi) + gt * math.sin(phi))
    my = pre * (4 * delta * math.sin(phi) - gt * math.cos(phi))
    mz = (16 * delta**2 + gt**2) * (rates.gamma_g - rates.gamma_d) / den
    return BlochVector(mx, my, mz)


def contrast(rates: RateSet, epsilon, delta=0.0):
    """Peak-to-peak S-function contrast; broadcasts over ``epsilon`` and ``delta``."""
    x = 16 * np.square(delta) + rates.gamma_t**2
    out = np.asarray(epsilon) * abs(rates.gamma_g - rates.gamma_d) * np.sqrt(x) / _denominator(rates, epsilon, delta)
    return out if np.ndim(out) else float(out)


def phase_shift(rates: RateSet, delta: float) -> float:
    """Locked-phase shift ``arctan(4 Delta / Gamma_t)``."""
    if rates.gamma_t <= 0:
        raise DegenerateModelError("Gamma_t must be positive")
    return math.atan(4 * delta / rates.gamma_t)


def sync_phase(rates: RateSet, drive: DriveParams) -> float:
    """Phase maximizing the stationary S-function, folded into ``[0, 2 pi)``."""
    if rates.gamma_g == rates.gamma_d:
        raise NoPhasePreference("equal gain and damping: the qubit cannot be synchronized")
    sign = -1.0 if rates.gamma_g > rates.gamma_d else 1.0
    return wrap_2pi(drive.varphi + phase_shift(rates, drive.delta) + sign * math.pi / 2)


def sync_analytics(rates: RateSet, drive: DriveParams) -> SyncAnalytics:
    """Stationary state, contrast, phase shift and locked phase in one record.

    ``sync_phase`` is ``None`` when gain equals damping (the contrast is then
    zero); call :func:`sync_phase` directly to get the error instead.
    """
    m = steady_bloch(rates, drive)
    phi_s = None if rates.gamma_g == rates.gamma_d else sync_phase(rates, drive)
    return SyncAnalytics(
        steady_bloch=m,
        contrast=contrast(rates, drive.epsilon, drive.delta),
        phase_shift=phase_shift(rates, drive.delta),
        sync_phase=phi_s,
    )


def _golden_max(f, lo: float, hi: float, rtol: float) -> float:
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * max(abs(c), abs(d), 1e-300):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def critical_epsilon(rates: RateSet, delta: float = 0.0, rtol: float = 1e-6) -> float:
    """Drive strength maximizing the contrast, by golden-section search."""
    _require_relaxing(rates)
    scale = math.sqrt((16 * delta**2 + rates.gamma_t**2) * (rates.gamma_g + rates.gamma_d))
    hi = 10 * scale / math.sqrt(8 * rates.gamma_t) if rates.gamma_t > 0 else 1.0
    return _golden_max(lambda e: contrast(rates, e, delta), 0.0, hi, rtol)


def half_max_detuning(rates: RateSet, epsilon: float, rtol: float = 1e-6) -> float:
    """Detuning ``Delta_1/2 > 0`` where the contrast falls to half its resonant value.

    For drives above the critical strength the contrast first grows with
    detuning; the outer half-maximum crossing is returned.
    """
    if epsilon <= 0:
        raise ZeroContrastError("bandwidth is undefined without a drive")
    _require_relaxing(rates)
    c0 = contrast(rates, epsilon, 0.0)
    if c0 == 0:
        raise ZeroContrastError("resonant contrast is zero")
    gt = rates.gamma_t
    x_peak = 8 * gt * epsilon**2 / (rates.gamma_g + rates.gamma_d)
    lo = math.sqrt(max(0.0, x_peak - gt**2) / 16)
    hi = max(lo, gt, epsilon, 1.0)
    while contrast(rates, epsilon, hi) > c0 / 2:
        hi *= 2
    target = c0 / 2
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if contrast(rates, epsilon, mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bandwidth_3db(rates: RateSet, epsilon: float, rtol: float = 1e-6) -> float:
    """Full width ``2 Delta_1/2`` of the synchronization bandwidth."""
    return 2 * half_max_detuning(rates, epsilon, rtol)


def deformation(rates: RateSet, epsilon: float, delta: float = 0.0) -> float:
    """Change of ``<sigma_z>`` of the stationary state relative to the limit cycle.

    Off resonance (``delta != 0``) this is an extension of the resonant
    definition: both states are taken at the same detuning.
    """
    driven = steady_bloch(rates, DriveParams(epsilon, delta))
    free = steady_bloch(rates, DriveParams(0.0, delta))
    return driven.mz - free.mz


def build_rotating_model(rates: RateSet, drive: DriveParams) -> OpenSystemModel:
    h = 0.5 * drive.delta * SIGMA_Z + 0.5 * drive.epsilon * sigma_phi(drive.varphi)
    terms = (
        LindbladTerm(SIGMA_PLUS, rates.gamma_g / 2),
        LindbladTerm(SIGMA_MINUS, rates.gamma_d / 2),
        LindbladTerm(SIGMA_Z, rates.gamma_z / 2),
    )
    return OpenSystemModel(h, terms)


def forced_oscillation_frequency(rates: RateSet, epsilon: float) -> float:
    """Angular frequency of the damped transient on resonance.

    On resonance the (sigma_phi-orthogonal, z) pair of Bloch components obeys
    a 2x2 linear system with damping ``Gamma_t/4`` and ``(Gg + Gd)/2``; its
    complex eigenvalues oscillate at ``sqrt(eps^2 - ((Gt/4 - (Gg+Gd)/2)/2)^2)``.
    Returns 0 for an overdamped transient.
    """
    a = rates.gamma_t / 4
    b = (rates.gamma_g + rates.gamma_d) / 2
    disc = epsilon**2 - ((a - b) / 2) ** 2
    return math.sqrt(disc) if disc > 0 else 0.0
