"""Lab-frame simulation of the driven qubit and spectral analysis of its coherence.

The lab-frame Hamiltonian is

    H(t) = (omega_q / 2) sigma_z + epsilon sigma_x cos(omega t + varphi)

with the same dissipators as the rotating-frame model.  Within the rotating
wave approximation its frame rotating at ``omega`` reproduces the sync model
with ``Delta = omega_q - omega``, and the lab coherence is

    m_x(t) + i m_y(t) = (m~_x + i m~_y) exp(i omega t),

so a steady rotating-frame state shows up as ``m_x(t) = A cos(omega t + psi)``
with ``A exp(i psi) = m~_x + i m~_y``.  :func:`extract_phase` returns ``psi``.

Spectra are one-sided FFT magnitudes normalized by the series length, with
frequencies in rad/s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoCarrierError
from .lindblad import HarmonicDrive, LindbladTerm, OpenSystemModel, Trajectory, integrate
from .quantum import SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z, check_square
from .sync import MHZ, RateSet

DEFAULT_OMEGA_Q = 10 * MHZ
DEFAULT_SAMPLE_DT = 2e-9
MIN_SAMPLES_PER_PERIOD = 10
MIN_WINDOW_SAMPLES = 8
CARRIER_FLOOR = 1e-6


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class LabFrameConfig:
    """Lab-frame run: qubit frequency, drive (absolute frequency), rates and sampling.

    The drive is switched on at ``drive_start`` and stays on until
    ``duration``.  Integration uses one RK4 step per sample.
    """

    rates: RateSet
    omega_q: float = DEFAULT_OMEGA_Q
    epsilon: float = 0.0
    omega: float = DEFAULT_OMEGA_Q
    varphi: float = 0.0
    sample_dt: float = DEFAULT_SAMPLE_DT
    duration: float = 2e-3
    drive_start: float = 0.0

    def __post_init__(self):
        fastest = max(abs(self.omega_q), abs(self.omega) if self.epsilon else 0.0)
        if fastest > 0 and self.sample_dt > 2 * math.pi / (MIN_SAMPLES_PER_PERIOD * fastest) * (1 + 1e-12):
            raise ValueError(
                f"sample_dt={self.sample_dt:g} s gives fewer than {MIN_SAMPLES_PER_PERIOD} samples per carrier period"
            )
        if not self.sample_dt > 0 or not self.duration > 0:
            raise ValueError("sample_dt and duration must be positive")
        if not 0 <= self.drive_start <= self.duration:
            raise ValueError("drive_start must lie within [0, duration]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def detuning(self) -> float:
        return self.omega_q - self.omega


def lab_model(config: LabFrameConfig, driven: bool = True) -> OpenSystemModel:
    r = config.rates
    terms = (
        LindbladTerm(SIGMA_PLUS, r.gamma_g / 2),
        LindbladTerm(SIGMA_MINUS, r.gamma_d / 2),
        LindbladTerm(SIGMA_Z, r.gamma_z / 2),
    )
    drives = ()
    if driven and config.epsilon > 0:
        drives = (HarmonicDrive(SIGMA_X, config.epsilon, config.omega, config.varphi),)
    return OpenSystemModel(0.5 * config.omega_q * SIGMA_Z, terms, drives)


def simulate_lab(config: LabFrameConfig, rho0) -> Trajectory:
    """Integrate the lab-frame master equation, sampled every ``sample_dt``."""
    rho0 = check_square(np.asarray(rho0, dtype=complex), 2)
    dt = config.sample_dt
    pieces = []
    t0, rho = 0.0, rho0
    if config.drive_start > 0:
        free = integrate(lab_model(config, driven=False), rho, (0.0, config.drive_start), dt)
        pieces.append(free)
        t0, rho = float(free.times[-1]), free.final
    if config.duration - t0 >= dt:
        driven = integrate(lab_model(config), rho, (t0, config.duration), dt)
        pieces.append(driven)
    if not pieces:
        return Trajectory(np.array([0.0]), rho0[None])
    times = np.concatenate([pieces[0].times] + [p.times[1:] for p in pieces[1:]])
    states = np.concatenate([pieces[0].states] + [p.states[1:] for p in pieces[1:]])
    return Trajectory(times, states)


def _window_slice(times: np.ndarray, window) -> slice:
    times = np.asarray(times, dtype=float)
    if window is None:
        return slice(0, times.shape[0])
    lo, hi = window
    i0 = int(np.searchsorted(times, lo - 1e-12 * max(1.0, abs(lo))))
    i1 = int(np.searchsorted(times, hi + 1e-12 * max(1.0, abs(hi)), side="right"))
    if i1 - i0 < MIN_WINDOW_SAMPLES:
        raise ValueError(f"window {window} holds {i1 - i0} samples, need at least {MIN_WINDOW_SAMPLES}")
    return slice(i0, i1)


def _uniform_step(times: np.ndarray) -> float:
    steps = np.diff(times)
    dt = float(np.mean(steps))
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ValueError("samples must be uniformly spaced")
    return dt


@dataclass
class Spectrum:
    """One-sided magnitude spectrum (frequencies in rad/s)."""

    frequencies: np.ndarray
    magnitudes: np.ndarray
    peak_list: list[tuple[float, float]]

    @property
    def bin_width(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    @property
    def peak(self) -> float:
        """Interpolated frequency of the dominant peak."""
        return self.peak_list[0][0]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("freq_hz", "magnitude"))
            for f, m in zip(self.frequencies, self.magnitudes):
                w.writerow((_fmt(f / (2 * math.pi)), _fmt(m)))


def _interpolate_peak(mag: np.ndarray, k: int) -> tuple[float, float]:
    """Three-point parabola through log-magnitudes; returns (fractional bin, peak magnitude)."""
    if k <= 0 or k >= mag.shape[0] - 1:
        return float(k), float(mag[k])
    a, b, c = (math.log(max(x, 1e-300)) for x in mag[k - 1 : k + 2])
    den = a - 2 * b + c
    if den >= 0:
        return float(k), float(mag[k])
    d = 0.5 * (a - c) / den
    return k + d, math.exp(b - 0.25 * (a - c) * d)


def spectrum(times, values, window=None, *, hann: bool = False, n_peaks: int = 8) -> Spectrum:
    """FFT magnitude of a uniformly sampled real series over ``window``.

    Magnitudes are ``|FFT| / N`` (a unit-amplitude tone shows up near 0.5).
    The DC bin is excluded from the peak search.  Peaks are local maxima,
    refined by log-parabolic interpolation and sorted by magnitude.
    """
    times = np.asarray(times, dtype=float)
    sl = _window_slice(times, window)
    t = times[sl]
    x = np.asarray(values, dtype=float)[sl]
    if t.shape[0] < MIN_WINDOW_SAMPLES:
        raise ValueError(f"need at least {MIN_WINDOW_SAMPLES} samples")
    dt = _uniform_step(t)
    n = x.shape[0]
    if hann:
        x = x * np.hanning(n)
    mag = np.abs(np.fft.rfft(x)) / n
    freqs = 2 * math.pi * np.fft.rfftfreq(n, dt)
    interior = np.flatnonzero((mag[1:-1] >= mag[:-2]) & (mag[1:-1] > mag[2:])) + 1
    if interior.size == 0:
        interior = np.array([int(np.argmax(mag[1:])) + 1])
    top = interior[np.argsort(mag[interior])[::-1][:n_peaks]]
    step = freqs[1] - freqs[0]
    peaks = []
    for k in top:
        kf, m = _interpolate_peak(mag, int(k))
        peaks.append((float(kf * step), float(m)))
    peaks.sort(key=lambda p: -p[1])
    return Spectrum(freqs, mag, peaks)


def _projection(times, values, omega: float, window):
    times = np.asarray(times, dtype=float)
    sl = _window_slice(times, window)
    t = times[sl]
    _uniform_step(t)
    z = np.asarray(values)[sl]
    return 2 * np.mean(z * np.exp(-1j * omega * t))


def extract_phase(times, values, omega: float, window=None) -> float:
    """Phase ``psi`` of the ``A cos(omega t + psi)`` component, in ``(-pi, pi]``.

    Single-bin discrete Fourier projection over the window; windows spanning
    whole periods avoid leakage from the negative-frequency image.

    Raises
    ------
    NoCarrierError
        If the amplitude at ``omega`` is below 1e-6.
    """
    c = _projection(times, values, omega, window)
    if abs(c) < CARRIER_FLOOR:
        raise NoCarrierError(f"no carrier at {omega / (2 * math.pi):.6g} Hz (amplitude {abs(c):.2e})")
    return float(np.angle(c))


def carrier_amplitude(times, values, omega: float, window=None) -> float:
    return float(abs(_projection(times, values, omega, window)))


def demodulate(trajectory: Trajectory, omega: float, window=None) -> np.ndarray:
    """Mean rotating-frame Bloch vector over ``window``.

    Uses ``m~_x + i m~_y = exp(-i omega t) (m_x + i m_y)``, exact for a
    steady rotating-frame state.
    """
    sl = _window_slice(trajectory.times, window)
    t = trajectory.times[sl]
    m = trajectory.bloch[sl]
    z = np.mean(np.exp(-1j * omega * t) * (m[:, 0] + 1j * m[:, 1]))
    return np.array([z.real, z.imag, float(np.mean(m[:, 2]))])


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """``t,mx,my,mz`` rows, 17 significant digits."""
    m = trajectory.bloch
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "mx", "my", "mz"))
        for t, row in zip(trajectory.times, m):
            w.writerow((_fmt(t), _fmt(row[0]), _fmt(row[1]), _fmt(row[2])))
