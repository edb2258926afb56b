"""Simulated readout, decay-rate fitting and Bloch-vector tomography.

Readout model: a projective measurement of ``|1><1|`` whose outcome is
flipped with probability ``spam_error``, so the recorded probability is
``p (1 - e) + (1 - p) e``.  Shot noise is binomial; ``shots=None`` returns
the exact expectation (infinite-shot mode).

Random numbers come from a Philox counter-based generator seeded with the
64-bit ``rng_seed``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit
from scipy.special import xlogy

from .errors import FitFailed, IllConditionedDesign
from .lindblad import integrate_bloch
from .quantum import SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY, BlochVector, bloch_from_rho, check_square, rho_from_bloch
from .sync import KHZ, DriveParams, RateSet, build_rotating_model

MW_RABI = 32.0 * KHZ
MW_PI_TIME = 15.6e-6
MAX_FIT_ITERATIONS = 200
MLE_RESTARTS = 10
MLE_TOL = 1e-9


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


@dataclass(frozen=True)
class MeasurementConfig:
    shots: int | None = 1000
    spam_error: float = 7e-3
    rng_seed: int = 0

    def __post_init__(self):
        if self.shots is not None and (int(self.shots) != self.shots or self.shots < 1):
            raise ValueError(f"shots must be a positive integer or None, got {self.shots}")
        if not 0 <= self.spam_error < 0.5:
            raise ValueError(f"spam_error must lie in [0, 0.5), got {self.spam_error}")

    def rng(self) -> np.random.Generator:
        return make_rng(self.rng_seed)


def _effective_probability(p, e: float):
    return np.asarray(p) * (1 - e) + (1 - np.asarray(p)) * e


def sample_probability(p, config: MeasurementConfig, rng: np.random.Generator | None = None):
    """Readout estimate(s) of excited-state probability ``p`` (scalar or array)."""
    q = np.clip(_effective_probability(p, config.spam_error), 0.0, 1.0)
    if config.shots is None:
        out = q
    else:
        rng = config.rng() if rng is None else rng
        out = rng.binomial(config.shots, q) / config.shots
    return out if np.ndim(out) else float(out)


def measure_population(rho, config: MeasurementConfig, rng: np.random.Generator | None = None) -> float:
    """Estimated ``<1|rho|1>`` after SPAM flips and shot noise."""
    rho = check_square(np.asarray(rho, dtype=complex), 2)
    return sample_probability(float(rho[1, 1].real), config, rng)


# --------------------------------------------------------------------------
# decay fits


@dataclass
class FitResult:
    params: dict
    covariance: np.ndarray
    residual_rms: float
    stderr: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": self.params,
                "stderr": self.stderr,
                "covariance": np.asarray(self.covariance).tolist(),
                "residual_rms": self.residual_rms,
            },
            indent=2,
            sort_keys=True,
        )


def decay_model(t, a, gamma, b):
    return a * np.exp(-gamma * np.asarray(t) / 2) + b


def _initial_guess(t: np.ndarray, y: np.ndarray):
    b0 = y[-1]
    d = np.abs(y - b0)
    use = d > 1e-3 * np.max(d)
    use[-1] = False
    if np.count_nonzero(use) >= 2:
        slope, intercept = np.polyfit(t[use], np.log(d[use]), 1)
        gamma0 = max(-2 * slope, 1e-12)
        a0 = math.copysign(math.exp(intercept), y[0] - b0)
    else:
        gamma0 = 2.0 / max(np.ptp(t), 1e-300)
        a0 = y[0] - b0
    return a0, gamma0, b0


def fit_decay(times, values) -> FitResult:
    """Least-squares fit of ``A exp(-gamma t / 2) + B``.

    Starting values come from a log-linear regression of ``|y - y_last|``.
    The data should span at least ``1/gamma``.

    Raises
    ------
    FitFailed
        If the optimizer does not converge within 200 iterations or returns
        a negative rate.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.size < 5:
        raise ValueError("need at least 5 (t, value) pairs")
    p0 = _initial_guess(t, y)
    # rescale time so gamma is O(1) for the optimizer
    scale = 1.0 / p0[1]
    try:
        popt, pcov = curve_fit(
            lambda s, a, g, b: decay_model(s, a, g, b),
            t / scale,
            y,
            p0=(p0[0], 1.0, p0[2]),
            maxfev=MAX_FIT_ITERATIONS,
            xtol=1e-14,
            ftol=1e-14,
        )
    except RuntimeError as exc:
        raise FitFailed(str(exc), {"initial_guess": p0, "n_points": int(t.size)}) from None
    a, g, b = popt
    gamma = g / scale
    cov = np.array(pcov, dtype=float)
    jac = np.diag([1.0, 1.0 / scale, 1.0])
    cov = jac @ cov @ jac
    if not gamma >= 0:
        raise FitFailed(f"fitted rate {gamma:.3e} is negative", {"params": (a, gamma, b)})
    resid = y - decay_model(t, a, gamma, b)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    return FitResult(
        params={"A": float(a), "gamma": float(gamma), "B": float(b)},
        covariance=cov,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        stderr={"A": float(err[0]), "gamma": float(err[1]), "B": float(err[2])},
    )


def damped_oscillation(t, a, k, omega, psi, b):
    return b + a * np.exp(-k * np.asarray(t)) * np.cos(omega * np.asarray(t) + psi)


def fit_damped_oscillation(times, values, max_iterations: int = 2000) -> FitResult:
    """Fit ``B + A exp(-k t) cos(omega t + psi)`` with ``t`` counted from the first sample.

    The starting frequency is the peak of a zero-padded FFT of the trace
    minus its last value; the starting decay comes from the log envelope.

    Raises
    ------
    FitFailed
        If the trace has no oscillatory component or the fit does not converge.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.size < 8:
        raise ValueError("need at least 8 (t, value) pairs")
    b0 = y[-1]
    d = y - b0
    dt = float(np.mean(np.diff(t)))
    spec = np.abs(np.fft.rfft(d, 8 * d.size))
    freqs = 2 * math.pi * np.fft.rfftfreq(8 * d.size, dt)
    interior = np.flatnonzero((spec[1:-1] >= spec[:-2]) & (spec[1:-1] > spec[2:])) + 1
    if interior.size == 0:
        raise FitFailed("trace shows no oscillatory component", {"n_points": int(t.size)})
    omega0 = float(freqs[interior[np.argmax(spec[interior])]])
    _, gamma0, _ = _initial_guess(t - t[0], y)
    k0 = gamma0 / 2
    scale = 1.0 / max(omega0, k0)
    s = (t - t[0]) / scale
    try:
        popt, pcov = curve_fit(
            damped_oscillation,
            s,
            y,
            p0=(d[0], k0 * scale, omega0 * scale, 0.0, b0),
            maxfev=max_iterations,
            xtol=1e-14,
            ftol=1e-14,
        )
    except RuntimeError as exc:
        raise FitFailed(str(exc), {"omega0": omega0, "k0": k0}) from None
    a, k, omega, psi, b = popt
    if omega < 0:
        omega, psi = -omega, -psi
    if a < 0:
        a, psi = -a, psi + math.pi
    psi = psi % (2 * math.pi)
    jac = np.diag([1.0, 1.0 / scale, 1.0 / scale, 1.0, 1.0])
    cov = jac @ np.array(pcov, dtype=float) @ jac
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    names = ("A", "k", "omega", "psi", "B")
    vals = (a, k / scale, omega / scale, psi, b)
    resid = y - damped_oscillation(s, *popt)
    return FitResult(
        params={n: float(v) for n, v in zip(names, vals)},
        covariance=cov,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        stderr={n: float(e) for n, e in zip(names, err)},
    )


def write_decay_csv(path, times, values) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "p"))
        for t, p in zip(times, values):
            w.writerow((format(float(t), ".17g"), format(float(p), ".17g")))


def read_decay_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["t"]) for r in rows]), np.array([float(r["p"]) for r in rows])


# --------------------------------------------------------------------------
# tomography


@dataclass(frozen=True)
class AnalysisPulse:
    """Pulse ``U = exp(-i generator duration)`` applied before readout."""

    generator: np.ndarray
    duration: float

    def unitary(self) -> np.ndarray:
        u = expm(-1j * np.asarray(self.generator, dtype=complex) * self.duration)
        if np.max(np.abs(u.conj().T @ u - IDENTITY)) > 1e-12:
            raise ValueError("analysis pulse generator is not Hermitian")
        return u

    def direction(self) -> np.ndarray:
        """Bloch direction ``n`` with ``P(1) = (1 + n . m) / 2`` after the pulse."""
        u = self.unitary()
        heis = u.conj().T @ SIGMA_Z @ u
        return np.array([0.5 * np.trace(heis @ s).real for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)])


def resonant_pulses(rabi: float = MW_RABI, t_pi: float = MW_PI_TIME) -> list[AnalysisPulse]:
    """``exp(i Omega tau sigma_y / 4)``, ``exp(-i Omega tau sigma_x / 4)`` and the identity."""
    return [
        AnalysisPulse(-rabi / 4 * SIGMA_Y, t_pi),
        AnalysisPulse(rabi / 4 * SIGMA_X, t_pi),
        AnalysisPulse(np.zeros((2, 2)), 0.0),
    ]


def detuned_pulses(delta: float, rabi: float = MW_RABI, t_pi: float = MW_PI_TIME) -> list[AnalysisPulse]:
    """Detuned x/y pulses of duration ``tau/4`` and ``tau/2`` plus the identity."""
    out = []
    for s in (SIGMA_X, SIGMA_Y):
        gen = delta * SIGMA_Z + rabi * s
        out.append(AnalysisPulse(gen, t_pi / 4))
        out.append(AnalysisPulse(gen, t_pi / 2))
    out.append(AnalysisPulse(np.zeros((2, 2)), 0.0))
    return out


def pulse_probabilities(rho, pulses) -> np.ndarray:
    m = np.asarray(bloch_from_rho(rho))
    return np.array([(1 + p.direction() @ m) / 2 for p in pulses])


def _clip_ball(m: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(m)
    return m / n if n > 1 else m


def tomography_resonant(
    rho, config: MeasurementConfig, rng: np.random.Generator | None = None, pulses=None
) -> BlochVector:
    """Bloch vector from three analysis pulses by linear inversion, clipped to the ball.

    No SPAM correction is applied, so readout errors shrink the estimate.
    """
    pulses = resonant_pulses() if pulses is None else pulses
    rng = config.rng() if rng is None and config.shots is not None else rng
    design = np.array([p.direction() for p in pulses])
    probs = sample_probability(pulse_probabilities(rho, pulses), config, rng)
    m = np.linalg.solve(design, 2 * np.asarray(probs) - 1)
    return BlochVector.from_array(_clip_ball(m))


def _check_design(design: np.ndarray) -> None:
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] < 1e-6 * sv[0]:
        raise IllConditionedDesign("analysis directions are coplanar; the Bloch vector is not identifiable")


def _loglik(m, design, k, n, e):
    q = e + (1 - 2 * e) * (1 + design @ m) / 2
    q = np.clip(q, 1e-300, 1 - 1e-16)
    return float(np.sum(xlogy(k, q) + xlogy(n - k, 1 - q)))


def _grad(m, design, k, n, e):
    q = e + (1 - 2 * e) * (1 + design @ m) / 2
    q = np.clip(q, 1e-300, 1 - 1e-16)
    w = k / q - (n - k) / (1 - q)
    return (1 - 2 * e) / 2 * design.T @ w


def mle_bloch(design, counts, shots, spam_error: float = 0.0, rng=None, restarts: int = MLE_RESTARTS) -> np.ndarray:
    """Maximum-likelihood Bloch vector for binomial outcomes ``counts`` of ``shots``.

    Projected gradient ascent in the unit ball with Barzilai-Borwein steps and
    backtracking; the best of ``restarts`` random starts is returned.
    ``counts`` may be fractional (observed frequencies with ``shots=1``).
    """
    design = np.asarray(design, dtype=float)
    _check_design(design)
    k = np.asarray(counts, dtype=float)
    n = np.broadcast_to(np.asarray(shots, dtype=float), k.shape)
    rng = make_rng(0) if rng is None else rng
    best, best_ll = None, -math.inf
    for r in range(restarts):
        m = np.zeros(3) if r == 0 else _clip_ball(rng.uniform(-1, 1, 3)) * 0.9
        ll = _loglik(m, design, k, n, spam_error)
        g = _grad(m, design, k, n, spam_error)
        step = 1.0 / max(1.0, float(np.sum(n)))
        for _ in range(5000):
            while True:
                cand = _clip_ball(m + step * g)
                cll = _loglik(cand, design, k, n, spam_error)
                if cll >= ll - 1e-15 * abs(ll) or step < 1e-30:
                    break
                step *= 0.5
            cg = _grad(cand, design, k, n, spam_error)
            s, yv = cand - m, cg - g
            done = abs(cll - ll) <= MLE_TOL * 1e-3 and np.linalg.norm(s) < 1e-12
            m, g, ll = cand, cg, cll
            if done or np.linalg.norm(s) == 0.0:
                break
            sy = float(s @ yv)
            step = abs(float(s @ s) / sy) if sy != 0 else step * 2
        if ll > best_ll:
            best, best_ll = m, ll
    return best


def tomography_detuned(
    rho,
    delta: float,
    config: MeasurementConfig,
    rng: np.random.Generator | None = None,
    pulses=None,
) -> BlochVector:
    """Maximum-likelihood Bloch vector from the five detuned analysis pulses."""
    pulses = detuned_pulses(delta) if pulses is None else pulses
    design = np.array([p.direction() for p in pulses])
    _check_design(design)
    rng = config.rng() if rng is None else rng
    probs = np.asarray(sample_probability(pulse_probabilities(rho, pulses), config, rng))
    if config.shots is None:
        counts, shots = probs, 1.0
    else:
        counts, shots = np.round(probs * config.shots), float(config.shots)
    return BlochVector.from_array(mle_bloch(design, counts, shots, config.spam_error, rng))


# --------------------------------------------------------------------------
# rate-extraction protocol


@dataclass(frozen=True)
class DecayExperiment:
    """One relaxation experiment: which channels are on, the initial state and readout axis."""

    name: str
    rates: RateSet
    initial: tuple[float, float, float]
    readout: str
    duration: float


@dataclass
class RateEstimate:
    gamma_g: float
    gamma_d: float
    gamma_z: float
    gamma_sum: float
    gamma_coherence: float
    errors: dict
    fits: dict
    data: dict = field(default_factory=dict)

    def to_json(self) -> str:
        fits = {k: json.loads(v.to_json()) for k, v in self.fits.items()}
        body = {k: getattr(self, k) for k in ("gamma_g", "gamma_d", "gamma_z", "gamma_sum", "gamma_coherence", "errors")}
        body["fits"] = fits
        return json.dumps(body, indent=2, sort_keys=True)


def protocol_experiments(rates: RateSet, durations=(600e-6, 200e-6, 200e-6, 100e-6)) -> list[DecayExperiment]:
    """The four relaxation experiments used to separate gain, damping and dephasing.

    (a) gain only from |0>, (b) damping only from |1>, (c) gain and damping
    from |1>, all read out as the |1> population; (d) all channels from |+>
    read out along sigma_x.
    """
    return [
        DecayExperiment("gain", RateSet(rates.gamma_g, 0.0), (0.0, 0.0, -1.0), "z", durations[0]),
        DecayExperiment("damping", RateSet(0.0, rates.gamma_d), (0.0, 0.0, 1.0), "z", durations[1]),
        DecayExperiment("gain_damping", RateSet(rates.gamma_g, rates.gamma_d), (0.0, 0.0, 1.0), "z", durations[2]),
        DecayExperiment("coherence", rates, (1.0, 0.0, 0.0), "x", durations[3]),
    ]


def simulate_decay(exp: DecayExperiment, n_points: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Exact readout probability ``(1 + m_readout) / 2`` on ``n_points`` times."""
    model = build_rotating_model(exp.rates, DriveParams(0.0))
    dt = exp.duration / ((n_points - 1) * 20)
    times, m = integrate_bloch(model, exp.initial, (0.0, exp.duration), dt, sample_every=20)
    axis = {"x": 0, "y": 1, "z": 2}[exp.readout]
    return times[:n_points], (1 + m[:n_points, axis]) / 2


def extract_rates(
    rates: RateSet,
    config: MeasurementConfig,
    n_points: int = 30,
    durations=(600e-6, 200e-6, 200e-6, 100e-6),
) -> RateEstimate:
    """Run the four experiments with sampled readout and fit each decay.

    ``Gamma_z = (gamma_coh - (Gamma_g + Gamma_d) / 2) / 2`` with the gain and
    damping rates from experiments (a) and (b); errors add in quadrature.
    """
    rng = config.rng() if config.shots is not None else None
    fits, data = {}, {}
    for exp in protocol_experiments(rates, durations):
        t, p = simulate_decay(exp, n_points)
        measured = np.asarray(sample_probability(p, config, rng))
        data[exp.name] = (t, measured)
        fits[exp.name] = fit_decay(t, measured)
    g = {k: f.params["gamma"] for k, f in fits.items()}
    s = {k: f.stderr["gamma"] for k, f in fits.items()}
    gz = (g["coherence"] - (g["gain"] + g["damping"]) / 2) / 2
    gz_err = 0.5 * math.sqrt(s["coherence"] ** 2 + (s["gain"] ** 2 + s["damping"] ** 2) / 4)
    return RateEstimate(
        gamma_g=g["gain"],
        gamma_d=g["damping"],
        gamma_z=gz,
        gamma_sum=g["gain_damping"],
        gamma_coherence=g["coherence"],
        errors={"gamma_g": s["gain"], "gamma_d": s["damping"], "gamma_z": gz_err,
                "gamma_sum": s["gain_damping"], "gamma_coherence": s["coherence"]},
        fits=fits,
        data=data,
    )


def state_from_bloch(m) -> np.ndarray:
    return rho_from_bloch(m)
