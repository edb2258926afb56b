"""Lindblad master equation: right-hand side, RK4 integration and steady states.

The master equation is

    d rho / dt = -i [H(t), rho] + sum_k rate_k D[A_k] rho,
    D[A] rho = A rho A^+ - {A^+ A, rho} / 2.

Each :class:`LindbladTerm` carries its own prefactor, so a qubit term written
as ``(Gamma_g / 2) D[sigma_+]`` is ``LindbladTerm(sigma_plus, Gamma_g / 2)``.

Superoperators act on row-major vectorized density matrices,
``vec(rho)[i * N + j] = rho[i, j]``, for which ``vec(A rho B) = (A kron B^T) vec(rho)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import DimensionError, IntegrationDiverged, NonHermitianError, NonUniqueSteadyState
from .quantum import HERMITIAN_TOL, SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY, bloch_array, check_square

log = logging.getLogger(__name__)

TRACE_DIVERGENCE_TOL = 1e-6
NEGATIVITY_TOL = 1e-6
HERMITIAN_LOG_THRESHOLD = 1e-9
SAMPLES_PER_PERIOD = 50


@dataclass(frozen=True)
class LindbladTerm:
    """A dissipator ``rate * D[jump]``; ``rate`` in rad/s."""

    jump: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "jump", check_square(np.asarray(self.jump, dtype=complex)))
        if not self.rate >= 0:
            raise ValueError(f"Lindblad rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class HarmonicDrive:
    """Hamiltonian contribution ``amplitude * cos(omega * t + phase) * operator``."""

    operator: np.ndarray
    amplitude: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        op = check_square(np.asarray(self.operator, dtype=complex))
        if np.max(np.abs(op - op.conj().T)) > HERMITIAN_TOL:
            raise NonHermitianError("drive operator must be Hermitian")
        object.__setattr__(self, "operator", op)

    def value(self, t: float) -> np.ndarray:
        return self.amplitude * math.cos(self.omega * t + self.phase) * self.operator


@dataclass(frozen=True)
class OpenSystemModel:
    """Hamiltonian plus dissipators.

    ``hamiltonian`` is either a constant matrix or a callable ``H(t)``.  The
    ``drives`` are added on top of it; models built only from a constant
    matrix and harmonic drives run on the compiled integration kernels, a
    callable Hamiltonian falls back to a pure-Python RK4 loop.
    """

    hamiltonian: np.ndarray | Callable[[float], np.ndarray]
    terms: tuple[LindbladTerm, ...] = ()
    drives: tuple[HarmonicDrive, ...] = ()
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "drives", tuple(self.drives))
        if callable(self.hamiltonian):
            dim = check_square(np.asarray(self.hamiltonian(0.0))).shape[0]
        else:
            h = check_square(np.asarray(self.hamiltonian, dtype=complex))
            if np.max(np.abs(h - h.conj().T), initial=0.0) > HERMITIAN_TOL * max(1.0, np.max(np.abs(h))):
                raise NonHermitianError("Hamiltonian is not Hermitian")
            object.__setattr__(self, "hamiltonian", h)
            dim = h.shape[0]
        for term in self.terms:
            if term.jump.shape[0] != dim:
                raise DimensionError(f"jump operator is {term.jump.shape[0]}-dimensional, model is {dim}")
        for drive in self.drives:
            if drive.operator.shape[0] != dim:
                raise DimensionError(f"drive operator is {drive.operator.shape[0]}-dimensional, model is {dim}")
        object.__setattr__(self, "dim", dim)

    @property
    def is_time_independent(self) -> bool:
        return not callable(self.hamiltonian) and not self.drives

    def static_hamiltonian(self) -> np.ndarray:
        if callable(self.hamiltonian):
            raise TypeError("model has a callable Hamiltonian")
        return self.hamiltonian

    def hamiltonian_at(self, t: float) -> np.ndarray:
        h = self.hamiltonian(t) if callable(self.hamiltonian) else self.hamiltonian
        h = np.asarray(h, dtype=complex)
        for drive in self.drives:
            h = h + drive.value(t)
        return h


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex)
        if self.states.shape[0] != self.times.shape[0]:
            raise DimensionError("one state per time point is required")
        self._bloch = None

    def __len__(self):
        return self.times.shape[0]

    @property
    def bloch(self) -> np.ndarray:
        """``(n, 3)`` Bloch vectors; only defined for qubit trajectories."""
        if self._bloch is None:
            self._bloch = bloch_array(self.states)
        return self._bloch

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def dissipator(a: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``A rho A^+ - {A^+ A, rho} / 2``."""
    a = check_square(np.asarray(a, dtype=complex))
    rho = check_square(np.asarray(rho, dtype=complex))
    if a.shape != rho.shape:
        raise DimensionError(f"operator {a.shape} and state {rho.shape} do not match")
    ad = a.conj().T
    ada = ad @ a
    return a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)


def rhs(model: OpenSystemModel, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Right-hand side of the master equation at time ``t``."""
    rho = check_square(np.asarray(rho, dtype=complex), model.dim)
    h = model.hamiltonian_at(t)
    if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(h))):
        raise NonHermitianError(f"Hamiltonian is not Hermitian at t={t}")
    out = -1j * (h @ rho - rho @ h)
    for term in model.terms:
        out = out + term.rate * dissipator(term.jump, rho)
    return out


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    n = h.shape[0]
    eye = np.eye(n)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_superop(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    eye = np.eye(n)
    ada = a.conj().T @ a
    return np.kron(a, a.conj()) - 0.5 * (np.kron(ada, eye) + np.kron(eye, ada.T))


def liouvillian(model: OpenSystemModel, t: float | None = None) -> np.ndarray:
    """Vectorized generator ``L`` with ``d vec(rho)/dt = L vec(rho)``.

    For time-dependent models ``t`` must be given; for static models it is
    ignored.
    """
    if model.is_time_independent:
        h = model.static_hamiltonian()
    else:
        if t is None:
            raise TypeError("time-dependent model needs an explicit time")
        h = model.hamiltonian_at(t)
    lv = hamiltonian_superop(h)
    for term in model.terms:
        lv = lv + term.rate * dissipator_superop(term.jump)
    return lv


def _dissipative_only(model: OpenSystemModel) -> np.ndarray:
    n = model.dim
    lv = np.zeros((n * n, n * n), dtype=complex)
    for term in model.terms:
        lv = lv + term.rate * dissipator_superop(term.jump)
    return lv


def suggest_dt(model: OpenSystemModel, extra_frequencies: Sequence[float] = ()) -> float:
    """Default step ``1 / (50 f_max)``.

    ``f_max`` (Hz) is the largest of the Hamiltonian spectral radius, every
    dissipation rate and every drive frequency, each divided by ``2 pi``.
    """
    if callable(model.hamiltonian):
        h = model.hamiltonian(0.0)
    else:
        h = model.hamiltonian
    scales = [np.max(np.abs(np.linalg.eigvalsh(np.asarray(h, dtype=complex)))) if np.any(h) else 0.0]
    scales += [term.rate * float(np.linalg.norm(term.jump, 2)) ** 2 for term in model.terms]
    for drive in model.drives:
        scales.append(abs(drive.omega))
        scales.append(abs(drive.amplitude) * float(np.linalg.norm(drive.operator, 2)))
    scales += [abs(f) for f in extra_frequencies]
    f_max = max(scales) / (2 * math.pi)
    if f_max == 0:
        return math.inf
    return 1.0 / (SAMPLES_PER_PERIOD * f_max)


def rk4_propagator(lv: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for the linear system ``v' = L v``.

    For a time-independent generator the four RK4 stages collapse exactly to
    the degree-4 Taylor polynomial of ``exp(L dt)``.
    """
    n = lv.shape[0]
    hl = dt * lv
    p = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 5):
        term = term @ hl / k
        p = p + term
    return p


@numba.njit(cache=True)
def _fix_step(v, perm, diag_idx):
    n2 = v.shape[0]
    w = np.empty_like(v)
    corr = 0.0
    for i in range(n2):
        w[i] = 0.5 * (v[i] + np.conj(v[perm[i]]))
        d = abs(w[i] - v[i])
        if d > corr:
            corr = d
    tr = 0.0 + 0.0j
    for i in range(diag_idx.shape[0]):
        tr += w[diag_idx[i]]
    return w, corr, abs(tr - 1.0)


@numba.njit(cache=True)
def _run_static(p, v0, n_steps, stride, perm, diag_idx, out, trace_tol):
    v = v0.copy()
    out[0, :] = v
    max_corr = 0.0
    k = 1
    for step in range(1, n_steps + 1):
        v = p @ v
        v, corr, dtr = _fix_step(v, perm, diag_idx)
        if corr > max_corr:
            max_corr = corr
        if dtr > trace_tol or not np.isfinite(dtr):
            return step, max_corr
        if step % stride == 0:
            out[k, :] = v
            k += 1
    if k < out.shape[0]:
        out[k, :] = v
    return -1, max_corr


@numba.njit(cache=True)
def _gen(l0, ls, omegas, phases, t):
    g = l0.copy()
    for j in range(ls.shape[0]):
        g += np.cos(omegas[j] * t + phases[j]) * ls[j]
    return g


@numba.njit(cache=True)
def _run_harmonic(l0, ls, omegas, phases, t0, dt, v0, n_steps, stride, perm, diag_idx, out, trace_tol):
    v = v0.copy()
    out[0, :] = v
    max_corr = 0.0
    k = 1
    for step in range(1, n_steps + 1):
        t = t0 + (step - 1) * dt
        g1 = _gen(l0, ls, omegas, phases, t)
        g2 = _gen(l0, ls, omegas, phases, t + 0.5 * dt)
        g4 = _gen(l0, ls, omegas, phases, t + dt)
        k1 = g1 @ v
        k2 = g2 @ (v + 0.5 * dt * k1)
        k3 = g2 @ (v + 0.5 * dt * k2)
        k4 = g4 @ (v + dt * k3)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        v, corr, dtr = _fix_step(v, perm, diag_idx)
        if corr > max_corr:
            max_corr = corr
        if dtr > trace_tol or not np.isfinite(dtr):
            return step, max_corr
        if step % stride == 0:
            out[k, :] = v
            k += 1
    if k < out.shape[0]:
        out[k, :] = v
    return -1, max_corr


def _vec_helpers(n: int):
    idx = np.arange(n * n)
    perm = (idx % n) * n + idx // n
    diag_idx = np.arange(n) * (n + 1)
    return perm.astype(np.int64), diag_idx.astype(np.int64)


def _step_count(t_span, dt) -> int:
    t0, t1 = (float(x) for x in t_span)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t1 < t0:
        raise ValueError("t_span must be increasing")
    return int(math.floor((t1 - t0) / dt + 1e-9))


def _sample_times(t0: float, dt: float, n_steps: int, stride: int) -> np.ndarray:
    """Every ``stride``-th step plus the last one."""
    steps = np.arange(0, n_steps + 1, stride)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return t0 + dt * steps


def _check_positivity(times, states, tol=NEGATIVITY_TOL):
    if states.shape[0] == 0:
        return
    lo = np.linalg.eigvalsh(0.5 * (states + np.conj(np.swapaxes(states, -1, -2))))[:, 0]
    bad = np.flatnonzero(lo < -tol)
    if bad.size:
        i = bad[0]
        raise IntegrationDiverged(
            f"state lost positivity (min eigenvalue {lo[i]:.3e}) at t={times[i]:.9g} s", float(times[i])
        )


def integrate(
    model: OpenSystemModel,
    rho0: np.ndarray,
    t_span: tuple[float, float],
    dt: float,
    *,
    sample_every: int = 1,
) -> Trajectory:
    """Fixed-step classical RK4 integration of the master equation.

    Parameters
    ----------
    model : OpenSystemModel
    rho0 : ndarray
        Initial density matrix.
    t_span : (float, float)
        Start and end time in seconds.  The last step lands at or just before
        the end time (never more than one ``dt`` short).
    dt : float
        Step in seconds; see :func:`suggest_dt`.
    sample_every : int
        Keep every ``sample_every``-th step in the returned trajectory.  The
        last step is always kept.

    Raises
    ------
    IntegrationDiverged
        If a step moves the trace by more than 1e-6 or a stored state has an
        eigenvalue below -1e-6.
    """
    rho0 = check_square(np.asarray(rho0, dtype=complex), model.dim)
    n = model.dim
    n_steps = _step_count(t_span, dt)
    stride = max(1, int(sample_every))
    t0 = float(t_span[0])
    times = _sample_times(t0, dt, n_steps, stride)
    n_out = times.shape[0]
    perm, diag_idx = _vec_helpers(n)
    v0 = rho0.reshape(-1).copy()
    out = np.zeros((n_out, n * n), dtype=complex)

    if callable(model.hamiltonian):
        status, max_corr = _run_callback(model, v0, t0, dt, n_steps, stride, out)
    elif model.drives:
        l0 = liouvillian(OpenSystemModel(model.hamiltonian, model.terms))
        ls = np.array([d.amplitude * hamiltonian_superop(d.operator) for d in model.drives])
        omegas = np.array([d.omega for d in model.drives], dtype=float)
        phases = np.array([d.phase for d in model.drives], dtype=float)
        status, max_corr = _run_harmonic(
            l0, ls, omegas, phases, t0, float(dt), v0, n_steps, stride, perm, diag_idx, out, TRACE_DIVERGENCE_TOL
        )
    else:
        p = rk4_propagator(liouvillian(model), dt)
        status, max_corr = _run_static(p, v0, n_steps, stride, perm, diag_idx, out, TRACE_DIVERGENCE_TOL)

    if max_corr > HERMITIAN_LOG_THRESHOLD:
        log.info("hermiticity drift correction up to %.3e applied", max_corr)
    if status >= 0:
        t_bad = t0 + status * dt
        raise IntegrationDiverged(f"trace deviated by more than {TRACE_DIVERGENCE_TOL} at t={t_bad:.9g} s", t_bad)
    states = out.reshape(n_out, n, n)
    _check_positivity(times, states)
    return Trajectory(times, states)


def _run_callback(model, v0, t0, dt, n_steps, stride, out):
    n = model.dim
    diss = _dissipative_only(model)
    rho = v0.reshape(n, n).copy()
    out[0, :] = v0
    max_corr = 0.0
    k = 1

    def f(t, r):
        h = model.hamiltonian_at(t)
        return -1j * (h @ r - r @ h) + (diss @ r.reshape(-1)).reshape(n, n)

    for step in range(1, n_steps + 1):
        t = t0 + (step - 1) * dt
        k1 = f(t, rho)
        k2 = f(t + 0.5 * dt, rho + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, rho + 0.5 * dt * k2)
        k4 = f(t + dt, rho + dt * k3)
        new = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (new + new.conj().T)
        max_corr = max(max_corr, float(np.max(np.abs(rho - new))))
        dtr = abs(np.trace(rho) - 1)
        if not dtr <= TRACE_DIVERGENCE_TOL:
            return step, max_corr
        if step % stride == 0:
            out[k, :] = rho.reshape(-1)
            k += 1
    if k < out.shape[0]:
        out[k, :] = rho.reshape(-1)
    return -1, max_corr


def steady_state(model: OpenSystemModel, *, uniqueness_ratio: float = 1e-8) -> np.ndarray:
    """Stationary state from the null space of the Liouvillian.

    Solves ``L vec(rho) = 0`` together with ``tr(rho) = 1`` as a stacked
    ``(N^2 + 1) x N^2`` least-squares system.

    Raises
    ------
    NonUniqueSteadyState
        When the second-smallest singular value of ``L`` is below
        ``uniqueness_ratio`` times the largest.
    """
    if not model.is_time_independent:
        raise TypeError("steady_state needs a time-independent model")
    n = model.dim
    lv = liouvillian(model)
    sv = np.linalg.svd(lv, compute_uv=False)
    if n > 1 and sv[-2] <= uniqueness_ratio * sv[0]:
        raise NonUniqueSteadyState(
            f"Liouvillian has a degenerate null space (second-smallest singular value {sv[-2]:.3e})"
        )
    trace_row = np.zeros((1, n * n), dtype=complex)
    trace_row[0, np.arange(n) * (n + 1)] = 1.0
    # row scaling keeps the trace constraint commensurate with the rates
    scale = sv[0] if sv[0] > 0 else 1.0
    a = np.vstack([lv / scale, trace_row])
    b = np.zeros(n * n + 1, dtype=complex)
    b[-1] = 1.0
    v, *_ = np.linalg.lstsq(a, b, rcond=None)
    rho = v.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


_PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def bloch_generator(model: OpenSystemModel) -> tuple[np.ndarray, np.ndarray]:
    """Affine Bloch equations ``dm/dt = A m + b`` of a static qubit model.

    ``A_ij = tr(sigma_i L[sigma_j]) / 2`` and ``b_i = tr(sigma_i L[I]) / 2``.
    """
    if model.dim != 2 or not model.is_time_independent:
        raise DimensionError("Bloch generator needs a time-independent qubit model")
    lv = liouvillian(model)

    def apply(op):
        return (lv @ op.reshape(-1)).reshape(2, 2)

    a = np.empty((3, 3))
    for j, sj in enumerate(_PAULIS):
        out = apply(sj)
        for i, si in enumerate(_PAULIS):
            a[i, j] = 0.5 * np.trace(si @ out).real
    out = apply(IDENTITY)
    b = np.array([0.5 * np.trace(si @ out).real for si in _PAULIS])
    return a, b


def integrate_bloch(
    model: OpenSystemModel,
    m0,
    t_span: tuple[float, float],
    dt: float,
    *,
    sample_every: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 on the three Bloch components of a static qubit model.

    Returns ``(times, m)`` with ``m`` of shape ``(n, 3)``.  Uses the same step
    grid as :func:`integrate` and agrees with it to rounding error.
    """
    a, b = bloch_generator(model)
    # augment to a homogeneous 4x4 linear system so the RK4 step is one matrix
    g = np.zeros((4, 4))
    g[:3, :3] = a
    g[:3, 3] = b
    p = np.ascontiguousarray(rk4_propagator(g, dt).real)
    n_steps = _step_count(t_span, dt)
    stride = max(1, int(sample_every))
    times = _sample_times(float(t_span[0]), dt, n_steps, stride)
    n_out = times.shape[0]
    out = _run_affine(p, np.append(np.asarray(m0, dtype=float), 1.0), n_steps, stride, n_out)
    return times, out[:, :3]


@numba.njit(cache=True)
def _run_affine(p, y0, n_steps, stride, n_out):
    out = np.empty((n_out, y0.shape[0]))
    y = y0.copy()
    out[0] = y
    k = 1
    for step in range(1, n_steps + 1):
        y = p @ y
        if step % stride == 0:
            out[k] = y
            k += 1
    if k < n_out:
        out[k] = y
    return out
