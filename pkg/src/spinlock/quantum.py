"""Qubit state representations, Pauli algebra and spin-coherent states.

Conventions
-----------
The computational basis is ordered ``(|0>, |1>) = (ground, excited)``.  The
excited state is the +1 eigenstate of sigma_z, i.e. ``sigma_z = diag(-1, +1)``
in this ordering, so that ``m_z = rho_11 - rho_00`` and ``|1>`` sits on the
north pole of the Bloch sphere.  ``sigma_+ = |1><0|`` raises the qubit.

Density matrices are plain ``numpy`` complex arrays of shape ``(N, N)``; the
helpers below validate them rather than wrapping them in a class.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, InvalidStateError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
BALL_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
KET_PLUS = (KET_0 + KET_1) / math.sqrt(2)

_PAULI = {
    "x": SIGMA_X,
    "y": SIGMA_Y,
    "z": SIGMA_Z,
    "+": SIGMA_PLUS,
    "plus": SIGMA_PLUS,
    "-": SIGMA_MINUS,
    "minus": SIGMA_MINUS,
    "i": IDENTITY,
}


def pauli(which: str) -> np.ndarray:
    """Return a copy of the Pauli or ladder matrix named by ``which``.

    Accepted selectors: ``"x"``, ``"y"``, ``"z"``, ``"+"``/``"plus"``,
    ``"-"``/``"minus"`` and ``"i"`` (identity).
    """
    try:
        return _PAULI[which.lower()].copy()
    except (KeyError, AttributeError):
        raise ValueError(f"unknown Pauli selector {which!r}") from None


def sigma_phi(phi: float) -> np.ndarray:
    """``sigma_x cos(phi) + sigma_y sin(phi)``."""
    return math.cos(phi) * SIGMA_X + math.sin(phi) * SIGMA_Y


class BlochVector(NamedTuple):
    mx: float
    my: float
    mz: float

    @classmethod
    def from_array(cls, arr) -> "BlochVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3,):
            raise DimensionError(f"Bloch vector needs 3 components, got shape {arr.shape}")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @property
    def norm(self) -> float:
        return math.sqrt(self.mx**2 + self.my**2 + self.mz**2)


def _wrap_2pi(x: float) -> float:
    y = math.fmod(x, 2 * math.pi)
    if y < 0:
        y += 2 * math.pi
    # fmod of values just below 2*pi can round up to exactly 2*pi
    return 0.0 if y >= 2 * math.pi else y


class SpinCoherentDirection(NamedTuple):
    """Direction ``(theta, phi)`` on the Bloch sphere.

    Build it through :meth:`make` to have the angles folded into
    ``theta in [0, pi]`` and ``phi in [0, 2 pi)``.
    """

    theta: float
    phi: float

    @classmethod
    def make(cls, theta: float, phi: float) -> "SpinCoherentDirection":
        theta = _wrap_2pi(float(theta))
        phi = float(phi)
        if theta > math.pi:
            theta = 2 * math.pi - theta
            phi += math.pi
        return cls(theta, _wrap_2pi(phi))

    @property
    def unit_vector(self) -> np.ndarray:
        return bloch_direction(self.theta, self.phi)


def bloch_direction(theta, phi) -> np.ndarray:
    """Unit vector ``n = (cos(phi) sin(theta), sin(phi) sin(theta), cos(theta))``.

    Broadcasts over array inputs; the last axis holds the components.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(np.cos(phi) * st, np.sin(phi) * st, np.cos(theta)), axis=-1)


def check_square(a: np.ndarray, dim: int | None = None) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionError(f"expected a {dim}x{dim} matrix, got {a.shape[0]}x{a.shape[1]}")
    return a


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def density_matrix(rho, *, dim: int | None = None, tol_psd: float = PSD_TOL) -> np.ndarray:
    """Validate ``rho`` as a density matrix and return it as a complex array.

    Raises
    ------
    DimensionError
        If ``rho`` is not square (or not ``dim`` x ``dim``).
    InvalidStateError
        If ``rho`` is not Hermitian, not unit trace, or has eigenvalues below
        ``-tol_psd``.
    """
    rho = check_square(np.asarray(rho, dtype=complex), dim)
    if not is_hermitian(rho):
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise InvalidStateError(f"density matrix trace is {tr.real:.3e}, expected 1")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -tol_psd:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def pure_state(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def bloch_from_rho(rho) -> BlochVector:
    """Bloch vector of a 2x2 density matrix.

    ``m_x = rho_01 + rho_10``, ``m_y = -i (rho_01 - rho_10)``,
    ``m_z = 2 rho_11 - 1``.
    """
    rho = check_square(np.asarray(rho, dtype=complex), 2)
    mx = (rho[0, 1] + rho[1, 0]).real
    my = (-1j * (rho[0, 1] - rho[1, 0])).real
    mz = (rho[1, 1] - rho[0, 0]).real
    return BlochVector(float(mx), float(my), float(mz))


def bloch_array(states: np.ndarray) -> np.ndarray:
    """Vectorized :func:`bloch_from_rho` for a stack of shape ``(..., 2, 2)``."""
    states = np.asarray(states)
    if states.shape[-2:] != (2, 2):
        raise DimensionError(f"expected (..., 2, 2) states, got {states.shape}")
    r01 = states[..., 0, 1]
    r10 = states[..., 1, 0]
    mx = (r01 + r10).real
    my = (-1j * (r01 - r10)).real
    mz = (states[..., 1, 1] - states[..., 0, 0]).real
    return np.stack([mx, my, mz], axis=-1)


def rho_from_bloch(m) -> np.ndarray:
    """Density matrix ``(I + m . sigma) / 2``.

    Raises :class:`InvalidStateError` when ``|m| > 1 + 1e-10``.
    """
    mx, my, mz = (float(c) for c in m)
    norm = math.sqrt(mx * mx + my * my + mz * mz)
    if norm > 1 + BALL_TOL:
        raise InvalidStateError(f"Bloch vector norm {norm:.12g} exceeds 1")
    return 0.5 * (IDENTITY + mx * SIGMA_X + my * SIGMA_Y + mz * SIGMA_Z)


def coherent_ket(theta: float, phi: float) -> np.ndarray:
    """``|theta, phi> = exp(-i phi sigma_z / 2) exp(-i theta sigma_y / 2) |1>``."""
    return np.array(
        [math.sin(theta / 2) * np.exp(0.5j * phi), math.cos(theta / 2) * np.exp(-0.5j * phi)],
        dtype=complex,
    )


def coherent_kets(theta, phi) -> np.ndarray:
    """Broadcasting version of :func:`coherent_ket`; components on the last axis."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    return np.stack([np.sin(theta / 2) * np.exp(0.5j * phi), np.cos(theta / 2) * np.exp(-0.5j * phi)], axis=-1)


def coherent_state(direction: SpinCoherentDirection) -> np.ndarray:
    """Density matrix ``|theta, phi><theta, phi|`` of a spin-coherent state."""
    if not isinstance(direction, SpinCoherentDirection):
        direction = SpinCoherentDirection.make(*direction)
    return pure_state(coherent_ket(direction.theta, direction.phi))


def symmetrize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def random_density(rng: np.random.Generator, dim: int = 2, rank: int | None = None) -> np.ndarray:
    """Random density matrix from a Ginibre ensemble (used by property tests)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
