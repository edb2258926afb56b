"""Husimi-Q function and the S-function synchronization measure for a qubit.

Both quantities are available two ways: directly from the spin-coherent
overlaps (quadrature over the sphere) and from the closed Bloch-vector forms

    Q(theta, phi) = (1 + m . n(theta, phi)) / (4 pi),
    S(phi) = (m_x cos(phi) + m_y sin(phi)) / 8.

Grid CSV layout (``theta,phi,q``) is one row per node, theta-major, so a
blank-line-separated gnuplot ``splot`` block is obtained by splitting rows
whenever theta changes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .quantum import bloch_direction, bloch_from_rho, check_square, coherent_kets

FOUR_PI = 4 * math.pi
DEFAULT_N_THETA = 64
DEFAULT_N_PHI = 128
S_QUADRATURE_NODES = 257


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class PhaseSpaceGrid:
    theta_nodes: np.ndarray
    phi_nodes: np.ndarray
    values: np.ndarray

    @property
    def n_theta(self) -> int:
        return self.theta_nodes.shape[0]

    @property
    def n_phi(self) -> int:
        return self.phi_nodes.shape[0]

    def normalization(self) -> float:
        """``int Q sin(theta) dtheta dphi``: Simpson in theta, periodic trapezoid in phi."""
        inner = simpson(self.values * np.sin(self.theta_nodes)[:, None], x=self.theta_nodes, axis=0)
        return float(np.mean(inner) * 2 * math.pi)

    def write_csv(self, path) -> None:
        rows = (
            (_fmt(t), _fmt(p), _fmt(self.values[i, j]))
            for i, t in enumerate(self.theta_nodes)
            for j, p in enumerate(self.phi_nodes)
        )
        _write_rows(path, ("theta", "phi", "q"), rows)


@dataclass
class SProfile:
    phi_nodes: np.ndarray
    values: np.ndarray
    fitted_contrast: float | None = None
    fitted_phase: float | None = None
    residual_rms: float | None = None

    def write_csv(self, path) -> None:
        _write_rows(path, ("phi", "s"), ((_fmt(p), _fmt(s)) for p, s in zip(self.phi_nodes, self.values)))


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def q_function(rho, theta, phi):
    """``<theta, phi| rho |theta, phi> / (2 pi)``, broadcasting over angles."""
    rho = check_square(np.asarray(rho, dtype=complex), 2)
    kets = coherent_kets(theta, phi)
    val = np.einsum("...i,ij,...j->...", kets.conj(), rho, kets).real / (2 * math.pi)
    return val if np.ndim(val) else float(val)


def q_function_bloch(m, theta, phi):
    """Closed form ``(1 + m . n) / (4 pi)``."""
    n = bloch_direction(theta, phi)
    val = (1 + n @ np.asarray(m, dtype=float)) / FOUR_PI
    return val if np.ndim(val) else float(val)


def q_grid(rho, n_theta: int = DEFAULT_N_THETA, n_phi: int = DEFAULT_N_PHI) -> PhaseSpaceGrid:
    """Q on a uniform grid: theta over ``[0, pi]`` inclusive, phi over ``[0, 2 pi)``.

    ``n_theta`` should be odd for Simpson's rule to be exact on the
    trigonometric integrands; even counts are accepted.
    """
    if n_theta < 2 or n_phi < 2:
        raise ValueError("grid resolutions must be >= 2")
    theta = np.linspace(0.0, math.pi, n_theta)
    phi = np.arange(n_phi) * (2 * math.pi / n_phi)
    values = q_function(rho, theta[:, None], phi[None, :])
    return PhaseSpaceGrid(theta, phi, values)


def s_function(rho, phi):
    """Closed form ``(m_x cos(phi) + m_y sin(phi)) / 8``."""
    m = bloch_from_rho(rho)
    phi = np.asarray(phi, dtype=float)
    val = (m.mx * np.cos(phi) + m.my * np.sin(phi)) / 8
    return val if np.ndim(val) else float(val)


def s_function_bloch(m, phi):
    phi = np.asarray(phi, dtype=float)
    val = (m[0] * np.cos(phi) + m[1] * np.sin(phi)) / 8
    return val if np.ndim(val) else float(val)


def s_function_quadrature(rho, phi, n_theta: int = S_QUADRATURE_NODES):
    """``int_0^pi Q(theta, phi) sin(theta) dtheta - 1/(2 pi)`` by composite Simpson."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linspace(0.0, math.pi, n_theta)
    q = q_function(rho, theta.reshape((-1,) + (1,) * phi.ndim), phi[None, ...])
    integrand = q * np.sin(theta).reshape((-1,) + (1,) * phi.ndim)
    val = simpson(integrand, x=theta, axis=0) - 1 / (2 * math.pi)
    return val if np.ndim(val) else float(val)


def s_profile(rho, n_phi: int = DEFAULT_N_PHI) -> SProfile:
    phi = np.arange(n_phi) * (2 * math.pi / n_phi)
    return SProfile(phi, np.asarray(s_function(rho, phi)))


def fit_s_profile(profile: SProfile) -> SProfile:
    """Least-squares fit of ``a cos(phi) + b sin(phi)`` to S-function samples.

    Sets ``fitted_contrast = 2 sqrt(a^2 + b^2)`` (peak-to-peak) and
    ``fitted_phase = atan2(b, a)`` folded into ``[0, 2 pi)``, the phase of the
    maximum.  An all-zero profile gives contrast 0 and ``fitted_phase = None``.
    """
    phi = np.asarray(profile.phi_nodes, dtype=float)
    s = np.asarray(profile.values, dtype=float)
    if phi.shape != s.shape or phi.size < 8:
        raise ValueError("need at least 8 matching phi/S samples")
    if np.ptp(phi) < 2 * math.pi * (1 - 1 / phi.size) - 1e-9:
        raise ValueError("phi samples must span a full period")
    design = np.column_stack([np.cos(phi), np.sin(phi)])
    (a, b), *_ = np.linalg.lstsq(design, s, rcond=None)
    resid = s - design @ np.array([a, b])
    amp = math.hypot(a, b)
    phase = None if amp == 0 else math.atan2(b, a) % (2 * math.pi)
    return SProfile(
        phi,
        s,
        fitted_contrast=2 * amp,
        fitted_phase=phase,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )
