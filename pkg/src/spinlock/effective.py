"""Adiabatic elimination of auxiliary levels and the Yb+ eight-level scheme.

Generic engine
--------------
A :class:`PartitionedModel` splits the Hilbert space into target levels
(first ``target_dim`` indices) and auxiliary levels (the rest).  Couplings
that excite the target into the auxiliary space are listed one per
(field, initial level) pair.  With

    H_NH = H_a - (i/2) sum_k L_k^+ L_k        (auxiliary block)
    R_ln = (H_NH - E_n - omega_l)^-1

the effective target dynamics is

    H_eff = H_t - 1/2 [ V_t sum_ln R_ln V_a^(l,n) + h.c. ]
    L_eff^(k,l) = L_k sum_n R_ln V_a^(l,n).

Effective jump operators are kept separate per field: products between
different fields oscillate at the laser beat note and are dropped.

Yb+ model
---------
Level order is ``[S|0,0>, S|1,0>, S|1,-1>, S|1,+1>, P|0,0>, P|1,0>, P|1,-1>, P|1,+1>]``
so the qubit ``{|0>, |1>}`` comes first.  Energies and laser frequencies are
measured from a common optical reference (it cancels in every difference).
The full model is written in a frame where every laser term is static, so the
8x8 Hamiltonian is time independent.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PartitionError, ResonanceError
from .lindblad import LindbladTerm, OpenSystemModel, integrate, suggest_dt
from .quantum import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z, bloch_array, pure_state, KET_1
from .sync import KHZ, RateSet

log = logging.getLogger(__name__)

RESOLVENT_COND_LIMIT = 1e12
REGIME_RATIO = 0.2


@dataclass(frozen=True)
class Coupling:
    """Excitation ``V_a^(l,n)`` (aux x target) by field ``label`` out of target level ``level``."""

    label: str
    omega: float
    level: int
    energy: float
    v_a: np.ndarray


@dataclass
class PartitionedModel:
    h_t: np.ndarray
    h_a: np.ndarray
    couplings: list[Coupling]
    jumps: list[LindbladTerm]
    jump_labels: list[str] | None = None
    v_t: np.ndarray | None = None

    def __post_init__(self):
        self.h_t = np.asarray(self.h_t, dtype=complex)
        self.h_a = np.asarray(self.h_a, dtype=complex)
        for name, h in (("H_t", self.h_t), ("H_a", self.h_a)):
            if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(h), initial=0.0)):
                raise PartitionError(f"{name} is not Hermitian")
        t, a = self.target_dim, self.aux_dim
        for c in self.couplings:
            if c.v_a.shape != (a, t):
                raise PartitionError(f"coupling {c.label!r} must be {a}x{t} (target -> auxiliary)")
        for term in self.jumps:
            if term.jump.shape != (t + a, t + a):
                raise PartitionError("jump operators must act on the full space")
            if np.any(np.abs(term.jump[:, :t]) > 0):
                raise PartitionError("jump operators may only originate in the auxiliary space")
        if self.jump_labels is None:
            self.jump_labels = [f"L{k}" for k in range(len(self.jumps))]
        if self.v_t is None:
            self.v_t = sum((c.v_a.conj().T for c in self.couplings), np.zeros((t, a), dtype=complex))

    @property
    def target_dim(self) -> int:
        return self.h_t.shape[0]

    @property
    def aux_dim(self) -> int:
        return self.h_a.shape[0]


@dataclass(frozen=True)
class EffectiveJump:
    jump_label: str
    field_label: str
    operator: np.ndarray

    def target_block(self, target_dim: int) -> np.ndarray:
        return self.operator[:target_dim, :]


def nonhermitian_h(model: PartitionedModel) -> np.ndarray:
    """``H_a - (i/2) sum_k L_k^+ L_k`` on the auxiliary block."""
    t = model.target_dim
    decay = sum((term.rate * term.jump.conj().T @ term.jump for term in model.jumps), np.zeros((t + model.aux_dim,) * 2))
    return model.h_a - 0.5j * decay[t:, t:]


def _closure(mat: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Indices reachable from ``seeds`` through nonzero entries of ``mat``."""
    linked = (np.abs(mat) > 0) | (np.abs(mat.T) > 0)
    seen = set(int(i) for i in seeds)
    queue = deque(seen)
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(linked[i]):
            if int(j) not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return np.array(sorted(seen), dtype=int)


def _resolvent_apply(h_nh: np.ndarray, coupling: Coupling) -> np.ndarray:
    """``(H_NH - E_n - omega_l)^-1 V_a`` restricted to the block the coupling reaches."""
    rows = np.flatnonzero(np.any(np.abs(coupling.v_a) > 0, axis=1))
    out = np.zeros_like(coupling.v_a, dtype=complex)
    if rows.size == 0:
        return out
    block = _closure(h_nh, rows)
    m = h_nh[np.ix_(block, block)] - (coupling.energy + coupling.omega) * np.eye(block.size)
    cond = np.linalg.cond(m)
    if not cond < RESOLVENT_COND_LIMIT:
        raise ResonanceError(
            f"resolvent for field {coupling.label!r} from level {coupling.level} is singular (cond {cond:.2e})",
            field=coupling.label,
            level=coupling.level,
        )
    out[block, :] = np.linalg.solve(m, coupling.v_a[block, :])
    return out


def effective_hamiltonian(model: PartitionedModel) -> np.ndarray:
    h_nh = nonhermitian_h(model)
    acc = np.zeros((model.target_dim, model.target_dim), dtype=complex)
    for c in model.couplings:
        acc = acc + model.v_t @ _resolvent_apply(h_nh, c)
    return model.h_t - 0.5 * (acc + acc.conj().T)


def effective_lindblads(model: PartitionedModel) -> list[EffectiveJump]:
    """One effective operator (full x target) per physical jump and field.

    Operators with all-zero entries are omitted.
    """
    h_nh = nonhermitian_h(model)
    t = model.target_dim
    by_field: dict[str, np.ndarray] = {}
    for c in model.couplings:
        padded = np.zeros((t + model.aux_dim, t), dtype=complex)
        padded[t:, :] = _resolvent_apply(h_nh, c)
        by_field[c.label] = by_field.get(c.label, 0) + padded
    out = []
    for term, label in zip(model.jumps, model.jump_labels):
        amp = math.sqrt(term.rate) * term.jump
        for flabel, x in by_field.items():
            op = amp @ x
            if np.any(np.abs(op) > 0):
                out.append(EffectiveJump(label, flabel, op))
    return out


def qubit_rates(ops: list[np.ndarray]) -> RateSet:
    """Read ``(Gamma_g, Gamma_d, Gamma_z)`` off 2x2 effective jump operators.

    Each operator must have a single source column.  ``c |1><0|`` adds
    ``2|c|^2`` to Gamma_g, ``c |0><1|`` adds ``2|c|^2`` to Gamma_d and a
    diagonal ``c |s><s|`` adds ``|c|^2 / 2`` to Gamma_z (since
    ``D[|s><s|] = D[sigma_z] / 4``).  Coherences between different
    destinations of one operator are dropped.
    """
    gg = gd = gz = 0.0
    for op in ops:
        op = np.asarray(op)
        cols = np.flatnonzero(np.any(np.abs(op) > 0, axis=0))
        if cols.size > 1:
            raise PartitionError("effective operator mixes source levels; split it per field first")
        if cols.size == 0:
            continue
        src = cols[0]
        for dst in range(2):
            w = abs(op[dst, src]) ** 2
            if dst == src:
                gz += w / 2
            elif src == 0:
                gg += 2 * w
            else:
                gd += 2 * w
    return RateSet(float(gg), float(gd), float(gz))


# --------------------------------------------------------------------------
# Yb+ eight-level scheme

S00, S10, S1M, S1P, P00, P10, P1M, P1P = range(8)
LEVEL_NAMES = ("S|0,0>", "S|1,0>", "S|1,-1>", "S|1,+1>", "P|0,0>", "P|1,0>", "P|1,-1>", "P|1,+1>")

# (lower, upper, laser) pairs; the coupling term is (Omega/2) e^{i w t} |lower><upper| + h.c.
_LASER_LINKS = (
    (S00, P1M, "g"),
    (S00, P1P, "g"),
    (S10, P1M, "d"),
    (S10, P1P, "d"),
    (S1M, P00, "r0"),
    (S1P, P00, "r0"),
    (S1M, P10, "r1"),
    (S1P, P10, "r1"),
)

DECAY_CHANNELS = {
    P00: (S1M, S10, S1P),
    P10: (S00, S1M, S1P),
    P1M: (S00, S10, S1M),
    P1P: (S00, S10, S1P),
}

DEFAULT_GAMMA = 2 * math.pi * 19.6e6
DEFAULT_DELTA_P = 2 * math.pi * 4.4e6
DEFAULT_OMEGA_Q = 2 * math.pi * 12.6e9
DEFAULT_P_HYPERFINE = 2 * math.pi * 2.1e9
DEFAULT_RAMAN_DETUNING = 2 * math.pi * 1.0e6


@dataclass(frozen=True)
class YbLevelScheme:
    """Level energies, laser strengths/frequencies and decay rate (all rad/s).

    ``energies`` and ``laser_frequencies`` fully define the full model; build
    them from detunings with :meth:`symmetric`.  ``delta_p`` is the symmetric
    P-level detuning entering the closed-form effective rates.
    """

    energies: tuple[float, ...]
    laser_frequencies: dict
    rabi_g: float
    rabi_d: float
    rabi_r0: float
    rabi_r1: float
    gamma: float
    delta_p: float
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def symmetric(
        cls,
        rabi_g: float,
        rabi_d: float,
        rabi_r0: float | None = None,
        rabi_r1: float | None = None,
        gamma: float = DEFAULT_GAMMA,
        delta_p: float = DEFAULT_DELTA_P,
        raman_detuning: float = DEFAULT_RAMAN_DETUNING,
        s_zeeman: float | None = None,
        omega_q: float = DEFAULT_OMEGA_Q,
        p_hyperfine: float = DEFAULT_P_HYPERFINE,
    ) -> "YbLevelScheme":
        """Scheme with gain/damping lasers centred between the P|1,+-1> levels.

        The P|1,+-1> levels sit at ``+-delta_p`` around the centre the gain laser
        addresses from |0>.  The damping laser is offset by ``raman_detuning``
        so that ``omega_g - omega_d = omega_q + raman_detuning``.  Repump lasers
        are resonant with the centre of the S|1,+-1> pair, which is split by
        ``+-s_zeeman`` (default ``delta_p``).  ``rabi_r0`` defaults to
        ``gamma`` and ``rabi_r1`` to ``rabi_r0 / 20``.
        """
        rabi_r0 = gamma if rabi_r0 is None else rabi_r0
        rabi_r1 = rabi_r0 / 20 if rabi_r1 is None else rabi_r1
        s_zeeman = delta_p if s_zeeman is None else s_zeeman
        e = [0.0] * 8
        e[S00] = 0.0
        e[S10] = omega_q
        e[S1M] = omega_q - s_zeeman
        e[S1P] = omega_q + s_zeeman
        e[P00] = 0.0
        e[P10] = p_hyperfine
        e[P1M] = p_hyperfine - delta_p
        e[P1P] = p_hyperfine + delta_p
        freqs = {
            "g": e[P10] - e[S00],
            "d": e[P10] - e[S10] - raman_detuning,
            "r0": e[P00] - omega_q,
            "r1": e[P10] - omega_q,
        }
        meta = {"raman_detuning": raman_detuning, "s_zeeman": s_zeeman, "omega_q": omega_q}
        return cls(tuple(e), freqs, rabi_g, rabi_d, rabi_r0, rabi_r1, gamma, delta_p, meta)

    @classmethod
    def for_rates(cls, gamma_g: float, gamma_d: float, **kwargs) -> "YbLevelScheme":
        """Scheme whose closed-form effective rates equal the targets."""
        gamma = kwargs.get("gamma", DEFAULT_GAMMA)
        delta_p = kwargs.get("delta_p", DEFAULT_DELTA_P)
        rabi_g, rabi_d = calibrate_rabi(gamma_g, gamma_d, gamma, delta_p)
        return cls.symmetric(rabi_g, rabi_d, **kwargs)

    def with_rabi(self, rabi_g: float, rabi_d: float) -> "YbLevelScheme":
        return replace(self, rabi_g=rabi_g, rabi_d=rabi_d)

    def regime_warnings(self) -> list[str]:
        out = []
        for name in ("rabi_g", "rabi_d", "rabi_r1"):
            ratio = getattr(self, name) / self.rabi_r0 if self.rabi_r0 > 0 else math.inf
            if ratio > REGIME_RATIO:
                out.append(f"{name}/rabi_r0 = {ratio:.3g} exceeds {REGIME_RATIO}")
        for name in ("rabi_g", "rabi_d"):
            ratio = getattr(self, name) / self.gamma
            if ratio > REGIME_RATIO:
                out.append(f"{name}/gamma = {ratio:.3g} exceeds {REGIME_RATIO}")
        return out


def calibrate_rabi(gamma_g: float, gamma_d: float, gamma: float = DEFAULT_GAMMA, delta_p: float = DEFAULT_DELTA_P):
    """Invert the closed-form rates: Rabi strengths giving target ``(Gamma_g, Gamma_d)``."""
    x = 4 * delta_p**2 + gamma**2
    return math.sqrt(3 * gamma_g * x / (8 * gamma)), math.sqrt(3 * gamma_d * x / (4 * gamma))


def yb_rates_closed_form(scheme: YbLevelScheme) -> RateSet:
    x = 4 * scheme.delta_p**2 + scheme.gamma**2
    g = scheme.gamma
    return RateSet(
        8 * g / 3 * scheme.rabi_g**2 / x,
        4 * g / 3 * scheme.rabi_d**2 / x,
        g / 3 * (2 * scheme.rabi_d**2 + scheme.rabi_g**2) / x,
    )


def _rabi(scheme: YbLevelScheme, laser: str) -> float:
    return {"g": scheme.rabi_g, "d": scheme.rabi_d, "r0": scheme.rabi_r0, "r1": scheme.rabi_r1}[laser]


def frame_offsets(scheme: YbLevelScheme) -> np.ndarray:
    """Per-level frame frequencies making every laser term static.

    Walks the laser-coupling graph from |0> (and from S|1,-1> for the repump
    manifold), assigning ``theta_upper = theta_lower + omega_laser``.
    """
    theta = [None] * 8
    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(8)}
    for lo, hi, laser in _LASER_LINKS:
        w = scheme.laser_frequencies[laser]
        adj[lo].append((hi, w))
        adj[hi].append((lo, -w))
    for root in (S00, S1M, S10, S1P, P00, P10, P1M, P1P):
        if theta[root] is not None:
            continue
        theta[root] = scheme.energies[root]
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for j, w in adj[i]:
                want = theta[i] + w
                if theta[j] is None:
                    theta[j] = want
                    queue.append(j)
                elif abs(theta[j] - want) > 1e-6 * max(1.0, abs(want)):
                    raise ValueError("laser frequencies admit no static rotating frame")
    return np.array(theta)


def rotating_energies(scheme: YbLevelScheme) -> np.ndarray:
    return np.asarray(scheme.energies) - frame_offsets(scheme)


def yb_decay_terms(scheme: YbLevelScheme) -> tuple[list[LindbladTerm], list[str]]:
    terms, labels = [], []
    for src, dsts in DECAY_CHANNELS.items():
        for dst in dsts:
            op = np.zeros((8, 8), dtype=complex)
            op[dst, src] = 1.0
            terms.append(LindbladTerm(op, scheme.gamma / 3))
            labels.append(f"{LEVEL_NAMES[src]}->{LEVEL_NAMES[dst]}")
    return terms, labels


def yb_full_model(scheme: YbLevelScheme) -> OpenSystemModel:
    """Eight-level master equation in the static rotating frame (12 decay terms)."""
    h = np.diag(rotating_energies(scheme)).astype(complex)
    for lo, hi, laser in _LASER_LINKS:
        h[lo, hi] += 0.5 * _rabi(scheme, laser)
        h[hi, lo] += 0.5 * _rabi(scheme, laser)
    terms, _ = yb_decay_terms(scheme)
    return OpenSystemModel(h, terms)


def yb_partitioned(scheme: YbLevelScheme) -> PartitionedModel:
    """Target ``{|0>, |1>}`` and the six auxiliary levels, without the repump lasers."""
    e = rotating_energies(scheme)
    h_t = np.diag(e[:2]).astype(complex)
    h_a = np.diag(e[2:]).astype(complex)
    couplings = []
    for laser, level, rabi in (("g", S00, scheme.rabi_g), ("d", S10, scheme.rabi_d)):
        v_a = np.zeros((6, 2), dtype=complex)
        for lo, hi, name in _LASER_LINKS:
            if name == laser and lo == level:
                v_a[hi - 2, level] = 0.5 * rabi
        couplings.append(Coupling(laser, 0.0, level, float(e[level]), v_a))
    terms, labels = yb_decay_terms(scheme)
    return PartitionedModel(h_t, h_a, couplings, terms, labels)


def yb_effective_lindblads(scheme: YbLevelScheme, repump: bool = True) -> list[EffectiveJump]:
    """Effective jumps of the Yb scheme.

    With ``repump=True`` population landing in S|1,+-1> is sent to |1>
    instantly, so each P|1,+-1> -> |1> channel effectively doubles (the
    ``sqrt(gamma/3) -> sqrt(2 gamma/3)`` replacement).
    """
    jumps = effective_lindblads(yb_partitioned(scheme))
    if not repump:
        return jumps
    redirect = np.eye(8, dtype=complex)
    for s in (S1M, S1P):
        redirect[s, s] = 0.0
        redirect[S10, s] = 1.0
    return [replace(j, operator=redirect @ j.operator) for j in jumps]


def yb_effective_rates(scheme: YbLevelScheme, repump: bool = True) -> RateSet:
    jumps = yb_effective_lindblads(scheme, repump)
    leaked = sum(float(np.sum(np.abs(j.operator[2:, :]) ** 2)) for j in jumps)
    if leaked > 0:
        log.info("effective jumps leave the qubit with total weight %.3e (ignored)", leaked)
    _log_dropped_cross_terms(jumps)
    return qubit_rates([j.target_block(2) for j in jumps])


def _log_dropped_cross_terms(jumps: list[EffectiveJump]) -> None:
    by_jump: dict[str, list[np.ndarray]] = {}
    for j in jumps:
        by_jump.setdefault(j.jump_label, []).append(j.target_block(2))
    worst = 0.0
    for ops in by_jump.values():
        for a in range(len(ops)):
            for b in range(a + 1, len(ops)):
                worst = max(worst, float(np.max(np.abs(np.outer(ops[a].ravel(), ops[b].conj().ravel())))))
    if worst:
        log.info("dropped laser beat-note cross terms of magnitude up to %.3e rad/s", worst)


def effective_qubit_model(scheme: YbLevelScheme, repump: bool = True) -> OpenSystemModel:
    """Two-level model with ``H_eff`` and the extracted rates."""
    rates = yb_effective_rates(scheme, repump)
    h = effective_hamiltonian(yb_partitioned(scheme))
    return OpenSystemModel(
        h,
        (
            LindbladTerm(SIGMA_PLUS, rates.gamma_g / 2),
            LindbladTerm(SIGMA_MINUS, rates.gamma_d / 2),
            LindbladTerm(SIGMA_Z, rates.gamma_z / 2),
        ),
    )


@dataclass
class ReductionReport:
    times: np.ndarray
    full_bloch: np.ndarray
    effective_bloch: np.ndarray
    max_bloch_deviation: float
    max_mz_deviation: float
    max_aux_population: float
    rates: RateSet
    warnings: list[str]


def validate_reduction(
    scheme: YbLevelScheme,
    horizon: float,
    rho0_qubit=None,
    *,
    dt: float | None = None,
    n_samples: int = 400,
) -> ReductionReport:
    """Integrate the eight-level and the effective two-level model side by side.

    Both start from the same qubit state (default |1>).  The full model's
    qubit Bloch vector is read from its target block without renormalizing,
    so population parked in auxiliary levels counts as deviation.
    """
    rho_q = pure_state(KET_1) if rho0_qubit is None else np.asarray(rho0_qubit, dtype=complex)
    full = yb_full_model(scheme)
    eff = effective_qubit_model(scheme)
    rho_full = np.zeros((8, 8), dtype=complex)
    rho_full[:2, :2] = rho_q
    if dt is None:
        dt = suggest_dt(full)
    n_steps = int(math.floor(horizon / dt + 1e-9))
    stride = max(1, n_steps // n_samples)
    tr_full = integrate(full, rho_full, (0.0, horizon), dt, sample_every=stride)
    tr_eff = integrate(eff, rho_q, (0.0, horizon), dt, sample_every=stride)
    mf = bloch_array(tr_full.states[:, :2, :2])
    me = tr_eff.bloch
    aux = 1.0 - np.einsum("nii->n", tr_full.states[:, :2, :2]).real
    dev = np.abs(mf - me)
    return ReductionReport(
        times=tr_full.times,
        full_bloch=mf,
        effective_bloch=me,
        max_bloch_deviation=float(np.max(np.linalg.norm(mf - me, axis=1))),
        max_mz_deviation=float(np.max(dev[:, 2])),
        max_aux_population=float(np.max(aux)),
        rates=yb_effective_rates(scheme),
        warnings=scheme.regime_warnings(),
    )


def reduction_scaling(scheme: YbLevelScheme, factors=(0.5, 2**-0.5, 1.0), horizon: float = 400e-6, **kwargs):
    """Deviation for Rabi strengths ``(rabi_g, rabi_d) * f`` at fixed gamma.

    The horizon shrinks as ``1/f^2`` so that every run covers the same number
    of effective relaxation times.  Returns ``(omega_over_gamma, deviations,
    slope)`` with the log-log slope from a least-squares line.

    Leakage through ``rabi_r1`` adds an Omega-independent error floor, so
    clean power-law scaling needs ``rabi_r1 = 0``.
    """
    ratios, devs = [], []
    for f in factors:
        s = scheme.with_rabi(scheme.rabi_g * f, scheme.rabi_d * f)
        rep = validate_reduction(s, horizon / f**2, **kwargs)
        ratios.append(max(s.rabi_g, s.rabi_d) / s.gamma)
        devs.append(rep.max_bloch_deviation)
    slope = float(np.polyfit(np.log(ratios), np.log(devs), 1)[0])
    return np.array(ratios), np.array(devs), slope


LAB_SCHEME_RATES = (1.27 * KHZ, 7.33 * KHZ)
