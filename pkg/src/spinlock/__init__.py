"""Simulation toolkit for quantum synchronization of a dissipative qubit.

Modules
-------
quantum
    States, Pauli algebra, spin-coherent states.
lindblad
    Master-equation models, RK4 integration, steady states.
sync
    Rotating-frame synchronization model and its closed forms.
phasespace
    Husimi-Q function and the S-function measure.
effective
    Adiabatic elimination and the Yb+ eight-level scheme.
labframe
    Lab-frame simulation and spectral analysis.
estimation
    Simulated readout, decay fits and tomography.
config, runner, cli
    Experiment files, orchestration and the ``spinlock`` command.
"""

__version__ = "0.1.0"

from .errors import SpinlockError  # noqa: E402
from .lindblad import LindbladTerm, OpenSystemModel, integrate, steady_state  # noqa: E402
from .quantum import BlochVector, bloch_from_rho, rho_from_bloch  # noqa: E402
from .sync import OPERATING_EPSILON, OPERATING_RATES, DriveParams, RateSet  # noqa: E402

__all__ = [
    "BlochVector",
    "DriveParams",
    "LindbladTerm",
    "OpenSystemModel",
    "OPERATING_EPSILON",
    "OPERATING_RATES",
    "RateSet",
    "SpinlockError",
    "bloch_from_rho",
    "integrate",
    "rho_from_bloch",
    "steady_state",
]
