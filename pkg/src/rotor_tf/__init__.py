"""Quantum-rotor description of time and frequency on a finite window."""
__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BesselDomainError,
    ConfigError,
    DegenerateStateError,
    GridError,
    QuadratureError,
    RotorError,
    WindowError,
)
from .rotor_core import (  # noqa: F401
    BasisWindow,
    DensityOperator,
    TimeWindow,
    TruncatedRotorState,
    VonMisesParams,
    bessel_i,
    displace,
    displacement_matrix_element,
    overlap,
    rotor_fourier,
    rotor_fourier_inverse,
    von_mises_overlap_sq,
    von_mises_state,
)
from .uncertainty import BoundTable, UncertaintyReport, bounds, mean_E, moments_L, report, sine_variance  # noqa: F401
