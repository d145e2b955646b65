"""Moments of the shift operator E, angular momentum L and the rotated sine S,
together with the closed-form uncertainty bounds for von Mises states and for
simultaneous (state + ancilla) measurement."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateStateError, RotorError
from .rotor_core import TruncatedRotorState, bessel_i

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class UncertaintyReport:
    """Scalar summary of a state or a measured distribution.

    ``sigma`` and ``normalized_product`` are ``None`` and ``degenerate`` is
    set when ``|<E>|`` vanishes and the phase reference is undefined.
    """

    mean_E: complex
    mean_L: float
    var_L: float
    var_S: float
    sigma: float | None
    product: float
    normalized_product: float | None
    kind: str = "state"
    degenerate: bool = False

    @property
    def delta_L(self) -> float:
        return math.sqrt(self.var_L)

    @property
    def delta_S(self) -> float:
        return math.sqrt(self.var_S)

    @property
    def abs_E(self) -> float:
        return abs(self.mean_E)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mean_E"] = [self.mean_E.real, self.mean_E.imag]
        d["abs_E"] = self.abs_E
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UncertaintyReport":
        d = dict(d)
        d.pop("abs_E", None)
        re, im = d.pop("mean_E")
        return cls(mean_E=complex(re, im), **d)


def build_report(mean_E, mean_L, var_L, var_S, kind="state") -> UncertaintyReport:
    """Assemble a report from raw moments, flagging a vanishing ``<E>``."""
    mean_E = complex(mean_E)
    var_L = max(float(var_L), 0.0)
    var_S = min(max(float(var_S), 0.0), 1.0)
    product = math.sqrt(var_L * var_S)
    a = abs(mean_E)
    if a < DEGENERATE_TOL:
        return UncertaintyReport(mean_E, float(mean_L), var_L, var_S, None, product, None, kind, True)
    sigma = math.sqrt(var_S) / a
    return UncertaintyReport(mean_E, float(mean_L), var_L, var_S, sigma, product, product / a, kind, False)


def _shift_moment(s: TruncatedRotorState, k: int) -> complex:
    """``<E^k> = sum_l conj(a_{l-k}) a_l``."""
    a = s.amps
    if k >= a.size:
        return 0j
    return complex(np.vdot(a[:-k], a[k:]))


def mean_E(s: TruncatedRotorState) -> complex:
    return _shift_moment(s, 1)


def mean_E2(s: TruncatedRotorState) -> complex:
    return _shift_moment(s, 2)


def moments_L(s: TruncatedRotorState) -> tuple[float, float]:
    p = np.abs(s.amps) ** 2
    l = s.indices.astype(float)
    mean = float(p @ l)
    var = float(p @ (l - mean) ** 2)
    return mean, max(var, 0.0)


def rotated_sine_variance(e1: complex, e2: complex) -> float:
    """``<S^2>`` about the direction of ``e1`` from the first two moments of a
    unitary shift: ``(1 - Re[exp(-2i arg e1) e2]) / 2``."""
    if abs(e1) < DEGENERATE_TOL:
        raise DegenerateStateError("|<E>| vanishes; rotated sine undefined")
    u = e1 / abs(e1)
    return 0.5 * (1.0 - (e2 * u.conjugate() ** 2).real)


def sine_variance(s: TruncatedRotorState) -> float:
    return rotated_sine_variance(mean_E(s), mean_E2(s))


def report(s: TruncatedRotorState) -> UncertaintyReport:
    """Operator-moment uncertainty report of a pure state."""
    e1 = mean_E(s)
    if abs(e1) < DEGENERATE_TOL:
        raise DegenerateStateError("|<E>| vanishes; normalized uncertainties undefined")
    m, v = moments_L(s)
    return build_report(e1, m, v, rotated_sine_variance(e1, mean_E2(s)), "state")


def report_rho(rho) -> UncertaintyReport:
    """Same as :func:`report` for a density operator; degenerate inputs give a
    flagged report instead of raising."""
    m = rho.matrix
    d = rho.dim
    p = np.real(np.diag(m))
    l = rho.window.indices.astype(float)
    mean = float(p @ l)
    var = float(p @ (l - mean) ** 2)
    # Tr[rho E^k] = sum_l rho_{l, l-k}
    e1 = complex(np.trace(m, offset=-1)) if d > 1 else 0j
    e2 = complex(np.trace(m, offset=-2)) if d > 2 else 0j
    if abs(e1) < DEGENERATE_TOL:
        return build_report(e1, mean, var, 1.0, "state")
    return build_report(e1, mean, var, rotated_sine_variance(e1, e2), "state")


@dataclass(frozen=True)
class BoundTable:
    """Closed-form uncertainty bounds at spread ``kappa``.

    ``meas_norm`` is ``inf`` with ``meas_norm_defined`` false at ``kappa = 0``.
    """

    kappa: float
    state_product: float
    meas_product: float
    state_norm: float
    meas_norm: float
    dispersion: float
    meas_norm_defined: bool = True


def bessel_ratios(kappa: float) -> tuple[float, float]:
    """``I_1(2k)/I_0(2k)`` and ``I_2(2k)/I_0(2k)``."""
    x = 2.0 * kappa
    i0 = bessel_i(0, x)
    return bessel_i(1, x) / i0, bessel_i(2, x) / i0


def bounds(kappa: float) -> BoundTable:
    if not (kappa >= 0 and math.isfinite(kappa)):
        raise RotorError(f"kappa must be finite and >= 0, got {kappa!r}")
    r1, r2 = bessel_ratios(kappa)
    root = math.sqrt(0.5 * (1.0 + r2))
    disp = math.sqrt(max(0.0, 1.0 - r1 * r1))
    if r1 == 0.0:
        return BoundTable(kappa, 0.0, 0.0, 0.5, math.inf, disp, False)
    return BoundTable(kappa, 0.5 * r1, r1 * root, 0.5, root / r1, disp)
