"""Maximum-likelihood state reconstruction from POVM counts, the rotor Wigner
function and bootstrap confidence intervals."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GridError, RotorError, WindowError
from .measurement_sim import CountMatrix, PovmGrid, measured_moments, poisson_counts, povm_vectors
from .rotor_core import BasisWindow, DensityOperator, rotor_fourier_inverse, trace_displacement, uniform_angles
from .uncertainty import UncertaintyReport, build_report, rotated_sine_variance, DEGENERATE_TOL

__all__ = [
    "DensityOperator",
    "MaxLikResult",
    "maxlik_reconstruct",
    "WignerMap",
    "wigner_characteristic",
    "wigner_from_rho",
    "state_uncertainties",
    "BootstrapReport",
    "bootstrap",
]

P_FLOOR = 1e-300
BOUNDARY_EIG = 1e-10


def _psd_power(G, power):
    w, U = np.linalg.eigh(G)
    return (U * w**power) @ U.conj().T


@dataclass(frozen=True, eq=False)
class CompletedPovm:
    """POVM restricted to a window and rescaled so its elements sum to the
    identity: ``A`` holds one bra per row, ``G`` the original element sum."""

    A: np.ndarray
    G: np.ndarray
    G_half: np.ndarray
    G_inv_half: np.ndarray

    @classmethod
    def build(cls, grid: PovmGrid, window: BasisWindow, phi_offset: float = 0.0) -> "CompletedPovm":
        V = povm_vectors(grid, window, phi_offset) * math.sqrt(grid.quadrature_weight / (2 * math.pi))
        G = V.T @ V.conj()
        G = 0.5 * (G + G.conj().T)
        w = np.linalg.eigvalsh(G)
        if w.min() <= 1e-12 * w.max():
            raise WindowError("POVM grid does not span the reconstruction window")
        Gmh = _psd_power(G, -0.5)
        A = np.ascontiguousarray((V @ Gmh.T).conj())
        return cls(A, G, _psd_power(G, 0.5), Gmh)

    def to_sigma(self, rho: np.ndarray) -> np.ndarray:
        s = self.G_half @ rho @ self.G_half
        return s / np.trace(s).real

    def to_rho(self, sigma: np.ndarray) -> np.ndarray:
        r = self.G_inv_half @ sigma @ self.G_inv_half
        r = 0.5 * (r + r.conj().T)
        return r / np.trace(r).real

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        """Grid-conditional outcome probabilities ``p_j / sum p``."""
        s = self.to_sigma(rho)
        return np.einsum("jk,kl,jl->j", self.A, s, self.A.conj()).real


@dataclass(frozen=True, eq=False)
class MaxLikResult:
    rho: DensityOperator
    iterations: int
    converged: bool
    loglik: np.ndarray
    n_diluted: int
    min_eigenvalue: float
    boundary: bool
    zero_probability_bins: tuple
    backend: str

    @property
    def final_loglik(self) -> float:
        return float(self.loglik[-1])


def _frequencies(c) -> np.ndarray:
    f = np.asarray(c.counts if isinstance(c, CountMatrix) else c, dtype=float).ravel()
    t = f.sum()
    if not t > 0:
        raise RotorError("count record is empty")
    return f / t


def maxlik_reconstruct(
    c,
    grid: PovmGrid,
    window: BasisWindow,
    max_iter: int = 5000,
    tol: float = 1e-10,
    rho0=None,
    povm: CompletedPovm | None = None,
) -> MaxLikResult:
    """Maximum-likelihood density operator for counts ``c`` on ``grid``.

    The grid's elements do not sum to the identity on ``window``, so the
    likelihood is the grid-conditional one and the iteration runs on
    ``sigma = G^1/2 rho G^1/2`` with a completed POVM (equivalently
    ``rho <- G^-1 R rho R G^-1``). Steps that would lower the likelihood are
    diluted toward the identity. ``c`` may be a :class:`CountMatrix` or an
    array of counts or frequencies in ``[m][phi]`` order.
    """
    f = _frequencies(c)
    if f.size != grid.size:
        raise WindowError("count record does not match the POVM grid")
    povm = povm or CompletedPovm.build(grid, window)
    if rho0 is None:
        sigma0 = povm.G / np.trace(povm.G).real
    else:
        r0 = rho0.matrix if isinstance(rho0, DensityOperator) else np.asarray(rho0, dtype=complex)
        sigma0 = povm.to_sigma(r0)
    sigma, it, conv, hist, ndil = kernels.rrr_iterate(povm.A, f, np.ascontiguousarray(sigma0, dtype=complex), int(max_iter), float(tol))
    rho_m = povm.to_rho(np.asarray(sigma))
    w = np.linalg.eigvalsh(rho_m)
    if w.min() < 0:
        # clip round-off negatives
        vals, U = np.linalg.eigh(rho_m)
        rho_m = (U * np.clip(vals, 0, None)) @ U.conj().T
        rho_m /= np.trace(rho_m).real
    p = np.einsum("jk,kl,jl->j", povm.A, np.asarray(sigma), povm.A.conj()).real
    zero = tuple(int(j) for j in np.flatnonzero((f > 0) & (p < P_FLOOR)))
    rho = DensityOperator.from_matrix(window, rho_m)
    return MaxLikResult(
        rho, int(it), bool(conv), np.asarray(hist), int(ndil), float(w.min()), bool(w.min() < BOUNDARY_EIG), zero, kernels.BACKEND
    )


@dataclass(frozen=True, eq=False)
class WignerMap:
    """Quasi-probability ``values[i, j]`` at momentum ``l_grid[i]`` (integers
    and half-integers) and angle ``theta_grid[j]``."""

    l_grid: np.ndarray
    theta_grid: np.ndarray
    values: np.ndarray
    imag_residue: float = 0.0

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.theta_grid.size

    def l_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dtheta

    def theta_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def integer_rows(self) -> np.ndarray:
        return np.flatnonzero(np.isclose(self.l_grid, np.round(self.l_grid)))


def wigner_characteristic(rho: DensityOperator, l_values, phi) -> np.ndarray:
    """``C_W(l, phi) = exp(i l phi/2) Tr[rho D(l, phi)] / 2 pi``."""
    l_values = np.asarray(l_values)
    phi = np.asarray(phi, dtype=float)
    return np.exp(0.5j * np.outer(l_values, phi)) * trace_displacement(rho, l_values, phi) / (2 * math.pi)


def wigner_from_rho(rho: DensityOperator, theta_points: int | None = None) -> WignerMap:
    """Rotor Wigner function by inverse transform of the characteristic
    function.

    The symmetrizing phase makes the characteristic function 4pi-periodic in
    ``phi``, so the inverse transform runs over ``phi`` in [-2pi, 2pi) and
    lands on momenta in steps of 1/2. The angle grid is ``-pi + 2 pi j / N``.
    """
    d = rho.dim
    if theta_points is None:
        theta_points = 4 * d
    if theta_points < 4 * d:
        raise GridError(f"theta_points={theta_points} below 4*dim={4 * d}")
    l_values = np.arange(-(d - 1), d)
    phi = uniform_angles(4 * d + 4, period=4 * math.pi)
    C = wigner_characteristic(rho, l_values, phi)
    n_grid = np.arange(2 * rho.window.l_lo, 2 * rho.window.l_hi + 1) / 2.0
    theta = uniform_angles(theta_points)
    W = rotor_fourier_inverse(C, l_values, phi, n_grid, theta)
    resid = float(np.abs(W.imag).max())
    if resid > 1e-10:
        raise RotorError(f"Wigner map not real (residue {resid:.2e})")
    return WignerMap(n_grid, theta, W.real.copy(), resid)


def state_uncertainties(w: WignerMap) -> UncertaintyReport:
    """State-level uncertainties from the two Wigner marginals."""
    pl = w.l_marginal()
    l = w.l_grid
    tot = pl.sum()
    mean = float(pl @ l / tot)
    var = float(pl @ (l - mean) ** 2 / tot)
    pt = w.theta_marginal() * w.dtheta
    e1 = complex(pt @ np.exp(-1j * w.theta_grid))
    e2 = complex(pt @ np.exp(-2j * w.theta_grid))
    if abs(e1) < DEGENERATE_TOL:
        return build_report(e1, mean, var, 1.0, "state")
    return build_report(e1, mean, var, rotated_sine_variance(e1, e2), "state")


CI_FIELDS = ("var_L", "var_S", "abs_E", "sigma", "product", "normalized_product")


def _fields(r: UncertaintyReport) -> dict:
    return {
        "var_L": r.var_L,
        "var_S": r.var_S,
        "abs_E": r.abs_E,
        "sigma": math.nan if r.sigma is None else r.sigma,
        "product": r.product,
        "normalized_product": math.nan if r.normalized_product is None else r.normalized_product,
    }


@dataclass(frozen=True, eq=False)
class BootstrapReport:
    """Point estimates and central 68% percentile intervals for the state
    (Wigner-marginal) and measurement (count-marginal) reports."""

    replicates: int
    point: UncertaintyReport
    point_measurement: UncertaintyReport
    ci_lo: dict
    ci_hi: dict
    failures: int = 0
    seed: int = 0
    flags: dict = field(default_factory=dict)

    def interval(self, kind: str, name: str) -> tuple[float, float]:
        return self.ci_lo[kind][name], self.ci_hi[kind][name]

    def as_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "failures": self.failures,
            "seed": self.seed,
            "point": self.point.as_dict(),
            "point_measurement": self.point_measurement.as_dict(),
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)


def _percentiles(rows: list, q: float) -> dict:
    out = {}
    for name in CI_FIELDS:
        vals = np.array([r[name] for r in rows], dtype=float)
        vals = vals[np.isfinite(vals)]
        out[name] = float(np.percentile(vals, q)) if vals.size else math.nan
    return out


def bootstrap(
    c: CountMatrix,
    grid: PovmGrid,
    window: BasisWindow,
    n_reps: int = 100,
    seed: int = 0,
    point: MaxLikResult | None = None,
    max_iter: int = 5000,
    tol: float = 1e-10,
    max_failure_fraction: float = 0.05,
    warm_start: bool = False,
) -> BootstrapReport:
    """Resample every bin as ``Poisson(counts)``, reconstruct each replicate
    and collect 16/84 percentiles.

    Replicates start from the maximally mixed state. ``warm_start`` starts
    them from the point estimate instead, which is several times faster but
    stops them closer to it and narrows the intervals at the default ``tol``.
    """
    if n_reps < 1:
        raise RotorError("n_reps must be >= 1")
    povm = CompletedPovm.build(grid, window)
    if point is None:
        point = maxlik_reconstruct(c, grid, window, max_iter, tol, povm=povm)
    point_state = state_uncertainties(wigner_from_rho(point.rho))
    point_meas = measured_moments(c, grid)
    rows = {"state": [], "measurement": []}
    failures = 0
    not_converged = 0
    for r in range(n_reps):
        counts = poisson_counts(c.counts.astype(float), seed, stream=r)
        try:
            rep = c.with_counts(counts)
            ml = maxlik_reconstruct(rep, grid, window, max_iter, tol, rho0=point.rho if warm_start else None, povm=povm)
            rs = state_uncertainties(wigner_from_rho(ml.rho))
            rm = measured_moments(rep, grid)
        except RotorError:
            failures += 1
            continue
        not_converged += not ml.converged
        rows["state"].append(_fields(rs))
        rows["measurement"].append(_fields(rm))
    if failures > max_failure_fraction * n_reps:
        raise RotorError(f"{failures} of {n_reps} bootstrap replicates failed")
    lo = {k: _percentiles(v, 16.0) for k, v in rows.items()}
    hi = {k: _percentiles(v, 84.0) for k, v in rows.items()}
    flags = {"not_converged": not_converged, "point_converged": point.converged, "point_boundary": point.boundary}
    return BootstrapReport(n_reps, point_state, point_meas, lo, hi, failures, int(seed), flags)
