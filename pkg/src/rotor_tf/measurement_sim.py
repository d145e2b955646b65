"""Simultaneous time-frequency measurement: the von Mises POVM grid, the
Q-function it samples, Poissonian count records and the moments estimated
from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateStateError, RotorError, WindowError
from .rotor_core import BasisWindow, DensityOperator, bessel_i, bessel_i_table, wrap_angle
from .uncertainty import DEGENERATE_TOL, UncertaintyReport, build_report, rotated_sine_variance

CARRIER_OFFSET = 10000


@dataclass(frozen=True)
class PovmGrid:
    """Frequency shifts ``m_shifts`` times time shifts ``phi_values`` of the
    fiducial von Mises projector with spread ``kappa_a``."""

    m_shifts: tuple
    phi_values: tuple
    kappa_a: float

    def __post_init__(self):
        m = tuple(int(v) for v in self.m_shifts)
        phi = tuple(float(v) for v in self.phi_values)
        if len(m) < 1 or len(phi) < 1:
            raise ConfigError("empty POVM grid")
        if any(b - a != 1 for a, b in zip(m, m[1:])):
            raise ConfigError("m_shifts must be contiguous and increasing")
        if not self.kappa_a > 0:
            raise ConfigError("kappa_a must be > 0")
        object.__setattr__(self, "m_shifts", m)
        object.__setattr__(self, "phi_values", phi)
        object.__setattr__(self, "kappa_a", float(self.kappa_a))

    @property
    def quadrature_weight(self) -> float:
        return 2 * math.pi / len(self.phi_values)

    @property
    def shape(self) -> tuple:
        return len(self.m_shifts), len(self.phi_values)

    @property
    def size(self) -> int:
        return len(self.m_shifts) * len(self.phi_values)

    def m_array(self) -> np.ndarray:
        return np.asarray(self.m_shifts)

    def phi_array(self) -> np.ndarray:
        return np.asarray(self.phi_values)

    def delays(self, T: float) -> np.ndarray:
        """Lab pump delays ``tau_p = phi T / 2 pi`` in ps."""
        return self.phi_array() * T / (2 * math.pi)


def build_grid(n_m: int, n_phi: int, kappa_a: float) -> PovmGrid:
    """``n_m`` frequency shifts centred on 0 (odd counts symmetric, even counts
    one extra negative shift) and ``n_phi`` midpoint angles on [-pi, pi)."""
    if n_m < 1 or n_phi < 2:
        raise ConfigError(f"invalid grid size {n_m} x {n_phi}")
    lo = -(n_m // 2)
    m = range(lo, lo + n_m)
    phi = -math.pi + (np.arange(n_phi) + 0.5) * 2 * math.pi / n_phi
    return PovmGrid(tuple(m), tuple(phi), kappa_a)


def povm_vectors(grid: PovmGrid, window: BasisWindow, phi_offset: float = 0.0) -> np.ndarray:
    """Kets ``|m, phi>`` restricted to ``window`` (no renormalization), one
    row per grid point in ``[m][phi]`` order."""
    m = grid.m_array()[:, None, None]
    l = window.indices[None, None, :]
    phi = (grid.phi_array() + phi_offset)[None, :, None]
    k = m - l
    kmax = int(np.abs(k).max())
    bes = bessel_i_table(kmax, grid.kappa_a)[np.abs(k)]
    amps = np.exp(1j * k * phi) * bes / math.sqrt(bessel_i(0, 2.0 * grid.kappa_a))
    return amps.reshape(grid.size, window.dim)


def q_values(rho: DensityOperator, vectors: np.ndarray) -> np.ndarray:
    """``<v|rho|v> / 2 pi`` for each row ``v``."""
    q = np.einsum("jk,kl,jl->j", vectors.conj(), rho.matrix, vectors).real
    return np.clip(q, 0.0, None) / (2 * math.pi)


def q_grid(rho: DensityOperator, grid: PovmGrid, phi_offset: float = 0.0) -> np.ndarray:
    """Q-function sampled on the grid, shape ``(n_m, n_phi)``."""
    return q_values(rho, povm_vectors(grid, rho.window, phi_offset)).reshape(grid.shape)


def q_function(rho: DensityOperator, m: int, phi: float, kappa_a: float) -> float:
    """``Q(m, phi) = <m,phi|rho|m,phi> / 2 pi`` for projector spread ``kappa_a``."""
    g = PovmGrid((int(m),), (float(phi),), kappa_a)
    return float(q_grid(rho, g)[0, 0])


@dataclass(frozen=True, eq=False)
class CountMatrix:
    """Integer counts indexed ``[m][phi]`` on a POVM grid plus acquisition
    metadata (``T_ps``, ``kappa_s``, ``kappa_a``, ``carrier_offset``)."""

    counts: np.ndarray
    m_shifts: tuple
    phi_values: tuple
    background_per_bin: float = 0.0
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.counts)
        if c.shape != (len(self.m_shifts), len(self.phi_values)):
            raise RotorError("counts shape does not match grid labels")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise RotorError("counts must be finite integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise RotorError("negative counts")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "m_shifts", tuple(int(v) for v in self.m_shifts))
        object.__setattr__(self, "phi_values", tuple(float(v) for v in self.phi_values))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        t = self.total
        if t <= 0:
            raise RotorError("count record is empty")
        return self.counts / t

    def with_counts(self, counts, **changes) -> "CountMatrix":
        return replace(self, counts=counts, **changes)

    def __eq__(self, other):
        if not isinstance(other, CountMatrix):
            return NotImplemented
        return (
            np.array_equal(self.counts, other.counts)
            and self.m_shifts == other.m_shifts
            and self.phi_values == other.phi_values
            and self.background_per_bin == other.background_per_bin
            and self.seed == other.seed
            and self.meta == other.meta
        )


def bin_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for one bin, derived from ``seed`` and the bin key
    so results do not depend on evaluation order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def expected_counts(rho, grid, mean_total, background_per_bin=0.0, phi_offset=0.0) -> np.ndarray:
    """Poisson means per bin: signal scaled to ``mean_total`` over the grid
    plus a uniform background."""
    if not mean_total > 0:
        raise ConfigError("mean_total must be > 0")
    if background_per_bin < 0:
        raise ConfigError("background must be >= 0")
    sig = q_grid(rho, grid, phi_offset) * grid.quadrature_weight
    s = sig.sum()
    if s <= 0:
        raise RotorError("state has no weight on the POVM grid")
    return mean_total * sig / s + background_per_bin


def poisson_counts(means: np.ndarray, seed: int, stream: int | None = None) -> np.ndarray:
    """One Poisson draw per bin, each from its own derived stream."""
    out = np.empty(means.shape, dtype=np.int64)
    prefix = () if stream is None else (stream,)
    for (i, j), mu in np.ndenumerate(means):
        out[i, j] = bin_rng(seed, *prefix, i, j).poisson(mu)
    return out


def simulate_counts(
    rho: DensityOperator,
    grid: PovmGrid,
    mean_total: float,
    background_per_bin: float = 0.0,
    seed: int = 0,
    phi_offset: float = 0.0,
    meta: dict | None = None,
) -> CountMatrix:
    """Poissonian count record of the POVM grid applied to ``rho``.

    ``phi_offset`` shifts every projector in time, emulating a fixed timing
    misalignment.
    """
    means = expected_counts(rho, grid, mean_total, background_per_bin, phi_offset)
    md = {"kappa_a": grid.kappa_a, "carrier_offset": CARRIER_OFFSET}
    if phi_offset:
        md["phi_offset"] = float(phi_offset)
    md.update(meta or {})
    return CountMatrix(poisson_counts(means, seed), grid.m_shifts, grid.phi_values, float(background_per_bin), int(seed), md)


def subtract_background(c: CountMatrix, estimate_per_bin: float) -> CountMatrix:
    """Remove a uniform background estimate, clamping at zero."""
    if estimate_per_bin < 0:
        raise ConfigError("background estimate must be >= 0")
    if estimate_per_bin == 0:
        return c
    new = np.maximum(np.rint(c.counts - estimate_per_bin), 0).astype(np.int64)
    md = dict(c.meta)
    md["background_subtracted"] = md.get("background_subtracted", 0.0) + float(estimate_per_bin)
    return c.with_counts(new, meta=md)


def moments_from_distribution(P: np.ndarray, m: np.ndarray, phi: np.ndarray, kind="measurement") -> UncertaintyReport:
    """Uncertainty report of a joint distribution ``P[m, phi]`` on the grid.

    The shift expectation follows the state convention, where a density
    peaked at angle ``a`` has ``<E>`` with phase ``exp(-i a)``.
    """
    pm = P.sum(axis=1)
    pphi = P.sum(axis=0)
    mean = float(pm @ m)
    var = float(pm @ (m - mean) ** 2)
    e1 = complex(pphi @ np.exp(-1j * phi))
    e2 = complex(pphi @ np.exp(-2j * phi))
    if abs(e1) < DEGENERATE_TOL:
        return build_report(e1, mean, var, 1.0, kind)
    rep = build_report(e1, mean, var, rotated_sine_variance(e1, e2), kind)
    if np.count_nonzero(P) == 1:
        rep = replace(rep, degenerate=True)
    return rep


def measured_moments(c: CountMatrix, grid: PovmGrid | None = None) -> UncertaintyReport:
    """Uncertainties of the commuting measured pair from normalized counts."""
    if c.total <= 0:
        raise RotorError("count record is empty")
    if grid is not None and (grid.m_shifts != c.m_shifts or len(grid.phi_values) != len(c.phi_values)):
        raise WindowError("count record does not match the POVM grid")
    return moments_from_distribution(c.frequencies(), np.asarray(c.m_shifts, float), np.asarray(c.phi_values))


def count_extremes(c: CountMatrix) -> tuple[int, int]:
    return int(c.counts.min()), int(c.counts.max())
