"""Truncated quantum-rotor Hilbert space, von Mises states and displacements.

Basis states ``|l>`` carry integer angular momentum; the shift operator acts as
``E|l> = |l-1>`` and the angle eigenstates are
``|phi> = sum_l exp(-i l phi)|l> / sqrt(2 pi)``. States live on a finite
window ``l_lo..l_hi`` of the basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BesselDomainError, GridError, RotorError, WindowError

NORM_TOL = 1e-10
TAIL_TOL = 1e-10
MAX_ORDER = 200_000
MAX_X = 100.0


def bessel_i(order: int, x: float) -> float:
    """Modified Bessel function of the first kind for integer order.

    Power series for ``x <= 15`` (or whenever ``|order| >= x``), otherwise a
    scaled backward recurrence normalized by ``I_0 + 2 sum I_k = exp(x)``.
    Relative accuracy is about 1e-13 over the supported domain
    ``|order| <= 2e5``, ``0 <= x <= 100``.
    """
    if x < 0 or not math.isfinite(x) or x > MAX_X:
        raise BesselDomainError(f"x={x!r} outside [0, {MAX_X}]")
    if abs(order) > MAX_ORDER:
        raise BesselDomainError(f"|order|={abs(order)} exceeds {MAX_ORDER}")
    return kernels.bessel_i(int(order), float(x))


def bessel_i_table(max_order: int, x) -> np.ndarray:
    """``I_0..I_max_order`` evaluated at every element of ``x``.

    Result has shape ``(max_order + 1,) + np.shape(x)``.
    """
    xa = np.asarray(x, dtype=float)
    if xa.size and (np.any(xa < 0) or np.any(xa > MAX_X) or not np.all(np.isfinite(xa))):
        raise BesselDomainError("x outside [0, 100]")
    if max_order < 0 or max_order > MAX_ORDER:
        raise BesselDomainError(f"max_order={max_order} out of range")
    return kernels.bessel_i_table(int(max_order), xa)


def bessel_i_signed(orders, x) -> np.ndarray:
    """I_n(x) for an array of (possibly negative) integer orders and real x of
    either sign, broadcasting ``orders`` against ``x``."""
    orders = np.asarray(orders, dtype=int)
    x = np.asarray(x, dtype=float)
    ob, xb = np.broadcast_arrays(orders, x)
    n_abs = np.abs(ob)
    table = bessel_i_table(int(n_abs.max(initial=0)), np.abs(xb))
    vals = np.take_along_axis(table, n_abs[None, ...], axis=0)[0]
    # I_n(-x) = (-1)^n I_n(x)
    flip = (xb < 0) & (n_abs % 2 == 1)
    return np.where(flip, -vals, vals)


def wrap_angle(a: float) -> float:
    """Wrap into [-pi, pi); in-range values pass through unchanged."""
    if -math.pi <= a < math.pi:
        return a
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    return w if w < math.pi else -math.pi


@dataclass(frozen=True)
class BasisWindow:
    """Inclusive range ``l_lo..l_hi`` of angular-momentum indices."""

    l_lo: int
    l_hi: int

    def __post_init__(self):
        if self.l_hi - self.l_lo + 1 < 3:
            raise WindowError(f"window [{self.l_lo}, {self.l_hi}] has fewer than 3 states")

    @classmethod
    def centered(cls, center: int, half_width: int) -> "BasisWindow":
        return cls(center - half_width, center + half_width)

    @classmethod
    def of_dim(cls, dim: int, center: int = 0) -> "BasisWindow":
        lo = center - dim // 2
        return cls(lo, lo + dim - 1)

    @property
    def dim(self) -> int:
        return self.l_hi - self.l_lo + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.l_lo, self.l_hi + 1)

    def contains(self, other: "BasisWindow") -> bool:
        return self.l_lo <= other.l_lo and other.l_hi <= self.l_hi

    def union(self, other: "BasisWindow") -> "BasisWindow":
        return BasisWindow(min(self.l_lo, other.l_lo), max(self.l_hi, other.l_hi))

    def shifted(self, n: int) -> "BasisWindow":
        return BasisWindow(self.l_lo + n, self.l_hi + n)


def default_window(n: int, kappa: float) -> BasisWindow:
    """Window around ``n`` wide enough for a von Mises tail below 1e-10."""
    return BasisWindow.centered(n, max(20, math.ceil(8 * kappa + 10)))


def _embed(amps: np.ndarray, src: BasisWindow, dst: BasisWindow) -> np.ndarray:
    if not dst.contains(src):
        raise WindowError(f"{src} does not fit inside {dst}")
    out = np.zeros(dst.dim, dtype=complex)
    off = src.l_lo - dst.l_lo
    out[off : off + src.dim] = amps
    return out


@dataclass(frozen=True, eq=False)
class TruncatedRotorState:
    """Normalized amplitude vector, ``amps[i] = a_{l_lo + i}``."""

    window: BasisWindow
    amps: np.ndarray

    def __post_init__(self):
        a = np.array(self.amps, dtype=complex)
        if a.shape != (self.window.dim,):
            raise WindowError(f"amplitude length {a.shape} does not match window dim {self.window.dim}")
        nrm = float(np.vdot(a, a).real)
        if abs(nrm - 1.0) > NORM_TOL:
            raise RotorError(f"state not normalized: sum |a|^2 = {nrm!r}")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @classmethod
    def from_amplitudes(cls, window: BasisWindow, amps, normalize: bool = True) -> "TruncatedRotorState":
        a = np.asarray(amps, dtype=complex)
        if normalize:
            nrm = np.sqrt(np.vdot(a, a).real)
            if nrm == 0:
                raise RotorError("zero vector")
            a = a / nrm
        return cls(window, a)

    @classmethod
    def basis(cls, l: int, window: BasisWindow | None = None) -> "TruncatedRotorState":
        """Angular-momentum eigenstate ``|l>``."""
        window = window or BasisWindow.centered(l, 1)
        a = np.zeros(window.dim, dtype=complex)
        a[l - window.l_lo] = 1.0
        return cls(window, a)

    @property
    def indices(self) -> np.ndarray:
        return self.window.indices

    def embed(self, window: BasisWindow) -> "TruncatedRotorState":
        return TruncatedRotorState(window, _embed(self.amps, self.window, window))

    def amplitude(self, l: int) -> complex:
        if self.window.l_lo <= l <= self.window.l_hi:
            return complex(self.amps[l - self.window.l_lo])
        return 0j

    def projector(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())


@dataclass(frozen=True)
class VonMisesParams:
    """Mean angular momentum ``n``, mean angle ``alpha``, spread ``kappa``."""

    n: int
    alpha: float
    kappa: float

    def __post_init__(self):
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise RotorError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if not math.isfinite(self.alpha):
            raise RotorError("alpha must be finite")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "alpha", wrap_angle(float(self.alpha)))
        object.__setattr__(self, "kappa", float(self.kappa))


@dataclass(frozen=True)
class TimeWindow:
    """Detection window ``T`` (ps) and arrival time ``tau0`` (ps), which
    defaults to mid-window."""

    T: float
    tau0: float | None = None

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise RotorError("T must be positive")
        if self.tau0 is None:
            object.__setattr__(self, "tau0", 0.5 * self.T)
        if not (0.0 <= self.tau0 < self.T):
            raise RotorError(f"tau0={self.tau0} outside [0, T)")

    def angle_to_time(self, phi):
        """Lab time of an internal angle: phi = 0 sits mid-window."""
        return np.asarray(phi) / (2 * np.pi) * self.T + 0.5 * self.T

    def time_to_angle(self, t):
        return 2 * np.pi * (np.asarray(t) - 0.5 * self.T) / self.T


def von_mises_amplitudes(p: VonMisesParams, window: BasisWindow) -> np.ndarray:
    """Exact (un-renormalized) von Mises amplitudes restricted to ``window``:
    ``exp(i (n-l) alpha) I_{n-l}(kappa) / sqrt(I_0(2 kappa))``."""
    k = p.n - window.indices
    kmax = int(np.abs(k).max())
    table = bessel_i_table(kmax, p.kappa)
    bes = table[np.abs(k)]
    norm = math.sqrt(bessel_i(0, 2.0 * p.kappa))
    return np.exp(1j * k * p.alpha) * bes / norm


def von_mises_state(
    p: VonMisesParams,
    window: BasisWindow | None = None,
    auto_widen: bool = True,
    tail_tol: float = TAIL_TOL,
) -> TruncatedRotorState:
    """The von Mises state ``|n, alpha>`` of spread ``kappa`` on ``window``.

    The truncated tail ``1 - sum |a_l|^2`` must stay below ``tail_tol``; a
    too-narrow window is widened to the default one unless ``auto_widen`` is
    off, in which case :class:`WindowError` is raised.
    """
    if window is None:
        window = default_window(p.n, p.kappa)
    a = von_mises_amplitudes(p, window)
    tail = 1.0 - float(np.vdot(a, a).real)
    if tail >= tail_tol:
        if not auto_widen:
            raise WindowError(f"window {window} drops a tail of {tail:.3e} >= {tail_tol:.1e}")
        window = window.union(default_window(p.n, p.kappa))
        a = von_mises_amplitudes(p, window)
    return TruncatedRotorState.from_amplitudes(window, a)


def displace(s: TruncatedRotorState, n: int, alpha: float, auto_widen: bool = True) -> TruncatedRotorState:
    """Apply ``D(n, alpha) = exp(-i L alpha) E^{-n}``:
    ``(D s)_l = exp(-i l alpha) s_{l-n}``.

    The result stays on the input window when the shifted support fits
    (dropped weight below 1e-10); otherwise the window is widened, or
    :class:`WindowError` raised when ``auto_widen`` is off.
    """
    n = int(n)
    src = s.window.shifted(n)
    dst = s.window
    if not dst.contains(src):
        full = _embed(s.amps, src, src.union(dst))
        inside = _embed(np.ones(dst.dim), dst, src.union(dst)) != 0
        lost = float(np.sum(np.abs(full[~inside]) ** 2))
        if lost >= TAIL_TOL:
            if not auto_widen:
                raise WindowError(f"displacement by {n} pushes weight {lost:.3e} out of {dst}")
            dst = src.union(dst)
    big = src.union(dst)
    shifted = _embed(s.amps, src, big)
    off = dst.l_lo - big.l_lo
    out = shifted[off : off + dst.dim] * np.exp(-1j * dst.indices * alpha)
    return TruncatedRotorState.from_amplitudes(dst, out)


def overlap(s1: TruncatedRotorState, s2: TruncatedRotorState) -> complex:
    """Inner product ``<s1|s2>``; states on different windows are embedded
    into their union."""
    if s1.window != s2.window:
        w = s1.window.union(s2.window)
        s1, s2 = s1.embed(w), s2.embed(w)
    return complex(np.vdot(s1.amps, s2.amps))


def fidelity(s1: TruncatedRotorState, s2: TruncatedRotorState) -> float:
    return abs(overlap(s1, s2)) ** 2


def von_mises_overlap_sq(p1: VonMisesParams, p2: VonMisesParams, fallback: bool = False) -> float:
    """Closed-form ``|<n,alpha|n',alpha'>|^2`` for equal spreads:
    ``I_{n-n'}^2[2 kappa cos((alpha-alpha')/2)] / I_0^2(2 kappa)``.

    Unequal spreads raise unless ``fallback`` is set, in which case the
    overlap of the constructed states is returned.
    """
    if p1.kappa != p2.kappa:
        if not fallback:
            raise RotorError("closed-form overlap needs equal kappa")
        return fidelity(von_mises_state(p1), von_mises_state(p2))
    k = p1.kappa
    x = abs(2.0 * k * math.cos(0.5 * (p1.alpha - p2.alpha)))
    return (bessel_i(p1.n - p2.n, x) / bessel_i(0, 2.0 * k)) ** 2


def displacement_matrix_element(p: VonMisesParams, l: int, phi: float) -> complex:
    """``<n,alpha|D(l, phi)|n,alpha>`` in closed form:
    ``exp(i(l alpha - phi n)) exp(-i l phi/2) I_l[2 kappa cos(phi/2)] / I_0(2 kappa)``.
    """
    x = 2.0 * p.kappa * math.cos(0.5 * phi)
    bes = bessel_i(l, abs(x))
    if x < 0 and l % 2:
        bes = -bes
    phase = np.exp(1j * (l * p.alpha - phi * p.n)) * np.exp(-0.5j * l * phi)
    return complex(phase * bes / bessel_i(0, 2.0 * p.kappa))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace matrix on a window."""

    window: BasisWindow
    matrix: np.ndarray
    tol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.window.dim, self.window.dim):
            raise WindowError("matrix shape does not match window")
        if np.max(np.abs(m - m.conj().T)) > self.tol:
            raise RotorError("density matrix not Hermitian")
        if abs(np.trace(m).real - 1.0) > self.tol:
            raise RotorError(f"trace {np.trace(m).real!r} != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -self.tol:
            raise RotorError("density matrix has negative eigenvalues")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, s: TruncatedRotorState) -> "DensityOperator":
        return cls(s.window, s.projector())

    @classmethod
    def from_matrix(cls, window: BasisWindow, m) -> "DensityOperator":
        """Hermitize and renormalize the trace before validating."""
        m = np.asarray(m, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(window, m / np.trace(m).real)

    @property
    def dim(self) -> int:
        return self.window.dim

    def embed(self, window: BasisWindow) -> "DensityOperator":
        if not window.contains(self.window):
            raise WindowError(f"{self.window} does not fit inside {window}")
        out = np.zeros((window.dim, window.dim), dtype=complex)
        o = self.window.l_lo - window.l_lo
        out[o : o + self.dim, o : o + self.dim] = self.matrix
        return DensityOperator(window, out)

    def expectation_pure(self, s: TruncatedRotorState) -> float:
        """``<s|rho|s>``, embedding ``s`` into the density window (truncating
        any part of ``s`` outside it)."""
        v = np.zeros(self.dim, dtype=complex)
        lo = max(self.window.l_lo, s.window.l_lo)
        hi = min(self.window.l_hi, s.window.l_hi)
        if lo <= hi:
            v[lo - self.window.l_lo : hi - self.window.l_lo + 1] = s.amps[lo - s.window.l_lo : hi - s.window.l_lo + 1]
        return float(np.vdot(v, self.matrix @ v).real)

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)


def trace_displacement(rho: DensityOperator, l_values, phi) -> np.ndarray:
    """``Tr[rho D(l, phi)] = sum_k rho_{k, k+l} exp(-i (k+l) phi)`` on the
    outer grid ``l_values x phi``."""
    l_values = np.asarray(l_values, dtype=int)
    phi = np.asarray(phi, dtype=float)
    m = rho.matrix
    d = rho.dim
    idx = rho.window.indices
    out = np.zeros((l_values.size, phi.size), dtype=complex)
    for i, l in enumerate(l_values):
        if abs(l) >= d:
            continue
        # pairs (k, k+l) inside the window
        if l >= 0:
            diag = np.diagonal(m, offset=l)
            kk = idx[: d - l]
        else:
            diag = np.diagonal(m, offset=l)
            kk = idx[-l:]
        out[i] = np.exp(-1j * np.outer(phi, kk + l)) @ diag
    return out


def _check_uniform(grid: np.ndarray, name: str, period: float | None = None) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridError(f"{name} grid must be 1-D with at least 2 points")
    h = np.diff(grid)
    step = (grid[-1] - grid[0]) / (grid.size - 1)
    if np.max(np.abs(h - step)) > 1e-12 * max(1.0, abs(step)) * grid.size:
        raise GridError(f"{name} grid is not uniform")
    if period is not None and abs(step * grid.size - period) > 1e-9 * period:
        raise GridError(f"{name} grid does not span one period of {period}")
    return step


def uniform_angles(n: int, period: float = 2 * np.pi, midpoint: bool = False) -> np.ndarray:
    """``n`` equispaced angles on ``[-period/2, period/2)``."""
    shift = 0.5 if midpoint else 0.0
    return -0.5 * period + period * (np.arange(n) + shift) / n


def rotor_fourier(f, n_values, alpha_grid, l_values=None, phi_grid=None):
    """Discrete-continuous Fourier transform of a function of ``(n, alpha)``:

    ``(F f)(l, phi) = sum_n int dalpha/2pi exp(i(l alpha - phi n)) f(n, alpha)``

    ``f`` has shape ``(len(n_values), len(alpha_grid))`` with the alpha grid
    uniform over one period, so the angular integral is the grid mean (exact
    for band-limited ``f``). Returns ``(F, l_values, phi_grid)`` with ``F``
    indexed ``[l, phi]``.
    """
    f = np.asarray(f, dtype=complex)
    n_values = np.asarray(n_values)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    _check_uniform(alpha_grid, "alpha", 2 * np.pi)
    N = alpha_grid.size
    if f.shape != (n_values.size, N):
        raise GridError(f"f has shape {f.shape}, expected {(n_values.size, N)}")
    if l_values is None:
        l_values = np.arange(-(N // 2), N - N // 2)
    l_values = np.asarray(l_values)
    if phi_grid is None:
        span = int(np.ptp(n_values)) + 1 if n_values.size else 1
        phi_grid = uniform_angles(max(N, span))
    phi_grid = np.asarray(phi_grid, dtype=float)
    ang = np.exp(1j * np.outer(alpha_grid, l_values)) / N          # [alpha, l]
    mom = np.exp(-1j * np.outer(n_values, phi_grid))               # [n, phi]
    F = (f @ ang).T @ mom
    return F, l_values, phi_grid


def rotor_fourier_inverse(F, l_values, phi_grid, n_values, alpha_grid):
    """Inverse of :func:`rotor_fourier`:

    ``f(n, alpha) = sum_l exp(-i l alpha) <exp(i phi n) F(l, phi)>_phi``

    where ``<.>_phi`` is the mean over a uniform ``phi_grid`` spanning one
    period. A grid over ``[-2pi, 2pi)`` gives the transform on the doubled
    cover, which admits half-integer ``n_values``.
    """
    F = np.asarray(F, dtype=complex)
    l_values = np.asarray(l_values)
    phi_grid = np.asarray(phi_grid, dtype=float)
    n_values = np.asarray(n_values, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    step = _check_uniform(phi_grid, "phi")
    period = step * phi_grid.size
    if min(abs(period - 2 * np.pi), abs(period - 4 * np.pi)) > 1e-9:
        raise GridError("phi grid must span 2pi or 4pi")
    M = phi_grid.size
    mom = np.exp(1j * np.outer(phi_grid, n_values)) / M            # [phi, n]
    ang = np.exp(-1j * np.outer(l_values, alpha_grid))             # [l, alpha]
    return (F @ mom).T @ ang
