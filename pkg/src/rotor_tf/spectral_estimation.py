"""Continuous-frequency sector of a signal confined to a window of length T:
finite-window spectra, their overlaps, the Fisher information for the carrier
frequency and the heavy-tailed sinc^2 sampling demonstration.

The time variable maps onto the rotor angle as ``phi = 2 pi t / T - pi`` so
``phi = 0`` sits at mid-window. The single-mode kernel is
``k(x) = int_0^T exp(-i x t) dt = T exp(-i x T/2) sinc(x T/2)``. Far from the
modes the spectrum factorizes exactly as
``Psi(w) = exp(i w tau0) (1 - exp(-i w T)) / (i sqrt(2 pi T)) * g(w)`` with
``g(w) = sum_l b_l / (w - 2 pi l / T)``; integrals beyond a cutoff use the
period average of the oscillating factor, which is done in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import DegenerateStateError, GridError, QuadratureError, RotorError
from .measurement_sim import bin_rng
from .rotor_core import TimeWindow, TruncatedRotorState
from .uncertainty import mean_E, moments_L, sine_variance

QUAD_TOL = 1e-6
ZERO_GUARD = 1e-24
TAIL_PERIODS = 200
NEAR_MODE = 1e-2  # |w - c_l| T below which the direct kernel is used
DEFAULT_POINTS = 4096
DEFAULT_HALF_SPAN = 80  # in units of pi / T


def mode_kernel(x, T):
    """``int_0^T exp(-i x t) dt``."""
    x = np.asarray(x, dtype=float)
    return T * np.exp(-0.5j * x * T) * np.sinc(x * T / (2 * np.pi))


def mode_kernel_deriv(x, T):
    """``d/dx`` of :func:`mode_kernel`: ``int_0^T -i t exp(-i x t) dt``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape, dtype=complex)
    small = np.abs(x * T) < 1e-3
    xs = x[small]
    # series -i T^2 (1/2 - i x T/3 - (x T)^2/8)
    out[small] = -1j * T**2 * (0.5 - 1j * xs * T / 3 - (xs * T) ** 2 / 8)
    xb = x[~small]
    e = np.exp(-1j * xb * T)
    out[~small] = (T * e) / xb + (e - 1.0) / (1j * xb**2)
    return out


def default_grid(T: float, center: float = 0.0, n: int = DEFAULT_POINTS, half_span: float = DEFAULT_HALF_SPAN) -> np.ndarray:
    """``n`` points over ``center +- half_span * pi / T``."""
    return center + np.linspace(-half_span * np.pi / T, half_span * np.pi / T, n)


@dataclass(frozen=True, eq=False)
class SpectralAmplitude:
    """``Psi(omega)`` on a uniform grid, with the mode expansion it came from
    (``modes`` are momentum indices, ``coeffs`` the windowed time-domain
    coefficients)."""

    omega_grid: np.ndarray
    values: np.ndarray
    window: TimeWindow
    modes: np.ndarray
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 2 * np.pi * self.modes / self.window.T

    def evaluate(self, omega) -> np.ndarray:
        return _psi(self.coeffs, self.centers, self.window, np.asarray(omega, dtype=float))

    def evaluate_deriv(self, omega) -> np.ndarray:
        return _psi_deriv(self.coeffs, self.centers, self.window, np.asarray(omega, dtype=float))

    def tail_g(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        return (self.coeffs[None, :] / (omega[:, None] - self.centers[None, :])).sum(axis=1)


def _near_rows(x, T):
    return np.any(np.abs(x) * T < NEAR_MODE, axis=1)


def _psi(b, c, tw, omega):
    T = tw.T
    x = omega[:, None] - c[None, :]
    near = _near_rows(x, T)
    out = np.empty(omega.shape, dtype=complex)
    out[near] = mode_kernel(x[near], T) @ b
    far = ~near
    # k(w - c_l) = (1 - exp(-i w T)) / (i (w - c_l)) because exp(i c_l T) = 1
    wf = omega[far]
    out[far] = (1.0 - np.exp(-1j * wf * T)) / 1j * ((1.0 / x[far]) @ b)
    return np.exp(1j * omega * tw.tau0) * out / math.sqrt(2 * math.pi * T)


def _psi_deriv(b, c, tw, omega):
    T = tw.T
    x = omega[:, None] - c[None, :]
    near = _near_rows(x, T)
    k = np.empty(omega.shape, dtype=complex)
    dk = np.empty(omega.shape, dtype=complex)
    xn = x[near]
    k[near] = mode_kernel(xn, T) @ b
    dk[near] = mode_kernel_deriv(xn.ravel(), T).reshape(xn.shape) @ b
    far = ~near
    wf = omega[far]
    inv = 1.0 / x[far]
    g = inv @ b
    dg = -(inv * inv) @ b
    e = np.exp(-1j * wf * T)
    k[far] = (1.0 - e) / 1j * g
    dk[far] = T * e * g + (1.0 - e) / 1j * dg
    ph = np.exp(1j * omega * tw.tau0)
    return ph * (1j * tw.tau0 * k + dk) / math.sqrt(2 * math.pi * T)


def window_coefficients(s: TruncatedRotorState) -> np.ndarray:
    """Time-domain Fourier coefficients ``b_l = (-1)^l a_l`` of
    ``psi(t) = sum_l b_l exp(2 pi i l t / T) / sqrt(T)``."""
    return s.amps * np.where(s.indices % 2 == 0, 1.0, -1.0)


def time_amplitude(s: TruncatedRotorState, T: float, t) -> np.ndarray:
    """``psi(t)`` on the window, zero outside ``[0, T)``."""
    t = np.asarray(t, dtype=float)
    b = window_coefficients(s)
    v = np.exp(2j * np.pi * np.outer(t, s.indices) / T) @ b / math.sqrt(T)
    return np.where((t >= 0) & (t < T), v, 0.0)


def _check_grid(grid, T):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise GridError("spectral grid must be 1-D with >= 3 points")
    h = np.diff(grid)
    if np.max(np.abs(h - h.mean())) > 1e-9 * abs(h.mean()):
        raise GridError("spectral grid is not uniform")
    if h.mean() > np.pi / (4 * T):
        raise GridError(f"grid spacing {h.mean():.3g} exceeds pi/(4T) = {np.pi / (4 * T):.3g}")
    return grid, float(h.mean())


def to_spectrum(s: TruncatedRotorState, tw: TimeWindow, grid=None) -> SpectralAmplitude:
    """``Psi(omega) = exp(i omega tau0) int_0^T psi(t) exp(-i omega t) dt / sqrt(2 pi)``."""
    if grid is None:
        grid = default_grid(tw.T)
    grid, _ = _check_grid(grid, tw.T)
    b = window_coefficients(s)
    c = 2 * np.pi * s.indices / tw.T
    vals = _psi(b, c, tw, grid)
    return SpectralAmplitude(grid, vals, tw, s.indices.copy(), b, {"overlap_constant": overlap_constant(tw.T)})


def overlap_constant(T: float) -> float:
    """Prefactor of the frequency-state overlap fixed by the resolution of the
    identity: the inverse of ``int sinc^2(T x / 2) dx``, i.e. ``T / 2 pi``."""
    return T / (2 * np.pi)


def omega_overlap(w1, w2, T: float):
    """``<w1|w2> = (T / 2 pi) exp(-i T (w1 - w2)/2) sinc(T (w1 - w2)/2)`` for
    frequency states projected onto the window."""
    d = np.asarray(w1, dtype=float) - np.asarray(w2, dtype=float)
    out = overlap_constant(T) * np.exp(-0.5j * T * d) * np.sinc(T * d / (2 * np.pi))
    return complex(out) if np.ndim(out) == 0 else out


def time_frequency_overlap(t, w, T: float):
    """``<t|w> = exp(i w t) / sqrt(2 pi)`` inside the window, 0 outside."""
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=float)
    v = np.exp(1j * w * t) / math.sqrt(2 * np.pi)
    return np.where((t >= 0) & (t < T), v, 0.0)


def _tail_pair_integral(ca, cb, omega0):
    """``int_{omega0}^inf dw / ((w - ca)(w - cb))`` for ``omega0`` beyond all
    centers (elementwise)."""
    ca, cb = np.broadcast_arrays(np.asarray(ca, float), np.asarray(cb, float))
    out = np.empty(ca.shape)
    same = np.abs(ca - cb) < 1e-300
    out[same] = 1.0 / (omega0 - ca[same])
    da = ca[~same] - cb[~same]
    out[~same] = np.log1p(da / (omega0 - ca[~same])) / da
    return out


def _tail_g2(b, c, lo, hi, b2=None):
    """``int conj(g) g2`` over ``(-inf, lo] U [hi, inf)`` (``g2 = g`` by
    default)."""
    B = np.outer(b.conj(), b if b2 is None else b2)
    ci, cj = np.meshgrid(c, c, indexing="ij")
    right = _tail_pair_integral(ci, cj, hi)
    left = _tail_pair_integral(-ci, -cj, -lo)
    val = np.sum(B * (right + left))
    return float(val.real) if b2 is None else complex(val)


def _extended_grid(grid, h, T):
    """Extend ``grid`` with the same spacing out to ``+- 2 pi TAIL_PERIODS / T``."""
    reach = 2 * np.pi * TAIL_PERIODS / T
    n_lo = max(0, int(math.ceil((grid[0] + reach) / h)))
    n_hi = max(0, int(math.ceil((reach - grid[-1]) / h)))
    return grid[0] + h * np.arange(-n_lo, grid.size + n_hi)


def _integrals(psi: SpectralAmplitude, grid, h):
    """Trapezoid integrals on ``grid`` plus closed-form tails beyond it:
    norm, Fisher, first and second terms."""
    b, c, tw = psi.coeffs, psi.centers, psi.window
    T = tw.T
    P = psi.evaluate(grid)
    D = psi.evaluate_deriv(grid)
    a2 = np.abs(P) ** 2
    cross = P.conj() * D
    guard = a2 < ZERO_GUARD * a2.max()
    safe = np.where(guard, 1.0, a2)
    # at simple zeros Re(conj(P) D)^2 / |P|^2 -> |D|^2 and the phase term -> 0
    fisher_i = np.where(guard, 4 * np.abs(D) ** 2, 4 * cross.real**2 / safe)
    second_i = np.where(guard, 0.0, -4 * cross.imag**2 / safe)
    first_i = 4 * np.abs(D) ** 2

    def trap(y):
        return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))

    g2 = _tail_g2(b, c, grid[0], grid[-1]) / (np.pi * T)
    delta = tw.tau0 - 0.5 * T
    return {
        "norm": trap(a2) + g2,
        "fisher": trap(fisher_i) + T**2 * g2,
        "first": trap(first_i) + (T**2 + 4 * delta**2) * g2,
        "second": trap(second_i) - 4 * delta**2 * g2,
    }


def spectral_norm(psi: SpectralAmplitude) -> float:
    """``int |Psi|^2 d omega`` over the whole line."""
    grid, h = _check_grid(psi.omega_grid, psi.window.T)
    return _integrals(psi, _extended_grid(grid, h, psi.window.T), h)["norm"]


def spectral_inner(p1: SpectralAmplitude, p2: SpectralAmplitude) -> complex:
    """``int conj(Psi1) Psi2 d omega`` for spectra on the same window, mode
    set and arrival time."""
    if p1.window != p2.window or not np.array_equal(p1.modes, p2.modes):
        raise RotorError("spectra must share window and modes")
    grid, h = _check_grid(p1.omega_grid, p1.window.T)
    g = _extended_grid(grid, h, p1.window.T)
    y = p1.evaluate(g).conj() * p2.evaluate(g)
    body = h * (y.sum() - 0.5 * (y[0] + y[-1]))
    tail = _tail_g2(p1.coeffs, p1.centers, g[0], g[-1], p2.coeffs) / (np.pi * p1.window.T)
    return complex(body + tail)


def time_moments(s: TruncatedRotorState, T: float) -> tuple[float, float]:
    """Exact ``<t>`` and ``Delta t^2`` of ``|psi(t)|^2`` on ``[0, T)``."""
    b = window_coefficients(s)
    d = b.size
    # autocorrelation r_k = sum_l b_l conj(b_{l-k}) pairs with exp(2 pi i k t / T)
    r = np.correlate(b, b, mode="full")  # r[k + d - 1] = sum_l b_{l+k} conj(b_l)
    k = np.arange(-(d - 1), d)
    m1 = np.where(k == 0, 0.5 * T, 0j)
    m2 = np.where(k == 0, T**2 / 3, 0j)
    nz = k != 0
    kk = k[nz]
    m1[nz] = T / (1j * 2 * np.pi * kk)
    m2[nz] = T**2 * (-1j / (2 * np.pi * kk) + 1 / (2 * np.pi**2 * kk**2))
    mean = float(np.real(np.sum(r * m1)))
    second = float(np.real(np.sum(r * m2)))
    return mean, max(second - mean**2, 0.0)


def arrival_time(s: TruncatedRotorState, T: float) -> float:
    return time_moments(s, T)[0]


@dataclass(frozen=True)
class FisherReport:
    fisher: float
    four_var_t: float
    second_term: float
    cr_floor: float
    first_term: float = math.nan
    norm: float = math.nan
    overlap_constant: float = math.nan

    @property
    def cr_product(self) -> float:
        """Cramer-Rao frequency variance times the time variance."""
        return self.cr_floor * self.four_var_t / 4.0


def fisher_omega(
    psi: SpectralAmplitude, state: TruncatedRotorState | None = None, refine_tol: float = 1e-3, max_halvings: int = 4
) -> FisherReport:
    """Fisher information of ``|Psi(omega - omega0)|^2`` for the location
    ``omega0``, split into the spread term ``4 int |Psi'|^2`` and the
    non-positive phase term, plus ``4 Delta t^2`` from the time domain.

    The quadrature is repeated at half spacing until two successive
    estimates agree within ``refine_tol``. If they still differ after
    ``max_halvings`` halvings, :class:`QuadratureError` is raised.
    """
    if max_halvings < 1:
        raise ValueError("max_halvings must be at least 1")
    T = psi.window.T
    grid, h = _check_grid(psi.omega_grid, T)
    coarse = _integrals(psi, _extended_grid(grid, h, T), h)
    for k in range(1, max_halvings + 1):
        hk = h / 2**k
        fine_grid = _extended_grid(grid[0] + hk * np.arange((grid.size - 1) * 2**k + 1), hk, T)
        fine = _integrals(psi, fine_grid, hk)
        # near-zeros of |Psi|^2 make the phase term spiky; halve until it settles
        if abs(fine["fisher"] - coarse["fisher"]) <= refine_tol * abs(fine["fisher"]):
            break
        coarse = fine
    else:
        raise QuadratureError(f"Fisher quadrature unstable: {coarse['fisher']} vs {fine['fisher']}")
    if state is None:
        amps = psi.coeffs * np.where(psi.modes % 2 == 0, 1.0, -1.0)
        lo = int(psi.modes[0])
        from .rotor_core import BasisWindow

        state = TruncatedRotorState.from_amplitudes(BasisWindow(lo, lo + amps.size - 1), amps)
    _, vt = time_moments(state, T)
    F = fine["fisher"]
    return FisherReport(
        fisher=F,
        four_var_t=4 * vt,
        second_term=fine["second"],
        cr_floor=1.0 / F if F > 0 else math.inf,
        first_term=fine["first"],
        norm=fine["norm"],
        overlap_constant=overlap_constant(T),
    )


def time_cr_bound(s: TruncatedRotorState) -> tuple[float, float]:
    """Sine-of-time Cramer-Rao pair ``(Delta S^2, |<E>|^2 / (4 Delta L^2))``."""
    _, var_L = moments_L(s)
    if var_L < 1e-24:
        raise DegenerateStateError("Delta L = 0: the time bound is undefined")
    e = mean_E(s)
    return sine_variance(s), abs(e) ** 2 / (4 * var_L)


# --- sinc^2 sampling --------------------------------------------------------

_TABLE_U = 200 * np.pi
_TABLE_N = 400_001


def _sinc2_abs_cdf(u):
    """CDF of ``|u|`` for density ``sin^2(u) / (pi u^2)``."""
    u = np.asarray(u, dtype=float)
    si, _ = special.sici(2 * u)
    with np.errstate(invalid="ignore", divide="ignore"):
        body = np.where(u > 0, -np.sin(u) ** 2 / np.where(u > 0, u, 1.0), 0.0)
    return (2 / np.pi) * (body + si)


class Sinc2Sampler:
    """Draws ``u`` with density ``sin^2(u) / (pi u^2)``: inverse CDF on a
    table over ``|u| <= U`` and Pareto proposals with acceptance ``sin^2 u``
    beyond."""

    def __init__(self, U: float = _TABLE_U, n_table: int = _TABLE_N):
        self.U = U
        self.u = np.linspace(0.0, U, n_table)
        self.cdf = _sinc2_abs_cdf(self.u)
        self.cdf[0] = 0.0
        self.p_tail = 1.0 - float(self.cdf[-1])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.random(n)
        out = np.empty(n)
        body = v < 1.0 - self.p_tail
        out[body] = np.interp(v[body], self.cdf, self.u)
        n_tail = int((~body).sum())
        if n_tail:
            tail = np.empty(0)
            while tail.size < n_tail:
                k = 2 * (n_tail - tail.size) + 8
                cand = self.U / (1.0 - rng.random(k))
                keep = rng.random(k) < np.sin(cand) ** 2
                tail = np.concatenate([tail, cand[keep]])
            out[~body] = tail[:n_tail]
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign * out


def _ml_center(x: np.ndarray, T: float) -> float:
    """Maximum-likelihood location of a sinc^2(T (w - c)/2) sample."""
    med = float(np.median(x))
    if x.size == 1:
        return med
    scale = np.pi / (T * math.sqrt(x.size))

    def nll(c):
        s = np.sinc(T * (x - c) / (2 * np.pi)) ** 2
        return -float(np.sum(np.log(np.maximum(s, 1e-300))))

    cs = med + scale * np.linspace(-6, 6, 49)
    vals = [nll(c) for c in cs]
    i = int(np.argmin(vals))
    lo = cs[max(i - 1, 0)]
    hi = cs[min(i + 1, cs.size - 1)]
    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6 * scale})
    return float(res.x)


@dataclass(frozen=True)
class DivergenceRow:
    n_samples: int
    mean_sample_variance: float | None
    median_sample_variance: float | None
    variance_defined: bool
    ml_rms_error: float
    ml_predicted_error: float


def divergence_demo(l: int, T: float, n_samples_list=(1, 10, 100, 1000, 10_000, 100_000), n_reps: int = 100, seed: int = 0, ml: bool = True):
    """Sample-variance growth of frequencies drawn from the sinc^2 line of
    mode ``l`` against the shrinking error of the ML line centre.

    The second moment of the line is infinite, so the mean of the sample
    variance over repetitions is dominated by rare far-tail draws; the median
    over repetitions is reported alongside as a stable trend indicator.

    Repetition ``r`` at budget index ``i`` uses its own stream derived from
    ``(seed, i, r)``.
    """
    ns = [int(n) for n in n_samples_list]
    if any(b <= a for a, b in zip(ns, ns[1:])) or not ns or ns[0] < 1:
        raise RotorError("n_samples_list must be positive and increasing")
    c0 = 2 * np.pi * l / T
    sampler = Sinc2Sampler()
    rows = []
    for i, n in enumerate(ns):
        variances, errors = [], []
        for r in range(n_reps):
            rng = bin_rng(seed, i, r)
            w = c0 + 2.0 * sampler.sample(rng, n) / T
            if n > 1:
                variances.append(float(np.var(w, ddof=1)))
            if ml:
                errors.append(_ml_center(w, T) - c0)
        rows.append(
            DivergenceRow(
                n,
                float(np.mean(variances)) if variances else None,
                float(np.median(variances)) if variances else None,
                n > 1,
                float(np.sqrt(np.mean(np.square(errors)))) if errors else math.nan,
                1.0 / math.sqrt(n * T**2 / 3.0),
            )
        )
    return rows
