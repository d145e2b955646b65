import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotor_tf import io
from rotor_tf.measurement_sim import CountMatrix, build_grid, measured_moments, moments_from_distribution, q_grid
from rotor_tf.rotor_core import (
    BasisWindow,
    DensityOperator,
    TimeWindow,
    VonMisesParams,
    bessel_i,
    displace,
    fidelity,
    von_mises_state,
)
from rotor_tf.spectral_estimation import fisher_omega, time_moments, to_spectrum
from rotor_tf.tomography import maxlik_reconstruct, wigner_from_rho
from rotor_tf.uncertainty import bounds, report

from .conftest import random_state
from .oracles import angle_density_rho

kappas = st.floats(0.05, 8.0)
angles = st.floats(-math.pi, math.pi, exclude_max=True)
seeds = st.integers(0, 2**32 - 1)


def _state(seed, dim):
    return random_state(np.random.default_rng(seed), dim)


def _mixed(seed, window, rank=2):
    r = np.random.default_rng(seed)
    X = r.normal(size=(window.dim, rank)) + 1j * r.normal(size=(window.dim, rank))
    m = X @ X.conj().T
    return DensityOperator.from_matrix(window, m / np.trace(m).real)


@given(st.integers(-6, 6), angles, st.floats(0.0, 8.0))
def test_von_mises_normalized(n, a, k):
    s = von_mises_state(VonMisesParams(n, a, k))
    assert abs(np.linalg.norm(s.amps) - 1) < 1e-10


@given(st.integers(1, 40), st.floats(0.01, 100.0))
def test_bessel_recurrence(n, x):
    lhs = bessel_i(n - 1, x) - bessel_i(n + 1, x)
    rhs = 2 * n / x * bessel_i(n, x)
    assert lhs == pytest.approx(rhs, rel=1e-10)


@given(seeds, st.integers(-4, 4), angles, st.integers(-4, 4), angles)
def test_displacement_composition(seed, n1, a1, n2, a2):
    s = _state(seed, 9)
    two = displace(displace(s, n1, a1), n2, a2)
    one = displace(s, n1 + n2, a1 + a2)
    assert fidelity(two, one) >= 1 - 1e-10


@settings(max_examples=300)
@given(seeds, st.integers(3, 21))
def test_uncertainty_inequality(seed, dim):
    r = report(_state(seed, dim))
    assert r.product >= 0.5 * r.abs_E - 1e-9


def test_uncertainty_inequality_thousand_states():
    rng = np.random.default_rng(2024)
    worst = math.inf
    for _ in range(1000):
        r = report(random_state(rng, int(rng.integers(3, 22))))
        worst = min(worst, r.product - 0.5 * r.abs_E)
    assert worst >= -1e-9


@pytest.mark.parametrize("k", np.geomspace(0.05, 8, 25))
def test_saturation_log_grid(k):
    r = report(von_mises_state(VonMisesParams(0, 0.0, k)))
    assert abs(r.product - bounds(k).state_product) < 1e-8
    assert abs(r.product - 0.5 * r.abs_E) < 1e-8


@given(st.integers(-5, 5), angles, kappas)
def test_von_mises_saturates_anywhere(n, a, k):
    r = report(von_mises_state(VonMisesParams(n, a, k)))
    assert abs(r.product - 0.5 * r.abs_E) < 1e-8
    assert abs(r.normalized_product - 0.5) < 1e-8


@given(seeds, st.integers(-5, 5), angles)
def test_displacement_invariance(seed, n, a):
    s = _state(seed, 8)
    r0, r1 = report(s), report(displace(s, n, a))
    assert abs(r1.var_L - r0.var_L) < 1e-10
    assert abs(r1.var_S - r0.var_S) < 1e-10
    assert abs(r1.abs_E - r0.abs_E) < 1e-10
    assert abs(r1.mean_L - r0.mean_L - n) < 1e-10
    # <E> picks up exp(-i a)
    d = (np.angle(r0.mean_E) - np.angle(r1.mean_E) - a + math.pi) % (2 * math.pi) - math.pi
    assert abs(d) < 1e-8


@given(st.floats(1e-3, 16.0))
def test_bound_ordering(k):
    b = bounds(k)
    assert b.meas_product >= b.state_product
    assert b.meas_norm >= b.state_norm
    assert 0 <= b.dispersion <= 1


@settings(max_examples=30)
@given(seeds, st.floats(0.2, 6.0))
def test_q_positive_and_bounded(seed, k):
    rho = _mixed(seed, BasisWindow(-5, 5))
    Q = q_grid(rho, build_grid(14, 16, k))
    assert Q.min() >= 0
    assert Q.max() <= 1 / (2 * math.pi) + 1e-15


@settings(max_examples=30)
@given(st.floats(0.2, 8.0))
def test_measurement_above_state_noiseless(k):
    g = build_grid(20, 20, k)
    Q = q_grid(DensityOperator.pure(von_mises_state(VonMisesParams(0, 0.0, k))), g)
    r = moments_from_distribution(Q / Q.sum(), g.m_array().astype(float), g.phi_array())
    assert r.product >= bounds(k).state_product


@settings(max_examples=20)
@given(seeds, st.integers(3, 9))
def test_fisher_cr_and_second_term(seed, dim):
    s = _state(seed, dim)
    T = 28.6
    tau0, _ = time_moments(s, T)
    f = fisher_omega(to_spectrum(s, TimeWindow(T, tau0 % T)), s)
    assert f.second_term <= 1e-9
    assert f.fisher <= f.four_var_t * (1 + 1e-6)
    assert f.cr_product >= 0.25 - 1e-6


@settings(max_examples=15)
@given(seeds)
def test_maxlik_physical(seed):
    g = build_grid(6, 8, 1.0)
    w = BasisWindow(-3, 3)
    counts = np.random.default_rng(seed).poisson(50.0, size=g.shape)
    if counts.sum() == 0:
        return
    res = maxlik_reconstruct(CountMatrix(counts, g.m_shifts, g.phi_values), g, w, max_iter=200)
    m = res.rho.matrix
    assert np.max(np.abs(m - m.conj().T)) < 1e-10
    assert abs(np.trace(m).real - 1) < 1e-10
    assert np.linalg.eigvalsh(m).min() >= -1e-10
    assert np.all(np.diff(res.loglik) >= -1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(3, 9), st.integers(-4, 4))
def test_wigner_marginals(seed, dim, lo):
    w_ = BasisWindow(lo, lo + dim - 1)
    rho = _mixed(seed, w_, rank=min(dim, 3))
    w = wigner_from_rho(rho)
    lm = w.l_marginal()
    ints = w.integer_rows()
    assert np.max(np.abs(lm[ints] - np.diag(rho.matrix).real)) < 1e-8
    ref = angle_density_rho(rho.matrix, lo, w.theta_grid)
    assert np.max(np.abs(w.theta_marginal() - ref)) < 1e-8


@settings(max_examples=25)
@given(st.lists(st.integers(0, 10**9), min_size=12, max_size=12), seeds)
def test_counts_round_trip(tmp_path_factory, vals, seed):
    g = build_grid(3, 4, 0.5)
    c = CountMatrix(np.array(vals).reshape(3, 4), g.m_shifts, g.phi_values, 1.25, seed, {"kappa_a": 0.5, "carrier_offset": 10000})
    p, _ = io.write_counts(c, tmp_path_factory.mktemp("c") / "c.csv")
    back = io.read_counts(p)
    assert back == c and back.phi_values == c.phi_values and back.seed == seed


@settings(max_examples=25)
@given(seeds, st.integers(3, 8))
def test_rho_round_trip(tmp_path_factory, seed, dim):
    rho = _mixed(seed, BasisWindow(0, dim - 1), rank=1)
    p = io.write_rho(rho, tmp_path_factory.mktemp("r") / "r.json")
    assert np.array_equal(io.read_rho(p).matrix, rho.matrix)


@settings(max_examples=20)
@given(seeds)
def test_measured_moments_nonnegative(seed):
    g = build_grid(5, 8, 1.0)
    counts = np.random.default_rng(seed).poisson(3.0, size=g.shape) + 1
    r = measured_moments(CountMatrix(counts, g.m_shifts, g.phi_values))
    assert r.var_L >= 0 and 0 <= r.var_S <= 1 and r.abs_E <= 1 + 1e-12
