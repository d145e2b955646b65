import math

import numpy as np
import pytest

from rotor_tf.errors import DegenerateStateError
from rotor_tf.rotor_core import BasisWindow, DensityOperator, TruncatedRotorState, VonMisesParams, displace, von_mises_state
from rotor_tf.uncertainty import UncertaintyReport, bounds, mean_E, moments_L, report, report_rho, sine_variance

from . import frozen
from .conftest import random_state
from .oracles import brute_sine_variance, shift_matrix, von_mises_bounds


def test_mean_E_number_state():
    assert mean_E(TruncatedRotorState.basis(0)) == 0


def test_mean_E_frozen():
    e = mean_E(von_mises_state(VonMisesParams(0, 0.0, 1.0)))
    assert e.real == pytest.approx(frozen.R1_2, rel=1e-13)
    assert abs(e.imag) < 1e-16


def test_mean_E_matches_matrix(rng):
    s = random_state(rng, 6)
    E = shift_matrix(s.window.l_lo, s.window.l_hi)
    assert mean_E(s) == pytest.approx(np.vdot(s.amps, E @ s.amps), abs=1e-14)


def test_mean_E_displacement_phase():
    base = mean_E(von_mises_state(VonMisesParams(0, 0.0, 1.0)))
    e = mean_E(von_mises_state(VonMisesParams(4, 0.9, 1.0)))
    assert abs(e) == pytest.approx(abs(base), rel=1e-13)
    # E picks up exp(-i alpha) under a time shift by alpha
    assert np.angle(e) == pytest.approx(-0.9, abs=1e-12)


def test_moments_L_cases():
    assert moments_L(TruncatedRotorState.basis(7)) == (7.0, 0.0)
    s = TruncatedRotorState.from_amplitudes(BasisWindow(-1, 1), [0, 1, 1])
    m, v = moments_L(s)
    assert m == pytest.approx(0.5) and v == pytest.approx(0.25)
    m, _ = moments_L(von_mises_state(VonMisesParams(-6, 1.0, 3.0)))
    assert m == pytest.approx(-6.0, abs=1e-12)


def test_sine_variance_decreases_with_kappa():
    v = [sine_variance(von_mises_state(VonMisesParams(0, 0, k))) for k in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(v, v[1:]))


def test_sine_variance_two_level_brute_force():
    s = TruncatedRotorState.from_amplitudes(BasisWindow(-1, 1), [0, 1, 1])
    assert sine_variance(s) == pytest.approx(brute_sine_variance(s.amps, -1, 1), abs=1e-14)
    assert sine_variance(s) == pytest.approx(0.5, abs=1e-14)


def test_sine_variance_random_brute_force(rng):
    for _ in range(20):
        s = random_state(rng, 8)
        assert sine_variance(s) == pytest.approx(brute_sine_variance(s.amps, s.window.l_lo, s.window.l_hi), abs=1e-12)


def test_sine_variance_degenerate():
    with pytest.raises(DegenerateStateError):
        sine_variance(TruncatedRotorState.basis(3))
    with pytest.raises(DegenerateStateError):
        report(TruncatedRotorState.basis(3))


def test_saturation_frozen_kappa1():
    r = report(von_mises_state(VonMisesParams(0, 0, 1.0)))
    assert r.product == pytest.approx(frozen.BOUNDS[1.0][0], abs=1e-12)
    assert r.normalized_product == pytest.approx(0.5, abs=1e-12)
    assert r.kind == "state" and not r.degenerate


def test_saturation_frozen_kappa02():
    r = report(von_mises_state(VonMisesParams(0, 0, 0.2)))
    assert r.product == pytest.approx(0.5 * frozen.R1_04, abs=1e-12)


def test_inequality_random_state(rng):
    s = random_state(rng, 11)
    r = report(s)
    assert r.product >= 0.5 * r.abs_E - 1e-9


@pytest.mark.parametrize("k", list(frozen.BOUNDS))
def test_bounds_frozen(k):
    b = bounds(k)
    sp, mp, mn, ds = frozen.BOUNDS[k]
    assert b.state_product == pytest.approx(sp, rel=1e-12)
    assert b.meas_product == pytest.approx(mp, rel=1e-12)
    assert b.meas_norm == pytest.approx(mn, rel=1e-12)
    assert b.dispersion == pytest.approx(ds, rel=1e-12)
    assert b.state_norm == 0.5


def test_bounds_kappa_zero():
    b = bounds(0.0)
    assert b.state_product == 0 and b.dispersion == 1
    assert b.meas_norm == math.inf and not b.meas_norm_defined


def test_bounds_dispersion_monotone():
    ks = np.geomspace(0.05, 8, 40)
    d = [bounds(k).dispersion for k in ks]
    assert all(b < a for a, b in zip(d, d[1:]))


def test_bounds_oracle_offgrid():
    for k in (0.05, 0.73, 3.3, 6.1):
        ref = von_mises_bounds(k)
        b = bounds(k)
        assert b.meas_product == pytest.approx(ref["meas_product"], rel=1e-12)
        assert b.meas_norm == pytest.approx(ref["meas_norm"], rel=1e-12)


def test_report_rho_matches_pure(rng):
    s = random_state(rng, 9)
    a, b = report(s), report_rho(DensityOperator.pure(s))
    for f in ("var_L", "var_S", "product", "normalized_product", "mean_L"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-12)
    assert a.mean_E == pytest.approx(b.mean_E, abs=1e-14)


def test_report_rho_degenerate_flag():
    r = report_rho(DensityOperator.pure(TruncatedRotorState.basis(0)))
    assert r.degenerate and r.sigma is None and r.normalized_product is None


def test_report_dict_round_trip():
    r = report(von_mises_state(VonMisesParams(1, 0.5, 2.0)))
    assert UncertaintyReport.from_dict(r.as_dict()) == r


def test_displacement_invariance():
    s = random_state(np.random.default_rng(9), 7).embed(BasisWindow(-10, 10))
    a = report(s)
    b = report(displace(s, 3, 1.2))
    assert b.var_L == pytest.approx(a.var_L, abs=1e-10)
    assert b.var_S == pytest.approx(a.var_S, abs=1e-10)
    assert b.abs_E == pytest.approx(a.abs_E, abs=1e-10)
    assert b.mean_L - a.mean_L == pytest.approx(3.0, abs=1e-10)
    shift = np.angle(b.mean_E) - np.angle(a.mean_E)
    assert math.remainder(shift + 1.2, 2 * math.pi) == pytest.approx(0.0, abs=1e-10)
