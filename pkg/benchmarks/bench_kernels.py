"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints the best wall time per backend, the speedup and the largest relative
disagreement between backends for each kernel.
"""
import argparse
import timeit

import numpy as np

from rotor_tf.kernels import backends
from rotor_tf.measurement_sim import build_grid, q_grid
from rotor_tf.rotor_core import BasisWindow, DensityOperator, VonMisesParams, von_mises_state
from rotor_tf.tomography import CompletedPovm


def bessel_case(mod):
    xs = np.linspace(0.01, 32.0, 400)
    return lambda: [mod.bessel_i_table(60, x) for x in xs]


def rrr_case(mod):
    g = build_grid(20, 20, 1.0)
    w = BasisWindow.of_dim(21)
    povm = CompletedPovm.build(g, w)
    f = q_grid(DensityOperator.pure(von_mises_state(VonMisesParams(0, 0.0, 1.0), w)), g).ravel()
    f /= f.sum()
    sigma0 = np.ascontiguousarray(povm.G / np.trace(povm.G).real, dtype=complex)
    # tol 0 runs the full iteration budget
    return lambda: mod.rrr_iterate(povm.A, f, sigma0, 300, 0.0)


def _result(case, mod):
    out = case(mod)()
    if isinstance(out, list):
        return np.concatenate(out)
    return np.asarray(out[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = backends()
    if "cython" not in mods:
        print("compiled backend not built; only the numpy fallback is available")
    print(f"{'kernel':<16}{'backend':<10}{'best s':>10}")
    for name, case in (("bessel_i_table", bessel_case), ("rrr_iterate", rrr_case)):
        times = {}
        for b, mod in mods.items():
            fn = case(mod)
            times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            print(f"{name:<16}{b:<10}{times[b]:>10.4f}")
        if len(times) == 2:
            a, b = _result(case, mods["cython"]), _result(case, mods["python"])
            diff = np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12 * np.abs(b).max()))
            print(f"{name:<16}speedup {times['python'] / times['cython']:.1f}x, max relative difference {diff:.1e}")


if __name__ == "__main__":
    main()
