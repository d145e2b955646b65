"""Command-line interface.

Subcommands: bounds, state, simulate, reconstruct, wigner, fisher, pipeline.
Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import io
from .errors import ConfigError, RotorError
from .measurement_sim import build_grid, measured_moments, simulate_counts, subtract_background
from .pipeline import RunConfig, derived_seed, run_pipeline
from .rotor_core import BasisWindow, DensityOperator, TimeWindow, TruncatedRotorState, VonMisesParams, von_mises_state
from .spectral_estimation import divergence_demo, fisher_omega, time_moments, to_spectrum
from .tomography import bootstrap, maxlik_reconstruct, state_uncertainties, wigner_from_rho
from .uncertainty import bounds, report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

BOUNDS_COLUMNS = ("kappa", "D_s", "state_product", "meas_product", "state_norm", "meas_norm")


def _kappas(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad kappa list {text!r}") from exc


def load_config(args) -> RunConfig:
    """Config file (if any) overridden by command-line flags."""
    d = RunConfig.load(args.config).to_dict() if getattr(args, "config", None) else RunConfig().to_dict()
    for flag, key in (("seed", "seed"), ("trunc", "trunc"), ("reps", "n_reps"), ("background", "background_per_bin")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    if getattr(args, "kappa", None):
        d["kappa_list"] = args.kappa
    return RunConfig.from_dict(d)


def _emit(args, name: str, columns, rows, payload: dict):
    """Write a table as CSV or a payload as JSON to ``--out`` (a directory)
    or stdout."""
    fmt = args.format
    text = io.table_to_csv(columns, rows) if fmt == "csv" else io.dumps_json(io.jsonable(payload))
    if args.out:
        path = Path(args.out) / f"{name}.{fmt}"
        io.atomic_write(path, text)
        print(path)
    else:
        sys.stdout.write(text)


def bounds_rows(kappas) -> list:
    rows = []
    for k in kappas:
        b = bounds(k)
        rows.append({
            "kappa": k, "D_s": b.dispersion, "state_product": b.state_product, "meas_product": b.meas_product,
            "state_norm": b.state_norm, "meas_norm": b.meas_norm if b.meas_norm_defined else None,
        })
    return rows


def cmd_bounds(args) -> int:
    cfg = load_config(args)
    rows = bounds_rows(cfg.kappa_list)
    _emit(args, "bounds", BOUNDS_COLUMNS, rows, {"bounds": rows})
    return EXIT_OK


def cmd_state(args) -> int:
    cfg = load_config(args)
    rows = []
    for k in cfg.kappa_list:
        s = von_mises_state(VonMisesParams(args.n, args.alpha, k))
        r = report(s)
        b = bounds(k)
        rows.append({
            "kappa": k, "n": args.n, "alpha": VonMisesParams(args.n, args.alpha, k).alpha,
            "mean_L": r.mean_L, "var_L": r.var_L, "var_S": r.var_S, "abs_E": r.abs_E, "arg_E": math.atan2(r.mean_E.imag, r.mean_E.real),
            "sigma": r.sigma, "product": r.product, "normalized_product": r.normalized_product,
            "bound_state_product": b.state_product, "dim": s.window.dim,
        })
    _emit(args, "state", tuple(rows[0]), rows, {"states": rows})
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    if not args.out:
        raise ConfigError("simulate needs --out")
    out = Path(args.out)
    for i, k in enumerate(cfg.kappa_list):
        rho = DensityOperator.pure(von_mises_state(VonMisesParams(0, 0.0, k)))
        ka = cfg.kappa_a if cfg.kappa_a is not None else k
        grid = build_grid(cfg.n_m, cfg.n_phi, ka)
        meta = {"T_ps": cfg.T_ps, "kappa_s": k, "kappa_a": ka, "carrier_offset": cfg.carrier_offset}
        c = simulate_counts(rho, grid, cfg.mean_total, cfg.background_per_bin, derived_seed(cfg.seed, i, 0), cfg.phi_offset, meta)
        name = "counts.csv" if len(cfg.kappa_list) == 1 else f"counts_{i:02d}.csv"
        p, _ = io.write_counts(c, out / name)
        print(p)
    return EXIT_OK


def _grid_for(c, kappa_a=None):
    ka = kappa_a if kappa_a is not None else c.meta.get("kappa_a")
    if ka is None:
        raise ConfigError("count record has no kappa_a; pass --kappa")
    grid = build_grid(len(c.m_shifts), len(c.phi_values), ka)
    if grid.m_shifts != c.m_shifts or any(abs(a - b) > 1e-12 for a, b in zip(grid.phi_values, c.phi_values)):
        raise ConfigError("count record is not on a standard centred midpoint grid")
    return grid


def cmd_reconstruct(args) -> int:
    cfg = load_config(args)
    c = io.read_counts(args.counts)
    grid = _grid_for(c, args.kappa[0] if args.kappa else None)
    if args.subtract is not None:
        c = subtract_background(c, args.subtract)
    win = cfg.window()
    ml = maxlik_reconstruct(c, grid, win, cfg.max_iter, cfg.tol)
    out = Path(args.out) if args.out else Path(args.counts).with_name(Path(args.counts).stem + "_rho.json")
    diag = {
        "iterations": ml.iterations, "converged": ml.converged, "n_diluted": ml.n_diluted,
        "min_eigenvalue": ml.min_eigenvalue, "boundary": ml.boundary, "final_loglik": ml.final_loglik,
        "zero_probability_bins": list(ml.zero_probability_bins),
    }
    if args.out and out.suffix != ".json":
        out = out / "rho.json"
    io.write_rho(ml.rho, out, diag)
    print(out)
    if args.reps:
        seed = cfg.seed if c.seed is None else derived_seed(cfg.seed, int(c.seed))
        boot = bootstrap(c, grid, win, cfg.n_reps, seed, ml, cfg.max_iter, cfg.tol)
        bpath = out.with_name(out.stem + "_bootstrap.json")
        io.atomic_write(bpath, io.dumps_json(io.jsonable(boot.as_dict())))
        print(bpath)
    else:
        m = measured_moments(c, grid)
        print(io.dumps_json(io.jsonable({"measurement": m.as_dict()})), end="")
    return EXIT_OK


def cmd_wigner(args) -> int:
    rho = io.read_rho(args.rho)
    w = wigner_from_rho(rho, args.theta_points)
    out = Path(args.out) if args.out else Path(args.rho).with_name(Path(args.rho).stem + "_wigner.csv")
    if args.out and out.suffix != ".csv":
        out = out / "wigner.csv"
    io.write_wigner(w, out)
    print(out)
    print(io.dumps_json(io.jsonable({"state": state_uncertainties(w).as_dict()})), end="")
    return EXIT_OK


def cmd_fisher(args) -> int:
    cfg = load_config(args)
    T = args.T if args.T is not None else cfg.T_ps
    if args.flat:
        s = TruncatedRotorState.basis(0)
        label = {"state": "flat"}
    else:
        k = cfg.kappa_list[0] if args.kappa else 1.0
        s = von_mises_state(VonMisesParams(args.n, args.alpha, k))
        label = {"state": "von_mises", "kappa": k, "n": args.n, "alpha": args.alpha}
    tau0, var_t = time_moments(s, T)
    f = fisher_omega(to_spectrum(s, TimeWindow(T, tau0 % T)), s)
    rows = divergence_demo(args.line, T, args.samples, n_reps=args.demo_reps, seed=cfg.seed)
    payload = {
        **label,
        "T_ps": T, "tau0": tau0, "var_t": var_t,
        "fisher": f.fisher, "four_var_t": f.four_var_t, "first_term": f.first_term, "second_term": f.second_term,
        "cr_floor": f.cr_floor, "cr_product": f.cr_product, "norm": f.norm, "overlap_constant": f.overlap_constant,
        "divergence_demo": [r.__dict__ for r in rows],
    }
    args.format = "json"
    _emit(args, "fisher", (), [], payload)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args)
    out = Path(args.out or "results")
    rows = run_pipeline(cfg, out)
    ok = [r for r in rows if r["status"] == "ok"]
    for r in rows:
        if r["status"] != "ok":
            print(f"kappa={r['kappa']}: {r['status']}", file=sys.stderr)
    print(out / "summary.csv")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (a pipeline manifest also works)")
    common.add_argument("--kappa", type=_kappas, help="comma-separated spread values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--trunc", type=int, help="reconstruction window size")
    common.add_argument("--reps", type=int, help="bootstrap replicates")
    common.add_argument("--background", type=float, help="background counts per bin")

    p = argparse.ArgumentParser(prog="rotor-tf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bounds", parents=[common], help="closed-form bound table").set_defaults(func=cmd_bounds)
    sp = sub.add_parser("state", parents=[common], help="uncertainty report of von Mises states")
    sp.add_argument("--n", type=int, default=0)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.set_defaults(func=cmd_state)
    sub.add_parser("simulate", parents=[common], help="simulate POVM count records").set_defaults(func=cmd_simulate)
    sp = sub.add_parser("reconstruct", parents=[common], help="MaxLik reconstruction from a count record")
    sp.add_argument("counts", help="counts CSV (with its JSON sidecar)")
    sp.add_argument("--subtract", type=float, help="background estimate to subtract per bin")
    sp.set_defaults(func=cmd_reconstruct)
    sp = sub.add_parser("wigner", parents=[common], help="Wigner map of a density-operator JSON")
    sp.add_argument("rho")
    sp.add_argument("--theta-points", type=int, default=None)
    sp.set_defaults(func=cmd_wigner)
    sp = sub.add_parser("fisher", parents=[common], help="frequency Fisher information and sinc^2 demo")
    sp.add_argument("--flat", action="store_true", help="flat pulse instead of a von Mises state")
    sp.add_argument("--n", type=int, default=0)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--T", type=float, default=None, help="window length in ps")
    sp.add_argument("--line", type=int, default=0, help="mode index of the sinc^2 line")
    sp.add_argument("--samples", type=lambda s: [int(float(v)) for v in s.split(",")], default=[1, 10, 100, 1000, 10000])
    sp.add_argument("--demo-reps", type=int, default=100)
    sp.set_defaults(func=cmd_fisher)
    sub.add_parser("pipeline", parents=[common], help="full synthetic experiment").set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RotorError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
