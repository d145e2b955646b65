"""End-to-end synthetic experiment: per spread value, simulate a count record,
reconstruct the state, extract both uncertainty products with bootstrap
intervals and tabulate them against the closed-form bounds."""
from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, io, kernels
from .errors import ConfigError, RotorError
from .measurement_sim import CARRIER_OFFSET, build_grid, simulate_counts, subtract_background
from .rotor_core import BasisWindow, DensityOperator, VonMisesParams, von_mises_state
from .tomography import bootstrap, maxlik_reconstruct, wigner_from_rho
from .uncertainty import bounds

THREADS_ENV = "ROTOR_TF_THREADS"


def default_kappas(n: int = 12, lo: float = 0.2, hi: float = 8.0) -> list:
    return [float(k) for k in np.geomspace(lo, hi, n)]


@dataclass
class RunConfig:
    T_ps: float = 28.6
    kappa_list: list = field(default_factory=default_kappas)
    n_m: int = 20
    n_phi: int = 20
    mean_total: float = 1.5e6
    background_per_bin: float = 0.0
    carrier_offset: int = CARRIER_OFFSET
    seed: int = 0
    trunc: int = 21
    n_reps: int = 100
    kappa_a: float | None = None
    max_iter: int = 5000
    tol: float = 1e-10
    phi_offset: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.kappa_list = [float(k) for k in self.kappa_list]
            self.T_ps = float(self.T_ps)
            self.mean_total = float(self.mean_total)
            self.background_per_bin = float(self.background_per_bin)
            self.phi_offset = float(self.phi_offset)
            self.tol = float(self.tol)
            for name in ("n_m", "n_phi", "carrier_offset", "seed", "trunc", "n_reps", "max_iter"):
                v = getattr(self, name)
                if isinstance(v, float) and not v.is_integer():
                    raise ConfigError(f"{name} must be an integer")
                setattr(self, name, int(v))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.kappa_list:
            raise ConfigError("kappa_list is empty")
        if any(not (0 < k <= 16) for k in self.kappa_list):
            raise ConfigError("every kappa must lie in (0, 16]")
        if self.kappa_a is not None and not (0 < float(self.kappa_a) <= 16):
            raise ConfigError("kappa_a must lie in (0, 16]")
        for name in ("T_ps", "mean_total", "n_m", "n_phi", "trunc", "n_reps", "max_iter", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.background_per_bin < 0:
            raise ConfigError("background_per_bin must be >= 0")
        if self.trunc < 3:
            raise ConfigError("trunc must be >= 3")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "config" in d and isinstance(d["config"], dict):
            d = dict(d["config"])  # a manifest
        if "grid" in d:
            d["n_m"], d["n_phi"] = d.pop("grid")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def window(self) -> BasisWindow:
        return BasisWindow.of_dim(self.trunc)


def derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def thread_count(n_jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
    else:
        n = os.cpu_count() or 1
    return max(1, min(n, n_jobs))


SUMMARY_COLUMNS = (
    "index", "kappa", "D_s",
    "bound_state_product", "bound_meas_product", "bound_state_norm", "bound_meas_norm",
    "state_product", "state_product_lo", "state_product_hi",
    "state_norm", "state_norm_lo", "state_norm_hi",
    "meas_product", "meas_product_lo", "meas_product_hi",
    "meas_norm", "meas_norm_lo", "meas_norm_hi",
    "fidelity", "iterations", "converged", "boundary", "total_counts", "min_bin", "max_bin",
    "status",
)


def run_kappa(cfg: RunConfig, index: int, out_dir: str | None = None) -> dict:
    """One spread value of the pipeline; returns its summary row."""
    kappa = cfg.kappa_list[index]
    row = {c: None for c in SUMMARY_COLUMNS}
    b = bounds(kappa)
    row.update(
        index=index, kappa=kappa, D_s=b.dispersion,
        bound_state_product=b.state_product, bound_meas_product=b.meas_product,
        bound_state_norm=b.state_norm, bound_meas_norm=b.meas_norm,
    )
    try:
        truth = von_mises_state(VonMisesParams(0, 0.0, kappa))
        rho_true = DensityOperator.pure(truth)
        ka = cfg.kappa_a if cfg.kappa_a is not None else kappa
        grid = build_grid(cfg.n_m, cfg.n_phi, ka)
        meta = {"T_ps": cfg.T_ps, "kappa_s": kappa, "kappa_a": ka, "carrier_offset": cfg.carrier_offset}
        c = simulate_counts(
            rho_true, grid, cfg.mean_total, cfg.background_per_bin, derived_seed(cfg.seed, index, 0), cfg.phi_offset, meta
        )
        c_used = subtract_background(c, cfg.background_per_bin)
        win = cfg.window()
        ml = maxlik_reconstruct(c_used, grid, win, cfg.max_iter, cfg.tol)
        wig = wigner_from_rho(ml.rho)
        boot = bootstrap(c_used, grid, win, cfg.n_reps, derived_seed(cfg.seed, index, 1), ml, cfg.max_iter, cfg.tol)
        st, me = boot.point, boot.point_measurement
        row.update(
            state_product=st.product,
            state_product_lo=boot.ci_lo["state"]["product"], state_product_hi=boot.ci_hi["state"]["product"],
            state_norm=st.normalized_product,
            state_norm_lo=boot.ci_lo["state"]["normalized_product"], state_norm_hi=boot.ci_hi["state"]["normalized_product"],
            meas_product=me.product,
            meas_product_lo=boot.ci_lo["measurement"]["product"], meas_product_hi=boot.ci_hi["measurement"]["product"],
            meas_norm=me.normalized_product,
            meas_norm_lo=boot.ci_lo["measurement"]["normalized_product"], meas_norm_hi=boot.ci_hi["measurement"]["normalized_product"],
            fidelity=ml.rho.expectation_pure(truth), iterations=ml.iterations, converged=ml.converged,
            boundary=ml.boundary, total_counts=c.total, min_bin=int(c.counts.min()), max_bin=int(c.counts.max()),
            status="ok",
        )
        if out_dir is not None:
            d = Path(out_dir) / f"kappa_{index:02d}"
            io.write_counts(c, d / "counts.csv")
            diag = {
                "iterations": ml.iterations, "converged": ml.converged, "n_diluted": ml.n_diluted,
                "min_eigenvalue": ml.min_eigenvalue, "boundary": ml.boundary,
                "final_loglik": ml.final_loglik, "zero_probability_bins": list(ml.zero_probability_bins),
            }
            io.write_rho(ml.rho, d / "rho.json", diag)
            io.write_wigner(wig, d / "wigner.csv")
            io.atomic_write(d / "bootstrap.json", io.dumps_json(io.jsonable(boot.as_dict())))
    except RotorError as exc:
        row["status"] = f"failed: {exc}"
    return row


def _run_kappa_job(args):
    cfg_dict, index, out_dir = args
    return run_kappa(RunConfig.from_dict(cfg_dict), index, out_dir)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    import scipy

    return {
        "rotor_tf": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "kernel_backend": kernels.BACKEND,
    }


def run_pipeline(cfg: RunConfig, out_dir, threads: int | None = None) -> list:
    """Run every spread value (in parallel when allowed) and write the
    summary table and manifest under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(cfg.kappa_list)
    threads = thread_count(n) if threads is None else max(1, min(threads, n))
    jobs = [(cfg.to_dict(), i, str(out)) for i in range(n)]
    if threads == 1:
        rows = [_run_kappa_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_run_kappa_job, jobs))
    rows.sort(key=lambda r: r["index"])
    io.write_table(out / "summary.csv", SUMMARY_COLUMNS, rows)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config": cfg.to_dict(),
        "seeds": [
            {"index": i, "simulate": derived_seed(cfg.seed, i, 0), "bootstrap": derived_seed(cfg.seed, i, 1)} for i in range(n)
        ],
        "versions": versions(),
        "files": {str(p.relative_to(out)): _sha256(p) for p in files},
    }
    io.atomic_write(out / "manifest.json", io.dumps_json(io.jsonable(manifest)))
    return rows
