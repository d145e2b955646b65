"""File formats: count records (CSV + JSON sidecar), density operators (JSON),
Wigner maps (CSV grids) and flat tables. Floats are written with ``repr`` so
every file reads back bit-exactly; all writes are atomic."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .measurement_sim import CARRIER_OFFSET, CountMatrix
from .rotor_core import BasisWindow, DensityOperator
from .tomography import WignerMap

SIDECAR_KEYS = ("T_ps", "kappa_s", "kappa_a", "carrier_offset", "seed", "background_per_bin")


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temp file next to ``path`` and rename it over."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def table_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [r[c] for c in columns] if isinstance(r, dict) else list(r)
        w.writerow([fmt(v) for v in vals])
    return buf.getvalue()


def write_table(path, columns, rows) -> Path:
    return atomic_write(path, table_to_csv(columns, rows))


def read_table(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: _parse(v) for k, v in row.items()} for row in rd]


# --- count records ------------------------------------------------------------


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def counts_to_csv(c: CountMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "phi", "counts"])
    for i, m in enumerate(c.m_shifts):
        for j, phi in enumerate(c.phi_values):
            w.writerow([m, repr(phi), int(c.counts[i, j])])
    return buf.getvalue()


def counts_sidecar(c: CountMatrix) -> dict:
    md = dict(c.meta)
    side = {
        "T_ps": md.pop("T_ps", None),
        "kappa_s": md.pop("kappa_s", None),
        "kappa_a": md.pop("kappa_a", None),
        "carrier_offset": md.pop("carrier_offset", CARRIER_OFFSET),
        "seed": c.seed,
        "background_per_bin": c.background_per_bin,
    }
    if side["T_ps"] is not None:
        # lab pump delays of the phi columns; informational, not read back
        side["tau_p_ps"] = [float(p) * side["T_ps"] / (2 * math.pi) for p in c.phi_values]
    if md:
        side["extra"] = md
    return side


def write_counts(c: CountMatrix, path) -> tuple[Path, Path]:
    path = Path(path)
    atomic_write(path, counts_to_csv(c))
    side = sidecar_path(path)
    atomic_write(side, dumps_json(counts_sidecar(c)))
    return path, side


def read_counts(path) -> CountMatrix:
    path = Path(path)
    ms, phis, vals = [], [], {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != ["m", "phi", "counts"]:
            raise ConfigError(f"{path}: expected header m,phi,counts")
        for row in rd:
            m, phi, n = int(row[0]), float(row[1]), int(row[2])
            if m not in ms:
                ms.append(m)
            if phi not in phis:
                phis.append(phi)
            vals[(m, phi)] = n
    ms.sort()
    try:
        counts = np.array([[vals[(m, p)] for p in phis] for m in ms], dtype=np.int64)
    except KeyError as exc:
        raise ConfigError(f"{path}: incomplete grid") from exc
    side = sidecar_path(path)
    meta, seed, bg = {}, None, 0.0
    if side.exists():
        d = json.loads(side.read_text())
        seed = d.get("seed")
        bg = d.get("background_per_bin", 0.0)
        for k in ("T_ps", "kappa_s", "kappa_a", "carrier_offset"):
            if d.get(k) is not None:
                meta[k] = d[k]
        meta.update(d.get("extra", {}))
    return CountMatrix(counts, tuple(ms), tuple(phis), bg, seed, meta)


# --- density operators ----------------------------------------------------------


def rho_to_dict(rho: DensityOperator, extra: dict | None = None) -> dict:
    m = rho.matrix
    d = {
        "l_lo": rho.window.l_lo,
        "l_hi": rho.window.l_hi,
        "matrix": [[float(z.real), float(z.imag)] for z in m.ravel()],
    }
    if extra:
        d["diagnostics"] = extra
    return d


def rho_from_dict(d: dict) -> DensityOperator:
    w = BasisWindow(int(d["l_lo"]), int(d["l_hi"]))
    pairs = np.asarray(d["matrix"], dtype=float)
    if pairs.shape != (w.dim * w.dim, 2):
        raise ConfigError("matrix entries do not match window")
    m = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(w.dim, w.dim)
    return DensityOperator(w, m)


def write_rho(rho: DensityOperator, path, extra: dict | None = None) -> Path:
    return atomic_write(path, dumps_json(rho_to_dict(rho, extra)))


def read_rho(path) -> DensityOperator:
    return rho_from_dict(json.loads(Path(path).read_text()))


# --- Wigner maps ----------------------------------------------------------------


def wigner_to_csv(w: WignerMap) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["l\\theta"] + [repr(float(t)) for t in w.theta_grid])
    for l, row in zip(w.l_grid, w.values):
        wr.writerow([repr(float(l))] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_wigner(w: WignerMap, path) -> Path:
    return atomic_write(path, wigner_to_csv(w))


def read_wigner(path) -> WignerMap:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    theta = np.array([float(t) for t in rows[0][1:]])
    l = np.array([float(r[0]) for r in rows[1:]])
    vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return WignerMap(l, theta, vals)


def jsonable(x):
    """Recursively convert numpy scalars/arrays, complex numbers and
    non-finite floats into JSON-friendly values."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x
