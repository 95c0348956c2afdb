"""File formats: dataset CSV with a JSON sidecar, config files, reports, manifests.

Dataset CSV layout: a header row; an optional leading label column (any
name other than ``y``); the response column ``y``; then the regressors in
order.  The sidecar JSON (``<name>.json`` next to the CSV unless given
explicitly) may contain

``intercept``
    prepend a column of ones named ``const`` (default false);
``shift``
    ``"all"`` (default) or the list of regressor names whose coefficients
    shift at the break;
``R``
    an explicit ``d_x x d_z`` matrix, overriding ``shift``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from breakbayes.errors import ConfigError, SchemaError
from breakbayes.model import Dataset

SIDECAR_KEYS = {"intercept", "shift", "R"}


@dataclass(frozen=True)
class LoadedData:
    dataset: Dataset
    names: tuple[str, ...]
    shift_names: tuple[str, ...] | None
    source: Path


def _fmt(v: float) -> str:
    return repr(float(v))


def sidecar_path(csv_path: Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def read_sidecar(path: Path | None) -> dict:
    if path is None or not Path(path).exists():
        return {}
    try:
        with open(path) as fh:
            side = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sidecar {path} is not valid JSON: {exc}") from None
    if not isinstance(side, dict):
        raise ConfigError(f"sidecar {path} must hold a JSON object")
    unknown = set(side) - SIDECAR_KEYS
    if unknown:
        raise ConfigError(f"unknown sidecar keys {sorted(unknown)} in {path}")
    return side


def read_dataset_csv(path, sidecar=None) -> LoadedData:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file {path} does not exist")
    side = read_sidecar(Path(sidecar) if sidecar is not None else sidecar_path(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError("empty file", row=1)
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise SchemaError("header has no 'y' column", row=1)
    has_label = header[0] != "y"
    iy = header.index("y")
    if iy != (1 if has_label else 0):
        raise SchemaError("'y' must be the first column or follow the label column", row=1, column="y")
    xnames = header[iy + 1:]
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names", row=1)
    labels, values = [], []
    for i, r in enumerate(rows[1:], start=2):
        if not r or all(not c.strip() for c in r):
            continue
        if len(r) != len(header):
            raise SchemaError(f"expected {len(header)} fields, found {len(r)}", row=i)
        if has_label:
            labels.append(r[0].strip())
        nums = []
        for name, cell in zip(header[iy:], r[iy:]):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"non-numeric value {cell!r}", row=i, column=name) from None
            if not math.isfinite(v):
                raise SchemaError("non-finite value", row=i, column=name)
            nums.append(v)
        values.append(nums)
    if not values:
        raise SchemaError("no data rows", row=2)
    A = np.array(values, dtype=np.float64)
    y, X = A[:, 0], A[:, 1:]
    names = list(xnames)
    if side.get("intercept", False):
        X = np.column_stack([np.ones(len(y)), X])
        names = ["const"] + names
    if X.shape[1] == 0:
        raise SchemaError("no regressors (set 'intercept': true for a mean shift)", row=1)
    shift_names = None
    if "R" in side:
        R = np.asarray(side["R"], dtype=np.float64)
        if R.ndim != 2 or R.shape[0] != X.shape[1]:
            raise ConfigError(f"sidecar R must be {X.shape[1]} x d_z")
    else:
        shift = side.get("shift", "all")
        if shift == "all":
            R = np.eye(X.shape[1])
            shift_names = tuple(names)
        else:
            if not isinstance(shift, list) or not shift:
                raise ConfigError("sidecar 'shift' must be 'all' or a non-empty list of names")
            bad = [s for s in shift if s not in names]
            if bad:
                raise ConfigError(f"sidecar 'shift' names unknown columns {bad}")
            R = np.zeros((X.shape[1], len(shift)))
            for c, s in enumerate(shift):
                R[names.index(s), c] = 1.0
            shift_names = tuple(shift)
    ds = Dataset(y, X, R, labels if has_label else None)
    return LoadedData(ds, tuple(names), shift_names, path)


def write_dataset_csv(ds: Dataset, path, names: Sequence[str] | None = None) -> Path:
    """Write ``ds`` and its sidecar so that reading back is bit-exact."""
    path = Path(path)
    names = list(names) if names is not None else [f"x{i + 1}" for i in range(ds.dx)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["date"] if ds.labels else []) + ["y"] + names)
        for t in range(ds.T):
            lead = [ds.labels[t]] if ds.labels else []
            w.writerow(lead + [_fmt(ds.y[t])] + [_fmt(v) for v in ds.X[t]])
    side = {"intercept": False, "R": ds.R.tolist()}
    with open(sidecar_path(path), "w") as fh:
        json.dump(side, fh, indent=2)
    return path


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _jsonable(o: Any):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable, allow_nan=True)
        fh.write("\n")
    return path


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def aligned_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    width = [max(len(r[c]) for r in cells) for c in range(len(header))]
    out = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, width)))
           for r in cells]
    out.insert(1, "  ".join("-" * w for w in width))
    return "\n".join(out) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, seed: int | None,
                   files: Sequence[Path]) -> Path:
    import scipy

    from breakbayes import __version__, kernels

    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "seed": seed,
        "config": config,
        "versions": {
            "breakbayes": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
        "kernel_backend": kernels.BACKEND,
        "files": [
            {"path": str(Path(f).relative_to(out_dir)), "sha256": sha256_file(f),
             "bytes": Path(f).stat().st_size}
            for f in files
        ],
    }
    return write_json(manifest, out_dir / "manifest.json")
