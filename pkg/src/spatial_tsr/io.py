"""CSV and JSON file formats used by the command line interface."""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ConfigurationError, DomainError
from .glscore import SpatialDataset

__all__ = ["read_dataset_csv", "write_dataset_csv", "read_sites_csv", "load_config", "write_json"]

BASE_COLUMNS = ("x_coord", "y_coord", "response")


def _read_rows(path):
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    rows = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, rows.reshape(-1, len(header)), meta


def read_dataset_csv(path, covariates=None):
    """Read ``x_coord, y_coord, response, covariate...`` into a dataset.

    ``covariates`` selects and orders covariate columns by name; default is
    every column after ``response``.
    """
    header, rows, _ = _read_rows(path)
    if tuple(header[:3]) != BASE_COLUMNS:
        raise DomainError(f"dataset CSV must start with columns {BASE_COLUMNS}, got {header[:3]}")
    names = header[3:] if covariates is None else list(covariates)
    missing = [c for c in names if c not in header[3:]]
    if missing:
        raise DomainError(f"covariates {missing} not in {path}")
    idx = [header.index(c) for c in names]
    return SpatialDataset(rows[:, :2], rows[:, 2], rows[:, idx], tuple(names))


def read_sites_csv(path, covariates):
    """Read prediction sites ``x_coord, y_coord, covariate...``."""
    header, rows, _ = _read_rows(path)
    if tuple(header[:2]) != BASE_COLUMNS[:2]:
        raise DomainError("sites CSV must start with x_coord, y_coord")
    missing = [c for c in covariates if c not in header]
    if missing:
        raise DomainError(f"covariates {missing} not in {path}")
    X = rows[:, [header.index(c) for c in covariates]]
    y = rows[:, header.index("response")] if "response" in header else None
    return rows[:, :2], X, y


def write_dataset_csv(data, path, meta=None):
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(list(BASE_COLUMNS) + list(data.covariate_names))
        for s, yi, xi in zip(data.coords, data.y, data.X):
            w.writerow([repr(float(v)) for v in (*s, yi, *xi)])


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
