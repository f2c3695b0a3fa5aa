"""CSV/JSON input and output.

Input files are UTF-8 CSV with a header row. Required columns are ``id``,
``stop`` and ``status``; ``start`` is optional (default 0) and every other
column is a numeric covariate, taken in header order.

Numbers are written with :data:`FLOAT_FORMAT` (12 significant digits) via
Python's locale-independent ``format``; ``nan`` marks undefined values.
JSON documents carry a ``schema_version`` field.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .bands import ConfidenceBand, RrmInterval
from .cox import FittedCox
from .data import SurvivalDataset
from .errors import IoError, ParseError, SchemaError

SCHEMA_VERSION = 1
FLOAT_FORMAT = ".12g"
BAND_COLUMNS = ("t", "estimate", "lower", "upper", "pw_lower", "pw_upper")
COVERAGE_COLUMNS = (
    "multiplier", "scheme", "increments", "weight", "transform", "B", "alpha", "repetitions", "covered",
    "coverage", "mc_se", "mean_width", "band_failures", "replicate_failure_rate",
)
REQUIRED_COLUMNS = ("id", "stop", "status")


def fmt(x) -> str:
    """Locale-free text form of a number."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, FLOAT_FORMAT)


def _parse_float(text, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", line)
    return value


def read_csv(path, tau=None) -> SurvivalDataset:
    """Read a counting-process dataset.

    Raises
    ------
    IoError
        The file is missing or not valid UTF-8.
    SchemaError
        A required column is missing or duplicated, or there are no covariates.
    ParseError
        A value cannot be parsed; the message carries the 1-based file line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise IoError(f"input file not found: {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from None

    reader = csv.reader(text.splitlines())
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{path}: empty file, expected a header row") from None
    if len(set(header)) != len(header):
        raise SchemaError(f"duplicate column names in header: {header}")
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    special = set(REQUIRED_COLUMNS) | {"start"}
    cov_names = [h for h in header if h not in special]
    if not cov_names:
        raise SchemaError("no covariate columns")
    col = {h: j for j, h in enumerate(header)}

    ids, start, stop, status, X = [], [], [], [], []
    for line, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(fields)}", line)
        fields = [f.strip() for f in fields]
        ids.append(fields[col["id"]])
        start.append(_parse_float(fields[col["start"]], line, "start") if "start" in col else 0.0)
        stop.append(_parse_float(fields[col["stop"]], line, "stop"))
        s = fields[col["status"]]
        if s not in ("0", "1"):
            raise ParseError(f"status must be 0 or 1, found {s!r}", line)
        status.append(int(s))
        X.append([_parse_float(fields[col[c]], line, c) for c in cov_names])
    X = np.array(X, dtype=float).reshape(len(ids), len(cov_names))
    return SurvivalDataset(ids, start, stop, status, X, tau=tau, covariate_names=cov_names)


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def write_rows(path, header, rows):
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "value"):  # str enums
        return obj.value
    return obj


def write_json(path, payload):
    doc = {"schema_version": SCHEMA_VERSION, **_jsonable(payload)}
    with _open_for_write(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")


def read_json(path):
    try:
        with Path(path).open(encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise IoError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None


# -- bands ------------------------------------------------------------------

def band_rows(band: ConfidenceBand):
    nan = np.full(band.grid.size, np.nan)
    pl = band.pointwise_lower if band.pointwise_lower is not None else nan
    pu = band.pointwise_upper if band.pointwise_upper is not None else nan
    return zip(band.grid, band.estimate, band.lower, band.upper, pl, pu)


def band_document(band: ConfidenceBand, extra=None):
    spec = band.spec
    doc = {
        "kind": "band",
        "scale": band.scale,
        "spec": {"interval": list(spec.interval), "alpha": spec.alpha, "weight": spec.weight.value,
                 "transform": spec.transform.value},
        "covariates": None if band.covariates is None else list(band.covariates),
        "c_star": band.c_star,
        "diagnostics": band.diagnostics,
        "columns": list(BAND_COLUMNS),
        "rows": [list(r) for r in band_rows(band)],
    }
    if extra:
        doc.update(extra)
    return doc


def write_band(band: ConfidenceBand, path, format="csv", extra=None):
    """Write a band as CSV (``t,estimate,lower,upper,pw_lower,pw_upper``) or JSON."""
    if format == "csv":
        write_rows(path, BAND_COLUMNS, band_rows(band))
    elif format == "json":
        write_json(path, band_document(band, extra))
    else:
        raise ValueError(f"unknown format {format!r}")


def read_band_csv(path):
    """Columns of a band CSV as a dict of float arrays."""
    try:
        with Path(path).open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise IoError(f"file not found: {path}") from None
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {h: data[:, j] for j, h in enumerate(header)}


# -- fit, rrm, coverage -----------------------------------------------------

def write_fit(fitted: FittedCox, names, coef_path, baseline_path):
    se = fitted.standard_errors()
    write_rows(coef_path, ("covariate", "beta", "se", "z"),
               ((nm, b, s, b / s) for nm, b, s in zip(names, fitted.beta_hat, se)))
    base = fitted.baseline
    write_rows(baseline_path, ("t", "cumhaz", "jump"), zip(base.jump_times, base.values(), base.jump_sizes))


def rrm_document(ci: RrmInterval, tau, alpha, diagnostics=None):
    return {"kind": "rrm", "tau": tau, "alpha": alpha, "estimate": ci.estimate, "lower": ci.lower,
            "upper": ci.upper, "half_width": ci.half_width, "covariates": list(ci.covariates),
            "reference": None if ci.reference is None else list(ci.reference),
            "diagnostics": diagnostics or {}}


def write_coverage(result, path, format="csv"):
    """One CSV row per variant, or the full result with configuration as JSON."""
    if format == "csv":
        write_rows(path, COVERAGE_COLUMNS,
                   ([getattr(c, k) for k in COVERAGE_COLUMNS] for c in result.cells))
    elif format == "json":
        write_json(path, {"kind": "coverage", **result.to_dict()})
    else:
        raise ValueError(f"unknown format {format!r}")


__all__ = [
    "BAND_COLUMNS", "COVERAGE_COLUMNS", "FLOAT_FORMAT", "SCHEMA_VERSION", "band_document", "fmt", "read_band_csv",
    "read_csv", "read_json", "write_band", "write_coverage", "write_fit", "write_json", "write_rows",
]
