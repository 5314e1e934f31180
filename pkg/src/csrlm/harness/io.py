"""CSV/JSON layouts of everything the harness writes."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import pandas as pd

SCHEMA_VERSION = 1

OBS_COLUMNS = [
    "K", "J", "q", "t", "epsilon", "kT", "N", "samples", "seed",
    "mean_M", "se_M", "chi", "chi_tilde", "binder", "corr_Gtilde", "mutual_info", "error",
]
HIST_COLUMNS = ["kT", "N", "bin_lo", "bin_hi", "count"]
ZIPF_COLUMNS = ["kT", "rank", "rel_freq"]
FSS_COLUMNS = ["Tc", "nu", "gamma", "quality"]
PHASE_COLUMNS = ["axis_name", "axis_value", "Tc", "method", "no_transition"]
DUMP_COLUMNS = ["K", "q", "t", "epsilon", "kT", "N", "sample", "M", "symbols"]

INT_COLUMNS = {"K", "N", "samples", "seed", "rank", "count", "sample"}


class SchemaError(ValueError):
    pass


class OutputExists(FileExistsError):
    pass


def fmt(value) -> str:
    """Deterministic text form: shortest round-trip repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(float(value))
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def check_writable(paths, overwrite: bool) -> None:
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not overwrite:
        raise OutputExists(f"refusing to overwrite {existing}; pass --overwrite")


def write_csv(path, columns, rows, overwrite: bool = False) -> Path:
    path = Path(path)
    check_writable([path], overwrite)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, rows), encoding="utf-8")
    return path


def write_json(path, payload: dict, overwrite: bool = False) -> Path:
    path = Path(path)
    check_writable([path], overwrite)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(type(o).__name__)


def read_table(path, columns) -> pd.DataFrame:
    """Read a harness CSV and check its header against ``columns``."""
    path = Path(path)
    try:
        df = pd.read_csv(
            path, keep_default_na=False, na_values=["nan", "NaN"], dtype={"error": str}, float_precision="round_trip"
        )
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    missing = [c for c in columns if c not in df.columns]
    extra = [c for c in df.columns if c not in columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}; unexpected columns {extra}")
    return df


def read_observables(path) -> pd.DataFrame:
    df = read_table(path, OBS_COLUMNS)
    if "error" in df.columns:
        df["error"] = df["error"].fillna("").astype(str)
    return df
