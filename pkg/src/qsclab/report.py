"""Deterministic JSON and CSV output.

Only the ``timestamp`` field of the metadata block varies between runs with
the same inputs; CSV files carry no timestamp at all.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
import platform
from importlib import metadata as importlib_metadata
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

DEFAULT_TOLERANCES = {"match": 1e-9, "residual": 1e-9, "fingerprint": True}


def package_version() -> str:
    try:
        return importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


def run_metadata(seed: int, tolerances: dict[str, Any]) -> dict[str, Any]:
    return {
        "seed": seed,
        "tolerances": dict(sorted(tolerances.items())),
        "versions": {"qsclab": package_version(), "numpy": np.__version__, "python": platform.python_version()},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars become Python numbers, non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def _cell(x: Any) -> str:
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return " ".join(_cell(v) for v in x)
    return "" if x is None else str(x)


def without_timestamp(report: dict[str, Any]) -> dict[str, Any]:
    out = json.loads(json.dumps(report))
    out.get("metadata", {}).pop("timestamp", None)
    return out
