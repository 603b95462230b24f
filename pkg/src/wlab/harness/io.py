"""CSV/JSON output of sweep records and the run manifest."""
import csv
import json
import os
import platform
from importlib import metadata

import numpy as np

from .config import canonical_json, config_hash
from .sweep import CSV_FIELDS, FitResult, SweepRecord


def _fmt(v):
    # repr round-trips floats exactly
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def emit(obj, fmt, path):
    """Write records (list of SweepRecord) or a FitResult as CSV or JSON."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if fmt == "csv":
        if isinstance(obj, FitResult):
            raise ValueError("fit results are written as JSON")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in obj:
                w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])
        return path
    data = obj.to_dict() if isinstance(obj, FitResult) else [r.to_dict() for r in obj]
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
    return path


def read_csv(path):
    """Parse a sweep CSV back into records."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        kw = {k: float(row[k]) for k in CSV_FIELDS}
        kw["grid_n"] = int(row["grid_n"])
        out.append(SweepRecord(**kw))
    return out


def read_json(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        return FitResult(**{**data, "hbar_range": tuple(data["hbar_range"])})
    return [SweepRecord(**d) for d in data]


def versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "pyamg"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    try:
        out["wlab"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["wlab"] = None
    return out


def write_manifest(raw_config, path, seeds, command, extra=None):
    """Run manifest: config hash (canonical JSON), config, versions, seeds."""
    man = {"command": command, "config_hash": config_hash(raw_config), "config": json.loads(canonical_json(raw_config)),
           "versions": versions(), "seeds": seeds}
    if extra:
        man.update(extra)
    with open(path, "w") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return man
