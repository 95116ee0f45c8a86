"""Deterministic serialization of check reports to JSON and CSV.

Reports are dictionaries {config_echo, results, summary}; results is a list
of flat row dictionaries.  Serialization fixes key order and float
formatting so identical configurations produce byte-identical files.
"""

import csv
import io
import json

import numpy as np


def sanitize(obj):
    """Recursively convert numpy scalars and arrays to plain Python."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def report_dict(config_echo, results, max_residual, passed):
    return {
        "config_echo": sanitize(config_echo),
        "results": sanitize(results),
        "summary": {
            "max_residual": sanitize(max_residual),
            "pass": bool(passed),
        },
    }


def to_json(report):
    return json.dumps(sanitize(report), indent=2, sort_keys=True) + "\n"


def to_csv(report):
    """Flattened results table; list-valued cells joined with ';'."""
    rows = report.get("results", [])
    buf = io.StringIO()
    if not rows:
        return ""
    keys = sorted({k for row in rows for k in row})
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        flat = {}
        for k in keys:
            v = sanitize(row.get(k, ""))
            if isinstance(v, list):
                v = ";".join(repr(x) for x in v)
            flat[k] = v
        writer.writerow(flat)
    return buf.getvalue()


def write_report(report, out_path, fmt):
    text = to_json(report) if fmt == "json" else to_csv(report)
    with open(out_path, "w") as fh:
        fh.write(text)
    return out_path
