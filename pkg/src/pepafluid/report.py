"""Deterministic serialisation of run artifacts (JSON, CSV, DOT)."""

import csv
import hashlib
import io
import json
import math

import numpy as np

from . import __version__


def _clean(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def config_hash(config):
    """SHA-256 (hex, 16 chars) of the canonical JSON of ``config``."""
    blob = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def metadata(subcommand, config, seed=None):
    return {"tool": "pepafluid", "version": __version__, "subcommand": subcommand,
            "config": _clean(config), "config_hash": config_hash(config), "seed": seed}


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    return "" if v is None else str(v)


def emit_report(data, fmt, meta=None):
    """Serialise ``data`` to bytes.

    Parameters
    ----------
    data : dict
        ``json``: any JSON-able mapping (``meta`` is stored under
        ``"meta"``).  ``csv``: ``{"header": [...], "rows": [[...], ...]}``.
        ``dot``: ``{"name": str, "nodes": [(id, label)], "edges": [(src,
        dst, label)]}``.
    fmt : {"json", "csv", "dot"}
    meta : dict, optional
        Run metadata; a ``#`` comment line in CSV, a ``//`` line in DOT.

    Notes
    -----
    JSON keys are sorted, floats use the shortest round-trip repr, CSV uses
    ``.`` decimals and LF line endings.  Equal inputs give equal bytes.
    """
    if fmt == "json":
        obj = dict(_clean(data))
        if meta is not None:
            obj["meta"] = _clean(meta)
        return (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n").encode()
    mline = json.dumps(_clean(meta), sort_keys=True, separators=(",", ":")) if meta else None
    if fmt == "csv":
        buf = io.StringIO()
        if mline:
            buf.write("# " + mline + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(data["header"])
        for row in data["rows"]:
            w.writerow([_num(v) for v in row])
        return buf.getvalue().encode()
    if fmt == "dot":
        out = []
        if mline:
            out.append("// " + mline)
        out.append(f"digraph {json.dumps(data.get('name', 'G'))} {{")
        for nid, label in data["nodes"]:
            out.append(f"  {nid} [label={json.dumps(str(label))}];")
        for s, t, label in data["edges"]:
            out.append(f"  {s} -> {t} [label={json.dumps(str(label))}];")
        out.append("}")
        return ("\n".join(out) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")


def write_artifact(payload, path):
    """Write bytes to ``path`` (``"-"`` for stdout).

    Raises
    ------
    OSError
        If the path is not writable.
    """
    if path == "-":
        import sys
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        return
    with open(path, "wb") as fh:
        fh.write(payload)
