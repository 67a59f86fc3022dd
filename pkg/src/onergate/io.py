"""CSV and manifest writers with reproducibility metadata."""
import csv
import hashlib
import json
import math
import os

import numpy as np

from . import __version__
from .atom import to_mhz


def fmt(value):
    """Deterministic text form of a value (shortest round-trip repr for floats)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def fmt_const(value):
    return f"{float(value):.12g}"


def atom_header(spec):
    """Atomic constants as they appear in every output header."""
    return {
        "nuclear_spin": fmt_const(spec.nuclear_spin),
        "excited_J": str(int(spec.excited_j)),
        "g_J": fmt_const(spec.g_j),
        "g_I": fmt_const(spec.g_i),
        "hyperfine_A": f"{fmt_const(to_mhz(spec.hyperfine_a))} MHz",
        "quadrupole_Q": f"{fmt_const(to_mhz(spec.quadrupole_q))} MHz",
        "gamma": f"{fmt_const(to_mhz(spec.gamma) * 1e3)} kHz",
        "mu_B": f"{fmt_const(to_mhz(spec.mu_b))} MHz/G",
        "mu_N": f"{fmt_const(to_mhz(spec.mu_n))} MHz/G",
    }


def header_lines(meta):
    return [f"# {k}: {v}" for k, v in meta.items()]


def read_header(path):
    """Parse the ``# key: value`` header of a CSV written by :func:`write_csv`."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = value
    return meta


def write_csv(path, rows, meta, columns=None):
    """Write ``rows`` (dicts) with a comment header; returns the path."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines(meta):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c, "")) for c in columns])
    return path


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Run manifest: config hash, version, parameters and per-file provenance.

    It is rewritten after every recorded file, so an interrupted run leaves a
    manifest with ``status = "partial"`` describing what was completed.
    """

    def __init__(self, out_dir, command, config_hash, parameters=None):
        self.path = os.path.join(out_dir, "manifest.json")
        self.doc = {
            "software": "onergate",
            "version": __version__,
            "command": command,
            "config_hash": config_hash,
            "parameters": parameters or {},
            "status": "partial",
            "files": [],
        }
        os.makedirs(out_dir, exist_ok=True)
        self.write()

    def record(self, path, **info):
        entry = {"file": os.path.basename(path), "sha256": file_sha256(path)}
        entry.update(info)
        self.doc["files"].append(entry)
        self.write()

    def finish(self, status="complete", **extra):
        self.doc["status"] = status
        self.doc.update(extra)
        self.write()

    def write(self):
        with open(self.path, "w") as fh:
            json.dump(self.doc, fh, indent=2, sort_keys=True, default=fmt)
            fh.write("\n")
