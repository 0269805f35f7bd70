"""JSON system/certificate documents and CSV trajectory export.

Both JSON formats use a closed schema: unknown fields are rejected with a
diagnostic naming the field. Floats are written with ``repr`` precision so
that parse(serialize(x)) reproduces every value bit for bit.
"""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Any

import numpy as np

from .errors import SchemaError
from .lmi.certificate import CONDITION_KINDS, Certificate
from .lmi.conditions import ScalarMultipliers
from .simulator import Trajectory
from .system import SwitchedSystem

FORMAT_VERSION = "1"
SYSTEM_KEYS = {"n", "modes", "meta"}
MODE_KEYS = {"name", "A"}
CERT_KEYS = {"format_version", "tau", "m", "P", "alpha", "gamma", "margins", "tolerances", "provenance"}
CERT_REQUIRED = {"format_version", "tau", "m", "P"}


def _loads(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _closed(obj, allowed: set, where: str, required: set = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown field {unknown[0]!r}")
    missing = sorted(required - set(obj))
    if missing:
        raise SchemaError(f"{where}: missing field {missing[0]!r}")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise SchemaError(f"{where}: non-finite number")
    return v


def _integer(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{where}: expected an integer")
    return v


def _matrix(v, n: int, where: str) -> np.ndarray:
    if not isinstance(v, list) or len(v) != n:
        raise SchemaError(f"{where}: expected {n} rows")
    rows = []
    for k, row in enumerate(v):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaError(f"{where}[{k}]: expected {n} entries")
        rows.append([_number(x, f"{where}[{k}][{c}]") for c, x in enumerate(row)])
    return np.array(rows)


def _matrix_json(a: np.ndarray) -> list:
    return [[float(x) for x in row] for row in a]


# -- systems ------------------------------------------------------------------

def system_from_dict(doc: dict) -> SwitchedSystem:
    _closed(doc, SYSTEM_KEYS, "system", {"n", "modes"})
    n = _integer(doc["n"], "system.n")
    if n < 1:
        raise SchemaError("system.n: must be positive")
    modes = doc["modes"]
    if not isinstance(modes, list) or not modes:
        raise SchemaError("system.modes: expected a non-empty list")
    mats, names = [], []
    for k, mode in enumerate(modes):
        where = f"system.modes[{k}]"
        _closed(mode, MODE_KEYS, where, {"A"})
        name = mode.get("name", f"A{k + 1}")
        if not isinstance(name, str) or not name:
            raise SchemaError(f"{where}.name: expected a non-empty string")
        names.append(name)
        mats.append(_matrix(mode["A"], n, f"{where}.A"))
    return SwitchedSystem(tuple(mats), tuple(names))


def system_to_dict(sys: SwitchedSystem, meta: dict | None = None) -> dict:
    doc = {"n": sys.n,
           "modes": [{"name": lab, "A": _matrix_json(a)} for lab, a in zip(sys.labels, sys.modes)]}
    if meta is not None:
        doc["meta"] = meta
    return doc


def load_system(path) -> SwitchedSystem:
    with open(path, encoding="utf-8") as fh:
        return system_from_dict(_loads(fh.read(), str(path)))


def save_system(sys: SwitchedSystem, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(system_to_dict(sys, meta)))


# -- certificates -------------------------------------------------------------

def certificate_to_dict(cert: Certificate) -> dict:
    labels, m = cert.labels, cert.m
    mult = cert.multipliers
    alpha = {labels[i]: {str(r + 1): {str(s + 1): float(mult.alpha[i, r, s])
                                      for s in range(m) if s != r} for r in range(m)}
             for i in range(cert.N)}
    gamma = {labels[j]: {str(q + 1): {labels[i]: {str(r + 1): {str(s + 1): float(mult.gamma[j, q, i, r, s])
                                                              for s in range(m) if s != r}
                                                  for r in range(m)}
                                      for i in range(cert.N) if i != j}
                         for q in range(m)}
             for j in range(cert.N)}
    doc = {
        "format_version": FORMAT_VERSION,
        "tau": float(cert.tau),
        "m": m,
        "P": {labels[i]: [_matrix_json(p) for p in cert.pieces[i]] for i in range(cert.N)},
        "alpha": alpha,
        "gamma": gamma,
        # vacuous conditions (no switches, single pieces) have infinite margin; leave them out
        "margins": {k: float(cert.margins[k]) for k in CONDITION_KINDS
                    if k in cert.margins and np.isfinite(cert.margins[k])},
        "tolerances": dict(cert.tolerances),
        "provenance": dict(cert.provenance),
    }
    return doc


def _index(key: str, m: int, where: str) -> int:
    if not key.isdigit() or not 1 <= int(key) <= m:
        raise SchemaError(f"{where}: unknown field {key!r} (expected a piece index 1..{m})")
    return int(key) - 1


def _label(key: str, labels: dict, where: str) -> int:
    if key not in labels:
        raise SchemaError(f"{where}: unknown field {key!r} (not a mode name)")
    return labels[key]


def certificate_from_dict(doc: dict) -> Certificate:
    _closed(doc, CERT_KEYS, "certificate", CERT_REQUIRED)
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"certificate.format_version: unsupported version {doc['format_version']!r}")
    tau = _number(doc["tau"], "certificate.tau")
    if tau < 0:
        raise SchemaError("certificate.tau: must be non-negative")
    m = _integer(doc["m"], "certificate.m")
    if m < 1:
        raise SchemaError("certificate.m: must be positive")
    P = doc["P"]
    if not isinstance(P, dict) or not P:
        raise SchemaError("certificate.P: expected a non-empty object keyed by mode name")
    labels = tuple(P)
    lab_idx = {lab: k for k, lab in enumerate(labels)}
    N = len(labels)
    n = None
    pieces = []
    for lab in labels:
        mats = P[lab]
        if not isinstance(mats, list) or len(mats) != m:
            raise SchemaError(f"certificate.P.{lab}: expected {m} matrices")
        if n is None:
            n = len(mats[0]) if isinstance(mats[0], list) else 0
            if n < 1:
                raise SchemaError(f"certificate.P.{lab}[0]: expected a square matrix")
        pieces.append([_matrix(p, n, f"certificate.P.{lab}[{r}]") for r, p in enumerate(mats)])
    mult = ScalarMultipliers.zeros(N, m)
    if "alpha" in doc:
        alpha = doc["alpha"]
        _closed(alpha, set(labels), "certificate.alpha")
        for lab, rows in alpha.items():
            i = lab_idx[lab]
            _closed(rows, {str(r + 1) for r in range(m)}, f"certificate.alpha.{lab}")
            for rk, cols in rows.items():
                r = _index(rk, m, f"certificate.alpha.{lab}")
                _closed(cols, {str(s + 1) for s in range(m) if s != r}, f"certificate.alpha.{lab}.{rk}")
                for sk, v in cols.items():
                    mult.alpha[i, r, int(sk) - 1] = _number(v, f"certificate.alpha.{lab}.{rk}.{sk}")
    if "gamma" in doc:
        gamma = doc["gamma"]
        _closed(gamma, set(labels), "certificate.gamma")
        for jlab, qs in gamma.items():
            j = lab_idx[jlab]
            _closed(qs, {str(q + 1) for q in range(m)}, f"certificate.gamma.{jlab}")
            for qk, targets in qs.items():
                q = _index(qk, m, f"certificate.gamma.{jlab}")
                where = f"certificate.gamma.{jlab}.{qk}"
                _closed(targets, set(labels) - {jlab}, where)
                for ilab, rows in targets.items():
                    i = _label(ilab, lab_idx, where)
                    _closed(rows, {str(r + 1) for r in range(m)}, f"{where}.{ilab}")
                    for rk, cols in rows.items():
                        r = _index(rk, m, f"{where}.{ilab}")
                        _closed(cols, {str(s + 1) for s in range(m) if s != r}, f"{where}.{ilab}.{rk}")
                        for sk, v in cols.items():
                            mult.gamma[j, q, i, r, int(sk) - 1] = _number(v, f"{where}.{ilab}.{rk}.{sk}")
    margins = {}
    if "margins" in doc:
        _closed(doc["margins"], set(CONDITION_KINDS), "certificate.margins")
        margins = {k: _number(v, f"certificate.margins.{k}") for k, v in doc["margins"].items()}
    extra = {}
    for key in ("tolerances", "provenance"):
        if key in doc:
            if not isinstance(doc[key], dict):
                raise SchemaError(f"certificate.{key}: expected an object")
            extra[key] = doc[key]
    return Certificate(tau, np.array(pieces), mult, labels, margins,
                       extra.get("tolerances", {}), extra.get("provenance", {}))


def dumps_certificate(cert: Certificate) -> str:
    return _dumps(certificate_to_dict(cert))


def loads_certificate(text: str) -> Certificate:
    return certificate_from_dict(_loads(text, "certificate"))


def load_certificate(path) -> Certificate:
    with open(path, encoding="utf-8") as fh:
        return certificate_from_dict(_loads(fh.read(), str(path)))


def save_certificate(cert: Certificate, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_certificate(cert))


# -- trajectories -------------------------------------------------------------

def trajectory_csv(traj: Trajectory, trace=None) -> str:
    """CSV with header ``t,x1..xn,mode,V``; modes are 1-based, V empty without a trace."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = traj.states.shape[1]
    w.writerow(["t"] + [f"x{k + 1}" for k in range(n)] + ["mode", "V"])
    for k, (t, x, mode) in enumerate(zip(traj.times, traj.states, traj.modes)):
        v = "" if trace is None else repr(float(trace[k]))
        w.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [int(mode) + 1, v])
    return buf.getvalue()


def read_trajectory_csv(path) -> dict:
    """Parse a trajectory CSV back into arrays (``V`` is None when absent)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty CSV")
    header = rows[0]
    if header[0] != "t" or header[-2:] != ["mode", "V"]:
        raise SchemaError(f"{path}: unexpected header {header}")
    n = len(header) - 3
    try:
        data = [[float(c) for c in row[:n + 1]] for row in rows[1:]]
        modes = [int(row[n + 1]) - 1 for row in rows[1:]]
        vs = [row[n + 2] for row in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row: {exc}") from exc
    arr = np.array(data).reshape(-1, n + 1)
    values = None if any(v == "" for v in vs) else np.array([float(v) for v in vs])
    return {"t": arr[:, 0], "x": arr[:, 1:], "mode": np.array(modes), "V": values}
