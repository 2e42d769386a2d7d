"""Flat-file formats for runs and design certificates.

Trace CSV layout, one row per recorded grid point:

    t, y1..ym, ydot1..ydotm, eta1..etal, e1..em, norm_e1, norm_e2,
    u1..um, is_sample, E1..Em

Floats are written with 17 significant digits so float64 values survive the
round trip bit for bit. The E columns hold the sampled surrogate and are
empty on non-sample rows. is_sample is 0/1.

Certificates are plain text, one `key = <json>` per line, '#' comments and
blank lines ignored. They carry the full design block, the run metadata and
the plant/reference/funnel spec used, so a trace plus its certificate is
enough to re-verify without the original config file.
"""

import csv
import dataclasses
import json

import numpy as np

from .design import DesignParameters
from .exceptions import ConfigError

_FMT = "%.17g"


def _f(x) -> str:
    return _FMT % float(x)


def trace_header(m: int, l: int) -> list:
    cols = ["t"]
    cols += [f"y{i + 1}" for i in range(m)]
    cols += [f"ydot{i + 1}" for i in range(m)]
    cols += [f"eta{i + 1}" for i in range(l)]
    cols += [f"e{i + 1}" for i in range(m)]
    cols += ["norm_e1", "norm_e2"]
    cols += [f"u{i + 1}" for i in range(m)]
    cols += ["is_sample"]
    cols += [f"E{i + 1}" for i in range(m)]
    return cols


def write_trace(path, trace) -> None:
    m = trace.y.shape[1]
    l = trace.eta.shape[1]
    sample_of_row = {int(r): k for k, r in enumerate(trace.sample_row)}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(m, l))
        for i in range(len(trace.t)):
            row = [_f(trace.t[i])]
            row += [_f(v) for v in trace.y[i]]
            row += [_f(v) for v in trace.y_dot[i]]
            row += [_f(v) for v in trace.eta[i]]
            row += [_f(v) for v in trace.e[i]]
            row += [_f(trace.e1_norm[i]), _f(trace.e2_norm[i])]
            row += [_f(v) for v in trace.u[i]]
            row.append("1" if trace.is_sample[i] else "0")
            k = sample_of_row.get(i)
            row += [""] * m if k is None else [_f(v) for v in trace.sample_E[k]]
            w.writerow(row)


def read_trace(path, tau: float, variant: str = "free",
               feasible=None, violation_time=None):
    """Rebuild a trace from CSV.

    tau and variant live in the certificate, not the CSV, so they are passed
    in. When feasible is not given it is derived from the recorded data:
    the run counts as feasible iff every row satisfies norm_e1 < 1. The
    composite-error vectors are not stored in the file; e2 comes back None
    (norm_e2 is kept) and sample_branch None, since both are recomputable.
    """
    from .sim import Trace  # local import, traceio must not pull the simulator eagerly

    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r if row]
    m = sum(1 for c in header if c.startswith("y") and not c.startswith("ydot"))
    l = sum(1 for c in header if c.startswith("eta"))
    expect = trace_header(m, l)
    if header != expect:
        raise ConfigError(f"unrecognized trace header, expected {expect[:4]}... got {header[:4]}...")

    n = len(rows)
    t = np.empty(n)
    y = np.empty((n, m))
    y_dot = np.empty((n, m))
    eta = np.empty((n, l))
    e = np.empty((n, m))
    e1n = np.empty(n)
    e2n = np.empty(n)
    u = np.empty((n, m))
    is_sample = np.zeros(n, dtype=bool)
    E_rows = []
    c_y = 1
    c_yd = c_y + m
    c_eta = c_yd + m
    c_e = c_eta + l
    c_n1 = c_e + m
    c_u = c_n1 + 2
    c_flag = c_u + m
    c_E = c_flag + 1
    for i, row in enumerate(rows):
        if len(row) != len(expect):
            raise ConfigError(f"trace row {i + 2} has {len(row)} fields, expected {len(expect)}")
        t[i] = float(row[0])
        y[i] = [float(v) for v in row[c_y:c_y + m]]
        y_dot[i] = [float(v) for v in row[c_yd:c_yd + m]]
        eta[i] = [float(v) for v in row[c_eta:c_eta + l]]
        e[i] = [float(v) for v in row[c_e:c_e + m]]
        e1n[i] = float(row[c_n1])
        e2n[i] = float(row[c_n1 + 1])
        u[i] = [float(v) for v in row[c_u:c_u + m]]
        flag = row[c_flag]
        if flag not in ("0", "1"):
            raise ConfigError(f"trace row {i + 2}: is_sample must be 0 or 1, got {flag!r}")
        is_sample[i] = flag == "1"
        if is_sample[i]:
            E_rows.append([float(v) for v in row[c_E:c_E + m]])

    sample_row = np.flatnonzero(is_sample)
    sample_E = np.asarray(E_rows, dtype=float).reshape(len(sample_row), m)
    if feasible is None:
        feasible = bool(np.all(e1n < 1.0))
        if not feasible:
            violation_time = float(t[int(np.argmax(e1n >= 1.0))])
    return Trace(
        t=t, y=y, y_dot=y_dot, eta=eta, u=u,
        e=e, e1_norm=e1n, e2=None, e2_norm=e2n,
        is_sample=is_sample,
        sample_t=t[sample_row], sample_E=sample_E,
        sample_u=u[sample_row], sample_branch=None,
        sample_row=sample_row,
        tau=float(tau), horizon=float(t[-1]) if n else 0.0,
        variant=str(variant), backend="file",
        feasible=bool(feasible),
        violation_time=None if violation_time is None else float(violation_time),
        violation_kind=None if feasible else "funnel",
    )


_PARAM_FIELDS = tuple(f.name for f in dataclasses.fields(DesignParameters))


def certificate_mapping(params: DesignParameters, **extra) -> dict:
    """Flatten a design block plus run metadata into one ordered mapping."""
    out = dict(dataclasses.asdict(params))
    for key, value in extra.items():
        out[key] = value
    return out


def params_from_certificate(cert: dict) -> DesignParameters:
    missing = [k for k in _PARAM_FIELDS if k not in cert]
    if missing:
        raise ConfigError(f"certificate is missing design keys: {', '.join(missing)}")
    return DesignParameters(**{k: cert[k] for k in _PARAM_FIELDS})


def _plain(value):
    """Strip numpy types so every value survives json.dumps."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def write_certificate(path, mapping: dict) -> None:
    with open(path, "w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key} = {json.dumps(_plain(value))}\n")


def read_certificate(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition(" = ")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            try:
                out[key] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return out
