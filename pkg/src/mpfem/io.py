"""CSV formats: value grids and dense matrices.

Floats are written with ``%.17g`` so that reading a file back reproduces
every double exactly; infinities are written as ``inf`` and ``-inf``.
"""
import csv
import io

import numpy as np

from .errors import DimensionError


def _fmt(v):
    return "%.17g" % v


def format_value_grid(nodes, t, values):
    """Header ``x1,...,xn,t,value`` then one row per node in the given order."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    if nodes.shape[0] != values.shape[0]:
        raise DimensionError(f"{nodes.shape[0]} nodes but {values.shape[0]} values")
    n = nodes.shape[1]
    lines = [",".join([f"x{k + 1}" for k in range(n)] + ["t", "value"])]
    ts = _fmt(t)
    for x, v in zip(nodes, values):
        lines.append(",".join([_fmt(c) for c in x] + [ts, _fmt(v)]))
    return "\n".join(lines) + "\n"


def write_value_grid(path, nodes, t, values):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_value_grid(nodes, t, values))


def read_value_grid(path):
    """Returns ``(nodes, t, values)``; every row must share one time stamp."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = len(header) - 2
    if n < 1 or header[-2:] != ["t", "value"]:
        raise ValueError(f"not a value-grid header: {header}")
    data = np.array([[float(c) for c in r] for r in body], dtype=float).reshape(-1, n + 2)
    times = np.unique(data[:, n])
    if times.size > 1:
        raise ValueError("value grid mixes several time stamps")
    t = float(times[0]) if times.size else float("nan")
    return data[:, :n], t, data[:, n + 1]


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    buf = io.StringIO()
    for row in M:
        buf.write(",".join(_fmt(v) for v in row))
        buf.write("\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return np.array([[float(c) for c in r] for r in rows], dtype=float)


def write_table(path, header, rows):
    """Plain CSV table; floats in ``%.17g``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r))
            fh.write("\n")
