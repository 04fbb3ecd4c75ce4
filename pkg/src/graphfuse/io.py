"""CSV and binary interchange for layouts, graphs, datasets and chain outputs.

Floats are written with ``repr`` so a write/read round trip is exact.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graph import ProximityGraph
from .model import Dataset

DRAWS_MAGIC = b"GFBD"
DRAWS_VERSION = 1
_HEADER = struct.Struct("<4sHHII")  # magic, version, m, n, count: 16 bytes


def _fmt(x) -> str:
    return repr(float(x))


def _read_rows(path, required: list[str] | None = None):
    """Yield (line number, dict) for each data row; validates the header."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("file is empty", path, 1) from None
        for col in required or []:
            if col not in header:
                raise ParseError(f"missing column {col!r} (header: {','.join(header)})", path, 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            rows.append((lineno, dict(zip(header, (c.strip() for c in row)))))
    return header, rows


def _num(value: str, path, lineno, col, kind=float):
    try:
        v = kind(value)
    except ValueError:
        raise ParseError(f"column {col!r}: cannot parse {value!r} as {kind.__name__}", path, lineno) from None
    if kind is float and not np.isfinite(v):
        raise ParseError(f"column {col!r}: non-finite value {value!r}", path, lineno)
    return v


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- layouts and graphs ------------------------------------------------------------------


def write_layout(path, locations):
    loc = np.asarray(locations, dtype=float)
    cols = ["x", "y", "z"][: loc.shape[1]]
    _write(path, ["id"] + cols, ([i] + [_fmt(v) for v in row] for i, row in enumerate(loc)))


def read_layout(path) -> np.ndarray:
    header, rows = _read_rows(path, ["id", "x", "y"])
    cols = ["x", "y"] + (["z"] if "z" in header else [])
    ids = [_num(r["id"], path, ln, "id", int) for ln, r in rows]
    if sorted(ids) != list(range(len(ids))):
        raise ParseError("ids must be 0..n-1 with no gaps or repeats", path, 1)
    loc = np.empty((len(rows), len(cols)))
    for (ln, r), i in zip(rows, ids):
        loc[i] = [_num(r[c], path, ln, c) for c in cols]
    return loc


def write_edges(path, graph: ProximityGraph):
    _write(path, ["i", "j"], graph.edges.tolist())


def read_edges(path, n: int) -> ProximityGraph:
    _, rows = _read_rows(path, ["i", "j"])
    e = np.array([[_num(r["i"], path, ln, "i", int), _num(r["j"], path, ln, "j", int)] for ln, r in rows],
                 dtype=np.int64).reshape(-1, 2)
    for k, (ln, _) in enumerate(rows):
        a, b = e[k]
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise ParseError(f"invalid edge ({a}, {b}) for n={n}", path, ln)
    e = np.sort(e, axis=1)
    return ProximityGraph(n, e)


# -- datasets ------------------------------------------------------------------------------


def write_dataset_long(path, data: Dataset):
    st = data.to_stacked()
    m = st.m
    starts = np.r_[0, np.cumsum(st.d)]
    row_in_node = np.arange(st.y.size) - starts[st.node]
    header = ["node", "row", "y"] + [f"x_{k + 1}" for k in range(m)]
    _write(path, header, ([int(i), int(r), _fmt(v)] + [_fmt(x) for x in X]
                          for i, r, v, X in zip(st.node, row_in_node, st.y, st.X)))


def read_dataset_long(path, n: int | None = None) -> Dataset:
    header, rows = _read_rows(path, ["node", "row", "y", "x_1"])
    m = 0
    while f"x_{m + 1}" in header:
        m += 1
    extra = [h for h in header if h not in {"node", "row", "y"} | {f"x_{k + 1}" for k in range(m)}]
    if extra:
        raise ParseError(f"unexpected column {extra[0]!r}", path, 1)
    if not rows:
        raise ParseError("no data rows", path, 2)
    node = np.empty(len(rows), dtype=np.int64)
    y = np.empty(len(rows))
    X = np.empty((len(rows), m))
    for k, (ln, r) in enumerate(rows):
        node[k] = _num(r["node"], path, ln, "node", int)
        if node[k] < 0:
            raise ParseError(f"negative node index {node[k]}", path, ln)
        y[k] = _num(r["y"], path, ln, "y")
        X[k] = [_num(r[f"x_{j + 1}"], path, ln, f"x_{j + 1}") for j in range(m)]
    return Dataset.from_stacked(node, y, X, n=n)


def _read_matrix(path) -> np.ndarray:
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            out.append([_num(c.strip(), path, lineno, f"field {j + 1}") for j, c in enumerate(row)])
            if len(out[-1]) != len(out[0]):
                raise ParseError(f"expected {len(out[0])} fields, got {len(out[-1])}", path, lineno)
    if not out:
        raise ParseError("file is empty", path, 1)
    return np.asarray(out, dtype=float)


def write_dataset_shared(directory, data: Dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "responses.csv").open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([[_fmt(v) for v in row] for row in data.Y])
    with (directory / "design.csv").open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([[_fmt(v) for v in row] for row in data.X0])


def read_dataset_shared(directory) -> Dataset:
    directory = Path(directory)
    Y = _read_matrix(directory / "responses.csv")
    X0 = _read_matrix(directory / "design.csv")
    if Y.shape[1] != X0.shape[0]:
        raise ParseError(f"responses have {Y.shape[1]} columns but design has {X0.shape[0]} rows",
                         directory / "design.csv", 1)
    return Dataset.from_shared(Y, X0)


# -- chain outputs ---------------------------------------------------------------------------


def write_node_table(path, columns: dict):
    """Node-keyed CSV; every value in ``columns`` is a length-n array or (n, k) matrix."""
    names, arrays = [], []
    for name, arr in columns.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            names.append(name)
            arrays.append(arr)
        else:
            for k in range(arr.shape[1]):
                names.append(f"{name}_{k + 1}")
                arrays.append(arr[:, k])
    n = arrays[0].size
    _write(path, ["node"] + names, ([i] + [_fmt(a[i]) for a in arrays] for i in range(n)))


def read_node_table(path) -> dict:
    header, rows = _read_rows(path, ["node"])
    out = {h: np.array([_num(r[h], path, ln, h) for ln, r in rows]) for h in header if h != "node"}
    out["node"] = np.array([_num(r["node"], path, ln, "node", int) for ln, r in rows])
    return out


def write_summary(path, summary):
    cols = {"beta_mean": summary.beta_mean, "beta_sd": summary.beta_sd, "nu2_mean": summary.nu2_mean}
    if summary.theta_hat is not None:
        cols["theta_hat"] = summary.theta_hat
        cols["r_hat"] = summary.r_hat
    write_node_table(path, cols)


def write_traces(path, output):
    _write(path, ["iter", "sigma2", "lambda2"],
           ([it, _fmt(s), _fmt(l)] for it, (s, l) in enumerate(zip(output.sigma2_trace, output.lambda2_trace))))


def write_edge_table(path, graph: ProximityGraph, values: dict):
    names = list(values)
    _write(path, ["i", "j"] + names,
           ([int(a), int(b)] + [_fmt(values[k][r]) for k in names] for r, (a, b) in enumerate(graph.edges)))


def write_draws(path, draws: np.ndarray):
    """Binary dump: 16-byte header then float64 little-endian (count, n, m) array."""
    draws = np.ascontiguousarray(draws, dtype="<f8")
    count, n, m = draws.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(DRAWS_MAGIC, DRAWS_VERSION, m, n, count))
        fh.write(draws.tobytes())


def read_draws(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("truncated header", path, 1)
    magic, version, m, n, count = _HEADER.unpack_from(raw)
    if magic != DRAWS_MAGIC or version != DRAWS_VERSION:
        raise ParseError(f"not a draws file (magic {magic!r}, version {version})", path, 1)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != count * n * m:
        raise ParseError(f"expected {count * n * m} values, found {body.size}", path, 1)
    return body.reshape(count, n, m).copy()
