"""Readers and writers for the package's small file surface.

Matrix CSV: no header, one row per line, ``repr`` floats (so round-trips
are bit-exact).  Observations CSV: header ``row,col,value``, 0-based
indices.  Trace CSV: header ``iter,<monitor names>``.  ACF CSV: header
``monitor,chain,lag,rho``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import ChainTrace


class UsageError(Exception):
    """Bad user input: unreadable file, malformed content, invalid flags."""


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def _write_text(path, text: str) -> None:
    Path(path).write_text(text)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix_csv(path, mat) -> None:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {mat.shape}")
    lines = [",".join(_fmt(v) for v in row) for row in mat]
    _write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    lines = [ln for ln in _read_text(path).splitlines() if ln.strip()]
    if not lines:
        raise UsageError(f"{path}: empty matrix file")
    rows = []
    width = None
    for ln_no, ln in enumerate(lines, 1):
        try:
            row = [float(tok) for tok in ln.split(",")]
        except ValueError as e:
            raise UsageError(f"{path}, line {ln_no}: {e}") from e
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise UsageError(f"{path}, line {ln_no}: expected {width} columns, "
                             f"got {len(row)}")
        rows.append(row)
    return np.array(rows, dtype=np.float64)


def write_observations_csv(path, entries) -> None:
    lines = ["row,col,value"]
    lines += [f"{int(i)},{int(j)},{_fmt(v)}" for i, j, v in entries]
    _write_text(path, "\n".join(lines) + "\n")


def read_observations_csv(path) -> list[tuple[int, int, float]]:
    lines = _read_text(path).splitlines()
    if not lines or lines[0].strip() != "row,col,value":
        raise UsageError(f"{path}: expected header 'row,col,value'")
    entries = []
    for ln_no, ln in enumerate(lines[1:], 2):
        if not ln.strip():
            continue
        toks = ln.split(",")
        if len(toks) != 3:
            raise UsageError(f"{path}, line {ln_no}: expected 3 fields")
        try:
            entries.append((int(toks[0]), int(toks[1]), float(toks[2])))
        except ValueError as e:
            raise UsageError(f"{path}, line {ln_no}: {e}") from e
    return entries


def write_trace_csv(path, trace: ChainTrace) -> None:
    header = ",".join(["iter", *trace.monitor_names])
    lines = [header]
    for it, row in zip(trace.iters, trace.samples):
        lines.append(",".join([str(int(it)), *(_fmt(v) for v in row)]))
    _write_text(path, "\n".join(lines) + "\n")


def read_trace_csv(path) -> ChainTrace:
    lines = [ln for ln in _read_text(path).splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("iter"):
        raise UsageError(f"{path}: expected a trace header starting with 'iter'")
    names = lines[0].split(",")[1:]
    if not names:
        raise UsageError(f"{path}: trace has no monitor columns")
    iters, rows = [], []
    for ln_no, ln in enumerate(lines[1:], 2):
        toks = ln.split(",")
        if len(toks) != len(names) + 1:
            raise UsageError(f"{path}, line {ln_no}: expected {len(names) + 1} fields")
        try:
            iters.append(int(toks[0]))
            rows.append([float(t) for t in toks[1:]])
        except ValueError as e:
            raise UsageError(f"{path}, line {ln_no}: {e}") from e
    samples = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return ChainTrace(tuple(names), np.array(iters, dtype=np.int64), samples)


def write_acf_csv(path, rows) -> None:
    """rows: iterable of (monitor, chain, lag, rho)."""
    lines = ["monitor,chain,lag,rho"]
    lines += [f"{mon},{chain},{lag},{_fmt(rho)}" for mon, chain, lag, rho in rows]
    _write_text(path, "\n".join(lines) + "\n")
