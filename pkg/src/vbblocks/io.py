"""File formats and run bookkeeping.

Data matrices travel as CSV (rows = time, columns = dimensions) or as a
raw little-endian binary: three int64 header words (rows, cols, magic)
followed by rows*cols float64 values in row-major order.  JSON documents
are written in a canonical form (sorted keys, two-space indent, trailing
newline) so independent writers can produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

#: little-endian int64 magic word of the binary data format ("DBV1")
MAGIC = 0x31564244


class DataFormatError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | Path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_float(x) -> str:
    """Shortest round-trip decimal form of a float."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# data matrices
# ---------------------------------------------------------------------------

def save_data_csv(path: str | Path, data: np.ndarray) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    lines = [",".join(fmt_float(v) for v in row) for row in data]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_data_csv(path: str | Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return data


def save_data_bin(path: str | Path, data: np.ndarray) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    header = np.array([data.shape[0], data.shape[1], MAGIC], dtype="<i8")
    atomic_write_bytes(path, header.tobytes() + data.astype("<f8").tobytes())


def load_data_bin(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 24:
        raise DataFormatError(f"{path}: truncated header")
    rows, cols, magic = np.frombuffer(blob[:24], dtype="<i8")
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic:#x}, expected {MAGIC:#x}")
    expected = 24 + rows * cols * 8
    if len(blob) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    return np.frombuffer(blob[24:], dtype="<f8").reshape(int(rows), int(cols)).copy()


def load_data(path: str | Path, fmt: str | None = None) -> np.ndarray:
    if fmt is None:
        fmt = "bin" if str(path).endswith(".bin") else "csv"
    if fmt == "bin":
        return load_data_bin(path)
    return load_data_csv(path)


# ---------------------------------------------------------------------------
# run outputs
# ---------------------------------------------------------------------------

def write_cost_trace(path: str | Path, trace, node_counts) -> None:
    lines = ["sweep,total_nats,bits_per_sample,n_nodes"]
    for sweep, (cb, n_nodes) in enumerate(zip(trace, node_counts)):
        lines.append(
            f"{sweep},{fmt_float(cb.total)},{fmt_float(cb.bits_per_sample)},{n_nodes}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_posteriors_csv(path: str | Path, graph) -> None:
    """Posterior state export, one row per posterior slot.

    Columns are the state parameters of each node family: Gaussians store
    (mean, variance), rectified nodes (location, squared scale), mixtures
    add responsibility columns, Dirichlet rows store pseudo-counts in the
    mean column."""
    from .graph import NodeKind

    max_k = max(
        [n.k for n in graph.nodes if n.kind is NodeKind.MIXTURE],
        default=0,
    )
    header = "node_label,sample_index,mean,variance"
    header += "".join(f",resp_{i}" for i in range(max_k))
    pad = [""] * max_k
    lines = [header]

    def row(label, idx, mean, var, resp=None):
        cells = [label, str(idx), fmt_float(mean), "" if var is None else fmt_float(var)]
        cells += [fmt_float(r) for r in resp] if resp is not None else pad
        lines.append(",".join(cells))

    for node in graph.nodes:
        st = node.state
        if st is None:
            continue
        if node.kind is NodeKind.GAUSSIAN:
            for i in range(st.n):
                row(node.label, i, st.mean[i], st.var[i])
        elif node.kind is NodeKind.RECTIFIED:
            for i in range(st.n):
                row(node.label, i, st.loc[i], st.scale2[i])
        elif node.kind is NodeKind.MIXTURE:
            for i in range(st.n):
                row(node.label, i, st.value.mean[i], st.value.var[i], st.resp[i])
        elif node.kind is NodeKind.DIRICHLET:
            for i in range(st.k):
                row(node.label, i, st.counts[i], None)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_posteriors_csv(path: str | Path, graph) -> None:
    """Restore posterior state exported by write_posteriors_csv."""
    from .graph import NodeKind
    from .state import GaussianState, RectifiedState

    rows: dict[str, list[tuple[int, list[str]]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            cells = line.rstrip("\n").split(",")
            rows.setdefault(cells[0], []).append((int(cells[1]), cells[2:]))
    n_resp = len(header) - 4
    for label, entries in rows.items():
        node = graph.by_label(label)
        entries.sort(key=lambda e: e[0])
        if node.kind is NodeKind.GAUSSIAN:
            mean = np.array([float(c[0]) for _, c in entries])
            var = np.array([float(c[1]) for _, c in entries])
            node.state = GaussianState(len(mean), mean, np.maximum(var, 0.0))
            if np.all(var == 0.0):
                node.state.clamp(mean)
        elif node.kind is NodeKind.RECTIFIED:
            loc = np.array([float(c[0]) for _, c in entries])
            scale2 = np.array([float(c[1]) for _, c in entries])
            node.state = RectifiedState(len(loc), loc, scale2)
        elif node.kind is NodeKind.MIXTURE:
            st = node.state
            st.value.mean = np.array([float(c[0]) for _, c in entries])
            st.value.set_var(np.array([float(c[1]) for _, c in entries]))
            st.set_resp(np.array([[float(v) for v in c[2 : 2 + node.k]] for _, c in entries]))
        elif node.kind is NodeKind.DIRICHLET:
            node.state.set_counts(np.array([float(c[0]) for _, c in entries]))
        node.touch()


def write_manifest(path: str | Path, payload: dict) -> None:
    atomic_write_text(path, canonical_json(payload))
