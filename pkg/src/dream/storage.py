"""On-disk formats.

* Feature matrices: ``<name>.f32`` (little-endian float32, row-major) plus a
  ``<name>.json`` sidecar ``{"rows", "dim", "modality"}``. A CSV reader is
  available as a fallback, and ``.npy`` files are accepted for convenience.
* Blobs: one binary file holding a JSON header and a set of named arrays.
  Used for sparse graphs and checkpoints. Layout::

      b"DREAMBLB" | uint64 LE header length | UTF-8 JSON header | array bytes

  The header lists every array as ``{"name", "dtype", "shape", "offset"}``
  with offsets relative to the end of the header.
"""

import json
import os
from pathlib import Path
import struct

import numpy as np

from .errors import DataError, DimensionError
from .graphs import SparseMatrix

MAGIC = b"DREAMBLB"


def write_blob(path, meta, arrays):
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|", "<") else arr.dtype
        arr = arr.astype(dt, copy=False)
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)
    os.replace(tmp, path)


def read_blob(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not a blob file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt header: {exc}") from exc
    base = 16 + hlen
    arrays = {}
    for e in header["arrays"]:
        dt = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        arr = np.frombuffer(data, dtype=dt, count=count, offset=start).reshape(e["shape"])
        arrays[e["name"]] = arr.copy()
    return header["meta"], arrays


def save_sparse(path, mat, **meta):
    meta = dict(meta, n_rows=mat.n_rows, n_cols=mat.n_cols, nnz=mat.nnz)
    write_blob(path, meta, {"row": mat.row, "col": mat.col, "val": mat.val})


def load_sparse(path):
    meta, arrays = read_blob(path)
    mat = SparseMatrix(meta["n_rows"], meta["n_cols"], arrays["row"], arrays["col"], arrays["val"])
    return mat, meta


# --- feature matrices ------------------------------------------------------

def _sidecar(prefix):
    return Path(str(prefix) + ".json")


def write_features(prefix, array, modality, **extra):
    array = np.asarray(array, dtype="<f4")
    if array.ndim != 2:
        raise DimensionError(f"feature matrix must be 2-D, got shape {array.shape}")
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    array.tofile(str(prefix) + ".f32")
    meta = {"rows": int(array.shape[0]), "dim": int(array.shape[1]), "modality": modality}
    meta.update(extra)
    _sidecar(prefix).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_features(path):
    """Load a feature matrix. Returns ``(array float32, meta dict)``.

    ``path`` may be a prefix (``<prefix>.f32`` + ``<prefix>.json``), an explicit
    ``.f32``/``.json`` name, a ``.csv`` file, or a ``.npy`` file.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return _read_csv_features(path)
    if suffix == ".npy":
        arr = np.load(path).astype(np.float32)
        _check_features(arr, path)
        return arr, {"rows": arr.shape[0], "dim": arr.shape[1], "modality": path.stem}
    prefix = path.with_suffix("") if suffix in (".f32", ".json") else path
    side = _sidecar(prefix)
    binf = Path(str(prefix) + ".f32")
    for p in (side, binf):
        if not p.exists():
            raise DataError(f"missing feature file {p}")
    try:
        meta = json.loads(side.read_text())
        rows, dim = int(meta["rows"]), int(meta["dim"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{side}: corrupt sidecar: {exc}") from exc
    arr = np.fromfile(binf, dtype="<f4")
    if arr.size != rows * dim:
        raise DataError(f"{binf}: expected {rows}x{dim} floats, found {arr.size}")
    arr = arr.reshape(rows, dim).astype(np.float32)
    _check_features(arr, binf)
    return arr, meta


def _read_csv_features(path):
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    arr = arr.astype(np.float32)
    _check_features(arr, path)
    return arr, {"rows": arr.shape[0], "dim": arr.shape[1], "modality": path.stem}


def _check_features(arr, path):
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise DataError(f"{path}: feature matrix has no columns")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{path}: non-finite feature value at row {bad[0]}, col {bad[1]}")
