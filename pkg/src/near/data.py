"""Dataset loading: IDX binaries (MNIST family) and numeric CSV."""

from __future__ import annotations

import csv
import gzip
import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimensionOverflow, NonNumericCell, RaggedRows, TruncatedFile

# IDX type byte -> big-endian numpy dtype
IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
MAX_ELEMENTS = 1 << 34


@dataclass(frozen=True, eq=False)
class Dataset:
    """``features`` is ``(samples, input_dim)``; ``image_shape`` is ``(height, width, channels)``."""

    features: np.ndarray
    name: str = ""
    image_shape: tuple[int, int, int] | None = None
    standardized: bool = False

    def __post_init__(self):
        f = self.features
        if f.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features contain NaN or Inf")
        if self.image_shape is not None and int(np.prod(self.image_shape)) != f.shape[1]:
            raise ValueError(f"image shape {self.image_shape} does not match input_dim {f.shape[1]}")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


def _open(path: Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path) -> np.ndarray:
    """Raw IDX tensor with its stored dtype and shape.

    Raises:
        BadMagic: unknown magic / type byte.
        TruncatedFile: header or payload shorter than declared.
        DimensionOverflow: declared element count beyond :data:`MAX_ELEMENTS`.
    """
    raw = _open(path)
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    zero, dtype_code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zero != 0 or dtype_code not in IDX_TYPES or ndim == 0:
        raise BadMagic(f"{path}: bad IDX magic 0x{magic:08X}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{path}: header declares {ndim} dimensions but file ends early")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = 1
    for d in dims:
        count *= d
    if count > MAX_ELEMENTS:
        raise DimensionOverflow(f"{path}: {count} elements declared by dims {dims}")
    dtype = IDX_TYPES[dtype_code]
    need = header + count * dtype.itemsize
    if len(raw) < need:
        raise TruncatedFile(f"{path}: payload has {len(raw) - header} bytes, expected {need - header}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=header).reshape(dims)


def load_idx(path) -> Dataset:
    """Load an IDX file as a dataset.

    Unsigned-byte images (magic ``0x00000803``) become rows of pixels scaled
    to ``[0, 1]`` with ``image_shape = (rows, cols, 1)``.  Other tensors are
    flattened per sample without scaling.
    """
    arr = read_idx(path)
    name = Path(path).name
    if arr.ndim == 1:
        feats = arr.astype(np.float64).reshape(-1, 1)
        return Dataset(feats, name)
    n = arr.shape[0]
    flat = arr.reshape(n, -1)
    if arr.dtype == IDX_TYPES[0x08]:
        feats = flat.astype(np.float64) / 255.0
    else:
        feats = flat.astype(np.float64)
    shape = None
    if arr.ndim == 3:
        shape = (arr.shape[1], arr.shape[2], 1)
    elif arr.ndim == 4:
        shape = tuple(arr.shape[1:])
    return Dataset(feats, name, shape)


def load_idx_labels(path) -> np.ndarray:
    arr = read_idx(path)
    if arr.ndim != 1:
        raise BadMagic(f"{path}: label files are rank 1, got rank {arr.ndim}")
    return arr.astype(np.int64)


def write_idx(path, data: Dataset | np.ndarray) -> None:
    """Write an IDX file.

    A :class:`Dataset` is written as unsigned bytes (``round(255 * x)``) with
    its image shape, undoing :func:`load_idx`; raw arrays keep their dtype.
    """
    if isinstance(data, Dataset):
        shape = (data.n_samples,) + (tuple(data.image_shape[:2]) if data.image_shape and data.image_shape[2] == 1
                                     else tuple(data.image_shape or (data.input_dim,)))
        arr = np.clip(np.rint(data.features * 255.0), 0, 255).astype(np.uint8).reshape(shape)
    else:
        arr = np.asarray(data)
    codes = {v.newbyteorder("="): k for k, v in IDX_TYPES.items()}
    code = codes.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    buf = io.BytesIO()
    buf.write(struct.pack(">I", (code << 8) | arr.ndim))
    buf.write(struct.pack(f">{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=IDX_TYPES[code]).tobytes())
    Path(path).write_bytes(buf.getvalue())


def _parse_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def read_csv_table(path) -> tuple[list[str] | None, list[list[str]]]:
    """Header (if the first row is not fully numeric) and the remaining non-empty rows.

    Raises:
        RaggedRows: if rows differ in length.
    """
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in row] for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        return None, []
    header = None
    if any(_parse_float(c) is None for c in rows[0]):
        header, rows = rows[0], rows[1:]
    width = len(header) if header is not None else len(rows[0]) if rows else 0
    for i, row in enumerate(rows):
        if len(row) != width:
            line = i + (2 if header is not None else 1)
            raise RaggedRows(f"{path}: row {line} has {len(row)} cells, expected {width}")
    return header, rows


def load_csv(path) -> Dataset:
    """Rectangular numeric CSV, optional header row, one sample per row.

    Raises:
        RaggedRows: rows of unequal length.
        NonNumericCell: a cell that does not parse as a float (1-based location).
    """
    header, rows = read_csv_table(path)
    offset = 2 if header is not None else 1
    if not rows:
        raise RaggedRows(f"{path}: no data rows")
    feats = np.empty((len(rows), len(rows[0])), dtype=np.float64)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            v = _parse_float(cell)
            if v is None or not np.isfinite(v):
                raise NonNumericCell(i + offset, j + 1, cell)
            feats[i, j] = v
    return Dataset(feats, Path(path).name)


def load_score_table(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """``(ids, scores, accuracies)`` from a CSV with columns id, score, accuracy.

    With a header the columns are found by name; without one they are taken
    positionally.
    """
    header, rows = read_csv_table(path)
    if header is not None:
        lower = [h.lower() for h in header]
        try:
            cols = [lower.index("id"), lower.index("score"), lower.index("accuracy")]
        except ValueError:
            raise RaggedRows(f"{path}: header must name columns id, score, accuracy; got {header}") from None
        offset = 2
    else:
        if rows and len(rows[0]) != 3:
            raise RaggedRows(f"{path}: expected 3 columns (id, score, accuracy), got {len(rows[0])}")
        cols = [0, 1, 2]
        offset = 1
    ids, scores, accs = [], [], []
    for i, row in enumerate(rows):
        ids.append(row[cols[0]])
        for col, sink in ((cols[1], scores), (cols[2], accs)):
            v = _parse_float(row[col])
            if v is None or not np.isfinite(v):
                raise NonNumericCell(i + offset, col + 1, row[col])
            sink.append(v)
    return ids, np.array(scores), np.array(accs)


def standardize(ds: Dataset) -> Dataset:
    """Per-feature z-score; constant features are only centred."""
    f = ds.features
    mu = f.mean(axis=0)
    sd = f.std(axis=0)
    sd[sd == 0] = 1.0
    return replace(ds, features=(f - mu) / sd, standardized=True)
