"""
PSG1 grid container, plus CSV and image exports.

Layout (little-endian): an 18-byte header

    magic "PSG1" | version u16 | kind u8 | height u32 | width u32 |
    channels u16 | scalar_width u8

followed by height * width * channels scalars of ``scalar_width`` bytes,
row-major and channel-interleaved. Kinds: 1 SLC (6 channels: re/im of HH, HV,
VV), 2 covariance (9 channels, see ``core.COV_FIELDS``), 3 optical (B bands),
4 labels (1 channel, signed integers). Widths are 4 or 8 bytes; 4-byte data
is widened to 64 bits on load.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from polgnlm.core import COV_FIELDS, CovGrid, LabelGrid, OpticalGrid, SlcGrid
from polgnlm.features import FEATURE_NAMES

MAGIC = b"PSG1"
VERSION = 1
HEADER = struct.Struct("<4sHBIIHB")
KIND_SLC, KIND_COV, KIND_OPTICAL, KIND_LABELS = 1, 2, 3, 4
DEFAULT_SIZE_CAP = 2 * 1024 ** 3

Grid = Union[SlcGrid, CovGrid, OpticalGrid, LabelGrid]


class GridFormatError(ValueError):
    code = "format error"

    def __init__(self, path, detail: str):
        super().__init__(f"{path}: {self.code}: {detail}")
        self.path = path


class BadMagicError(GridFormatError):
    code = "bad magic"


class UnsupportedVersionError(GridFormatError):
    code = "unsupported version"


class LengthMismatchError(GridFormatError):
    code = "length mismatch"


class BadHeaderError(GridFormatError):
    code = "bad header"


class SizeCapError(GridFormatError):
    code = "size cap exceeded"


def _kind_of(grid: Grid) -> int:
    if isinstance(grid, SlcGrid):
        return KIND_SLC
    if isinstance(grid, CovGrid):
        return KIND_COV
    if isinstance(grid, OpticalGrid):
        return KIND_OPTICAL
    if isinstance(grid, LabelGrid):
        return KIND_LABELS
    raise TypeError(f"cannot serialize {type(grid).__name__}")


def _payload(grid: Grid, width: int) -> np.ndarray:
    kind = _kind_of(grid)
    if kind == KIND_SLC:
        d = grid.data
        flat = np.empty(d.shape[:2] + (6,))
        flat[..., 0::2] = d.real
        flat[..., 1::2] = d.imag
    elif kind == KIND_LABELS:
        flat = grid.data[..., None]
        if width == 4 and (flat.min() < -2 ** 31 or flat.max() >= 2 ** 31):
            raise ValueError("label values do not fit into 4-byte integers")
        return flat.astype("<i4" if width == 4 else "<i8")
    else:
        flat = grid.data
    return flat.astype("<f4" if width == 4 else "<f8")


def encode_grid(grid: Grid, scalar_width: int = 8) -> bytes:
    if scalar_width not in (4, 8):
        raise ValueError("scalar_width must be 4 or 8")
    payload = _payload(grid, scalar_width)
    h, w, ch = payload.shape
    header = HEADER.pack(MAGIC, VERSION, _kind_of(grid), h, w, ch, scalar_width)
    return header + payload.tobytes()


def write_grid(path, grid: Grid, scalar_width: int = 8) -> None:
    data = encode_grid(grid, scalar_width)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write grid to {path}: {exc.strerror}") from exc


def read_header(path, raw: bytes) -> tuple[int, int, int, int, int]:
    if len(raw) < HEADER.size:
        if raw[:4] != MAGIC[:len(raw[:4])]:
            raise BadMagicError(path, f"expected {MAGIC!r}, got {raw[:4]!r}")
        raise LengthMismatchError(path, f"file has {len(raw)} bytes, header needs {HEADER.size}")
    magic, version, kind, h, w, ch, sw = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(path, f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(path, f"version {version}, reader supports {VERSION}")
    if sw not in (4, 8):
        raise BadHeaderError(path, f"scalar width {sw} is not 4 or 8")
    expected_ch = {KIND_SLC: 6, KIND_COV: 9, KIND_LABELS: 1}
    if kind not in (KIND_SLC, KIND_COV, KIND_OPTICAL, KIND_LABELS):
        raise BadHeaderError(path, f"unknown grid kind {kind}")
    if kind in expected_ch and ch != expected_ch[kind]:
        raise BadHeaderError(path, f"kind {kind} needs {expected_ch[kind]} channels, header says {ch}")
    if h < 1 or w < 1 or ch < 1:
        raise BadHeaderError(path, f"empty grid {h}x{w}x{ch}")
    return kind, h, w, ch, sw


def decode_grid(raw: bytes, path="<bytes>", size_cap: int = DEFAULT_SIZE_CAP) -> Grid:
    kind, h, w, ch, sw = read_header(path, raw)
    n_bytes = h * w * ch * sw
    if n_bytes > size_cap:
        raise SizeCapError(path, f"payload of {n_bytes} bytes exceeds cap of {size_cap}")
    if len(raw) - HEADER.size != n_bytes:
        raise LengthMismatchError(path, f"payload has {len(raw) - HEADER.size} bytes, header implies {n_bytes}")
    if kind == KIND_LABELS:
        dtype = "<i4" if sw == 4 else "<i8"
    else:
        dtype = "<f4" if sw == 4 else "<f8"
    a = np.frombuffer(raw, dtype=dtype, offset=HEADER.size).reshape(h, w, ch)
    if kind == KIND_LABELS:
        return LabelGrid(a[..., 0].astype(np.int64))
    a = a.astype(np.float64)
    try:
        if kind == KIND_SLC:
            return SlcGrid(a[..., 0::2] + 1j * a[..., 1::2])
        if kind == KIND_COV:
            return CovGrid(a)
        return OpticalGrid(a)
    except ValueError as exc:
        raise GridFormatError(path, str(exc)) from exc


def read_grid(path, size_cap: int = DEFAULT_SIZE_CAP, expect: type | None = None) -> Grid:
    """Load a PSG1 file; ``expect`` optionally asserts the grid type."""
    p = Path(path)
    try:
        with p.open("rb") as fh:
            head = fh.read(HEADER.size)
            kind, h, w, ch, sw = read_header(path, head)
            if h * w * ch * sw > size_cap:
                raise SizeCapError(path, f"payload of {h * w * ch * sw} bytes exceeds cap of {size_cap}")
            raw = head + fh.read(h * w * ch * sw + 1)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read grid {path}: {exc.strerror}") from exc
    grid = decode_grid(raw, path, size_cap)
    if expect is not None and not isinstance(grid, expect):
        raise GridFormatError(path, f"expected a {expect.__name__}, found {type(grid).__name__}")
    return grid


# ---- CSV -------------------------------------------------------------------------

def write_features_csv(path, features: np.ndarray, labels: np.ndarray | None = None) -> None:
    """Columns: pixel_row, pixel_col, the 5 features, label (-1 when absent)."""
    h, w = features.shape[:2]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["pixel_row", "pixel_col", *FEATURE_NAMES, "label"])
        for i in range(h):
            for j in range(w):
                lab = -1 if labels is None else int(labels[i, j])
                wr.writerow([i, j, *(repr(float(v)) for v in features[i, j]), lab])


ACCURACY_COLUMNS = ("dataset_name", "filter_name", "fold", "accuracy")


def write_accuracy_csv(path, rows: Iterable[tuple]) -> None:
    """Rows of (dataset_name, filter_name, fold, accuracy); fold may be 'mean'."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(ACCURACY_COLUMNS)
        for name, filt, fold, acc in rows:
            wr.writerow([name, filt, fold, repr(float(acc))])


def read_accuracy_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_metrics_csv(path, metrics: dict) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["metric", "value"])
        for k, v in metrics.items():
            wr.writerow([k, repr(float(v))])


# ---- previews -------------------------------------------------------------------

def _normalize8(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    top = a.max() if a.size else 0.0
    if not top > 0:
        return np.zeros(a.shape, dtype=np.uint8)
    return np.clip(np.round(255.0 * np.clip(a, 0, None) / top), 0, 255).astype(np.uint8)


def write_pgm(path, channel: np.ndarray) -> None:
    """8-bit binary PGM, max-normalized; negative values map to 0."""
    img = _normalize8(channel)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_png_composite(path, cov: CovGrid) -> None:
    """RGB = (C11, C22, C33), each channel max-normalized on its own."""
    from PIL import Image

    rgb = np.stack([_normalize8(cov.data[..., k]) for k in range(3)], axis=-1)
    Image.fromarray(rgb).save(path)


def cov_channel(cov: CovGrid, name: str) -> np.ndarray:
    if name not in COV_FIELDS:
        raise ValueError(f"unknown channel {name!r}; choose from {', '.join(COV_FIELDS)}")
    return cov.data[..., COV_FIELDS.index(name)]
