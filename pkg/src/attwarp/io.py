"""File formats: the ATW1 float raster container, PNG attention maps, images, JSON.

ATW1 layout: 16-byte header (magic ``ATW1``, u32 LE height, u32 LE width,
u32 LE dtype tag, 0 = float32) followed by height*width row-major
little-endian float32 values. A "stack" is any number of such records
back to back in one file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

ATW1_MAGIC = b"ATW1"
_HEADER = struct.Struct("<4sIII")
DTYPE_FLOAT32 = 0


class FormatError(ValueError):
    """Malformed ATW1 payload or unsupported attention raster."""


def _pack_atw1(array: np.ndarray) -> bytes:
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim != 2:
        raise FormatError(f"ATW1 stores 2-D rasters, got shape {arr.shape}")
    h, w = arr.shape
    header = _HEADER.pack(ATW1_MAGIC, h, w, DTYPE_FLOAT32)
    return header + arr.astype("<f4").tobytes(order="C")


def _unpack_atw1(buf: bytes, offset: int) -> tuple[np.ndarray, int]:
    if len(buf) - offset < _HEADER.size:
        raise FormatError("truncated ATW1 header")
    magic, h, w, tag = _HEADER.unpack_from(buf, offset)
    if magic != ATW1_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if tag != DTYPE_FLOAT32:
        raise FormatError(f"unsupported dtype tag {tag}")
    nbytes = h * w * 4
    start = offset + _HEADER.size
    if len(buf) - start < nbytes:
        raise FormatError("truncated ATW1 payload")
    arr = np.frombuffer(buf, dtype="<f4", count=h * w, offset=start).reshape(h, w)
    return arr.astype(np.float64), start + nbytes


def write_atw1(path: str | Path, array: np.ndarray) -> None:
    atomic_write_bytes(path, _pack_atw1(array))


def read_atw1(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = _unpack_atw1(buf, 0)
    if end != len(buf):
        raise FormatError(f"{path}: trailing bytes after single ATW1 record")
    return arr


def write_atw1_stack(path: str | Path, arrays: list[np.ndarray]) -> None:
    atomic_write_bytes(path, b"".join(_pack_atw1(a) for a in arrays))


def read_atw1_stack(path: str | Path) -> list[np.ndarray]:
    buf = Path(path).read_bytes()
    out: list[np.ndarray] = []
    offset = 0
    while offset < len(buf):
        arr, offset = _unpack_atw1(buf, offset)
        out.append(arr)
    return out


def load_attention_raster(path: str | Path) -> np.ndarray:
    """Read an attention map from .atw1 or from 8/16-bit grayscale PNG.

    PNG values are rescaled to [0, 1]; ATW1 floats pass through unchanged.
    """
    p = Path(path)
    if p.suffix.lower() == ".atw1":
        return read_atw1(p)
    if p.suffix.lower() == ".png":
        img = Image.open(p)
        if img.mode == "L":
            return np.asarray(img, dtype=np.float64) / 255.0
        if img.mode in ("I;16", "I;16B", "I;16L"):
            return np.asarray(img, dtype=np.float64) / 65535.0
        if img.mode == "I":
            arr = np.asarray(img, dtype=np.float64)
            if arr.max() > 65535 or arr.min() < 0:
                raise FormatError(f"{path}: integer PNG out of 16-bit range")
            return arr / 65535.0
        raise FormatError(f"{path}: attention PNG must be grayscale, got mode {img.mode}")
    raise FormatError(f"{path}: expected .atw1 or .png attention map")


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    """RGB image as float64 in [0, 1], shape (H, W, 3)."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def save_image_png(path: str | Path, pixels: np.ndarray) -> None:
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    img = Image.fromarray(u8, mode="RGB" if u8.ndim == 3 else "L")
    tmp = _tmp_sibling(path)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# annotations (JSON lines)
# ---------------------------------------------------------------------------

def iter_annotations(path: str | Path) -> Iterator[tuple[int, dict | None, str | None]]:
    """Yield (line_number, record, error) per non-blank line.

    Records need image_path, attention_path and a nonempty boxes list of
    [x_min, y_min, x_max, y_max] in inclusive pixel bounds. Malformed lines
    yield (lineno, None, reason) so callers can warn and count them.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc}"
                continue
            err = _check_annotation(rec)
            if err:
                yield lineno, None, err
            else:
                yield lineno, rec, None


def _check_annotation(rec: object) -> str | None:
    if not isinstance(rec, dict):
        return "record is not an object"
    for key in ("image_path", "attention_path", "boxes"):
        if key not in rec:
            return f"missing key {key!r}"
    boxes = rec["boxes"]
    if not isinstance(boxes, list) or not boxes:
        return "boxes must be a nonempty list"
    for b in boxes:
        if not (isinstance(b, list) and len(b) == 4 and all(isinstance(v, (int, float)) for v in b)):
            return f"bad box {b!r}"
        if b[0] > b[2] or b[1] > b[3]:
            return f"inverted box {b!r}"
    return None


# ---------------------------------------------------------------------------
# atomic writes and hashing
# ---------------------------------------------------------------------------

def _tmp_sibling(path: str | Path) -> Path:
    p = Path(path)
    fd, name = tempfile.mkstemp(dir=p.parent or Path("."), prefix=p.name + ".", suffix=".tmp")
    os.close(fd)
    return Path(name)


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    tmp = _tmp_sibling(path)
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: str | Path, obj: object, indent: int = 2) -> None:
    atomic_write_text(path, json.dumps(obj, indent=indent) + "\n")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
