"""
File formats: HDT tensors, PFM and 16-bit PNG depth maps, indexed PNG index
maps, histogram / frequency CSVs and TOML configuration.

HDT layout (all little-endian)::

    b"HDT1" | dtype code u8 | ndim u8 | ndim x u32 dims | row-major payload

dtype codes: 0 = float32, 1 = float64, 2 = uint8, 3 = uint32.
"""

from __future__ import annotations

import colorsys
import csv
import io
import struct
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .cddc import DepthHistogram, DepthRange
from .errors import MalformedFile, UnsupportedDtype
from .sfa import IndexMap

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "HDT_MAGIC",
    "encode_hdt",
    "decode_hdt",
    "write_hdt",
    "read_hdt",
    "encode_pfm",
    "decode_pfm",
    "write_pfm",
    "read_pfm",
    "write_png16",
    "read_png16",
    "write_index_png",
    "read_index_png",
    "write_mask_png",
    "write_histogram_csv",
    "read_histogram_csv",
    "write_frequency_csv",
    "read_grid",
    "write_grid",
    "load_config",
]

HDT_MAGIC = b"HDT1"
_HDT_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("u1"): 2,
    np.dtype("<u4"): 3,
}
_HDT_DTYPES = {code: dt for dt, code in _HDT_CODES.items()}


def encode_hdt(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    dt = array.dtype.newbyteorder("<") if array.dtype.byteorder not in ("|",) else array.dtype
    if dt not in _HDT_CODES:
        raise UnsupportedDtype(f"HDT cannot store dtype {array.dtype}")
    if array.ndim > 255:
        raise UnsupportedDtype("HDT supports at most 255 dimensions")
    if any(d > 0xFFFFFFFF for d in array.shape):
        raise UnsupportedDtype("HDT dimensions must fit in u32")
    header = HDT_MAGIC + struct.pack("<BB", _HDT_CODES[dt], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=dt).tobytes()


def decode_hdt(data: bytes) -> np.ndarray:
    if len(data) < 6 or data[:4] != HDT_MAGIC:
        raise MalformedFile("missing HDT1 magic")
    code, ndim = struct.unpack_from("<BB", data, 4)
    if code not in _HDT_DTYPES:
        raise UnsupportedDtype(f"unknown HDT dtype code {code}")
    offset = 6 + 4 * ndim
    if len(data) < offset:
        raise MalformedFile("truncated HDT header")
    dims = struct.unpack_from(f"<{ndim}I", data, 6)
    dt = _HDT_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(data) - offset != expected:
        raise MalformedFile(f"HDT payload is {len(data) - offset} bytes, dims imply {expected}")
    return np.frombuffer(data, dtype=dt, offset=offset).reshape(dims).copy()


def write_hdt(path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_hdt(array))


def read_hdt(path) -> np.ndarray:
    return decode_hdt(Path(path).read_bytes())


def encode_pfm(image: np.ndarray) -> bytes:
    """Little-endian PFM ('Pf' for one channel, 'PF' for three), rows bottom-up."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    if image.ndim == 2:
        tag = b"Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        tag = b"PF"
    else:
        raise UnsupportedDtype(f"PFM stores 1 or 3 channels, got shape {image.shape}")
    h, w = image.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    body = np.ascontiguousarray(np.flipud(image), dtype="<f4").tobytes()
    return header + body


def _pfm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedFile("truncated PFM header")
        tokens.append(data[start:pos].decode("ascii", errors="replace"))
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pfm(data: bytes) -> np.ndarray:
    (tag, w, h, scale), offset = _pfm_tokens(data, 4)
    if tag not in ("Pf", "PF"):
        raise MalformedFile(f"not a PFM file (tag {tag!r})")
    try:
        w, h, scale = int(w), int(h), float(scale)
    except ValueError as exc:
        raise MalformedFile(f"bad PFM header: {exc}") from None
    channels = 3 if tag == "PF" else 1
    dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    expected = w * h * channels * 4
    if len(data) - offset != expected:
        raise MalformedFile(f"PFM raster is {len(data) - offset} bytes, header implies {expected}")
    img = np.frombuffer(data, dtype=dt, offset=offset).astype("<f4")
    img = img.reshape((h, w, 3) if channels == 3 else (h, w))
    return np.ascontiguousarray(np.flipud(img))


def write_pfm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_pfm(image))


def read_pfm(path) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes())


def write_png16(path, depth: np.ndarray, scale: float = 0.001) -> None:
    """Store depth / scale rounded to uint16; invalid or non-positive depth -> 0."""
    if scale <= 0:
        raise ValueError("PNG16 scale must be positive")
    depth = np.asarray(depth, dtype=np.float64)
    units = np.where(np.isfinite(depth) & (depth > 0), np.rint(depth / scale), 0)
    units = np.clip(units, 0, 65535).astype(np.uint16)
    Image.fromarray(units).save(path, format="PNG")


def read_png16(path, scale: float = 0.001) -> np.ndarray:
    if scale <= 0:
        raise ValueError("PNG16 scale must be positive")
    with Image.open(path) as img:
        if img.mode not in ("I;16", "I;16B", "I", "L"):
            raise MalformedFile(f"expected a single-channel 16-bit PNG, got mode {img.mode}")
        return np.asarray(img, dtype=np.float64) * scale


def _palette(n: int) -> list[int]:
    colors = []
    for k in range(256):
        if k < n:
            # golden-ratio hue stepping keeps neighbouring labels distinguishable
            r, g, b = colorsys.hsv_to_rgb((k * 0.618033988749895) % 1.0, 0.65, 0.95)
            colors += [int(r * 255), int(g * 255), int(b * 255)]
        else:
            colors += [0, 0, 0]
    return colors


def write_index_png(path, index_map: IndexMap) -> None:
    if index_map.n_patches > 256:
        raise UnsupportedDtype("indexed PNG holds at most 256 labels")
    img = Image.fromarray(index_map.assignment.astype(np.uint8), mode="P")
    img.putpalette(_palette(index_map.n_patches))
    img.save(path, format="PNG")


def read_index_png(path, n_patches: int | None = None) -> IndexMap:
    with Image.open(path) as img:
        if img.mode != "P":
            raise MalformedFile(f"expected a palette PNG, got mode {img.mode}")
        labels = np.asarray(img, dtype=np.int64)
    n = int(labels.max()) + 1 if n_patches is None else n_patches
    return IndexMap(labels, n)


def write_mask_png(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def write_histogram_csv(path, hist: DepthHistogram) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_index", "width_m", "center_m"])
        for i, (w, c) in enumerate(zip(hist.widths, hist.centers)):
            writer.writerow([i, repr(float(w)), repr(float(c))])


def read_histogram_csv(path, depth_range: DepthRange | None = None) -> DepthHistogram:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise MalformedFile("empty histogram CSV")
    try:
        rows.sort(key=lambda r: int(r["bin_index"]))
        widths = np.array([float(r["width_m"]) for r in rows])
        centers = np.array([float(r["center_m"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise MalformedFile(f"bad histogram CSV: {exc}") from None
    if depth_range is None:
        d_min = float(centers[0] - widths[0] / 2)
        depth_range = DepthRange(max(d_min, 0.0), max(d_min, 0.0) + float(widths.sum()))
    return DepthHistogram(widths, centers, depth_range)


def write_frequency_csv(path, counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patch_index", "pixel_count"])
        for i, c in enumerate(counts):
            writer.writerow([i, int(c)])


def read_grid(path, png_scale: float = 0.001) -> np.ndarray:
    """Load an ERP grid from .pfm, .hdt, or .png (16-bit depth or 8-bit L/RGB)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path).astype(np.float64)
    if suffix == ".hdt":
        return read_hdt(path).astype(np.float64)
    if suffix == ".png":
        with Image.open(path) as img:
            if img.mode in ("I;16", "I;16B", "I"):
                return np.asarray(img, dtype=np.float64) * png_scale
            return np.asarray(img.convert("RGB" if img.mode not in ("L",) else "L"), dtype=np.float64)
    raise MalformedFile(f"unsupported grid file extension {suffix!r}")


def write_grid(path, grid: np.ndarray) -> None:
    """Write to .pfm when the channel count allows, otherwise to .hdt (float32)."""
    path = Path(path)
    grid = np.asarray(grid)
    if path.suffix.lower() == ".pfm":
        write_pfm(path, grid)
    elif path.suffix.lower() == ".hdt":
        write_hdt(path, grid.astype(np.float32))
    else:
        raise MalformedFile(f"unsupported grid file extension {path.suffix!r}")


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def loads_config(text: str) -> dict:
    return tomllib.load(io.BytesIO(text.encode()))
