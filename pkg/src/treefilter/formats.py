"""Binary tensor (LTF1) and netpbm (P5/P6) readers and writers.

LTF1 layout, all little-endian::

    b"LTF1" | dtype:u8 (0=f32, 1=f64) | rank:u8 | dims:rank*u32 | payload

Only maxval 255 netpbm files are supported.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .grid_graph import FeatureMap

LTF_MAGIC = b"LTF1"
LTF_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_LTF_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def encode_tensor(array) -> bytes:
    array = np.asarray(array)
    if array.dtype not in _LTF_CODES:
        raise ValidationError(f"LTF1 stores float32/float64 only, got {array.dtype}")
    if not 1 <= array.ndim <= 4:
        raise ValidationError(f"LTF1 rank must be 1..4, got {array.ndim}")
    if any(d >= 2**32 for d in array.shape):
        raise ValidationError("dimension does not fit in u32")
    code = _LTF_CODES[array.dtype]
    header = LTF_MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=LTF_DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 6:
        raise ParseError("truncated LTF1 header", len(buf))
    if buf[:4] != LTF_MAGIC:
        raise ParseError("bad LTF1 magic", 0)
    code, rank = buf[4], buf[5]
    if code not in LTF_DTYPES:
        raise ParseError(f"unknown dtype code {code}", 4)
    if not 1 <= rank <= 4:
        raise ParseError(f"rank {rank} outside 1..4", 5)
    end = 6 + 4 * rank
    if len(buf) < end:
        raise ParseError("truncated LTF1 dimensions", len(buf))
    dims = struct.unpack_from(f"<{rank}I", buf, 6)
    dtype = LTF_DTYPES[code]
    expected = dtype.itemsize * int(np.prod(dims, dtype=np.int64))
    actual = len(buf) - end
    if actual != expected:
        raise ParseError(f"payload is {actual} bytes, dims {dims} need {expected}", end)
    return np.frombuffer(buf, dtype=dtype, offset=end).reshape(dims).copy()


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def write_tensor(path, array) -> None:
    Path(path).write_bytes(encode_tensor(array))


def _header_tokens(buf: bytes, count: int):
    """Pull ``count`` whitespace-separated header tokens after the magic, skipping comments."""
    tokens = []
    pos = 2
    n = len(buf)
    while len(tokens) < count:
        while pos < n and (buf[pos : pos + 1].isspace() or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < n and buf[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise ParseError("truncated netpbm header", pos)
        tok = buf[start:pos]
        if not tok.isdigit():
            raise ParseError(f"expected an integer, got {tok!r}", start)
        tokens.append((int(tok), start))
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise ParseError("missing whitespace after netpbm header", pos)
    return tokens, pos + 1


def decode_pnm(buf: bytes) -> np.ndarray:
    """``H x W`` (P5) or ``H x W x 3`` (P6) uint8 array."""
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"not a binary PGM/PPM (magic {magic!r})", 0)
    channels = 1 if magic == b"P5" else 3
    tokens, start = _header_tokens(buf, 3)
    (width, w_at), (height, h_at), (maxval, m_at) = tokens
    if width < 1:
        raise ParseError("width must be positive", w_at)
    if height < 1:
        raise ParseError("height must be positive", h_at)
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", m_at)
    expected = width * height * channels
    if len(buf) - start < expected:
        raise ParseError(f"pixel data truncated: need {expected} bytes", len(buf))
    pixels = np.frombuffer(buf, dtype=np.uint8, count=expected, offset=start)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return pixels.reshape(shape).copy()


def encode_pnm(image) -> bytes:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValidationError(f"netpbm output must be uint8, got {image.dtype}")
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValidationError(f"cannot store shape {image.shape} as PGM/PPM")
    height, width = image.shape[:2]
    return magic + f"\n{width} {height}\n255\n".encode() + np.ascontiguousarray(image).tobytes()


def read_pnm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


def write_pnm(path, image) -> None:
    Path(path).write_bytes(encode_pnm(image))


def sniff(buf: bytes) -> str:
    if buf[:4] == LTF_MAGIC:
        return "ltf"
    if buf[:2] == b"P5":
        return "pgm"
    if buf[:2] == b"P6":
        return "ppm"
    raise ParseError("unrecognized file format (expected LTF1, P5 or P6)", 0)


def load_array(path):
    """Read an image or tensor; returns ``(kind, array)`` with kind in ltf/pgm/ppm."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    kind = sniff(buf)
    return kind, decode_tensor(buf) if kind == "ltf" else decode_pnm(buf)


def to_feature_map(kind: str, array: np.ndarray) -> FeatureMap:
    """Images become ``[0, 1]`` float maps; tensors are taken as ``(C,)H,W``."""
    if kind in ("pgm", "ppm"):
        data = array.astype(np.float64) / 255.0
        data = data[None] if data.ndim == 2 else np.moveaxis(data, 2, 0)
        return FeatureMap(np.ascontiguousarray(data))
    if array.ndim == 4 and array.shape[0] == 1:
        array = array[0]
    if array.ndim not in (2, 3):
        raise ValidationError(f"tensor of rank {array.ndim} is not a feature map")
    return FeatureMap(array)


def from_feature_map(kind: str, fmap: FeatureMap, like: np.ndarray):
    """Inverse of :func:`to_feature_map`: images are rescaled, rounded and clipped."""
    if kind in ("pgm", "ppm"):
        pixels = np.clip(np.rint(fmap.data * 255.0), 0, 255).astype(np.uint8)
        return pixels[0] if kind == "pgm" else np.moveaxis(pixels, 0, 2)
    return fmap.data.reshape(like.shape).astype(like.dtype)
