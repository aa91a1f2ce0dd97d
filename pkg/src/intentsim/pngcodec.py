"""PNG chunk parsing, per-chunk criticality, encoding, and tolerant decoding.

Two decode entry points exist on purpose: :func:`decode_png` is the strict
path used at dataset ingest, :func:`tolerant_decode` is the receiver-side
path that accepts a damage map (missing byte ranges), zero-fills the holes,
and keeps every scanline decoded before the first inflate/filter error.
Rows lost to damage are filled with mid-gray 128 so partial images degrade
instead of vanishing.

Supported subset: 8-bit depth, color types 0/2/3/4/6, no interlacing
(Adam7 files are rejected at ingest).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# criticality scale: the header is indispensable, palette next, early image
# data beats late image data, trailer is expendable
CRIT_IHDR = 1.0
CRIT_PLTE = 0.9
CRIT_IDAT_FIRST = 0.8
CRIT_IDAT_STEP = 0.05
CRIT_IDAT_FLOOR = 0.2
CRIT_OTHER = 0.1

_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


class PngFormatError(ValueError):
    pass


@dataclass
class PngChunk:
    kind: str
    offset: int       # byte index of the 4-byte length field
    length: int       # data bytes
    crc_ok: bool = True
    criticality: float = 0.0

    @property
    def data_offset(self) -> int:
        return self.offset + 8

    @property
    def span(self):
        """Full record extent [start, end): length + type + data + CRC."""
        return (self.offset, self.offset + 12 + self.length)


def parse_png(data: bytes) -> list:
    """Strict chunk walk: validates the signature, records CRC mismatches
    without failing, stops after IEND."""
    if len(data) < 8:
        raise PngFormatError("input shorter than the PNG signature")
    if data[:8] != PNG_SIGNATURE:
        raise PngFormatError("bad PNG signature")
    chunks = []
    pos = 8
    while pos < len(data):
        if pos + 8 > len(data):
            raise PngFormatError(f"truncated chunk header at offset {pos}")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        kind = data[pos + 4:pos + 8].decode("latin-1")
        if pos + 12 + length > len(data):
            raise PngFormatError(f"truncated {kind} chunk at offset {pos}")
        payload = data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        crc_ok = crc == zlib.crc32(data[pos + 4:pos + 8] + payload)
        chunks.append(PngChunk(kind, pos, length, crc_ok))
        pos += 12 + length
        if kind == "IEND":
            break
    if not chunks or chunks[0].kind != "IHDR":
        raise PngFormatError("missing IHDR")
    criticality_of(chunks)
    return chunks


def criticality_of(chunks: list) -> list:
    """Assign criticalities in place and return them.

    IHDR 1.0, PLTE 0.9, IDAT_k = max(0.8 - 0.05 (k - 1), 0.2), IEND and
    ancillary chunks 0.1.
    """
    idat_seen = 0
    out = []
    for c in chunks:
        if c.kind == "IHDR":
            c.criticality = CRIT_IHDR
        elif c.kind == "PLTE":
            c.criticality = CRIT_PLTE
        elif c.kind == "IDAT":
            c.criticality = max(CRIT_IDAT_FIRST - CRIT_IDAT_STEP * idat_seen,
                                CRIT_IDAT_FLOOR)
            idat_seen += 1
        else:
            c.criticality = CRIT_OTHER
        out.append(c.criticality)
    return out


# --- encoding ---------------------------------------------------------------

def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + kind + payload
            + struct.pack(">I", zlib.crc32(kind + payload)))


def write_png(pixels: np.ndarray, palette: np.ndarray | None = None,
              idat_chunk_bytes: int = 2048, min_idat_chunks: int = 2) -> bytes:
    """Encode an array as a non-interlaced 8-bit PNG.

    2-D arrays become grayscale (or palette images when ``palette`` is
    given, in which case values are palette indices); HxWx3 arrays become
    truecolor.  IDAT output is split into chunks of at most
    ``idat_chunk_bytes`` and at least ``min_idat_chunks`` pieces so receivers
    always see a multi-IDAT stream.
    """
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        color_type = 3 if palette is not None else 0
        channels = 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
        channels = 3
    else:
        raise ValueError("expected HxW or HxWx3 pixel array")
    h, w = arr.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    raw = bytearray()
    flat = arr.reshape(h, w * channels)
    for row in flat:
        raw.append(0)  # filter type None
        raw.extend(row.tobytes())
    compressed = zlib.compress(bytes(raw), 9)
    out = bytearray(PNG_SIGNATURE)
    out += _chunk(b"IHDR", ihdr)
    if palette is not None:
        pal = np.asarray(palette, dtype=np.uint8)
        out += _chunk(b"PLTE", pal.reshape(-1).tobytes())
    n_chunks = max(min_idat_chunks,
                   (len(compressed) + idat_chunk_bytes - 1) // idat_chunk_bytes)
    size = (len(compressed) + n_chunks - 1) // n_chunks
    for i in range(0, len(compressed), size):
        out += _chunk(b"IDAT", compressed[i:i + size])
    out += _chunk(b"IEND", b"")
    return bytes(out)


# --- decoding ---------------------------------------------------------------

def _luma(rgb: np.ndarray) -> np.ndarray:
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _defilter_rows(inflated: bytes, width: int, height: int, channels: int):
    """Reconstruct scanlines until the data runs out or a filter error.

    Returns (rows, count) where rows is a uint8 array of the decoded prefix.
    """
    stride = width * channels
    rows = np.zeros((height, stride), dtype=np.uint8)
    prev = bytearray(stride)
    n = 0
    pos = 0
    while n < height and pos + 1 + stride <= len(inflated):
        ftype = inflated[pos]
        line = bytearray(inflated[pos + 1:pos + 1 + stride])
        pos += 1 + stride
        if ftype == 0:
            pass
        elif ftype == 1:
            for i in range(channels, stride):
                line[i] = (line[i] + line[i - channels]) & 0xFF
        elif ftype == 2:
            for i in range(stride):
                line[i] = (line[i] + prev[i]) & 0xFF
        elif ftype == 3:
            for i in range(stride):
                left = line[i - channels] if i >= channels else 0
                line[i] = (line[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:
            for i in range(stride):
                left = line[i - channels] if i >= channels else 0
                upleft = prev[i - channels] if i >= channels else 0
                line[i] = (line[i] + _paeth(left, prev[i], upleft)) & 0xFF
        else:
            break  # invalid filter byte: stop at the damaged row
        rows[n] = np.frombuffer(bytes(line), dtype=np.uint8)
        prev = line
        n += 1
    return rows, n


def _walk_tolerant(data: bytes):
    """Best-effort chunk walk over a patched stream; stops at the first
    malformed record and never raises."""
    chunks = []
    pos = 8
    end = len(data)
    while pos + 8 <= end:
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        kind_raw = data[pos + 4:pos + 8]
        if not all(65 <= b <= 90 or 97 <= b <= 122 for b in kind_raw):
            break
        if pos + 12 + length > end:
            break
        chunks.append(PngChunk(kind_raw.decode("latin-1"), pos, length))
        pos += 12 + length
        if kind_raw == b"IEND":
            break
    return chunks


def _decode_core(data: bytes, missing):
    """Shared decode path; returns (gray, rows_decoded, height) or None."""
    missing = sorted((max(0, s), min(len(data), e)) for s, e in missing)
    # signature + complete IHDR record (CRC excluded) are non-negotiable
    for s, e in missing:
        if s < 29 and e > 0:
            return None
    if len(data) < 33 or data[:8] != PNG_SIGNATURE:
        return None
    patched = bytearray(data)
    for s, e in missing:
        patched[s:e] = b"\x00" * (e - s)
    patched = bytes(patched)
    chunks = _walk_tolerant(patched)
    if not chunks or chunks[0].kind != "IHDR":
        return None
    w, h, depth, color_type, comp, filt, interlace = struct.unpack(
        ">IIBBBBB", patched[16:29])
    if depth != 8 or color_type not in _CHANNELS or comp != 0 or filt != 0 \
            or interlace != 0 or w == 0 or h == 0:
        return None
    channels = _CHANNELS[color_type]
    palette = None
    idat = bytearray()
    for c in chunks:
        if c.kind == "IDAT":
            idat += patched[c.data_offset:c.data_offset + c.length]
        elif c.kind == "PLTE":
            pal = np.frombuffer(
                patched[c.data_offset:c.data_offset + c.length], dtype=np.uint8)
            palette = np.zeros((256, 3), dtype=np.uint8)
            palette[: len(pal) // 3] = pal[: (len(pal) // 3) * 3].reshape(-1, 3)
    # inflate as far as the stream allows; damage raises mid-stream
    decomp = zlib.decompressobj()
    inflated = b""
    try:
        inflated = decomp.decompress(bytes(idat))
        inflated += decomp.flush()
    except zlib.error:
        pass
    rows, n_rows = _defilter_rows(inflated, w, h, channels)
    if n_rows == 0:
        return None
    if color_type == 0:
        gray = rows.astype(np.float64)
    elif color_type == 2:
        gray = _luma(rows.reshape(h, w, 3).astype(np.float64))
    elif color_type == 3:
        if palette is None:
            palette = np.zeros((256, 3), dtype=np.uint8)
        gray = _luma(palette[rows].astype(np.float64))
    elif color_type == 4:
        gray = rows.reshape(h, w, 2)[:, :, 0].astype(np.float64)
    else:  # RGBA: alpha ignored, evaluation is grayscale
        gray = _luma(rows.reshape(h, w, 4)[:, :, :3].astype(np.float64))
    gray[n_rows:, :] = 128.0
    return gray, n_rows, h


def tolerant_decode(data: bytes, missing=()):
    """Decode a possibly damaged PNG byte stream to a grayscale matrix.

    ``missing`` is an iterable of (start, end) byte ranges that were never
    received; they are zero-filled before the walk.  CRCs are ignored.
    Returns a float64 HxW matrix with unrecovered rows set to 128, or None
    when the image is undecodable (incomplete signature/IHDR record,
    unsupported header, or zero rows recovered).
    """
    out = _decode_core(data, missing)
    return None if out is None else out[0]


def decode_png(data: bytes) -> np.ndarray:
    """Strict decode for ingest: the whole image must reconstruct."""
    chunks = parse_png(data)
    if chunks[-1].kind != "IEND":
        raise PngFormatError("missing IEND")
    if data[28] != 0:
        raise PngFormatError("interlaced (Adam7) images are rejected at ingest")
    out = _decode_core(data, ())
    if out is None:
        raise PngFormatError("image does not decode")
    gray, n_rows, h = out
    if n_rows != h:
        raise PngFormatError(f"only {n_rows} of {h} rows decode")
    return gray
