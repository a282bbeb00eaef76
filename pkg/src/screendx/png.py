"""Minimal deterministic PNG codec (8/16-bit grayscale and RGB).

Writes non-interlaced PNGs with filter type 0 and a fixed zlib level so the
same pixels always produce the same bytes; reads any non-interlaced
gray/RGB PNG with filters 0-4. Intensities map to [0, 1] via (2^bits - 1).
"""

import struct
import zlib

import numpy as np

_SIG = b"\x89PNG\r\n\x1a\n"


def _chunk(tag, payload):
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def encode(arr01, bits=16, level=6):
    """arr01: (h, w, c) float64 in [0,1], c in {1, 3}. Returns PNG bytes.

    level is the zlib compression level; any fixed level keeps the output
    deterministic, lower levels trade file size for encoding speed.
    """
    if bits not in (8, 16):
        raise ValueError("bit depth must be 8 or 16")
    h, w, c = arr01.shape
    if c not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    peak = (1 << bits) - 1
    q = np.clip(arr01, 0.0, 1.0)
    np.multiply(q, peak, out=q)
    np.rint(q, out=q)
    q = q.astype(np.uint32)
    if bits == 8:
        raw = q.astype(np.uint8)
    else:
        raw = q.astype(">u2")
    color_type = 0 if c == 1 else 2
    ihdr = struct.pack(">IIBBBBB", w, h, bits, color_type, 0, 0, 0)
    rows = raw.reshape(h, -1).view(np.uint8).reshape(h, -1)
    scan = np.concatenate([np.zeros((h, 1), np.uint8), rows], axis=1)
    idat = zlib.compress(scan.tobytes(), level)
    return (_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat)
            + _chunk(b"IEND", b""))


def _unfilter(scan, h, stride, bpp):
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    prev = np.zeros(stride, dtype=np.int32)
    for r in range(h):
        ft = scan[pos]
        pos += 1
        row = scan[pos:pos + stride].astype(np.int32)
        pos += stride
        if ft == 0:
            cur = row
        elif ft == 1:  # Sub
            cur = row.copy()
            for i in range(bpp, stride):
                cur[i] = (cur[i] + cur[i - bpp]) & 0xFF
        elif ft == 2:  # Up
            cur = (row + prev) & 0xFF
        elif ft == 3:  # Average
            cur = row.copy()
            for i in range(stride):
                a = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((a + prev[i]) >> 1)) & 0xFF
        elif ft == 4:  # Paeth
            cur = row.copy()
            for i in range(stride):
                a = cur[i - bpp] if i >= bpp else 0
                b = prev[i]
                cc = prev[i - bpp] if i >= bpp else 0
                p = a + b - cc
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - cc)
                if pa <= pb and pa <= pc:
                    pr = a
                elif pb <= pc:
                    pr = b
                else:
                    pr = cc
                cur[i] = (cur[i] + pr) & 0xFF
        else:
            raise ValueError(f"unknown PNG filter type {ft}")
        out[r] = cur.astype(np.uint8)
        prev = out[r].astype(np.int32)
    return out


def decode_raw(data):
    """Returns ((h, w, c) unsigned integer array, bits)."""
    arr, bits = _decode_any(data)
    return arr, bits


def decode(data):
    """Returns ((h, w, c) float64 in [0,1], bits)."""
    arr, bits = _decode_any(data)
    return arr.astype(np.float64) / float((1 << bits) - 1), bits


def _decode_any(data):
    if data[:8] != _SIG:
        raise ValueError("not a PNG file")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        payload = data[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if ihdr is None:
        raise ValueError("missing IHDR")
    w, h, bits, color_type, comp, filt, interlace = ihdr
    if interlace != 0:
        raise ValueError("interlaced PNG not supported")
    if bits not in (8, 16) or color_type not in (0, 2):
        raise ValueError(f"unsupported PNG format: {bits}-bit type "
                         f"{color_type}")
    c = 1 if color_type == 0 else 3
    bpp = c * (bits // 8)
    stride = w * bpp
    scan = np.frombuffer(zlib.decompress(bytes(idat)), dtype=np.uint8)
    if len(scan) != h * (stride + 1):
        raise ValueError("bad PNG data length")
    rows = _unfilter(scan, h, stride, bpp)
    if bits == 8:
        arr = rows.reshape(h, w, c)
    else:
        arr = (rows.reshape(h, -1).view(">u2").reshape(h, w, c)
               .astype(np.uint16))
    return arr, bits
