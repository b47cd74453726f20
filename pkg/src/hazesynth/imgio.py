"""Image file IO: 8-bit PNG for color images, PFM for float maps.

PNG quantizes to 1/255 steps; PFM (portable float map) stores raw IEEE
float32 and round-trips bit-exactly, which is what depth and transmittance
maps require.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image


def quantize_u8(img: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to uint8 with round-half-away."""
    if img.min() < -1e-6 or img.max() > 1 + 1e-6:
        raise ValueError(f"image values outside [0,1]: [{img.min()}, {img.max()}]")
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def dequantize_u8(img: np.ndarray) -> np.ndarray:
    """Map uint8 back to float64 in [0, 1]."""
    return img.astype(np.float64) / 255.0


def write_png(path: str | Path, img: np.ndarray) -> None:
    """Write an HxWx3 (or HxW) float image in [0, 1] as 8-bit PNG."""
    Image.fromarray(quantize_u8(img)).save(str(path))


def read_png(path: str | Path) -> np.ndarray:
    """Read a PNG into a float64 array in [0, 1]."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im)
    return dequantize_u8(arr)


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write HxW ('Pf') or HxWx3 ('PF') float32 data as a PFM file.

    Little-endian (negative scale), rows bottom-to-top per the format.
    """
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf\n"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF\n"
    else:
        raise ValueError(f"PFM needs HxW or HxWx3 data, got shape {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into float32, shape HxW or HxWx3."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: magic {magic!r}")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        endian = "<" if scale < 0 else ">"
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError("truncated PFM payload")
    flat = np.array(struct.unpack(f"{endian}{count}f", raw), dtype=np.float32)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(flat.reshape(shape)).copy()
