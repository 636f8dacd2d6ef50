"""File adapters: decoding images to pixel planes, writing heatmaps.

The core modules consume decoded numpy planes only; everything touching
Pillow or the filesystem lives here.
"""

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import to_luminance


def load_luminance(source) -> np.ndarray:
    """Decode an image file (path or bytes) to a luminance map.

    Grayscale files bypass the CIELAB conversion and are used directly;
    color files are converted through the lightness channel.
    """
    if isinstance(source, (bytes, bytearray)):
        img = Image.open(io.BytesIO(source))
    else:
        img = Image.open(source)
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode in ("1", "I", "I;16", "LA"):
        return np.asarray(img.convert("L"), dtype=np.uint8)
    rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return to_luminance(rgb)


def write_pgm(img: np.ndarray, path) -> None:
    """Write a grayscale array as a binary P5 PGM file."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError(f"expected 2-d grayscale array, got shape {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_grayscale(img: np.ndarray, path) -> None:
    """Write a grayscale array as PGM or PNG based on the file extension."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(img, path)
    else:
        Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path)


def grayscale_bytes(img: np.ndarray, fmt: str) -> bytes:
    """Encode a grayscale array to PGM or PNG bytes."""
    img = np.asarray(img, dtype=np.uint8)
    if fmt == "pgm":
        h, w = img.shape
        return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()
    if fmt == "png":
        buf = io.BytesIO()
        Image.fromarray(img, mode="L").save(buf, format="PNG")
        return buf.getvalue()
    raise ValueError(f"unknown heatmap format {fmt!r}")
