"""Pixel plane handling: RGB to CIELAB luminance, Sobel gradient fields.

All functions are pure and operate on numpy arrays:

* an RGB image is an (h, w, 3) uint8 array of sRGB triplets,
* a luminance map is an (h, w) integer array with values in [0, 255],
* a gradient field is a pair of (h, w) integer arrays with values in
  [0, 1020] (the maximum response of a 3x3 Sobel kernel on 8-bit input).
"""

from typing import NamedTuple

import numpy as np

from .errors import DimensionTooSmall

# Relative luminance row of the sRGB (D65) RGB -> XYZ matrix.
_Y_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

# CIE L* piecewise threshold delta = 6/29.
_DELTA = 6.0 / 29.0

GRADIENT_MAX = 1020


class GradientField(NamedTuple):
    gx: np.ndarray
    gy: np.ndarray


def to_luminance(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB image to an integer CIELAB-lightness plane.

    Each pixel goes sRGB -> linear RGB -> relative Y (D65) -> L* in
    [0, 100], then is scaled by 255/100 and rounded half-up to [0, 255].
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB array, got shape {img.shape}")

    c = img.astype(np.float64) / 255.0
    linear = np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)
    y = linear @ _Y_WEIGHTS
    fy = np.where(y > _DELTA**3, np.cbrt(y), y / (3.0 * _DELTA**2) + 4.0 / 29.0)
    lstar = 116.0 * fy - 16.0
    scaled = np.floor(lstar * 2.55 + 0.5)  # round half-up
    return np.clip(scaled, 0, 255).astype(np.uint8)


def _replicate_pad(lum: np.ndarray) -> np.ndarray:
    h, w = lum.shape
    p = np.empty((h + 2, w + 2), dtype=np.int16)
    p[1:-1, 1:-1] = lum
    p[0, 1:-1] = lum[0]
    p[-1, 1:-1] = lum[-1]
    p[:, 0] = p[:, 1]
    p[:, -1] = p[:, -2]
    return p


def sobel_gradients_signed(lum: np.ndarray) -> GradientField:
    """Signed 3x3 Sobel responses with edge replication at the borders.

    gx uses column weights (-1, 0, +1) scaled by the (1, 2, 1) row smooth;
    gy is the transpose. Values lie in [-1020, 1020].
    """
    lum = np.asarray(lum)
    if lum.ndim != 2:
        raise ValueError(f"expected 2-d luminance array, got shape {lum.shape}")
    h, w = lum.shape
    if h < 3 or w < 3:
        raise DimensionTooSmall(f"need at least 3x3 pixels, got {w}x{h}")

    p = _replicate_pad(lum)
    s = p[:-2] + p[2:]  # vertical (1, 2, 1) smooth
    s += p[1:-1]
    s += p[1:-1]
    gx = s[:, 2:] - s[:, :-2]
    t = p[:, :-2] + p[:, 2:]  # horizontal (1, 2, 1) smooth
    t += p[:, 1:-1]
    t += p[:, 1:-1]
    gy = t[2:] - t[:-2]
    return GradientField(gx, gy)


def sobel_gradients(lum: np.ndarray) -> GradientField:
    """Absolute Sobel responses; the gradient sign is dropped."""
    gx, gy = sobel_gradients_signed(lum)
    np.abs(gx, out=gx)
    np.abs(gy, out=gy)
    return GradientField(gx, gy)
