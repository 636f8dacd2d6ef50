"""Contrast-histogram signatures.

An image signature is an M x N grid of patches, each holding two 16-bin
histograms of absolute Sobel gradients (one per axis). Extraction comes in
two flavours that must agree bit-exactly:

* :func:`extract_features` - whole-frame batch path,
* :class:`StreamingExtractor` - scanline path holding at most three rows
  of luminance plus the histogram state.

Signatures serialize to a compact binary format (``.cd2`` files); see
``docs/signature-format.md``.
"""

from dataclasses import dataclass, field
import math
import struct
from typing import Iterable

import numpy as np

from .errors import (
    BadMagic,
    CodecError,
    CountOverflow,
    DimensionTooSmall,
    GridTooFine,
    OutOfDomain,
    StreamTruncated,
    TruncatedPayload,
    VersionMismatch,
)
from .imaging import GRADIENT_MAX, sobel_gradients

NUM_BINS = 16

# One byte in the signature header identifies the binning scheme.
_BINNING_CODES = {"fechner16": 1}


@dataclass(frozen=True)
class BinningScheme:
    """Partition of the gradient domain [0, 1020] into 16 bins.

    ``edges`` holds 17 ascending integers; bin b covers
    [edges[b], edges[b+1]) and the final edge is the exclusive sentinel
    1021, so the top bin is closed at the domain maximum.
    """

    name: str
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64)
        object.__setattr__(self, "edges", edges)
        if edges.shape != (NUM_BINS + 1,):
            raise ValueError(f"expected {NUM_BINS + 1} edges, got {edges.shape}")
        if edges[0] != 0 or edges[-1] != GRADIENT_MAX + 1:
            raise ValueError("edges must start at 0 and end at 1021")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")

    def __eq__(self, other):
        return (
            isinstance(other, BinningScheme)
            and self.name == other.name
            and np.array_equal(self.edges, other.edges)
        )


def default_bin_edges() -> BinningScheme:
    """Power-of-two thresholds plus five geometric midpoints.

    The logarithmic spacing reflects that perceived stimulus change scales
    with the logarithm of gradient magnitude; midpoints 24, 48, 96, 192 and
    384 raise resolution in the middle decades.
    """
    edges = [0, 1, 2, 4, 8, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 1021]
    return BinningScheme("fechner16", np.array(edges))


DEFAULT_BINNING = default_bin_edges()

_SCHEMES_BY_CODE = {_BINNING_CODES["fechner16"]: DEFAULT_BINNING}


def bin_index(g: int, scheme: BinningScheme = DEFAULT_BINNING) -> int:
    """Return the bin b with edges[b] <= g < edges[b+1]."""
    if g < 0 or g > GRADIENT_MAX:
        raise OutOfDomain(f"gradient {g} outside [0, {GRADIENT_MAX}]")
    return int(np.searchsorted(scheme.edges, g, side="right")) - 1


@dataclass(frozen=True)
class PatchGrid:
    """Evenly spaced M x N patch layout over a width x height frame.

    Boundaries sit at floor(k * dim / count), so every pixel belongs to
    exactly one patch and patch sizes differ by at most one pixel per axis.
    """

    width: int
    height: int
    rows: int
    cols: int
    row_bounds: np.ndarray = field(init=False)
    col_bounds: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise GridTooFine("grid must have at least one patch")
        if self.rows > self.height or self.cols > self.width:
            raise GridTooFine(
                f"{self.rows}x{self.cols} grid leaves empty patches "
                f"on a {self.width}x{self.height} image"
            )
        rb = (np.arange(self.rows + 1) * self.height) // self.rows
        cb = (np.arange(self.cols + 1) * self.width) // self.cols
        object.__setattr__(self, "row_bounds", rb)
        object.__setattr__(self, "col_bounds", cb)

    def patch_box(self, a: int, b: int) -> tuple[int, int, int, int]:
        """Pixel rectangle (r0, r1, c0, c1) of patch row a, column b."""
        return (
            int(self.row_bounds[a]),
            int(self.row_bounds[a + 1]),
            int(self.col_bounds[b]),
            int(self.col_bounds[b + 1]),
        )

    def __eq__(self, other):
        return (
            isinstance(other, PatchGrid)
            and (self.width, self.height, self.rows, self.cols)
            == (other.width, other.height, other.rows, other.cols)
        )


@dataclass
class FeatureSet:
    """The complete signature: per-patch gradient histograms for both axes.

    ``hist_x`` and ``hist_y`` are (M, N, 16) count arrays; per patch the
    totals equal the patch pixel count.
    """

    width: int
    height: int
    grid: PatchGrid
    hist_x: np.ndarray
    hist_y: np.ndarray
    binning: BinningScheme

    def __eq__(self, other):
        return (
            isinstance(other, FeatureSet)
            and self.width == other.width
            and self.height == other.height
            and self.grid == other.grid
            and self.binning == other.binning
            and np.array_equal(self.hist_x, other.hist_x)
            and np.array_equal(self.hist_y, other.hist_y)
        )


def _bin_patch_counts(grad: np.ndarray, grid: PatchGrid, edges: np.ndarray) -> np.ndarray:
    """Histogram one gradient plane into per-patch bins.

    Counts raw gradient values per patch first (cache-resident 1021-slot
    array), then folds slots into bins with one reduceat per patch.
    """
    out = np.empty((grid.rows, grid.cols, NUM_BINS), dtype=np.int64)
    starts = edges[:-1]
    for a in range(grid.rows):
        r0, r1 = grid.row_bounds[a], grid.row_bounds[a + 1]
        for b in range(grid.cols):
            c0, c1 = grid.col_bounds[b], grid.col_bounds[b + 1]
            raw = np.bincount(grad[r0:r1, c0:c1].ravel(), minlength=GRADIENT_MAX + 1)
            out[a, b] = np.add.reduceat(raw, starts)
    return out


def extract_features(
    lum: np.ndarray,
    rows: int,
    cols: int,
    scheme: BinningScheme = DEFAULT_BINNING,
) -> FeatureSet:
    """Extract the signature of a luminance map over a rows x cols grid."""
    lum = np.asarray(lum)
    height, width = lum.shape
    grid = PatchGrid(width=width, height=height, rows=rows, cols=cols)
    gx, gy = sobel_gradients(lum)
    return FeatureSet(
        width=width,
        height=height,
        grid=grid,
        hist_x=_bin_patch_counts(gx, grid, scheme.edges),
        hist_y=_bin_patch_counts(gy, grid, scheme.edges),
        binning=scheme,
    )


class StreamingExtractor:
    """Scanline signature extraction with a three-row luminance buffer.

    Rows arrive top-to-bottom exactly once via :meth:`push_row`; the
    result of :meth:`finish` is bit-identical to :func:`extract_features`.
    Single-owner object: not safe for concurrent mutation.
    """

    def __init__(
        self,
        width: int,
        height: int,
        rows: int,
        cols: int,
        scheme: BinningScheme = DEFAULT_BINNING,
    ):
        if width < 3 or height < 3:
            raise DimensionTooSmall(f"need at least 3x3 pixels, got {width}x{height}")
        self._grid = PatchGrid(width=width, height=height, rows=rows, cols=cols)
        self._scheme = scheme
        self._width = width
        self._height = height
        self._received = 0
        self._buffer: list[np.ndarray] = []  # at most 3 luminance rows
        self._hist_x = np.zeros((rows, cols, NUM_BINS), dtype=np.int64)
        self._hist_y = np.zeros((rows, cols, NUM_BINS), dtype=np.int64)
        # pixel column -> patch column, fixed for the whole stream
        self._pcol = np.searchsorted(
            self._grid.col_bounds[1:-1], np.arange(width), side="right"
        )

    def push_row(self, row: np.ndarray) -> None:
        row = np.array(row, dtype=np.int16)  # copy: caller may reuse its buffer
        if row.shape != (self._width,):
            raise ValueError(f"expected row of {self._width} pixels, got {row.shape}")
        if self._received >= self._height:
            raise ValueError("received more rows than the declared height")

        if self._received == 0:
            self._buffer = [row, row]  # top border replicates row 0
        elif len(self._buffer) == 3:
            del self._buffer[0]
        self._buffer.append(row)
        self._received += 1
        if self._received >= 2:
            self._emit_gradient_row(self._received - 2)

    def finish(self) -> FeatureSet:
        if self._received < self._height:
            raise StreamTruncated(
                f"declared {self._height} rows, received {self._received}"
            )
        # bottom border: gradient row h-1 sees row h-1 replicated below
        self._buffer.append(self._buffer[-1])
        del self._buffer[0]
        self._emit_gradient_row(self._height - 1)
        return FeatureSet(
            width=self._width,
            height=self._height,
            grid=self._grid,
            hist_x=self._hist_x,
            hist_y=self._hist_y,
            binning=self._scheme,
        )

    def _emit_gradient_row(self, y: int) -> None:
        above, center, below = self._buffer[-3], self._buffer[-2], self._buffer[-1]
        # replicate the left/right border columns
        pa = np.concatenate(([above[0]], above, [above[-1]]))
        pc = np.concatenate(([center[0]], center, [center[-1]]))
        pb = np.concatenate(([below[0]], below, [below[-1]]))
        s = pa + pb + 2 * pc  # vertical smooth of the three buffered rows
        gx = np.abs(s[2:] - s[:-2])
        ta = pa[:-2] + pa[2:] + 2 * pa[1:-1]
        tb = pb[:-2] + pb[2:] + 2 * pb[1:-1]
        gy = np.abs(tb - ta)

        a = int(np.searchsorted(self._grid.row_bounds[1:-1], y, side="right"))
        bx = np.searchsorted(self._scheme.edges, gx, side="right") - 1
        by = np.searchsorted(self._scheme.edges, gy, side="right") - 1
        np.add.at(self._hist_x[a], (self._pcol, bx), 1)
        np.add.at(self._hist_y[a], (self._pcol, by), 1)


def extract_features_streaming(
    scanlines: Iterable[np.ndarray],
    width: int,
    height: int,
    rows: int,
    cols: int,
    scheme: BinningScheme = DEFAULT_BINNING,
) -> FeatureSet:
    """Consume an iterable of scanlines; see :class:`StreamingExtractor`."""
    extractor = StreamingExtractor(width, height, rows, cols, scheme)
    for row in scanlines:
        extractor.push_row(row)
    return extractor.finish()


# --------------------------------------------------------------------------
# Signature codec
# --------------------------------------------------------------------------

SIGNATURE_MAGIC = b"CD2F"
SIGNATURE_VERSION = 1

# magic(4) version(1) width(4) height(4) rows(1) cols(1) binning(1)
_HEADER = struct.Struct(">4sBIIBBB")
HEADER_SIZE = _HEADER.size  # 16 bytes


def bits_per_bin(pixel_count: int) -> int:
    """Fixed bin field width: ceil(log2(s)) bits for an s-pixel image."""
    return max(1, math.ceil(math.log2(pixel_count)))


def payload_bits(width: int, height: int, rows: int, cols: int) -> int:
    return rows * cols * 2 * NUM_BINS * bits_per_bin(width * height)


def encode_signature(fs: FeatureSet) -> bytes:
    """Serialize a FeatureSet to the .cd2 wire format.

    Header then big-endian bit-packed counts, patches in row-major order
    with the x histogram before the y histogram.
    """
    if fs.binning.name not in _BINNING_CODES:
        raise CodecError(f"binning scheme {fs.binning.name!r} has no wire code")
    if fs.grid.rows > 255 or fs.grid.cols > 255:
        raise CodecError("grid dimensions above 255 are not encodable")
    header = _HEADER.pack(
        SIGNATURE_MAGIC,
        SIGNATURE_VERSION,
        fs.width,
        fs.height,
        fs.grid.rows,
        fs.grid.cols,
        _BINNING_CODES[fs.binning.name],
    )
    k = bits_per_bin(fs.width * fs.height)
    counts = np.stack([fs.hist_x, fs.hist_y], axis=2).reshape(-1)  # x before y
    if counts.max(initial=0) >= 1 << k:
        raise CountOverflow(f"bin count {counts.max()} does not fit {k} bits")
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    bits = (counts[:, None] >> shifts) & 1
    payload = np.packbits(bits.astype(np.uint8).reshape(-1))  # MSB-first
    return header + payload.tobytes()


def decode_signature(data: bytes) -> FeatureSet:
    """Parse .cd2 bytes back into a FeatureSet; inverse of encode_signature."""
    if len(data) < HEADER_SIZE:
        raise TruncatedPayload(f"{len(data)} bytes is shorter than the header")
    magic, version, width, height, rows, cols, binning_code = _HEADER.unpack(
        data[:HEADER_SIZE]
    )
    if magic != SIGNATURE_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != SIGNATURE_VERSION:
        raise VersionMismatch(f"unsupported signature version {version}")
    if binning_code not in _SCHEMES_BY_CODE:
        raise CodecError(f"unknown binning code {binning_code}")
    scheme = _SCHEMES_BY_CODE[binning_code]
    if width == 0 or height == 0 or rows == 0 or cols == 0:
        raise CodecError("zero dimension in header")

    try:
        grid = PatchGrid(width=width, height=height, rows=rows, cols=cols)
    except GridTooFine as exc:
        raise CodecError(str(exc)) from exc

    s = width * height
    k = bits_per_bin(s)
    n_values = rows * cols * 2 * NUM_BINS
    expected = (n_values * k + 7) // 8
    payload = data[HEADER_SIZE:]
    if len(payload) != expected:
        raise TruncatedPayload(f"expected {expected} payload bytes, got {len(payload)}")

    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[: n_values * k]
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    counts = (bits.reshape(n_values, k).astype(np.int64) << shifts).sum(axis=1)
    if counts.max(initial=0) > s:
        raise CountOverflow(f"bin count {counts.max()} exceeds pixel count {s}")
    stacked = counts.reshape(rows, cols, 2, NUM_BINS)
    return FeatureSet(
        width=width,
        height=height,
        grid=grid,
        hist_x=stacked[:, :, 0].copy(),
        hist_y=stacked[:, :, 1].copy(),
        binning=scheme,
    )


def is_signature(data: bytes) -> bool:
    """Cheap magic-byte sniff used for signature-or-image polymorphism."""
    return data[:4] == SIGNATURE_MAGIC
