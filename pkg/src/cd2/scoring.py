"""Spatial score: per-patch distortion maps, aggregation, safety verdicts.

The spatial method compares signatures patch by patch with the smoothed KL
divergence, aggregates the map into one number, and classifies it against
an operation-specific safety threshold.
"""

from dataclasses import dataclass

import numpy as np

from .distances import DEFAULT_KL_EPS
from .errors import GridMismatch, SchemeMismatch, UnknownOperation
from .features import FeatureSet

AGGREGATIONS = ("abs", "sq")


def distortion_map(
    ref_fs: FeatureSet, proc_fs: FeatureSet, eps: float = DEFAULT_KL_EPS
) -> np.ndarray:
    """Per-patch KL divergence map, x and y contributions summed.

    Returns an (M, N) float array of non-negative entries. Vectorized over
    patches; equals per-patch scalar kl_divergence calls.
    """
    if ref_fs.binning != proc_fs.binning:
        raise SchemeMismatch("operands use different binning schemes")
    if ref_fs.grid != proc_fs.grid:
        raise GridMismatch(
            f"reference grid {ref_fs.grid.rows}x{ref_fs.grid.cols} on "
            f"{ref_fs.width}x{ref_fs.height} does not match processed grid "
            f"{proc_fs.grid.rows}x{proc_fs.grid.cols} on "
            f"{proc_fs.width}x{proc_fs.height}"
        )

    out = np.zeros((ref_fs.grid.rows, ref_fs.grid.cols))
    for ref_h, proc_h in ((ref_fs.hist_x, proc_fs.hist_x), (ref_fs.hist_y, proc_fs.hist_y)):
        r = ref_h / ref_h.sum(axis=2, keepdims=True)
        q = proc_h / proc_h.sum(axis=2, keepdims=True)
        r = (r + eps) / (1.0 + eps * r.shape[2])
        q = (q + eps) / (1.0 + eps * q.shape[2])
        out += (r * np.log(r / q)).sum(axis=2)
    return out


@dataclass(frozen=True)
class Cd2aScore:
    value: float
    aggregation: str


def cd2a_score(dmap: np.ndarray, aggregation: str = "abs") -> Cd2aScore:
    """Aggregate a distortion map into one global score.

    ``abs`` sums the (already non-negative) entries; ``sq`` sums their
    squares. The absolute sum separates safe from unsafe processing more
    cleanly and is the default.
    """
    dmap = np.asarray(dmap, dtype=np.float64)
    if aggregation == "abs":
        value = float(np.abs(dmap).sum())
    elif aggregation == "sq":
        value = float((dmap * dmap).sum())
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}, use one of {AGGREGATIONS}")
    return Cd2aScore(value=value, aggregation=aggregation)


def parse_thresholds(text: str) -> dict[str, float]:
    """Parse an ``operation=tau`` per line threshold table.

    Blank lines and ``#`` comments are ignored; tau must be positive.
    """
    table: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected operation=tau, got {raw!r}")
        op, _, value = line.partition("=")
        tau = float(value.strip())
        if tau <= 0:
            raise ValueError(f"line {lineno}: threshold must be positive, got {tau}")
        table[op.strip()] = tau
    return table


def load_thresholds(path) -> dict[str, float]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_thresholds(fh.read())


def classify(score, operation: str, thresholds: dict[str, float]) -> str:
    """Return ``"safe"`` or ``"unsafe"``; the boundary score == tau is unsafe.

    Thresholds are calibrated per processing operation, so the operation
    label selects which tau applies.
    """
    if operation not in thresholds:
        raise UnknownOperation(f"no threshold configured for {operation!r}")
    value = score.value if isinstance(score, Cd2aScore) else float(score)
    return "unsafe" if value >= thresholds[operation] else "safe"


def render_heatmap(dmap: np.ndarray, upscale_to: tuple[int, int] | None = None) -> np.ndarray:
    """Distortion map -> grayscale image, max entry mapped to 255.

    ``upscale_to=(width, height)`` replicates cells nearest-neighbor back
    to source-image dimensions.
    """
    dmap = np.asarray(dmap, dtype=np.float64)
    peak = dmap.max()
    if peak > 0:
        img = np.floor(dmap / peak * 255.0 + 0.5).astype(np.uint8)
    else:
        img = np.zeros(dmap.shape, dtype=np.uint8)
    if upscale_to is not None:
        width, height = upscale_to
        m, n = dmap.shape
        # replicate cells over the same floor-divided bounds the grid uses
        row_bounds = (np.arange(1, m) * height) // m
        col_bounds = (np.arange(1, n) * width) // n
        rows = np.searchsorted(row_bounds, np.arange(height), side="right")
        cols = np.searchsorted(col_bounds, np.arange(width), side="right")
        img = img[rows][:, cols]
    return img
