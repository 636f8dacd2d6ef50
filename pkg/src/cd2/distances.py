"""Distance functions between 16-bin contrast histograms.

All operands are normalized histograms (probability vectors). The general
distances (KL, earth mover's, intersection, total variation) treat every
bin equally; the remaining ones target specific distortion families:

* ``noise_inc`` - change in high-gradient tail mass (noise insertion),
* ``blocking`` - change in zero-gradient mass (DCT block artifacts),
* ``entropy_gap`` - shrink of the contrast range (detail clipping).

Signs follow the reference-minus-processed orientation throughout; callers
interpret them, the functions never take absolute values.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadTail, DimensionMismatch, SchemeMismatch
from .features import NUM_BINS, FeatureSet

DEFAULT_KL_EPS = 1e-6

# Fixed entry order of the global distance vector; part of the trained
# model contract, never reorder.
DISTANCE_NAMES = (
    "kl_x",
    "kl_y",
    "emd_x",
    "emd_y",
    "intersection_x",
    "intersection_y",
    "total_variation_x",
    "total_variation_y",
    "noise_inc4_x",
    "noise_inc4_y",
    "noise_inc6_x",
    "noise_inc6_y",
    "blocking_x",
    "blocking_y",
    "entropy_gap_x",
    "entropy_gap_y",
)

DISTANCE_ORDER_ID = "cd2-distances-v1"


def normalize(counts: np.ndarray) -> np.ndarray:
    """Counts -> probability vector. Rejects empty histograms."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("cannot normalize an empty histogram")
    return counts / total


def _as_prob(h) -> np.ndarray:
    p = np.asarray(h, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"expected 1-d histogram, got shape {p.shape}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"histogram not normalized (sum={p.sum()!r})")
    return p


def _pair(ref, proc) -> tuple[np.ndarray, np.ndarray]:
    r, q = _as_prob(ref), _as_prob(proc)
    if r.shape != q.shape:
        raise ValueError("histograms differ in length")
    return r, q


def kl_divergence(ref, proc, eps: float = DEFAULT_KL_EPS) -> float:
    """Smoothed Kullback-Leibler divergence, reference relative to processed.

    ``eps`` is added to every bin of both operands before renormalizing, so
    zero bins never produce infinities.
    """
    r, q = _pair(ref, proc)
    r = (r + eps) / (1.0 + eps * r.size)
    q = (q + eps) / (1.0 + eps * q.size)
    return float(np.sum(r * np.log(r / q)))


def emd(ref, proc) -> float:
    """Earth mover's distance on unit-spaced bins.

    Accumulates the running transported mass bin by bin and sums its
    absolute values, which equals the 1-d optimal transport cost.
    """
    r, q = _pair(ref, proc)
    carry = np.concatenate(([0.0], np.cumsum(r - q)[:-1]))
    return float(np.abs(carry).sum())


def intersection(ref, proc) -> float:
    """Histogram intersection; 1 means identical, 0 disjoint supports."""
    r, q = _pair(ref, proc)
    return float(np.minimum(r, q).sum())


def total_variation(ref, proc) -> float:
    """Maximum single-bin difference between the operands."""
    r, q = _pair(ref, proc)
    return float(np.abs(r - q).max())


def noise_inc(ref, proc, tail: int) -> float:
    """Tail-mass difference over the upper ``tail`` bins (ref minus proc).

    Negative values indicate extra high-gradient mass in the processed
    image, the signature of inserted noise.
    """
    r, q = _pair(ref, proc)
    if not 1 <= tail < len(r):
        raise BadTail(f"tail size {tail} outside 1..{len(r) - 1}")
    return float(r[-tail:].sum() - q[-tail:].sum())


def blocking(ref, proc) -> float:
    """Zero-gradient-bin difference (ref minus proc).

    Bin 0 holds exactly the zero gradients; negative values mean the
    processed image gained uniform blocks.
    """
    r, q = _pair(ref, proc)
    return float(r[0] - q[0])


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_gap(ref, proc) -> float:
    """Shannon entropy difference H(ref) - H(proc), natural log.

    Positive when the processed image's contrast range has contracted.
    """
    r, q = _pair(ref, proc)
    return _entropy(r) - _entropy(q)


@dataclass
class DistanceVector:
    """The 16 global distances in DISTANCE_NAMES order."""

    values: np.ndarray
    order: str = DISTANCE_ORDER_ID

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(DISTANCE_NAMES, self.values)}


def pooled_histograms(fs: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    """Sum all patch histograms into one global histogram per axis."""
    return (
        normalize(fs.hist_x.reshape(-1, NUM_BINS).sum(axis=0)),
        normalize(fs.hist_y.reshape(-1, NUM_BINS).sum(axis=0)),
    )


def distance_vector(
    ref_fs: FeatureSet, proc_fs: FeatureSet, eps: float = DEFAULT_KL_EPS
) -> DistanceVector:
    """Evaluate all 16 distances on the pooled global histograms.

    Pooling erases the patch grid, so operands may carry different grids;
    binning scheme and image dimensions must match.
    """
    if ref_fs.binning != proc_fs.binning:
        raise SchemeMismatch("operands use different binning schemes")
    if (ref_fs.width, ref_fs.height) != (proc_fs.width, proc_fs.height):
        raise DimensionMismatch(
            f"reference is {ref_fs.width}x{ref_fs.height}, "
            f"processed is {proc_fs.width}x{proc_fs.height}"
        )
    rx, ry = pooled_histograms(ref_fs)
    qx, qy = pooled_histograms(proc_fs)
    values = np.array(
        [
            kl_divergence(rx, qx, eps),
            kl_divergence(ry, qy, eps),
            emd(rx, qx),
            emd(ry, qy),
            intersection(rx, qx),
            intersection(ry, qy),
            total_variation(rx, qx),
            total_variation(ry, qy),
            noise_inc(rx, qx, 4),
            noise_inc(ry, qy, 4),
            noise_inc(rx, qx, 6),
            noise_inc(ry, qy, 6),
            blocking(rx, qx),
            blocking(ry, qy),
            entropy_gap(rx, qx),
            entropy_gap(ry, qy),
        ]
    )
    return DistanceVector(values)
