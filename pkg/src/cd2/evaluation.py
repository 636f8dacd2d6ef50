"""Benchmark harness: manifests, cross-validation, correlation metrics.

A dataset manifest is a CSV with header ``ref,dist,dmos,type,ref_id``
listing reference/processed image pairs with their human opinion scores.
The harness evaluates three predictors against DMOS:

* ``cd2a`` - the spatial score, no training involved,
* ``cd2b`` - the boosted model, 5-fold cross-validated by reference id,
* ``psnr`` - plain peak signal-to-noise baseline.

Rank correlations are computed on raw predictions; RMSE is computed after
an affine least-squares calibration onto the DMOS scale (the harness never
fits a nonlinear mapping).
"""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock

import numpy as np

from . import boosting
from .distances import distance_vector
from .errors import (
    DegenerateVariance,
    DimensionMismatch,
    LengthMismatch,
    MissingColumn,
    TooFewGroups,
)
from .features import NUM_BINS, BinningScheme, DEFAULT_BINNING, extract_features
from .images import load_luminance
from .imaging import sobel_gradients_signed
from .scoring import cd2a_score, distortion_map

MANIFEST_COLUMNS = ("ref", "dist", "dmos", "type", "ref_id")


@dataclass
class ManifestRow:
    ref: str
    dist: str
    dmos: float
    kind: str
    ref_id: str


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """Parse and validate a manifest CSV.

    Rows with unparseable scores or (when ``check_paths``) unreadable image
    paths are skipped and counted, not fatal; a missing column is.
    """
    path = Path(path)
    base = path.parent
    rows: list[ManifestRow] = []
    warnings: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"manifest lacks column(s): {', '.join(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                dmos = float(rec["dmos"])
            except (TypeError, ValueError):
                warnings.append(f"line {lineno}: bad dmos {rec['dmos']!r}")
                continue
            ref = str(base / rec["ref"])
            dist = str(base / rec["dist"])
            if check_paths and not (os.path.isfile(ref) and os.path.isfile(dist)):
                warnings.append(f"line {lineno}: unreadable image path")
                continue
            rows.append(
                ManifestRow(
                    ref=ref, dist=dist, dmos=dmos,
                    kind=rec["type"] or "", ref_id=rec["ref_id"] or "",
                )
            )
    return DatasetManifest(rows=rows, skipped=len(warnings), warnings=warnings)


def kfold_split(
    manifest: DatasetManifest, k: int = 5, seed: int = 0
) -> list[tuple[list[ManifestRow], list[ManifestRow]]]:
    """Partition rows into k folds grouped by reference id.

    All distortions of one source image land in the same fold, so no fold
    ever tests content seen in its training half.
    """
    groups = sorted({row.ref_id for row in manifest.rows})
    if len(groups) < k:
        raise TooFewGroups(f"{len(groups)} reference ids cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(groups))
    fold_of = {groups[g]: int(i % k) for i, g in enumerate(order)}
    splits = []
    for fold in range(k):
        test = [r for r in manifest.rows if fold_of[r.ref_id] == fold]
        trainset = [r for r in manifest.rows if fold_of[r.ref_id] != fold]
        splits.append((trainset, test))
    return splits


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise LengthMismatch(f"shapes {p.shape} and {t.shape} do not pair up")
    if p.size == 0:
        raise LengthMismatch("empty vectors")
    return p, t


def rmse(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def plcc(pred, truth) -> float:
    """Pearson linear correlation coefficient."""
    p, t = _paired(pred, truth)
    pc = p - p.mean()
    tc = t - t.mean()
    denom = math.sqrt(float(pc @ pc) * float(tc @ tc))
    if denom == 0.0:
        raise DegenerateVariance("constant vector: correlation undefined")
    return float(pc @ tc) / denom


def average_ranks(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties averaged."""
    v = np.asarray(v)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sorted_v = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def srocc(pred, truth) -> float:
    """Spearman rank-order correlation (Pearson on average ranks)."""
    p, t = _paired(pred, truth)
    return plcc(average_ranks(p), average_ranks(t))


def affine_calibration(pred, truth) -> tuple[float, float]:
    """Least-squares (a, b) minimizing ||a*pred + b - truth||."""
    p, t = _paired(pred, truth)
    var = float(np.var(p))
    if var == 0.0:
        raise DegenerateVariance("constant predictions: calibration undefined")
    a = float(np.cov(p, t, bias=True)[0, 1]) / var
    b = float(t.mean() - a * p.mean())
    return a, b


def calibrated_rmse(pred, truth) -> float:
    a, b = affine_calibration(pred, truth)
    p, t = _paired(pred, truth)
    return rmse(a * p + b, t)


def psnr(ref: np.ndarray, proc: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical planes."""
    ref = np.asarray(ref, dtype=np.float64)
    proc = np.asarray(proc, dtype=np.float64)
    if ref.shape != proc.shape:
        raise DimensionMismatch(f"shapes {ref.shape} and {proc.shape} differ")
    mse = float(np.mean((ref - proc) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


# --------------------------------------------------------------------------
# Gradient dependency analysis
# --------------------------------------------------------------------------


def joint_histogram(
    gx: np.ndarray, gy: np.ndarray, scheme: BinningScheme = DEFAULT_BINNING
) -> np.ndarray:
    """16x16 joint counts of paired absolute-gradient samples."""
    bx = np.searchsorted(scheme.edges, np.abs(np.ravel(gx)), side="right") - 1
    by = np.searchsorted(scheme.edges, np.abs(np.ravel(gy)), side="right") - 1
    joint = np.bincount(bx * NUM_BINS + by, minlength=NUM_BINS * NUM_BINS)
    return joint.reshape(NUM_BINS, NUM_BINS)


def information_quality_ratio(joint: np.ndarray) -> float:
    """Mutual information over joint entropy, in [0, 1].

    A value of 1 means one axis determines the other; 0 means independent.
    The degenerate single-cell joint (zero entropy) counts as deterministic.
    """
    joint = np.asarray(joint, dtype=np.float64)
    total = joint.sum()
    if total <= 0:
        raise ValueError("empty joint histogram")
    pxy = joint / total
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    h_joint = float(-(pxy[nz] * np.log(pxy[nz])).sum())
    if h_joint == 0.0:
        return 1.0
    outer = px[:, None] * py[None, :]
    mi = float((pxy[nz] * np.log(pxy[nz] / outer[nz])).sum())
    return mi / h_joint


@dataclass
class ImageCorrelation:
    pearson: float
    spearman: float
    iqr: float


@dataclass
class CorrelationReport:
    n_images: int
    pearson_median: float
    pearson_std: float
    spearman_median: float
    spearman_std: float
    iqr_median: float
    iqr_std: float
    per_image: list[ImageCorrelation]


def gradient_dependency_analysis(
    lums, scheme: BinningScheme = DEFAULT_BINNING
) -> CorrelationReport:
    """Correlation structure of the two gradient axes across images.

    Pearson/Spearman run on the signed per-pixel samples; the information
    quality ratio runs on the binned absolute joint histogram. The 1-pixel
    border ring is excluded from the samples: edge replication biases the
    kernel response there differently per axis.
    """
    per_image = []
    for lum in lums:
        sx, sy = sobel_gradients_signed(np.asarray(lum))
        sx, sy = sx[1:-1, 1:-1], sy[1:-1, 1:-1]
        if sx.size == 0:
            raise ValueError("image too small: no interior gradient samples")
        flat_x = sx.ravel().astype(np.float64)
        flat_y = sy.ravel().astype(np.float64)
        per_image.append(
            ImageCorrelation(
                pearson=plcc(flat_x, flat_y),
                spearman=srocc(flat_x, flat_y),
                iqr=information_quality_ratio(joint_histogram(sx, sy, scheme)),
            )
        )
    if not per_image:
        raise ValueError("need at least one image")
    pe = np.array([c.pearson for c in per_image])
    sp = np.array([c.spearman for c in per_image])
    iq = np.array([c.iqr for c in per_image])
    return CorrelationReport(
        n_images=len(per_image),
        pearson_median=float(np.median(pe)),
        pearson_std=float(pe.std()),
        spearman_median=float(np.median(sp)),
        spearman_std=float(sp.std()),
        iqr_median=float(np.median(iq)),
        iqr_std=float(iq.std()),
        per_image=per_image,
    )


# --------------------------------------------------------------------------
# Benchmark runs
# --------------------------------------------------------------------------


@dataclass
class FoldMetrics:
    fold: int
    n: int
    rmse: float
    plcc: float
    srocc: float


@dataclass
class MetricsReport:
    method: str
    rmse: float
    plcc: float
    srocc: float
    folds: list[FoldMetrics] = field(default_factory=list)
    n_rows: int = 0
    n_failed: int = 0
    warnings: list[str] = field(default_factory=list)
    # raw scores are mapped to the DMOS scale before RMSE for methods that
    # do not predict DMOS directly; correlations always use raw scores
    rmse_calibration: str = "none"


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("CD2_THREADS", "1")))
    except ValueError:
        return 1


def _map_rows(fn, rows):
    """Apply fn over rows, optionally thread-parallel, preserving order."""
    workers = _max_workers()
    if workers <= 1 or len(rows) < 2:
        return [fn(r) for r in rows]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rows))


class _FeatureCache:
    """Signature cache keyed by image path; reference images repeat a lot."""

    def __init__(self, grid: tuple[int, int], scheme: BinningScheme):
        self.grid = grid
        self.scheme = scheme
        self._cache: dict[str, object] = {}
        self._lock = Lock()

    def get(self, path: str):
        with self._lock:
            if path in self._cache:
                return self._cache[path]
        fs = extract_features(load_luminance(path), *self.grid, self.scheme)
        with self._lock:
            self._cache[path] = fs
        return fs


def _collect(manifest, row_fn):
    """Run row_fn over the manifest, separating failures."""
    results = _map_rows(row_fn, manifest.rows)
    preds, truths, kept_rows, failures = [], [], [], []
    for row, res in zip(manifest.rows, results):
        if isinstance(res, Exception):
            failures.append(f"{row.dist}: {res}")
        else:
            preds.append(res)
            truths.append(row.dmos)
            kept_rows.append(row)
    return np.array(preds), np.array(truths), kept_rows, failures


def _guarded(fn):
    def wrapped(row):
        try:
            return fn(row)
        except Exception as exc:  # noqa: BLE001 - per-row isolation
            return exc

    return wrapped


def run_cd2a_eval(
    manifest: DatasetManifest,
    grid: tuple[int, int] = (6, 16),
    eps: float = 1e-6,
    aggregation: str = "abs",
    scheme: BinningScheme = DEFAULT_BINNING,
) -> MetricsReport:
    """Spatial-score benchmark over a manifest (no training, no folds)."""
    cache = _FeatureCache(grid, scheme)

    def score_row(row: ManifestRow) -> float:
        ref_fs = cache.get(row.ref)
        proc_fs = extract_features(load_luminance(row.dist), *grid, scheme)
        return cd2a_score(distortion_map(ref_fs, proc_fs, eps), aggregation).value

    preds, truths, _, failures = _collect(manifest, _guarded(score_row))
    if preds.size == 0:
        raise DegenerateVariance("no rows evaluated successfully")
    return MetricsReport(
        method="cd2a",
        rmse=calibrated_rmse(preds, truths),
        plcc=plcc(preds, truths),
        srocc=srocc(preds, truths),
        n_rows=preds.size,
        n_failed=len(failures),
        warnings=failures + manifest.warnings,
        rmse_calibration="affine",
    )


def run_psnr_eval(manifest: DatasetManifest) -> MetricsReport:
    """PSNR baseline benchmark over a manifest."""
    lum_cache: dict[str, np.ndarray] = {}
    lock = Lock()

    def load(path: str) -> np.ndarray:
        with lock:
            if path in lum_cache:
                return lum_cache[path]
        lum = load_luminance(path)
        with lock:
            lum_cache[path] = lum
        return lum

    def score_row(row: ManifestRow) -> float:
        return psnr(load(row.ref), load_luminance(row.dist))

    preds, truths, _, failures = _collect(manifest, _guarded(score_row))
    if preds.size == 0:
        raise DegenerateVariance("no rows evaluated successfully")
    return MetricsReport(
        method="psnr",
        rmse=calibrated_rmse(preds, truths),
        plcc=plcc(preds, truths),
        srocc=srocc(preds, truths),
        n_rows=preds.size,
        n_failed=len(failures),
        warnings=failures + manifest.warnings,
        rmse_calibration="affine",
    )


def compute_distance_rows(
    manifest: DatasetManifest,
    grid: tuple[int, int] = (6, 16),
    eps: float = 1e-6,
    scheme: BinningScheme = DEFAULT_BINNING,
):
    """Distance vectors for every manifest row; failures become warnings."""
    cache = _FeatureCache(grid, scheme)

    def vector_row(row: ManifestRow):
        ref_fs = cache.get(row.ref)
        proc_fs = extract_features(load_luminance(row.dist), *grid, scheme)
        return distance_vector(ref_fs, proc_fs, eps).values

    results = _map_rows(_guarded(vector_row), manifest.rows)
    vectors, kept, failures = [], [], []
    for row, res in zip(manifest.rows, results):
        if isinstance(res, Exception):
            failures.append(f"{row.dist}: {res}")
        else:
            vectors.append(res)
            kept.append(row)
    return np.array(vectors), kept, failures


def run_cd2b_eval(
    manifest: DatasetManifest,
    cfg: boosting.TrainConfig | None = None,
    grid: tuple[int, int] = (6, 16),
    eps: float = 1e-6,
    k: int = 5,
    scheme: BinningScheme = DEFAULT_BINNING,
    model: boosting.BoostedModel | None = None,
) -> MetricsReport:
    """Boosted-model benchmark.

    Without a pre-trained ``model``, runs k-fold cross-validation grouped
    by reference id, reporting the fold means. With one, predicts every
    row directly (no training) and reports a single fold.
    """
    cfg = cfg if cfg is not None else boosting.TrainConfig()
    X, kept, failures = compute_distance_rows(manifest, grid, eps, scheme)
    if len(kept) == 0:
        raise DegenerateVariance("no rows evaluated successfully")
    y = np.array([row.dmos for row in kept])
    sub = DatasetManifest(rows=kept)

    folds: list[FoldMetrics] = []
    if model is not None:
        preds = model.predict(X)
        folds.append(
            FoldMetrics(
                fold=0, n=len(kept),
                rmse=rmse(preds, y), plcc=plcc(preds, y), srocc=srocc(preds, y),
            )
        )
    else:
        index_of = {id(row): i for i, row in enumerate(kept)}
        for fold_no, (train_rows, test_rows) in enumerate(kfold_split(sub, k, cfg.seed)):
            tr = np.array([index_of[id(r)] for r in train_rows])
            te = np.array([index_of[id(r)] for r in test_rows])
            fold_model = boosting.train(X[tr], y[tr], cfg)
            preds = fold_model.predict(X[te])
            folds.append(
                FoldMetrics(
                    fold=fold_no, n=te.size,
                    rmse=rmse(preds, y[te]),
                    plcc=plcc(preds, y[te]),
                    srocc=srocc(preds, y[te]),
                )
            )

    return MetricsReport(
        method="cd2b",
        rmse=float(np.mean([f.rmse for f in folds])),
        plcc=float(np.mean([f.plcc for f in folds])),
        srocc=float(np.mean([f.srocc for f in folds])),
        folds=folds,
        n_rows=len(kept),
        n_failed=len(failures),
        warnings=failures + manifest.warnings,
    )


def train_on_manifest(
    manifest: DatasetManifest,
    cfg: boosting.TrainConfig | None = None,
    grid: tuple[int, int] = (6, 16),
    eps: float = 1e-6,
    scheme: BinningScheme = DEFAULT_BINNING,
):
    """Train a boosted model on all manifest rows; returns (model, warnings)."""
    X, kept, failures = compute_distance_rows(manifest, grid, eps, scheme)
    if len(kept) == 0:
        raise DegenerateVariance("no usable training rows")
    y = np.array([row.dmos for row in kept])
    model = boosting.train(X, y, cfg)
    return model, failures + manifest.warnings


