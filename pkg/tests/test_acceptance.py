"""Acceptance suite: one test per release criterion, one verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``. Criteria 8 and 9 need
benchmark datasets the repository does not ship; point CD2_LIVE_MANIFEST,
CD2_CSIQ_MANIFEST and CD2_TID2013_MANIFEST at manifest CSVs to enable
them, otherwise they report SKIPPED.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import ndimage

from cd2.boosting import TrainConfig, train
from cd2.distances import emd, intersection, kl_divergence, total_variation
from cd2.evaluation import (
    gradient_dependency_analysis,
    information_quality_ratio,
    joint_histogram,
    load_manifest,
    run_cd2a_eval,
    run_cd2b_eval,
    srocc,
)
from cd2.features import (
    HEADER_SIZE,
    bits_per_bin,
    decode_signature,
    encode_signature,
    extract_features,
    extract_features_streaming,
    payload_bits,
)
from cd2.scoring import cd2a_score, distortion_map

from oracles import random_prob, transport_emd
from test_codec import random_feature_set

SEED = 20240811


def verdict(n, label, detail=""):
    print(f"\nCRITERION {n} ({label}): PASS {detail}")


def pink_texture(seed, n=256):
    """Multi-scale smoothed noise; a stand-in for natural photo texture."""
    rng = np.random.default_rng(seed)
    img = np.zeros((n, n))
    for scale, weight in ((1, 0.2), (2, 0.35), (4, 0.6), (8, 1.0), (16, 1.6), (32, 2.4)):
        img += weight * ndimage.gaussian_filter(rng.normal(0, 1, (n, n)), scale)
    img -= img.min()
    img *= 255.0 / img.max()
    return img.astype(np.uint8)


def test_criterion_01_streaming_equals_batch():
    rng = np.random.default_rng(SEED)
    started = time.perf_counter()
    for _ in range(100):
        h = int(rng.integers(16, 513))
        w = int(rng.integers(16, 513))
        m = int(rng.integers(1, 9))
        n = int(rng.integers(1, 9))
        lum = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        batch = extract_features(lum, m, n)
        streamed = extract_features_streaming(iter(lum), w, h, m, n)
        assert streamed == batch, f"mismatch for {w}x{h} grid {m}x{n}"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.1f}s, budget is 30s"
    verdict(1, "streaming equals batch", f"- 100 images bit-exact in {elapsed:.1f}s")


def test_criterion_02_codec_roundtrip_and_size():
    rng = np.random.default_rng(SEED + 1)
    for _ in range(100):
        fs = random_feature_set(rng)
        blob = encode_signature(fs)
        assert decode_signature(blob) == fs
        bits = payload_bits(fs.width, fs.height, fs.grid.rows, fs.grid.cols)
        k = bits_per_bin(fs.width * fs.height)
        assert bits == fs.grid.rows * fs.grid.cols * 32 * k
        assert len(blob) - HEADER_SIZE == (bits + 7) // 8
    verdict(2, "signature codec", "- 100 roundtrips, payload bits = M*N*32*ceil(log2(s))")


def test_criterion_03_distance_oracles():
    rng = np.random.default_rng(SEED + 2)
    for _ in range(200):
        r, q = random_prob(rng), random_prob(rng)
        assert emd(r, q) == pytest.approx(transport_emd(r, q), abs=1e-9)
        l1 = float(np.abs(r - q).sum())
        assert intersection(r, q) == pytest.approx(1.0 - 0.5 * l1, abs=1e-12)
    p = random_prob(rng)
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    assert emd(p, p) == 0.0
    assert total_variation(p, p) == 0.0
    assert intersection(p, p) == pytest.approx(1.0, abs=1e-12)
    verdict(3, "distance oracles", "- EMD vs transport (200 pairs), intersection L1 identity")


def test_criterion_04_locality():
    rng = np.random.default_rng(SEED + 3)
    base = pink_texture(SEED + 3)
    modified = base.copy()
    # patch (2,3) of a 6x6 grid on 256x256 spans rows 85..128, cols 128..170;
    # stay 1 pixel clear of the patch border for the kernel support
    modified[87:126, 130:168] = rng.integers(0, 256, (39, 38), dtype=np.uint8)
    ref = extract_features(base, 6, 6)
    proc = extract_features(modified, 6, 6)
    dmap = distortion_map(ref, proc)
    assert dmap[2, 3] > 0
    mask = np.ones((6, 6), dtype=bool)
    mask[2, 3] = False
    np.testing.assert_allclose(dmap[mask], 0.0, atol=1e-12)
    verdict(4, "distortion locality", "- confined distortion maps to exactly one patch")


def test_criterion_05_monotone_over_processing_levels():
    base = pink_texture(SEED + 4)
    ref = extract_features(base, 6, 6)

    def score(img):
        return cd2a_score(distortion_map(ref, extract_features(img, 6, 6)), "abs").value

    noise_rng = np.random.default_rng(SEED + 5)
    families = {
        "gaussian noise": [
            score(
                np.clip(
                    base.astype(float) + noise_rng.normal(0, sigma, base.shape), 0, 255
                ).astype(np.uint8)
            )
            for sigma in (5, 10, 20, 40)
        ],
        "box blur": [
            score(
                np.floor(
                    ndimage.uniform_filter(base.astype(float), size=2 * r + 1,
                                           mode="nearest") + 0.5
                ).astype(np.uint8)
            )
            for r in (1, 2, 4, 8)
        ],
        "contrast clipping": [
            score(
                np.clip(128.0 + (base.astype(float) - 128.0) * k, 0, 255).astype(np.uint8)
            )
            for k in (1.5, 2.5, 4.0, 8.0)
        ],
    }
    for family, scores in families.items():
        assert all(a < b for a, b in zip(scores, scores[1:])), (
            f"{family} scores not strictly increasing: {scores}"
        )
    verdict(5, "processing level monotonicity",
            "- noise, blur and clipping levels strictly order the score")


def test_criterion_06_boosting_sanity():
    rng = np.random.default_rng(SEED + 6)
    X = rng.random((650, 16))
    y = 2.0 * X[:, 0] - X[:, 6] + rng.normal(0, 0.01, 650)
    Xtr, ytr, Xte, yte = X[:500], y[:500], X[500:], y[500:]
    model = train(Xtr, ytr, TrainConfig(seed=0))
    train_rmse = float(np.sqrt(np.mean((model.predict(Xtr) - ytr) ** 2)))
    held_out = srocc(model.predict(Xte), yte)
    assert train_rmse < 0.05, f"training rmse {train_rmse:.4f}"
    assert held_out > 0.98, f"held-out srocc {held_out:.4f}"
    losses = model.train_loss
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:])), "loss increased"
    verdict(6, "boosting sanity",
            f"- train rmse {train_rmse:.4f}, held-out srocc {held_out:.4f}, loss monotone")


def test_criterion_07_information_quality_ratio():
    rng = np.random.default_rng(SEED + 7)
    gx = rng.integers(0, 1021, 200_000)
    gy = rng.integers(0, 1021, 200_000)
    independent = information_quality_ratio(joint_histogram(gx, gy))
    assert independent < 0.05, f"independent IQR {independent:.4f}"
    dependent = information_quality_ratio(joint_histogram(gx, gx))
    assert dependent == pytest.approx(1.0, abs=1e-9)
    verdict(7, "information quality ratio",
            f"- independent {independent:.4f} < 0.05, deterministic = 1")


def _dataset_manifest(name: str):
    env = f"CD2_{name}_MANIFEST"
    path = os.environ.get(env)
    if not path:
        pytest.skip(f"{env} not set; dataset-gated criterion SKIPPED, not passed")
    return load_manifest(path)


@pytest.mark.parametrize(
    "dataset,target_srocc,tol,target_plcc,plcc_tol",
    [
        ("LIVE", 0.9582, 0.03, 0.9595, 0.03),
        ("CSIQ", 0.9339, 0.04, None, None),
        ("TID2013", 0.8891, 0.05, None, None),
    ],
)
def test_criterion_08_cd2b_reproduces_benchmarks(dataset, target_srocc, tol,
                                                 target_plcc, plcc_tol):
    manifest = _dataset_manifest(dataset)
    report = run_cd2b_eval(manifest, TrainConfig(seed=0), k=5)
    assert abs(report.srocc - target_srocc) <= tol, (
        f"{dataset} cd2b srocc {report.srocc:.4f} vs {target_srocc} +/- {tol}"
    )
    if target_plcc is not None:
        assert abs(report.plcc - target_plcc) <= plcc_tol
    verdict(8, f"cd2b on {dataset}", f"- srocc {report.srocc:.4f}")


def test_criterion_09_cd2a_live_and_natural_iqr():
    manifest = _dataset_manifest("LIVE")
    report = run_cd2a_eval(manifest)
    assert abs(report.srocc - 0.8546) <= 0.05, f"cd2a srocc {report.srocc:.4f}"

    from cd2.images import load_luminance

    refs = list(dict.fromkeys(row.ref for row in manifest.rows))
    analysis = gradient_dependency_analysis(load_luminance(p) for p in refs)
    assert 0.27 - 0.1 <= analysis.iqr_median <= 0.28 + 0.1, (
        f"natural-image IQR median {analysis.iqr_median:.4f}"
    )
    verdict(9, "cd2a on LIVE + natural IQR",
            f"- srocc {report.srocc:.4f}, iqr median {analysis.iqr_median:.4f}")


def test_criterion_10_extraction_speed():
    rng = np.random.default_rng(SEED + 8)
    lum = rng.integers(0, 256, size=(720, 1920), dtype=np.uint8)
    extract_features(lum, 6, 16)  # warm up
    best = math.inf
    for _ in range(7):
        t0 = time.perf_counter()
        extract_features(lum, 6, 16)
        best = min(best, time.perf_counter() - t0)
    assert best < 0.016, f"best of 7 runs: {best * 1000:.2f} ms (budget 16 ms)"
    verdict(10, "HD extraction speed", f"- {best * 1000:.2f} ms for 1920x720")
