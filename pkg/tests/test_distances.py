import math

import numpy as np
import pytest

from cd2.distances import (
    DISTANCE_NAMES,
    blocking,
    distance_vector,
    emd,
    entropy_gap,
    intersection,
    kl_divergence,
    noise_inc,
    normalize,
    pooled_histograms,
    total_variation,
)
from cd2.errors import BadTail, DimensionMismatch, SchemeMismatch
from cd2.features import BinningScheme, extract_features

from oracles import direct_kl, random_prob, transport_emd


def point_mass(i, n=16):
    p = np.zeros(n)
    p[i] = 1.0
    return p


UNIFORM = np.full(16, 1 / 16)


class TestKl:
    def test_identical_is_zero(self, rng):
        p = random_prob(rng)
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_point_masses_match_formula_oracle(self):
        r, q = point_mass(0), point_mass(1)
        expected = direct_kl(r, q, 1e-6)
        assert kl_divergence(r, q, 1e-6) == pytest.approx(expected, rel=1e-12)

    def test_random_pairs_match_formula_oracle(self, rng):
        for zeros in (0, 3):
            r = random_prob(rng, zeros=zeros)
            q = random_prob(rng, zeros=zeros)
            assert kl_divergence(r, q) == pytest.approx(direct_kl(r, q, 1e-6), rel=1e-10)

    def test_asymmetry(self):
        r = np.array([0.5, 0.5] + [0.0] * 14)
        q = np.array([0.9, 0.1] + [0.0] * 14)
        assert kl_divergence(r, q) != pytest.approx(kl_divergence(q, r))

    def test_nonnegative(self, rng):
        for _ in range(50):
            r, q = random_prob(rng, zeros=4), random_prob(rng, zeros=4)
            assert kl_divergence(r, q) >= 0.0


class TestEmd:
    def test_identical_is_zero(self, rng):
        p = random_prob(rng)
        assert emd(p, p) == 0.0

    def test_opposite_point_masses(self):
        assert emd(point_mass(0), point_mass(15)) == pytest.approx(15.0)

    def test_adjacent_point_masses(self):
        assert emd(point_mass(3), point_mass(4)) == pytest.approx(1.0)

    def test_matches_transport_oracle(self, rng):
        for _ in range(200):
            r, q = random_prob(rng), random_prob(rng)
            assert emd(r, q) == pytest.approx(transport_emd(r, q), abs=1e-9)

    def test_symmetric(self, rng):
        r, q = random_prob(rng), random_prob(rng)
        assert emd(r, q) == pytest.approx(emd(q, r), abs=1e-12)


class TestIntersection:
    def test_identical_is_one(self, rng):
        p = random_prob(rng)
        assert intersection(p, p) == pytest.approx(1.0)

    def test_disjoint_supports(self):
        assert intersection(point_mass(0), point_mass(9)) == 0.0

    def test_hand_sum(self):
        r = np.array([0.5, 0.5] + [0.0] * 14)
        q = np.array([0.25, 0.75] + [0.0] * 14)
        assert intersection(r, q) == pytest.approx(0.75)

    def test_l1_identity(self, rng):
        for _ in range(50):
            r, q = random_prob(rng), random_prob(rng)
            l1 = np.abs(r - q).sum()
            assert intersection(r, q) == pytest.approx(1 - 0.5 * l1, abs=1e-12)


class TestTotalVariation:
    def test_identical_is_zero(self, rng):
        p = random_prob(rng)
        assert total_variation(p, p) == 0.0

    def test_disjoint_point_masses(self):
        assert total_variation(point_mass(2), point_mass(7)) == 1.0

    def test_hand_max(self):
        r = np.array([0.5, 0.5] + [0.0] * 14)
        q = np.array([0.2, 0.8] + [0.0] * 14)
        assert total_variation(r, q) == pytest.approx(0.3)


class TestNoiseInc:
    def test_identical_is_zero(self, rng):
        p = random_prob(rng)
        assert noise_inc(p, p, 4) == pytest.approx(0.0)

    def test_noise_insertion_is_negative(self):
        ref = point_mass(0)
        proc = 0.8 * point_mass(0) + 0.2 * point_mass(14)
        assert noise_inc(ref, proc, 4) == pytest.approx(-0.2)

    def test_tail_removal_is_positive(self):
        ref = 0.7 * point_mass(0) + 0.3 * point_mass(15)
        proc = point_mass(0)
        assert noise_inc(ref, proc, 4) > 0
        assert noise_inc(ref, proc, 6) > 0

    def test_tail_width_matters(self):
        ref = point_mass(11)  # inside t=6 tail, outside t=4 tail
        proc = point_mass(0)
        assert noise_inc(ref, proc, 4) == pytest.approx(0.0)
        assert noise_inc(ref, proc, 6) == pytest.approx(1.0)

    def test_bad_tail(self):
        p = UNIFORM
        for t in (0, 16, -2):
            with pytest.raises(BadTail):
                noise_inc(p, p, t)


class TestBlocking:
    def test_identical_is_zero(self, rng):
        p = random_prob(rng)
        assert blocking(p, p) == 0.0

    def test_direct_substitution(self):
        r = 0.3 * point_mass(0) + 0.7 * point_mass(5)
        q = 0.7 * point_mass(0) + 0.3 * point_mass(5)
        assert blocking(r, q) == pytest.approx(-0.4)

    def test_constant_processed_image(self):
        r = 0.3 * point_mass(0) + 0.7 * point_mass(5)
        q = point_mass(0)
        assert blocking(r, q) == pytest.approx(-0.7)


class TestEntropyGap:
    def test_identical_is_zero(self, rng):
        p = random_prob(rng)
        assert entropy_gap(p, p) == 0.0

    def test_uniform_vs_point_mass(self):
        assert entropy_gap(UNIFORM, point_mass(3)) == pytest.approx(math.log(16))

    def test_antisymmetry(self, rng):
        r, q = random_prob(rng), random_prob(rng)
        assert entropy_gap(r, q) == pytest.approx(-entropy_gap(q, r), abs=1e-12)

    def test_point_mass_vs_uniform(self):
        assert entropy_gap(point_mass(3), UNIFORM) == pytest.approx(-math.log(16))


class TestDistanceVector:
    def test_identical_feature_sets(self, rng):
        lum = rng.integers(0, 256, size=(24, 36), dtype=np.uint8)
        fs = extract_features(lum, 2, 3)
        dv = distance_vector(fs, fs)
        d = dv.as_dict()
        for name in DISTANCE_NAMES:
            if name.startswith("intersection"):
                assert d[name] == pytest.approx(1.0)
            else:
                assert d[name] == pytest.approx(0.0, abs=1e-12)

    def test_matches_scalar_ops_on_pooled_histograms(self, rng):
        a = rng.integers(0, 256, size=(20, 20), dtype=np.uint8)
        b = rng.integers(0, 256, size=(20, 20), dtype=np.uint8)
        fa, fb = extract_features(a, 2, 2), extract_features(b, 2, 2)
        dv = dict(zip(DISTANCE_NAMES, distance_vector(fa, fb).values))
        rx, ry = pooled_histograms(fa)
        qx, qy = pooled_histograms(fb)
        assert dv["kl_x"] == pytest.approx(kl_divergence(rx, qx))
        assert dv["emd_y"] == pytest.approx(emd(ry, qy))
        assert dv["intersection_x"] == pytest.approx(intersection(rx, qx))
        assert dv["total_variation_y"] == pytest.approx(total_variation(ry, qy))
        assert dv["noise_inc4_x"] == pytest.approx(noise_inc(rx, qx, 4))
        assert dv["noise_inc6_y"] == pytest.approx(noise_inc(ry, qy, 6))
        assert dv["blocking_x"] == pytest.approx(blocking(rx, qx))
        assert dv["entropy_gap_y"] == pytest.approx(entropy_gap(ry, qy))

    def test_mismatched_grids_pool_fine(self, rng):
        lum = rng.integers(0, 256, size=(24, 24), dtype=np.uint8)
        fa = extract_features(lum, 2, 2)
        fb = extract_features(lum, 4, 3)
        dv = distance_vector(fa, fb)
        assert dv.values[0] == pytest.approx(0.0, abs=1e-12)  # pooling erases grids

    def test_dimension_mismatch(self, rng):
        fa = extract_features(rng.integers(0, 256, (16, 16), dtype=np.uint8), 2, 2)
        fb = extract_features(rng.integers(0, 256, (16, 20), dtype=np.uint8), 2, 2)
        with pytest.raises(DimensionMismatch):
            distance_vector(fa, fb)

    def test_scheme_mismatch(self, rng):
        lum = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        other = BinningScheme(
            "custom",
            np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 1021]),
        )
        fa = extract_features(lum, 2, 2)
        fb = extract_features(lum, 2, 2, other)
        with pytest.raises(SchemeMismatch):
            distance_vector(fa, fb)

    def test_order_contract(self):
        assert DISTANCE_NAMES[0] == "kl_x"
        assert DISTANCE_NAMES[8] == "noise_inc4_x"
        assert DISTANCE_NAMES[15] == "entropy_gap_y"
        assert len(DISTANCE_NAMES) == 16


class TestNormalize:
    def test_normalizes_counts(self):
        p = normalize(np.array([1, 3] + [0] * 14))
        assert p.sum() == pytest.approx(1.0)
        assert p[1] == pytest.approx(0.75)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            normalize(np.zeros(16))

    def test_rejects_unnormalized_operands(self):
        with pytest.raises(ValueError):
            kl_divergence(np.full(16, 0.5), UNIFORM)
