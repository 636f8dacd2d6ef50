import numpy as np
import pytest

from cd2.errors import (
    BadMagic,
    CodecError,
    CountOverflow,
    TruncatedPayload,
    VersionMismatch,
)
from cd2.features import (
    DEFAULT_BINNING,
    HEADER_SIZE,
    FeatureSet,
    PatchGrid,
    bits_per_bin,
    decode_signature,
    encode_signature,
    extract_features,
    is_signature,
    payload_bits,
)


def random_feature_set(rng, width=None, height=None, rows=None, cols=None) -> FeatureSet:
    """FeatureSet with invariant-respecting random counts."""
    width = width or int(rng.integers(8, 200))
    height = height or int(rng.integers(8, 200))
    rows = rows or int(rng.integers(1, 7))
    cols = cols or int(rng.integers(1, 7))
    grid = PatchGrid(width=width, height=height, rows=rows, cols=cols)
    hist_x = np.zeros((rows, cols, 16), dtype=np.int64)
    hist_y = np.zeros((rows, cols, 16), dtype=np.int64)
    for a in range(rows):
        for b in range(cols):
            r0, r1, c0, c1 = grid.patch_box(a, b)
            pixels = (r1 - r0) * (c1 - c0)
            hist_x[a, b] = rng.multinomial(pixels, np.full(16, 1 / 16))
            hist_y[a, b] = rng.multinomial(pixels, np.full(16, 1 / 16))
    return FeatureSet(
        width=width, height=height, grid=grid,
        hist_x=hist_x, hist_y=hist_y, binning=DEFAULT_BINNING,
    )


class TestBitWidth:
    def test_hd_image_needs_21_bits(self):
        assert bits_per_bin(1920 * 720) == 21

    def test_payload_size_formula(self):
        # 6*16 patches * 32 bins * 21 bits = 64512 bits = 8064 bytes
        assert payload_bits(1920, 720, 6, 16) == 6 * 16 * 32 * 21
        assert payload_bits(1920, 720, 6, 16) // 8 == 8064

    def test_tiny_counts(self):
        assert bits_per_bin(2) == 1
        assert bits_per_bin(3) == 2


class TestRoundtrip:
    def test_roundtrip_from_extraction(self, rng):
        lum = rng.integers(0, 256, size=(33, 47), dtype=np.uint8)
        fs = extract_features(lum, 3, 4)
        assert decode_signature(encode_signature(fs)) == fs

    def test_roundtrip_randomized(self, rng):
        for _ in range(25):
            fs = random_feature_set(rng)
            blob = encode_signature(fs)
            assert decode_signature(blob) == fs
            expected = HEADER_SIZE + (
                payload_bits(fs.width, fs.height, fs.grid.rows, fs.grid.cols) + 7
            ) // 8
            assert len(blob) == expected

    def test_magic_sniffing(self, rng):
        blob = encode_signature(random_feature_set(rng))
        assert is_signature(blob)
        assert not is_signature(b"\x89PNG\r\n")


class TestDecodeErrors:
    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            decode_signature(b"NOPE" + bytes(12))

    def test_short_header(self):
        with pytest.raises(TruncatedPayload):
            decode_signature(b"CD2F\x01")

    def test_version_mismatch(self, rng):
        blob = bytearray(encode_signature(random_feature_set(rng)))
        blob[4] = 99
        with pytest.raises(VersionMismatch):
            decode_signature(bytes(blob))

    def test_unknown_binning_code(self, rng):
        blob = bytearray(encode_signature(random_feature_set(rng)))
        blob[5] = 42
        with pytest.raises(CodecError):
            decode_signature(bytes(blob))

    def test_truncated_payload(self, rng):
        blob = encode_signature(random_feature_set(rng))
        with pytest.raises(TruncatedPayload):
            decode_signature(blob[:-1])
        with pytest.raises(TruncatedPayload):
            decode_signature(blob + b"\x00")

    def test_encode_overflow_on_degenerate_single_patch(self):
        # 4x4 constant image, 1x1 grid: count 16 cannot fit ceil(log2(16))=4 bits
        lum = np.full((4, 4), 9, dtype=np.uint8)
        fs = extract_features(lum, 1, 1)
        with pytest.raises(CountOverflow):
            encode_signature(fs)

    def test_byte_flip_fuzz_never_crashes(self, rng):
        fs = random_feature_set(rng, width=17, height=13, rows=2, cols=2)
        blob = encode_signature(fs)
        outcomes = {"differs": 0, "overflow": 0, "identical": 0}
        for pos in range(HEADER_SIZE, len(blob)):
            for bit in (0x01, 0x80):
                mutated = bytearray(blob)
                mutated[pos] ^= bit
                try:
                    decoded = decode_signature(bytes(mutated))
                except CountOverflow:
                    outcomes["overflow"] += 1
                    continue
                if decoded == fs:
                    outcomes["identical"] += 1  # flipped a padding bit
                else:
                    outcomes["differs"] += 1
        assert outcomes["differs"] > 0
        # only the final byte carries padding bits
        assert outcomes["identical"] <= 8
