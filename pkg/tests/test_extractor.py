import itertools
import json

import numpy as np
import pytest

from certrand.extractor import (
    BIT_ORDER,
    AbortedTranscriptError,
    ToeplitzSpec,
    bits_from_samples,
    extract_transcript,
    required_seed_len,
    seed_bits_from_key,
    toeplitz_extract,
    write_extraction,
)


def naive_toeplitz(x, seed, ell):
    """Dense GF(2) product with T[i, j] = seed[i - j + n - 1]."""
    n = len(x)
    if ell == 0:
        return np.zeros(0, dtype=np.int64)
    T = np.array([[seed[i - j + n - 1] for j in range(n)] for i in range(ell)], dtype=np.int64)
    return (T @ np.asarray(x, dtype=np.int64)) % 2


def random_instance(rng, n_in, ell):
    x = rng.integers(0, 2, n_in, dtype=np.uint8)
    seed = rng.integers(0, 2, required_seed_len(n_in, ell), dtype=np.uint8)
    return x, ToeplitzSpec(n_in, ell, seed)


@pytest.mark.parametrize("method", ["packed", "fft"])
def test_matches_naive(rng, method):
    for _ in range(60):
        n_in = int(rng.integers(1, 300))
        ell = int(rng.integers(1, n_in + 1))
        x, spec = random_instance(rng, n_in, ell)
        np.testing.assert_array_equal(toeplitz_extract(x, spec, method), naive_toeplitz(x, spec.seed, ell))


@pytest.mark.parametrize("n_in,ell", [(64, 64), (65, 1), (128, 127), (1, 1), (200, 0)])
def test_word_boundaries(rng, n_in, ell):
    x, spec = random_instance(rng, n_in, ell)
    np.testing.assert_array_equal(toeplitz_extract(x, spec), naive_toeplitz(x, spec.seed, ell))


def test_two_universal_exhaustive():
    n_in, ell = 3, 2
    seeds = list(itertools.product([0, 1], repeat=required_seed_len(n_in, ell)))
    xs = list(itertools.product([0, 1], repeat=n_in))
    for x, y in itertools.combinations(xs, 2):
        coll = sum(
            np.array_equal(
                toeplitz_extract(x, ToeplitzSpec(n_in, ell, s)), toeplitz_extract(y, ToeplitzSpec(n_in, ell, s))
            )
            for s in seeds
        )
        assert coll / len(seeds) <= 2.0**-ell


def test_linearity(rng):
    x, spec = random_instance(rng, 500, 100)
    y = rng.integers(0, 2, 500, dtype=np.uint8)
    np.testing.assert_array_equal(
        toeplitz_extract(x ^ y, spec), toeplitz_extract(x, spec) ^ toeplitz_extract(y, spec)
    )


def test_spec_validation():
    assert required_seed_len(10, 3) == 12
    assert required_seed_len(10, 0) == 0
    with pytest.raises(ValueError):
        required_seed_len(3, 4)
    with pytest.raises(ValueError):
        ToeplitzSpec(10, 3, np.zeros(5, dtype=np.uint8))
    with pytest.raises(ValueError):
        ToeplitzSpec(2, 1, np.array([0, 2]))
    spec = ToeplitzSpec(4, 2, np.zeros(5, dtype=np.uint8))
    with pytest.raises(ValueError):
        toeplitz_extract(np.zeros(3), spec)
    with pytest.raises(ValueError):
        toeplitz_extract(np.zeros(4), spec, method="magic")


def test_bits_from_samples_msb_first():
    np.testing.assert_array_equal(bits_from_samples([0b101, 0b011], 3), [1, 0, 1, 0, 1, 1])
    with pytest.raises(ValueError):
        bits_from_samples([8], 3)


def test_seed_expansion_deterministic():
    a = seed_bits_from_key(b"k", 1000)
    assert a.size == 1000 and set(np.unique(a)) <= {0, 1}
    np.testing.assert_array_equal(a, seed_bits_from_key(b"k", 1000))
    np.testing.assert_array_equal(a[:500], seed_bits_from_key(b"k", 500))
    assert not np.array_equal(a, seed_bits_from_key(b"j", 1000))


def test_extract_transcript_and_manifest(tmp_path, rng):
    samples = rng.integers(0, 1 << 10, 50)
    seed = rng.integers(0, 2, 500 + 100 - 1, dtype=np.uint8)
    res = extract_transcript(samples, 10, seed, 100, eps_sou=1e-3, Q_min=20, H_min=150)
    assert res.output.size == 100
    m = res.manifest
    assert (m["input_len"], m["ell"], m["seed_len"], m["bit_order"]) == (500, 100, 599, BIT_ORDER)
    man = write_extraction(res, tmp_path / "out.bin")
    assert (tmp_path / "out.bin").read_bytes() == np.packbits(res.output).tobytes()
    assert json.loads(man.read_text())["output_sha256"] == m["output_sha256"]


def test_aborted_transcript_refused(rng):
    with pytest.raises(AbortedTranscriptError):
        extract_transcript([1, 2], 4, np.zeros(8, dtype=np.uint8), 1, aborted=True)


def test_fft_and_packed_agree_large(rng):
    x, spec = random_instance(rng, 200_000, 5_000)
    np.testing.assert_array_equal(toeplitz_extract(x, spec, "packed"), toeplitz_extract(x, spec, "fft"))
