"""Toeplitz hashing over GF(2).

For input ``x`` of length ``n_in`` and output length ``ell`` the matrix is
``T[i, j] = seed[i - j + n_in - 1]`` so the seed has ``n_in + ell - 1`` bits:
``seed[n_in - 1::-1]`` is the first row and ``seed[n_in - 1:]`` the first
column.  Output bit ``i`` is the parity of ``seed[i:i + n_in] & reversed(x)``,
which the packed path evaluates 64 rows at a time with uint64 words.

Bit sequences are numpy uint8 arrays of 0/1; byte I/O packs them
most-significant-bit first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ToeplitzSpec",
    "AbortedTranscriptError",
    "required_seed_len",
    "toeplitz_extract",
    "bits_from_samples",
    "extract_transcript",
    "ExtractionResult",
    "write_extraction",
    "BIT_ORDER",
    "seed_bits_from_key",
]

BIT_ORDER = "qubit0-msb-first;circuits-in-submission-order"


class AbortedTranscriptError(RuntimeError):
    pass


def required_seed_len(input_len: int, ell: int) -> int:
    if ell > input_len:
        raise ValueError(f"output length {ell} exceeds input length {input_len}")
    if ell < 0 or input_len < 1:
        raise ValueError("lengths must be non-negative and input non-empty")
    return input_len + ell - 1 if ell else 0


def seed_bits_from_key(key: bytes, nbits: int) -> np.ndarray:
    """Expand key material to ``nbits`` extractor-seed bits with SHAKE-256."""
    if nbits <= 0:
        return np.zeros(0, dtype=np.uint8)
    raw = hashlib.shake_256(b"certrand/toeplitz-seed/" + key).digest(-(-nbits // 8))
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:nbits]


def _as_bits(a, name: str) -> np.ndarray:
    b = np.asarray(a, dtype=np.uint8).ravel()
    if b.size and b.max() > 1:
        raise ValueError(f"{name} must contain only 0/1")
    return b


@dataclass(frozen=True)
class ToeplitzSpec:
    input_len: int
    output_len: int
    seed: np.ndarray

    def __post_init__(self):
        seed = _as_bits(self.seed, "seed")
        object.__setattr__(self, "seed", seed)
        need = required_seed_len(self.input_len, self.output_len)
        if seed.size != need:
            raise ValueError(f"seed has {seed.size} bits, need {need}")

    @property
    def seed_digest(self) -> str:
        return hashlib.sha256(np.packbits(self.seed).tobytes() + self.seed.size.to_bytes(8, "big")).hexdigest()


def _pack_words(bits: np.ndarray, nwords: int) -> np.ndarray:
    buf = np.zeros(nwords * 64, dtype=np.uint8)
    buf[: bits.size] = bits
    return np.packbits(buf).view(">u8").astype(np.uint64)


def _parity64(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    for s in (32, 16, 8, 4, 2, 1):
        v ^= v >> np.uint64(s)
    return (v & np.uint64(1)).astype(np.uint8)


def _extract_packed(x: np.ndarray, seed: np.ndarray, ell: int) -> np.ndarray:
    n_in = x.size
    W = -(-n_in // 64)
    blocks = -(-ell // 64)
    xw = _pack_words(x[::-1], W)
    span = blocks + W + 1
    # shifted[r] holds seed[r:] packed, so row 64*j + r reads words j..j+W of shifted[r]
    shifted = np.stack([_pack_words(seed[r:], span) for r in range(64)])
    out = np.empty(blocks * 64, dtype=np.uint8)
    for j in range(blocks):
        acc = np.bitwise_xor.reduce(shifted[:, j : j + W] & xw, axis=1)
        out[64 * j : 64 * j + 64] = _parity64(acc)
    return out[:ell]


def _extract_fft(x: np.ndarray, seed: np.ndarray, ell: int) -> np.ndarray:
    # out[i] = sum_k seed[i + k] * xr[k]: a correlation, evaluated as a float FFT convolution
    n_in = x.size
    size = 1 << int(np.ceil(np.log2(seed.size + n_in)))
    fa = np.fft.rfft(seed.astype(float), size)
    fb = np.fft.rfft(x.astype(float), size)
    conv = np.fft.irfft(fa * fb, size)[n_in - 1 : n_in - 1 + ell]
    r = np.rint(conv)
    if np.abs(conv - r).max() > 0.25:
        raise ArithmeticError("FFT rounding error too large for exact GF(2) product")
    return (r.astype(np.int64) & 1).astype(np.uint8)


def toeplitz_extract(bits, spec: ToeplitzSpec, method: str = "packed") -> np.ndarray:
    """Return T x over GF(2) as ``spec.output_len`` bits."""
    x = _as_bits(bits, "input")
    if x.size != spec.input_len:
        raise ValueError(f"input has {x.size} bits, spec expects {spec.input_len}")
    if spec.output_len == 0:
        return np.zeros(0, dtype=np.uint8)
    if method == "packed":
        return _extract_packed(x, spec.seed, spec.output_len)
    if method == "fft":
        return _extract_fft(x, spec.seed, spec.output_len)
    raise ValueError(f"unknown method {method!r}")


def bits_from_samples(samples: Iterable[int], n: int) -> np.ndarray:
    """Concatenate n-bit samples, qubit 0 (most significant bit) first."""
    xs = np.asarray(list(samples), dtype=np.uint64)
    if xs.size and int(xs.max()) >> n:
        raise ValueError(f"sample does not fit in {n} bits")
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    return ((xs[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8).ravel()


@dataclass
class ExtractionResult:
    output: np.ndarray
    manifest: dict

    def output_bytes(self) -> bytes:
        return np.packbits(self.output).tobytes()


def extract_transcript(
    samples: Sequence[int],
    n: int,
    seed,
    ell: int,
    *,
    aborted: bool = False,
    eps_sou: float | None = None,
    Q_min: int | None = None,
    H_min: int | None = None,
    method: str = "packed",
) -> ExtractionResult:
    """Hash the kept samples of a passing run down to ``ell`` bits."""
    if aborted:
        raise AbortedTranscriptError("refusing to extract from an aborted protocol run")
    x = bits_from_samples(samples, n)
    seed_bits = _as_bits(seed, "seed")
    if ell == 0:
        seed_bits = seed_bits[:0]
    spec = ToeplitzSpec(x.size, ell, seed_bits[: required_seed_len(x.size, ell)])
    out = toeplitz_extract(x, spec, method=method)
    manifest = {
        "input_len": int(x.size),
        "ell": int(ell),
        "seed_len": int(spec.seed.size),
        "seed_digest": spec.seed_digest,
        "eps_sou": eps_sou,
        "Q_min": Q_min,
        "H_min": H_min,
        "bit_order": BIT_ORDER,
        "output_sha256": hashlib.sha256(np.packbits(out).tobytes()).hexdigest(),
    }
    return ExtractionResult(out, manifest)


def write_extraction(res: ExtractionResult, out_path: str | Path) -> Path:
    """Write raw output bytes and a JSON manifest next to them (``<out>.manifest.json``)."""
    out_path = Path(out_path)
    out_path.write_bytes(res.output_bytes())
    man = out_path.with_name(out_path.name + ".manifest.json")
    man.write_text(json.dumps(res.manifest, indent=2, sort_keys=True) + "\n")
    return man
