"""Statevector simulation, samplers and Porter-Thomas diagnostics.

Index ``x`` of the amplitude vector is the bitstring with qubit 0 as its most
significant bit.  Samplers take an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np

from .circuits import ChallengeCircuit

__all__ = [
    "DEFAULT_CAP",
    "CapacityError",
    "StateVector",
    "ProbOracle",
    "ExactOracle",
    "DepolarizedOracle",
    "Distribution",
    "ProbabilityCache",
    "run_statevector",
    "amplitude_prob",
    "sample_exact",
    "sample_fidelity",
    "frugal_rejection_sample",
    "pt_diagnostics",
    "pt_histogram_edges",
    "pt_ideal_entropy",
    "bits_to_int",
    "int_to_bits",
]

DEFAULT_CAP = 24
EULER_GAMMA = 0.5772156649015329


class CapacityError(ValueError):
    pass


def bits_to_int(x: str | int, n: int) -> int:
    if isinstance(x, str):
        if len(x) != n or set(x) - {"0", "1"}:
            raise ValueError(f"bitstring {x!r} is not {n} binary digits")
        return int(x, 2)
    x = int(x)
    if not 0 <= x < (1 << n):
        raise ValueError(f"bitstring index {x} out of range for n={n}")
    return x


def int_to_bits(x: int, n: int) -> str:
    return format(x, f"0{n}b")


@dataclass
class StateVector:
    n: int
    amplitudes: np.ndarray
    _cdf: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        a = np.zeros(1 << n, dtype=complex)
        a[0] = 1.0
        return cls(n, a)

    @property
    def probs(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def cdf(self) -> np.ndarray:
        if self._cdf is None:
            self._cdf = np.cumsum(self.probs)
        return self._cdf


def _apply_1q(state: np.ndarray, n: int, q: int, u: np.ndarray) -> None:
    v = state.reshape(1 << q, 2, 1 << (n - q - 1))
    a0 = v[:, 0, :].copy()
    a1 = v[:, 1, :]
    v[:, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    v[:, 1, :] = u[1, 0] * a0 + u[1, 1] * a1


def _zz_sign(n: int, layer) -> np.ndarray:
    # sum over pairs of z_a z_b with z = +1 for bit 0, -1 for bit 1
    idx = np.arange(1 << n, dtype=np.int64)
    s = np.zeros(1 << n, dtype=np.int8)
    for a, b in layer:
        par = ((idx >> (n - 1 - a)) ^ (idx >> (n - 1 - b))) & 1
        s += (1 - 2 * par).astype(np.int8)
    return s


@lru_cache(maxsize=8)
def _zz_phases(n: int, layer: tuple) -> np.ndarray:
    ph = np.exp(-0.25j * math.pi * _zz_sign(n, layer))
    ph.setflags(write=False)
    return ph


_ZZ_CACHE_MAX_N = 16


def _apply_zz_layer(state: np.ndarray, n: int, layer) -> None:
    if n <= _ZZ_CACHE_MAX_N:
        state *= _zz_phases(n, tuple(layer))
        return
    diag = np.array([[1, 1j], [1j, 1]]) * complex(math.cos(math.pi / 4), -math.sin(math.pi / 4))
    for a, b in layer:
        a, b = min(a, b), max(a, b)
        v = state.reshape(1 << a, 2, 1 << (b - a - 1), 2, 1 << (n - b - 1))
        v *= diag[None, :, None, :, None]


def run_statevector(c: ChallengeCircuit, cap: int = DEFAULT_CAP) -> StateVector:
    """Apply the d+1 SU(2) layers and d ZZ layers of ``c`` to |0...0>."""
    n = c.n
    if n > cap:
        raise CapacityError(f"{n} qubits exceeds the statevector cap of {cap}")
    sv = StateVector.zero(n)
    psi = sv.amplitudes
    for k, layer in enumerate(c.gate_layers):
        if k:
            _apply_zz_layer(psi, n, c.topology.layers[k - 1])
        for q, g in enumerate(layer):
            _apply_1q(psi, n, q, g.matrix())
    return sv


def amplitude_prob(state: StateVector, x: str | int) -> float:
    """|<x|psi>|^2 for a bitstring given as text or integer index."""
    i = bits_to_int(x, state.n)
    return float(abs(state.amplitudes[i]) ** 2)


def _as_probs(state) -> tuple[int, np.ndarray]:
    if isinstance(state, StateVector):
        return state.n, state.cdf()
    if isinstance(state, Distribution):
        return state.n, state.cdf
    p = np.asarray(state, dtype=float)
    n = int(round(math.log2(p.size)))
    return n, np.cumsum(p)


def sample_exact(state: StateVector, rng: np.random.Generator, size: int | None = None):
    """Draw bitstring indices from |psi_x|^2."""
    _, cdf = _as_probs(state)
    u = rng.random(size) * cdf[-1]
    out = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return int(out) if size is None else out


def sample_fidelity(state: StateVector, phi: float, rng: np.random.Generator, size: int | None = None):
    """With probability phi an exact sample, otherwise a uniform bitstring."""
    if not 0.0 <= phi <= 1.0:
        raise ValueError(f"fidelity must be in [0, 1], got {phi}")
    n, _ = _as_probs(state)
    if size is None:
        if rng.random() < phi:
            return sample_exact(state, rng)
        return int(rng.integers(0, 1 << n))
    quantum = rng.random(size) < phi
    out = rng.integers(0, 1 << n, size=size)
    k = int(quantum.sum())
    if k:
        out[quantum] = sample_exact(state, rng, k)
    return out


class ProbOracle(Protocol):
    n: int

    def __call__(self, xs: np.ndarray) -> np.ndarray: ...


class ExactOracle:
    """Ideal output probabilities of a simulated circuit."""

    def __init__(self, probs: np.ndarray):
        self.probs = np.asarray(probs, dtype=float)
        self.n = int(round(math.log2(self.probs.size)))

    def __call__(self, xs):
        return self.probs[np.asarray(xs)]


class DepolarizedOracle(ExactOracle):
    """phi * p(x) + (1 - phi) / N, a stand-in for a partial tensor-network contraction."""

    def __init__(self, probs: np.ndarray, phi: float):
        super().__init__(probs)
        if not 0.0 <= phi <= 1.0:
            raise ValueError(f"fidelity must be in [0, 1], got {phi}")
        self.phi = phi

    def __call__(self, xs):
        return self.phi * self.probs[np.asarray(xs)] + (1.0 - self.phi) / self.probs.size


def _distinct_uniform(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    N = 1 << n
    if k > N:
        raise ValueError(f"cannot draw {k} distinct bitstrings from 2^{n}")
    if 4 * k >= N:
        return rng.permutation(N)[:k]
    out = np.unique(rng.integers(0, N, size=k))
    while out.size < k:
        extra = rng.integers(0, N, size=k - out.size)
        out = np.unique(np.concatenate([out, extra]))
    return rng.permutation(out)[:k]


def frugal_rejection_sample(
    oracle: ProbOracle, M_prime: int, rng: np.random.Generator, max_rounds: int | None = 1
) -> int | None:
    """Accept one of M' distinct uniform candidates with probability min(1, p(x) N / M').

    Returns the first accepted candidate.  With ``max_rounds=None`` a fresh
    candidate set is drawn until something is accepted; otherwise ``None`` is
    returned after ``max_rounds`` fully rejected sets.
    """
    if M_prime < 1:
        raise ValueError("M_prime must be >= 1")
    n = oracle.n
    N = float(1 << n)
    if M_prime > (1 << n):
        raise ValueError(f"M_prime={M_prime} exceeds 2^{n}")
    rounds = 0
    while max_rounds is None or rounds < max_rounds:
        rounds += 1
        cand = _distinct_uniform(n, M_prime, rng)
        acc = rng.random(M_prime) < np.minimum(1.0, oracle(cand) * N / M_prime)
        hit = np.flatnonzero(acc)
        if hit.size:
            return int(cand[hit[0]])
    return None


@dataclass(frozen=True)
class Distribution:
    """Output probabilities of one circuit; the running sum is rebuilt on demand."""

    n: int
    probs: np.ndarray

    @classmethod
    def from_state(cls, sv: StateVector) -> "Distribution":
        return cls(sv.n, sv.probs)

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    @property
    def nbytes(self) -> int:
        return self.probs.nbytes


class ProbabilityCache:
    """Bounded LRU of simulated output distributions, keyed by circuit text digest."""

    def __init__(self, max_bytes: int = 512 << 20, cap: int = DEFAULT_CAP):
        self.max_bytes = max_bytes
        self.cap = cap
        self._store: OrderedDict[str, Distribution] = OrderedDict()
        self._bytes = 0
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def get(self, key: str, circuit: ChallengeCircuit | Callable[[], ChallengeCircuit]) -> Distribution:
        dist = self._store.get(key)
        if dist is not None:
            self.hits += 1
            self._store.move_to_end(key)
            return dist
        self.misses += 1
        c = circuit() if callable(circuit) else circuit
        dist = Distribution.from_state(run_statevector(c, cap=self.cap))
        self._store[key] = dist
        self._bytes += dist.nbytes
        while self._bytes > self.max_bytes and len(self._store) > 1:
            _, old = self._store.popitem(last=False)
            self._bytes -= old.nbytes
        return dist


def pt_histogram_edges(bins: int = 64, lo: float = 1e-4, hi: float = 20.0) -> np.ndarray:
    """Log-spaced bin edges in w = N p; under/overflow bins are added by the caller."""
    return np.geomspace(lo, hi, bins + 1)


def _pt_bin_masses(edges: np.ndarray) -> np.ndarray:
    cdf = 1.0 - np.exp(-edges)
    inner = np.diff(cdf)
    return np.concatenate([[cdf[0]], inner, [1.0 - cdf[-1]]])


def pt_ideal_entropy(n: int) -> float:
    """Shannon entropy (bits) of a Porter-Thomas distribution on 2^n outcomes: n - (1 - gamma)/ln 2."""
    return n - (1.0 - EULER_GAMMA) / math.log(2.0)


def pt_diagnostics(c_or_probs, cap: int = DEFAULT_CAP, bins: int = 64) -> tuple[float, float]:
    """Shannon entropy in bits and histogram TVD to Porter-Thomas.

    The N values w = N p(x) are binned into ``bins`` log-spaced bins over
    [1e-4, 20] plus an underflow and an overflow bin, and compared with the
    Exp(1) mass of each bin.
    """
    if isinstance(c_or_probs, ChallengeCircuit):
        p = run_statevector(c_or_probs, cap=cap).probs
    elif isinstance(c_or_probs, (StateVector, Distribution)):
        p = c_or_probs.probs
    else:
        p = np.asarray(c_or_probs, dtype=float)
    N = p.size
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    edges = pt_histogram_edges(bins)
    w = N * p
    idx = np.searchsorted(edges, w, side="right")  # 0 = underflow, bins + 1 = overflow
    counts = np.bincount(idx, minlength=bins + 2)[: bins + 2] / N
    tvd = 0.5 * float(np.abs(counts - _pt_bin_masses(edges)).sum())
    return entropy, tvd
