"""Post-hoc XEB verification of a completed transcript."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuits import SeedMaterial
from ..simulator import ProbabilityCache
from ..stats import xeb_score
from .client import CircuitSource
from .transcript import Transcript

__all__ = ["select_test_set", "Verification", "verify"]


def select_test_set(M_keep: int, m: int, seed: SeedMaterial, nonce: str = "") -> np.ndarray:
    """Sorted positions (into the kept samples) of the m circuits to simulate.

    The choice is keyed by the seed and a client-side nonce, so it is
    reproducible by the verifier but not predictable from the circuits alone.
    """
    if not 1 <= m <= M_keep:
        raise ValueError(f"need 1 <= m <= M_keep, got m={m}, M_keep={M_keep}")
    key = seed.derive(b"certrand/test-set/" + nonce.encode("utf-8"))
    rng = np.random.default_rng(int.from_bytes(key, "big"))
    return np.sort(rng.choice(M_keep, size=m, replace=False))


@dataclass
class Verification:
    xeb: float
    chi: float
    test_set: np.ndarray
    probs: np.ndarray

    @property
    def passed(self) -> bool:
        return self.xeb >= self.chi


def verify(
    transcript: Transcript,
    source: CircuitSource,
    m: int,
    chi: float,
    *,
    nonce: str = "",
    cache: ProbabilityCache | None = None,
) -> Verification:
    """Simulate the test circuits and score their returned bitstrings."""
    cache = cache if cache is not None else ProbabilityCache()
    kept = transcript.kept_samples()
    V = select_test_set(len(kept), m, source.seed, nonce)
    probs = np.empty(m)
    for k, i in enumerate(V):
        cid, x = kept[i]
        dist = cache.get(source.key(cid), lambda cid=cid: source.circuit(cid))
        probs[k] = dist.probs[x]
    return Verification(xeb_score(probs, transcript.n), chi, V, probs)
