"""Seed-reproducible challenge circuits.

A circuit on ``n`` qubits is ``d + 1`` layers of SU(2) gates interleaved
with ``d`` layers of ZZ(pi/2) gates.  The two-qubit layers come from a fixed
random topology: ``d`` perfect matchings with no repeated edge, which is an
edge colouring of a random d-regular graph.

Bitstrings are integers with qubit 0 as the most significant bit.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import random
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "SCHEME",
    "FORMAT_VERSION",
    "Topology",
    "SU2Gate",
    "ChallengeCircuit",
    "SeedMaterial",
    "CircuitParseError",
    "TopologyError",
    "gen_topology",
    "gen_circuit",
    "gen_circuits",
    "serialize_circuit",
    "parse_circuit",
    "serialize_topology",
    "parse_topology",
    "u_zz",
    "circuit_digest",
]

SCHEME = "hmac-sha256-ctr/v1"
FORMAT_VERSION = 1
RETRY_LIMIT = 10_000
_GRID = 2.0**-32


class TopologyError(RuntimeError):
    pass


class CircuitParseError(ValueError):
    """Malformed circuit or topology text; ``position`` is a byte offset."""

    def __init__(self, msg: str, position: int | None = None):
        super().__init__(msg if position is None else f"{msg} (at byte {position})")
        self.position = position


Pair = tuple[int, int]


@dataclass(frozen=True)
class Topology:
    n: int
    d: int
    layers: tuple[tuple[Pair, ...], ...]

    def __post_init__(self):
        if len(self.layers) != self.d:
            raise ValueError(f"expected {self.d} layers, got {len(self.layers)}")
        # a simple d-regular graph needs d <= n - 1; deeper circuits reuse edges
        # only across blocks of n - 1 layers
        block = max(1, self.n - 1)
        seen: set[Pair] = set()
        for k, layer in enumerate(self.layers):
            if k % block == 0:
                seen = set()
            qubits = [q for p in layer for q in p]
            if sorted(qubits) != list(range(self.n)):
                raise ValueError(f"layer {k} is not a perfect matching on {self.n} qubits")
            for a, b in layer:
                e = (min(a, b), max(a, b))
                if e in seen:
                    raise ValueError(f"edge {e} repeats in layer {k}")
                seen.add(e)

    @property
    def is_simple(self) -> bool:
        return len(set(self.edges)) == len(self.edges)

    @property
    def edges(self) -> list[Pair]:
        return [p for layer in self.layers for p in layer]

    def degrees(self) -> list[int]:
        deg = [0] * self.n
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


def _random_matching(n: int, used: set[Pair], rng: random.Random) -> list[Pair] | None:
    # randomized depth-first search for a perfect matching avoiding used edges
    free = list(range(n))
    out: list[Pair] = []
    budget = [4 * n * n]

    def rec(rest: list[int]) -> bool:
        if not rest:
            return True
        budget[0] -= 1
        if budget[0] < 0:
            return False
        a = rest[0]
        cands = [b for b in rest[1:] if (a, b) not in used]
        rng.shuffle(cands)
        for b in cands:
            out.append((a, b))
            if rec([q for q in rest[1:] if q != b]):
                return True
            out.pop()
        return False

    return out if rec(free) else None


def gen_topology(n: int, d: int, topo_seed: int | str | bytes, allow_repeats: bool = False) -> Topology:
    """Sample ``d`` edge-disjoint random perfect matchings on ``n`` qubits.

    Each layer is drawn in turn; a layer that cannot be completed without
    reusing an edge restarts the whole draw.  Deterministic in ``topo_seed``.

    ``allow_repeats`` permits d > n - 1 (small-n studies): layers then come
    in edge-disjoint blocks of n - 1 and edges may repeat across blocks.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    if d < 1 or (d > n - 1 and not allow_repeats):
        raise ValueError(f"d must be in [1, {n - 1}], got {d}")
    rng = random.Random(topo_seed)
    for _ in range(RETRY_LIMIT):
        used: set[Pair] = set()
        layers = []
        for k in range(d):
            if k % (n - 1) == 0:
                used = set()
            m = _random_matching(n, used, rng)
            if m is None:
                break
            layers.append(tuple(m))
            used.update(m)
        else:
            return Topology(n, d, tuple(layers))
    raise TopologyError(f"no {d}-layer topology on {n} qubits after {RETRY_LIMIT} attempts")


@dataclass(frozen=True)
class SU2Gate:
    """ZYZ-parametrized special unitary: Rz(phi) Ry(theta) Rz(lam)."""

    theta: float
    phi: float
    lam: float

    def matrix(self) -> np.ndarray:
        c = math.cos(self.theta / 2)
        s = math.sin(self.theta / 2)
        sp = 0.5 * (self.phi + self.lam)
        sm = 0.5 * (self.phi - self.lam)
        return np.array(
            [
                [c * complex(math.cos(sp), -math.sin(sp)), -s * complex(math.cos(sm), -math.sin(sm))],
                [s * complex(math.cos(sm), math.sin(sm)), c * complex(math.cos(sp), math.sin(sp))],
            ]
        )

    @classmethod
    def from_words(cls, w_theta: int, w_phi: int, w_lam: int) -> "SU2Gate":
        # cos(theta) uniform on a 2^-32 grid gives the Haar marginal sin(theta) dtheta / 2
        return cls(
            theta=math.acos(1.0 - 2.0 * w_theta * _GRID),
            phi=2.0 * math.pi * w_phi * _GRID,
            lam=2.0 * math.pi * w_lam * _GRID,
        )


def u_zz() -> np.ndarray:
    """Diagonal of exp(-i pi/4 Z x Z) in the |00>,|01>,|10>,|11> basis."""
    a = complex(math.cos(math.pi / 4), -math.sin(math.pi / 4))
    return np.array([a, a.conjugate(), a.conjugate(), a])


@dataclass(frozen=True)
class SeedMaterial:
    k_seed: bytes
    scheme: str = SCHEME

    def __post_init__(self):
        if len(self.k_seed) < 4:
            raise ValueError("K_seed must be at least 32 bits")
        if self.scheme != SCHEME:
            raise ValueError(f"unsupported derivation scheme {self.scheme!r}")

    @classmethod
    def from_hex(cls, text: str) -> "SeedMaterial":
        return cls(bytes.fromhex(text))

    def words(self, domain: bytes, index: int) -> Iterator[int]:
        """Endless stream of 32-bit words: HMAC-SHA256(K_seed, domain || index || counter)."""
        ctr = 0
        head = domain + struct.pack(">Q", index)
        while True:
            block = hmac.new(self.k_seed, head + struct.pack(">Q", ctr), hashlib.sha256).digest()
            yield from struct.unpack(">8I", block)
            ctr += 1

    def derive(self, domain: bytes, nbytes: int = 32) -> bytes:
        return hmac.new(self.k_seed, b"derive/" + domain, hashlib.sha256).digest()[:nbytes]


@dataclass(frozen=True)
class ChallengeCircuit:
    circuit_id: int
    topology: Topology
    gate_layers: tuple[tuple[SU2Gate, ...], ...]

    def __post_init__(self):
        if len(self.gate_layers) != self.topology.d + 1:
            raise ValueError("need d + 1 single-qubit layers")
        if any(len(layer) != self.n for layer in self.gate_layers):
            raise ValueError(f"every single-qubit layer needs {self.n} gates")

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def d(self) -> int:
        return self.topology.d

    @property
    def n_single(self) -> int:
        return (self.d + 1) * self.n

    @property
    def n_two(self) -> int:
        return self.d * (self.n // 2)


def gen_circuit(topology: Topology, seed: SeedMaterial, circuit_id: int) -> ChallengeCircuit:
    """Derive the SU(2) layers of circuit ``circuit_id`` from the client seed."""
    words = seed.words(b"certrand/gates", circuit_id)
    layers = []
    for _ in range(topology.d + 1):
        layers.append(tuple(SU2Gate.from_words(next(words), next(words), next(words)) for _ in range(topology.n)))
    return ChallengeCircuit(circuit_id, topology, tuple(layers))


def gen_circuits(topology: Topology, seed: SeedMaterial, ids: Sequence[int]) -> list[ChallengeCircuit]:
    return [gen_circuit(topology, seed, i) for i in ids]


# text format ----------------------------------------------------------------
#
#   certrand-circuit <version>
#   circuit_id: <int>
#   n: <int>
#   d: <int>
#   edges.<k>: <a>-<b> <a>-<b> ...           one line per two-qubit layer
#   gates.<k>: <t>,<p>,<l> <t>,<p>,<l> ...   one line per SU(2) layer, C99 hex floats
#
# Lines end with "\n", fields are separated by single spaces, encoding is ASCII.


def _topology_lines(t: Topology) -> list[str]:
    return [f"edges.{k}: " + " ".join(f"{a}-{b}" for a, b in layer) for k, layer in enumerate(t.layers)]


def serialize_circuit(c: ChallengeCircuit) -> bytes:
    lines = [f"certrand-circuit {FORMAT_VERSION}", f"circuit_id: {c.circuit_id}", f"n: {c.n}", f"d: {c.d}"]
    lines += _topology_lines(c.topology)
    for k, layer in enumerate(c.gate_layers):
        lines.append(f"gates.{k}: " + " ".join(f"{g.theta.hex()},{g.phi.hex()},{g.lam.hex()}" for g in layer))
    return ("\n".join(lines) + "\n").encode("ascii")


def serialize_topology(t: Topology, topo_seed=None) -> bytes:
    lines = [f"certrand-topology {FORMAT_VERSION}", f"n: {t.n}", f"d: {t.d}"]
    if topo_seed is not None:
        lines.append(f"topo_seed: {topo_seed}")
    lines += _topology_lines(t)
    return ("\n".join(lines) + "\n").encode("ascii")


class _Reader:
    def __init__(self, data: bytes, magic: str):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as e:
            raise CircuitParseError("non-ASCII byte", e.start) from None
        self.items: list[tuple[int, str]] = []
        pos = 0
        for line in text.split("\n"):
            self.items.append((pos, line))
            pos += len(line) + 1
        if self.items and self.items[-1][1] == "":
            self.items.pop()
        self.i = 0
        self.end = len(data)
        head = self._next_raw("header")
        parts = head[1].split(" ")
        if len(parts) != 2 or parts[0] != magic:
            raise CircuitParseError(f"expected '{magic} <version>' header", head[0])
        if parts[1] != str(FORMAT_VERSION):
            raise CircuitParseError(f"unsupported version {parts[1]!r}, expected {FORMAT_VERSION}", head[0])

    def _next_raw(self, name: str) -> tuple[int, str]:
        if self.i >= len(self.items):
            raise CircuitParseError(f"missing field '{name}'", self.end)
        item = self.items[self.i]
        self.i += 1
        return item

    def peek_key(self) -> str | None:
        if self.i >= len(self.items):
            return None
        return self.items[self.i][1].split(":", 1)[0]

    def field(self, name: str) -> tuple[int, str]:
        pos, line = self._next_raw(name)
        key, sep, value = line.partition(": ")
        if key != name or not sep:
            if line.partition(":")[0] == name:
                raise CircuitParseError(f"malformed field '{name}'", pos)
            raise CircuitParseError(f"missing field '{name}' (found {key!r})", pos)
        return pos + len(key) + 2, value

    def int_field(self, name: str) -> int:
        pos, v = self.field(name)
        try:
            return int(v)
        except ValueError:
            raise CircuitParseError(f"field '{name}' is not an integer: {v!r}", pos) from None

    def done(self) -> None:
        if self.i < len(self.items):
            raise CircuitParseError("trailing data", self.items[self.i][0])


def _parse_edges(r: _Reader, n: int, d: int) -> Topology:
    layers = []
    for k in range(d):
        pos, v = r.field(f"edges.{k}")
        pairs = []
        for tok in v.split(" "):
            a, sep, b = tok.partition("-")
            if not sep or not a.isdigit() or not b.isdigit():
                raise CircuitParseError(f"bad pair {tok!r} in 'edges.{k}'", pos)
            pairs.append((int(a), int(b)))
            pos += len(tok) + 1
        if len(pairs) != n // 2:
            raise CircuitParseError(f"field 'edges.{k}' has {len(pairs)} of {n // 2} pairs", pos)
        layers.append(tuple(pairs))
    try:
        return Topology(n, d, tuple(layers))
    except ValueError as e:
        raise CircuitParseError(f"invalid topology: {e}") from None


def _parse_header(r: _Reader) -> tuple[int, int]:
    n = r.int_field("n")
    d = r.int_field("d")
    if n < 1 or d < 0:
        raise CircuitParseError(f"invalid sizes n={n}, d={d}")
    return n, d


def parse_circuit(data: bytes) -> ChallengeCircuit:
    """Inverse of :func:`serialize_circuit`; raises CircuitParseError with a byte offset."""
    r = _Reader(data, "certrand-circuit")
    cid = r.int_field("circuit_id")
    n, d = _parse_header(r)
    topo = _parse_edges(r, n, d)
    layers = []
    for k in range(d + 1):
        pos, v = r.field(f"gates.{k}")
        toks = v.split(" ") if v else []
        if len(toks) != n:
            raise CircuitParseError(f"field 'gates.{k}' has {len(toks)} of {n} gates", pos)
        gates = []
        for tok in toks:
            parts = tok.split(",")
            try:
                if len(parts) != 3:
                    raise ValueError
                gates.append(SU2Gate(*(float.fromhex(p) for p in parts)))
            except ValueError:
                raise CircuitParseError(f"bad angle triple {tok!r} in 'gates.{k}'", pos) from None
            pos += len(tok) + 1
        layers.append(tuple(gates))
    r.done()
    return ChallengeCircuit(cid, topo, tuple(layers))


def parse_topology(data: bytes) -> tuple[Topology, str | None]:
    r = _Reader(data, "certrand-topology")
    n, d = _parse_header(r)
    seed = None
    if r.peek_key() == "topo_seed":
        seed = r.field("topo_seed")[1]
    topo = _parse_edges(r, n, d)
    r.done()
    return topo, seed


def circuit_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
