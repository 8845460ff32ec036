import hashlib
import hmac
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg, stats as sps

from certrand.circuits import (
    CircuitParseError,
    SeedMaterial,
    SU2Gate,
    Topology,
    circuit_digest,
    gen_circuit,
    gen_topology,
    parse_circuit,
    parse_topology,
    serialize_circuit,
    serialize_topology,
    u_zz,
)

SEED = SeedMaterial.from_hex("00c0ffee")


@pytest.mark.parametrize("n,d", [(4, 3), (8, 7), (14, 10), (56, 10), (56, 20)])
def test_topology_regular_and_simple(n, d):
    t = gen_topology(n, d, topo_seed=7)
    assert t.is_simple
    assert t.degrees() == [d] * n
    assert len(t.edges) == n * d // 2


def test_topology_deterministic():
    assert gen_topology(20, 8, 3) == gen_topology(20, 8, 3)
    assert gen_topology(20, 8, 3) != gen_topology(20, 8, 4)


@pytest.mark.parametrize("n,d", [(3, 2), (0, 1), (8, 8), (8, 0)])
def test_topology_rejects(n, d):
    with pytest.raises(ValueError):
        gen_topology(n, d, 0)


def test_topology_repeats_mode():
    t = gen_topology(8, 10, 1, allow_repeats=True)
    assert t.degrees() == [10] * 8
    assert not t.is_simple
    # each block of n - 1 layers is still a one-factorization
    block = [e for layer in t.layers[:7] for e in layer]
    assert len(set(block)) == len(block) == 28


def test_topology_validation():
    with pytest.raises(ValueError, match="perfect matching"):
        Topology(4, 1, (((0, 1), (1, 2)),))
    with pytest.raises(ValueError, match="repeats"):
        Topology(4, 2, (((0, 1), (2, 3)), ((1, 0), (2, 3))))


def test_words_match_hmac_oracle():
    words = SEED.words(b"certrand/gates", 5)
    got = [next(words) for _ in range(12)]
    ref = []
    for ctr in range(2):
        msg = b"certrand/gates" + struct.pack(">QQ", 5, ctr)
        ref += struct.unpack(">8I", hmac.new(bytes.fromhex("00c0ffee"), msg, hashlib.sha256).digest())
    assert got == ref[:12]


def test_seed_rejects_short_key():
    with pytest.raises(ValueError):
        SeedMaterial(b"abc")


@given(st.floats(0, np.pi), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
@settings(max_examples=50)
def test_su2_matches_rotation_product(theta, phi, lam):
    def rz(a):
        return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])

    ry = np.array([[np.cos(theta / 2), -np.sin(theta / 2)], [np.sin(theta / 2), np.cos(theta / 2)]])
    u = SU2Gate(theta, phi, lam).matrix()
    np.testing.assert_allclose(u, rz(phi) @ ry @ rz(lam), atol=1e-12)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)
    assert np.linalg.det(u) == pytest.approx(1.0)


def test_u_zz_matches_expm():
    z = np.diag([1.0, -1.0])
    ref = linalg.expm(-0.25j * np.pi * np.kron(z, z))
    np.testing.assert_allclose(np.diag(u_zz()), ref, atol=1e-12)


def test_gate_angles_haar_marginal():
    c = gen_circuit(gen_topology(56, 10, 0), SEED, 0)
    gates = [g for layer in c.gate_layers for g in layer]
    # for Haar SU(2), |U_00|^2 = cos^2(theta/2) is uniform on [0, 1]
    u00 = np.array([np.cos(g.theta / 2) ** 2 for g in gates])
    assert sps.kstest(u00, "uniform").pvalue > 1e-3
    assert sps.kstest(np.array([g.phi for g in gates]) / (2 * np.pi), "uniform").pvalue > 1e-3


def test_circuit_counts():
    c = gen_circuit(gen_topology(56, 10, 0), SEED, 3)
    assert (c.n, c.d, c.n_single, c.n_two) == (56, 10, 616, 280)


def test_serialize_round_trip_bit_exact():
    topo = gen_topology(56, 10, 0)
    c = gen_circuit(topo, SEED, 12345)
    raw = serialize_circuit(c)
    assert 38_000 < len(raw) < 45_000
    back = parse_circuit(raw)
    assert back == c
    assert serialize_circuit(back) == raw


def test_digest_stable_and_seed_sensitive():
    topo = gen_topology(14, 10, 0)
    a = circuit_digest(serialize_circuit(gen_circuit(topo, SEED, 0)))
    assert a == circuit_digest(serialize_circuit(gen_circuit(topo, SEED, 0)))
    assert a != circuit_digest(serialize_circuit(gen_circuit(topo, SEED, 1)))
    assert a != circuit_digest(serialize_circuit(gen_circuit(topo, SeedMaterial.from_hex("00c0ffef"), 0)))


def test_topology_round_trip():
    t = gen_topology(10, 6, 42)
    back, seed = parse_topology(serialize_topology(t, 42))
    assert back == t and seed == "42"


@pytest.mark.parametrize(
    "mutate,needle",
    [
        (lambda s: s.replace(b"n: 8\n", b""), "n"),
        (lambda s: s.replace(b"certrand-circuit 1", b"certrand-circuit 9"), "version"),
        (lambda s: s[: len(s) // 2], None),
        (lambda s: s.replace(b"gates.0: ", b"gates.0: zz,"), None),
    ],
)
def test_parse_errors_name_position(mutate, needle):
    raw = serialize_circuit(gen_circuit(gen_topology(8, 4, 0), SEED, 0))
    with pytest.raises(CircuitParseError) as ei:
        parse_circuit(mutate(raw))
    if needle:
        assert needle in str(ei.value)
    assert ei.value.position is not None
