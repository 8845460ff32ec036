import math
from functools import reduce

import numpy as np
import pytest
from scipy import stats as sps

from certrand import simulator
from certrand.circuits import SeedMaterial, gen_circuit, gen_topology
from certrand.simulator import (
    CapacityError,
    DepolarizedOracle,
    Distribution,
    ExactOracle,
    ProbabilityCache,
    StateVector,
    amplitude_prob,
    bits_to_int,
    frugal_rejection_sample,
    int_to_bits,
    pt_diagnostics,
    pt_ideal_entropy,
    run_statevector,
    sample_exact,
    sample_fidelity,
)

SEED = SeedMaterial.from_hex("00c0ffee")


def circuit(n, d=6, cid=0, topo_seed=0):
    return gen_circuit(gen_topology(n, d, topo_seed, allow_repeats=d > n - 1), SEED, cid)


def dense_state(c):
    """Reference simulation with full 2^n x 2^n matrices."""
    n = c.n
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1
    idx = np.arange(1 << n)
    for k, layer in enumerate(c.gate_layers):
        if k:
            diag = np.ones(1 << n, dtype=complex)
            for a, b in c.topology.layers[k - 1]:
                za = 1 - 2 * ((idx >> (n - 1 - a)) & 1)
                zb = 1 - 2 * ((idx >> (n - 1 - b)) & 1)
                diag *= np.exp(-0.25j * np.pi * za * zb)
            psi = diag * psi
        psi = reduce(np.kron, [g.matrix() for g in layer]) @ psi
    return psi


@pytest.mark.parametrize("n,d,cid", [(2, 1, 0), (4, 3, 1), (6, 5, 2), (6, 8, 3)])
def test_statevector_matches_dense(n, d, cid):
    c = circuit(n, d, cid)
    np.testing.assert_allclose(run_statevector(c).amplitudes, dense_state(c), atol=1e-12)


def test_pairwise_zz_path_matches_cached(monkeypatch):
    c = circuit(8, 7, 4)
    ref = run_statevector(c).amplitudes
    monkeypatch.setattr(simulator, "_ZZ_CACHE_MAX_N", 0)
    np.testing.assert_allclose(run_statevector(c).amplitudes, ref, atol=1e-12)


def test_norm_preserved():
    sv = run_statevector(circuit(12, 10, 5))
    assert sv.norm() == pytest.approx(1.0, abs=1e-12)


def test_capacity():
    with pytest.raises(CapacityError):
        run_statevector(circuit(6), cap=4)


def test_bit_helpers():
    assert bits_to_int("100", 3) == 4
    assert int_to_bits(4, 3) == "100"
    with pytest.raises(ValueError):
        bits_to_int("12", 2)
    with pytest.raises(ValueError):
        bits_to_int(8, 3)
    sv = run_statevector(circuit(4, 3))
    assert amplitude_prob(sv, "0101") == pytest.approx(sv.probs[5])


def test_qubit_zero_is_msb():
    # X-like gate on qubit 0 only: theta = pi flips |0> to |1>
    from certrand.circuits import ChallengeCircuit, SU2Gate, Topology

    topo = Topology(2, 1, (((0, 1),),))
    flip, ident = SU2Gate(math.pi, 0.0, 0.0), SU2Gate(0.0, 0.0, 0.0)
    c = ChallengeCircuit(0, topo, ((flip, ident), (ident, ident)))
    assert run_statevector(c).probs[0b10] == pytest.approx(1.0)


def test_sample_exact_chi_square(rng):
    sv = run_statevector(circuit(6, 4, 2))
    xs = sample_exact(sv, rng, 200_000)
    counts = np.bincount(xs, minlength=64)
    p = sv.probs / sv.probs.sum()
    assert sps.chisquare(counts, p * xs.size).pvalue > 1e-3


def test_sample_accepts_distribution_and_array(rng):
    sv = run_statevector(circuit(4, 3))
    d = Distribution.from_state(sv)
    for src in (sv, d, sv.probs):
        x = sample_exact(src, rng)
        assert 0 <= x < 16


@pytest.mark.parametrize("phi", [0.0, 0.3, 1.0])
def test_sample_fidelity_xeb_mean(rng, phi):
    sv = run_statevector(circuit(12, 10, 1))
    xs = sample_fidelity(sv, phi, rng, 20_000)
    w = (1 << 12) * sv.probs[xs]
    assert w.mean() - 1 == pytest.approx(phi, abs=4 * w.std() / math.sqrt(w.size))


def test_sample_fidelity_rejects_bad_phi(rng):
    with pytest.raises(ValueError):
        sample_fidelity(np.full(4, 0.25), 1.5, rng)


def test_depolarized_oracle():
    p = np.array([0.7, 0.1, 0.1, 0.1])
    o = DepolarizedOracle(p, 0.5)
    np.testing.assert_allclose(o(np.arange(4)), 0.5 * p + 0.125)
    assert ExactOracle(p)(np.array([0]))[0] == 0.7


def test_frugal_sampling_xeb(rng):
    sv = run_statevector(circuit(10, 8, 6))
    oracle = ExactOracle(sv.probs)
    xs = np.array([frugal_rejection_sample(oracle, 64, rng, max_rounds=None) for _ in range(4000)])
    w = (1 << 10) * sv.probs[xs]
    assert w.mean() - 1 == pytest.approx(1.0, abs=4 * w.std() / math.sqrt(w.size))


def test_frugal_single_round_may_fail(rng):
    # with p(x) = 0 except one string, one round of M'=1 usually rejects
    p = np.zeros(1 << 8)
    p[3] = 1.0
    out = [frugal_rejection_sample(ExactOracle(p), 1, rng, max_rounds=1) for _ in range(200)]
    assert None in out
    assert {x for x in out if x is not None} <= {3}


def test_frugal_validates(rng):
    with pytest.raises(ValueError):
        frugal_rejection_sample(ExactOracle(np.full(4, 0.25)), 5, rng)
    with pytest.raises(ValueError):
        frugal_rejection_sample(ExactOracle(np.full(4, 0.25)), 0, rng)


def test_probability_cache_lru():
    cache = ProbabilityCache(max_bytes=3 * (1 << 8) * 8)
    cs = [circuit(8, 7, i) for i in range(4)]
    for i, c in enumerate(cs):
        cache.get(f"k{i}", c)
    assert len(cache) == 3 and cache.misses == 4
    cache.get("k3", lambda: pytest.fail("should be cached"))
    assert cache.hits == 1
    d = cache.get("k0", cs[0])
    assert cache.misses == 5
    np.testing.assert_allclose(d.probs, run_statevector(cs[0]).probs)


def test_pt_diagnostics_reference_cases(rng):
    n = 14
    N = 1 << n
    pt = rng.exponential(size=N)
    pt /= pt.sum()
    h, tvd = pt_diagnostics(pt)
    assert tvd < 0.05
    assert h == pytest.approx(pt_ideal_entropy(n), abs=0.05)
    h_u, tvd_u = pt_diagnostics(np.full(N, 1.0 / N))
    assert h_u == pytest.approx(n) and tvd_u > 0.5


def test_pt_entropy_formula():
    assert pt_ideal_entropy(10) == pytest.approx(10 - (1 - np.euler_gamma) / math.log(2))


def test_statevector_zero():
    sv = StateVector.zero(3)
    assert sv.probs[0] == 1 and sv.norm() == 1
