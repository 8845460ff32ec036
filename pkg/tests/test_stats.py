import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats as sps
from scipy.integrate import trapezoid

from certrand.stats import (
    cdf_xeb_adversary,
    cdf_xeb_fidelity,
    cdf_xeb_mixture,
    cdf_xeb_uniform,
    hypergeom_pmf,
    pt_mixture_cdf,
    pt_mixture_pdf,
    reg_lower_gamma,
    reg_lower_gamma_vec,
    reg_upper_gamma,
    reg_upper_gamma_vec,
    sf_xeb_adversary,
    sf_xeb_fidelity,
    xeb_score,
)

# frozen from mpmath at 50 digits
MPMATH_P = [
    (0.5, 0.1, 0.34527915398142298, 0.65472084601857702),
    (10, 30, 0.99999287824913718, 7.1217508628155771e-6),
    (50, 65, 0.97648760219019132, 0.023512397809808676),
    (200, 260, 0.99995249987555699, 4.7500124443008756e-5),
    (1522, 1978.6, 1.0, 4.4817021914776058e-27),
    (3044, 1978.6, 3.3109557910655064e-109, 1.0),
]


@pytest.mark.parametrize("a,x,p,q", MPMATH_P)
def test_gamma_against_mpmath(a, x, p, q):
    assert reg_lower_gamma(a, x) == pytest.approx(p, rel=1e-11, abs=1e-300)
    assert reg_upper_gamma(a, x) == pytest.approx(q, rel=1e-9, abs=1e-300)


def test_gamma_against_scipy_random(rng):
    a = np.exp(rng.uniform(np.log(0.1), np.log(5000), 3000))
    x = a * np.exp(rng.normal(0, 0.3, a.size))
    ours = np.array([reg_lower_gamma(ai, xi) for ai, xi in zip(a, x)])
    ref = special.gammainc(a, x)
    assert np.max(np.abs(ours - ref)) < 1e-11


def test_gamma_vec_matches_scalar():
    a = np.arange(1, 400, 7.0)
    for x in (3.0, 150.0, 420.0):
        lo = reg_lower_gamma_vec(a, x)
        hi = reg_upper_gamma_vec(a, x)
        np.testing.assert_allclose(lo, [reg_lower_gamma(ai, x) for ai in a], rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(hi, [reg_upper_gamma(ai, x) for ai in a], rtol=1e-10, atol=1e-300)


@given(st.floats(0.05, 3000), st.floats(0, 5000))
@settings(max_examples=200, deadline=None)
def test_gamma_complement(a, x):
    p, q = reg_lower_gamma(a, x), reg_upper_gamma(a, x)
    assert 0.0 <= p <= 1.0 and 0.0 <= q <= 1.0
    assert p + q == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.5, 500), st.floats(0.01, 600), st.floats(0.01, 50))
@settings(max_examples=100, deadline=None)
def test_gamma_monotone_in_x(a, x, dx):
    assert reg_lower_gamma(a, x + dx) >= reg_lower_gamma(a, x) - 1e-14


@pytest.mark.parametrize("a,x", [(0, 1), (-1, 1), (1, -0.5)])
def test_gamma_domain(a, x):
    with pytest.raises(ValueError):
        reg_lower_gamma(a, x)


def test_gamma_at_zero():
    assert reg_lower_gamma(3.0, 0.0) == 0.0
    assert reg_upper_gamma(3.0, 0.0) == 1.0


def test_xeb_score_values():
    n = 3
    assert xeb_score([1 / 8] * 5, n) == pytest.approx(0.0)
    assert xeb_score([2 / 8, 2 / 8], n) == pytest.approx(1.0)


@pytest.mark.parametrize("probs", [[], [-0.1], [1.2]])
def test_xeb_score_rejects(probs):
    with pytest.raises(ValueError):
        xeb_score(probs, 4)


def test_uniform_is_fidelity_zero():
    for m, chi in [(50, 0.1), (200, 0.3), (1522, 0.02)]:
        assert cdf_xeb_fidelity(m, chi, 0.0) == pytest.approx(cdf_xeb_uniform(m, chi), rel=1e-12)


def test_full_fidelity_is_all_pt():
    assert cdf_xeb_fidelity(100, 0.8, 1.0) == pytest.approx(cdf_xeb_mixture(100, 0.8, 100), rel=1e-12)


def test_p_fail_operating_point():
    # binomial-Erlang mixture summed in mpmath at 30 digits
    assert cdf_xeb_fidelity(1522, 0.3, 0.3) == pytest.approx(0.503044009236687, rel=1e-9)


@pytest.mark.parametrize("m,chi,phi", [(200, 0.3, 0.3), (1522, 0.3, 0.3), (1522, 0.6, 0.1), (50, -0.2, 0.7)])
def test_fidelity_cdf_sf_complement(m, chi, phi):
    assert cdf_xeb_fidelity(m, chi, phi) + sf_xeb_fidelity(m, chi, phi) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_sf_deep_tail_positive():
    sf = sf_xeb_fidelity(1522, 0.3, 0.0)
    assert 0.0 < sf < 1e-20
    assert sf == pytest.approx(reg_upper_gamma(1522, 1522 * 1.3), rel=1e-9)


def test_adversary_cdf_brute_force():
    # explicit hypergeometric sum with mpmath-frozen total
    assert cdf_xeb_adversary(50, 5, 0.2, 20) == pytest.approx(0.405836614614537, rel=1e-10)
    total = sum(
        math.comb(20, l) * math.comb(30, 5 - l) / math.comb(50, 5) * cdf_xeb_mixture(5, 0.2, l) for l in range(6)
    )
    assert cdf_xeb_adversary(50, 5, 0.2, 20) == pytest.approx(total, rel=1e-12)


def test_adversary_monotone_in_L():
    vals = [sf_xeb_adversary(400, 60, 0.3, L) for L in range(0, 401, 25)]
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[0] == pytest.approx(1 - cdf_xeb_uniform(60, 0.3), rel=1e-10)


@pytest.mark.parametrize("M,L,m", [(50, 20, 5), (30010, 4590, 1522), (10, 10, 3)])
def test_hypergeom_pmf_vs_scipy(M, L, m):
    ls = np.arange(0, m + 1)
    ours = np.array([hypergeom_pmf(M, L, m, l) for l in ls])
    ref = sps.hypergeom(M, L, m).pmf(ls)
    np.testing.assert_allclose(ours, ref, rtol=1e-9, atol=1e-300)
    assert hypergeom_pmf(M, L, m, m + 1) == 0.0


def test_uniform_cdf_monte_carlo(rng):
    # N*p of a uniform bitstring under Porter-Thomas is Exp(1)
    m = 50
    xeb = rng.exponential(size=(20000, m)).mean(axis=1) - 1.0
    emp = [(xeb <= c).mean() for c in (-0.2, 0.0, 0.2)]
    ref = [cdf_xeb_uniform(m, c) for c in (-0.2, 0.0, 0.2)]
    np.testing.assert_allclose(emp, ref, atol=4 * math.sqrt(0.25 / 20000))


def test_adversary_cdf_monte_carlo(rng):
    M, m, L, chi = 60, 8, 25, 0.4
    trials = 40000
    is_pt = np.zeros((trials, M), dtype=bool)
    is_pt[:, :L] = True
    pick = np.argsort(rng.random((trials, M)), axis=1)[:, :m]
    pt = np.take_along_axis(is_pt, pick, axis=1)
    # ideal samples have N*p ~ Gamma(2, 1), uniform ones Exp(1)
    w = np.where(pt, rng.gamma(2.0, size=pt.shape), rng.exponential(size=pt.shape))
    emp = (w.mean(axis=1) - 1.0 <= chi).mean()
    assert emp == pytest.approx(cdf_xeb_adversary(M, m, chi, L), abs=4 * math.sqrt(0.25 / trials))


@pytest.mark.parametrize("phi", [0.0, 0.25, 0.5, 1.0])
def test_pt_mixture_pdf_cdf(phi):
    w = np.linspace(0, 40, 40001)
    pdf = pt_mixture_pdf(w, phi)
    assert trapezoid(pdf, w) == pytest.approx(1.0, abs=1e-6)
    cdf = pt_mixture_cdf(w, phi)
    np.testing.assert_allclose(np.diff(cdf), 0.5 * (pdf[1:] + pdf[:-1]) * (w[1] - w[0]), atol=1e-9)
    assert pt_mixture_pdf(-1.0, phi) == 0.0


def test_pt_mixture_rejects_bad_phi():
    with pytest.raises(ValueError):
        pt_mixture_cdf(1.0, 1.5)
