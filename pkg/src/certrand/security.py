"""Certification calculus: adversary budget, Q_min, smooth min-entropy and extractable length.

Logs used for entropies are base 2; the Chernoff slack uses natural logs.
Classical power is expressed as an effective sustained throughput
``P_eff`` in FLOPS.  :data:`FRONTIER_FLOPS` is the default size of one
"Frontier-unit" of adversary power (50% numerical efficiency on a ~2 EFLOPS
peak machine); pass ``frontier_flops=`` to use another calibration.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .stats import _fidelity_mix, cdf_xeb_fidelity, sf_xeb_adversary, sf_xeb_fidelity

__all__ = [
    "FRONTIER_FLOPS",
    "FRONTIER_SUSTAINED_FLOPS",
    "FULL_SCALE",
    "AdversaryParams",
    "SecurityBound",
    "EntropyResult",
    "MOptimum",
    "OutlookPoint",
    "Expansion",
    "phi_adv",
    "chernoff_l_max",
    "eps_adv",
    "q_min",
    "entropy_bound",
    "extract_len",
    "certify",
    "p_fail",
    "optimize_m",
    "asymptotic_rate",
    "max_adversary",
    "min_eps_sou",
    "expansion",
    "rate_table",
    "full_scale_params",
    "NIST_BEACON_BITS_PER_MIN",
]

FRONTIER_FLOPS = 1.0e18
# measured sustained throughput during verification; kept for reference and overrides
FRONTIER_SUSTAINED_FLOPS = 0.897e18
NIST_BEACON_BITS_PER_MIN = 512.0

FULL_SCALE = {
    "n": 56,
    "M": 30010,
    "m": 1522,
    "chi": 0.3,
    "t_threshold_s": 2.2,
    "B_flops": 90e18,
    "frontier_flops": FRONTIER_FLOPS,
    "adversary_frontier_multiples": [1, 2, 4, 6, 8],
    "eps_sou": [1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
}


@dataclass(frozen=True)
class AdversaryParams:
    """Classical adversary budget and protocol sizes.

    ``P_eff`` is sustained FLOPS, ``B`` the FLOPs to simulate one circuit
    exactly, ``t_threshold`` the per-sample time limit in seconds.
    """

    P_eff: float
    B: float
    M: int
    m: int
    t_threshold: float
    n: int = 56

    def __post_init__(self):
        if self.P_eff < 0 or not self.B > 0 or not self.t_threshold > 0:
            raise ValueError("P_eff must be >= 0 and B, t_threshold positive")
        if not (1 <= self.m <= self.M):
            raise ValueError(f"need 1 <= m <= M, got m={self.m}, M={self.M}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @classmethod
    def frontier(cls, k: float, *, frontier_flops: float = FRONTIER_FLOPS, **kw) -> "AdversaryParams":
        return cls(P_eff=k * frontier_flops, **kw)

    @property
    def budget(self) -> float:
        """Total fidelity the adversary can buy: P_eff * M * t / B."""
        if math.isinf(self.B):
            return 0.0
        return self.P_eff * self.M * self.t_threshold / self.B


@dataclass(frozen=True)
class SecurityBound:
    Q: int
    Phi: float
    delta: float
    L_C_max: float
    L_max: int
    eps1: float
    eps2: float

    @property
    def eps_adv(self) -> float:
        return self.eps1 + self.eps2


@dataclass(frozen=True)
class EntropyResult:
    Q_min: int
    H_min: int
    ell_toeplitz: int
    ell_trevisan: int
    eps_sou: float
    n: int
    M: int

    @property
    def eps_s(self) -> float:
        return self.eps_sou / 4

    @property
    def rate(self) -> float:
        return self.H_min / (self.n * self.M)

    def as_row(self) -> dict:
        row = asdict(self)
        row.update(eps_s=self.eps_s, rate=self.rate)
        return row


def phi_adv(a: AdversaryParams, Q: int) -> float:
    """Maximum total simulation fidelity over the M - Q classical rounds."""
    if not 0 <= Q <= a.M:
        raise ValueError(f"Q must be in [0, {a.M}], got {Q}")
    return min(float(a.M - Q), a.budget)


def chernoff_l_max(Phi: float, eps1: float) -> tuple[float, float]:
    """Chernoff slack delta and the high-probability bound Phi*(1+delta) on L_C."""
    if not 0 < eps1 <= 1:
        raise ValueError(f"eps1 must be in (0, 1], got {eps1}")
    if Phi < 0:
        raise ValueError("Phi must be non-negative")
    if Phi == 0:
        return 0.0, 0.0
    delta = math.sqrt(3.0 * math.log(1.0 / eps1) / Phi)
    return delta, Phi * (1.0 + delta)


def eps_adv(a: AdversaryParams, Q: int, chi: float, eps_sou: float) -> SecurityBound:
    """Bound on the pass probability of an adversary with Q quantum rounds.

    eps1 is fixed to eps_sou / 2 and L_max = Q + ceil(L_C_max), capped at M.
    """
    if not 0 < eps_sou <= 1:
        raise ValueError(f"eps_sou must be in (0, 1], got {eps_sou}")
    Phi = phi_adv(a, Q)
    eps1 = eps_sou / 2
    delta, lc = chernoff_l_max(Phi, eps1)
    L_max = min(a.M, Q + math.ceil(lc))
    eps2 = sf_xeb_adversary(a.M, a.m, chi, L_max)
    return SecurityBound(Q=Q, Phi=Phi, delta=delta, L_C_max=lc, L_max=L_max, eps1=eps1, eps2=eps2)


def q_min(a: AdversaryParams, chi: float, eps_sou: float) -> int:
    """Smallest Q in [0, M] with eps_adv(Q) >= eps_sou.

    Returns 0 when an all-classical adversary already passes often enough
    (nothing is certified) and M when no Q reaches eps_sou.
    """

    def ok(Q: int) -> bool:
        return eps_adv(a, Q, chi, eps_sou).eps_adv >= eps_sou

    # cheap runtime check that eps_adv is nondecreasing before bisecting
    probes = sorted({0, a.M // 4, a.M // 2, 3 * a.M // 4, a.M})
    vals = [eps_adv(a, q, chi, eps_sou).eps_adv for q in probes]
    if any(v2 < v1 - 1e-15 for v1, v2 in zip(vals, vals[1:])):
        raise ArithmeticError("eps_adv is not monotone in Q for these parameters")
    if vals[0] >= eps_sou:
        return 0
    if vals[-1] < eps_sou:
        return a.M
    lo, hi = 0, a.M  # ok(lo) false, ok(hi) true
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def entropy_bound(Q_min: int, n: int, eps_s: float) -> int:
    """Smooth min-entropy in bits certified by Q_min PT samples of n-bit strings."""
    if not 0 < eps_s < 0.25:
        raise ValueError(f"eps_s must be in (0, 1/4), got {eps_s}")
    return max(0, math.floor(Q_min * (n - 1) - math.log2(1.0 / eps_s)))


def extract_len(Q_min: int, n: int, eps_sou: float, kind: str = "toeplitz") -> int:
    """Output length of a Toeplitz or Trevisan extractor at soundness eps_sou."""
    if not 0 < eps_sou <= 1:
        raise ValueError(f"eps_sou must be in (0, 1], got {eps_sou}")
    k = Q_min * (n - 1)
    lg = math.log2(1.0 / eps_sou)
    if kind == "toeplitz":
        return max(0, math.floor(k - 3 * lg - 2))
    if kind != "trevisan":
        raise ValueError(f"unknown extractor kind {kind!r}")

    def fits(ell: int) -> bool:
        return ell >= 1 and ell <= k - 5 * lg - 4 * math.log2(ell) - 8

    ell = max(1, math.floor(k - 5 * lg - 8))
    for _ in range(100):
        nxt = max(1, math.floor(k - 5 * lg - 4 * math.log2(ell) - 8))
        if nxt == ell:
            break
        ell = nxt
    while fits(ell + 1):
        ell += 1
    while ell > 0 and not fits(ell):
        ell -= 1
    return ell


def certify(a: AdversaryParams, chi: float, eps_sou: float) -> EntropyResult:
    """Q_min, smooth min-entropy and both extractor lengths for one (adversary, eps_sou)."""
    q = q_min(a, chi, eps_sou)
    return EntropyResult(
        Q_min=q,
        H_min=entropy_bound(q, a.n, eps_sou / 4),
        ell_toeplitz=extract_len(q, a.n, eps_sou, "toeplitz"),
        ell_trevisan=extract_len(q, a.n, eps_sou, "trevisan"),
        eps_sou=eps_sou,
        n=a.n,
        M=a.M,
    )


def full_scale_params(k: float = 4, *, frontier_flops: float = FRONTIER_FLOPS, **overrides) -> AdversaryParams:
    """AdversaryParams at the experiment's operating point with k Frontier-units."""
    kw = dict(
        P_eff=k * frontier_flops,
        B=FULL_SCALE["B_flops"],
        M=FULL_SCALE["M"],
        m=FULL_SCALE["m"],
        t_threshold=FULL_SCALE["t_threshold_s"],
        n=FULL_SCALE["n"],
    )
    kw.update(overrides)
    return AdversaryParams(**kw)


def rate_table(
    base: AdversaryParams,
    chi: float,
    eps_list: Sequence[float],
    multiples: Sequence[float],
    frontier_flops: float = FRONTIER_FLOPS,
) -> list[EntropyResult | dict]:
    """Smooth min-entropy rates over an (eps_sou, adversary multiple) grid, row-major."""
    rows = []
    for eps in eps_list:
        for k in multiples:
            res = certify(replace(base, P_eff=k * frontier_flops), chi, eps)
            row = res.as_row()
            row["adversary_frontier"] = k
            rows.append(row)
    return rows


def p_fail(chi: float, phi: float, m: int) -> float:
    """Probability that an honest fidelity-phi server scores below chi on m samples."""
    return cdf_xeb_fidelity(m, chi, phi)


def _bisect(f, lo: float, hi: float, tol: float = 1e-10, maxit: int = 200) -> float:
    # smallest x in [lo, hi] with f(x) true, f monotone false -> true
    for _ in range(maxit):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class MOptimum:
    m: int
    chi: float
    p_fail: float
    feasible: bool
    grid: tuple = field(default=(), repr=False)


def _chi_for_target(a: AdversaryParams, Q: int, eps_sou: float, chi_hi: float = 10.0) -> float:
    def safe(chi):
        return eps_adv(a, Q, chi, eps_sou).eps_adv <= eps_sou

    if not safe(chi_hi):
        return math.inf
    return _bisect(safe, -1.0, chi_hi, tol=1e-7)


def optimize_m(
    T_budget: float,
    P_eff: float,
    M: int,
    t_threshold: float,
    Q_target: int,
    eps_sou: float,
    phi: float,
    *,
    n: int = 56,
    m_grid: Iterable[int] | None = None,
    refine: bool = True,
) -> MOptimum:
    """Choose m (with B = T/m) minimizing p_fail subject to eps_adv(Q_target, chi) <= eps_sou.

    For each m the threshold chi is the smallest value meeting the soundness
    target.  The grid argmin is then refined by integer golden-section search
    between its grid neighbours (p_fail is unimodal in m there).
    ``feasible`` is false when even the best m leaves the honest server
    failing with probability above 1 - eps_sou.
    """
    if not T_budget > 0:
        raise ValueError("verification budget must be positive")
    if m_grid is None:
        m_grid = np.unique(np.geomspace(20, min(M, 6000), 24).astype(int))
    seen: dict[int, tuple] = {}

    def point(m: int) -> tuple:
        if m not in seen:
            a = AdversaryParams(P_eff=P_eff, B=T_budget / m, M=M, m=m, t_threshold=t_threshold, n=n)
            chi = _chi_for_target(a, Q_target, eps_sou)
            seen[m] = (m, chi, 1.0 if math.isinf(chi) else p_fail(chi, phi, m))
        return seen[m]

    grid = sorted({int(m) for m in m_grid if 1 <= int(m) <= M})
    if not grid:
        raise ValueError("empty m grid")
    for m in grid:
        point(m)
    best = min(seen.values(), key=lambda p: (p[2], -p[0]))
    if refine and len(grid) > 2 and best[2] < 1.0:
        k = grid.index(best[0])
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        invphi = (math.sqrt(5) - 1) / 2
        while hi - lo > 3:
            a_ = hi - round(invphi * (hi - lo))
            b_ = lo + round(invphi * (hi - lo))
            if a_ >= b_:
                a_, b_ = (lo + hi) // 2, (lo + hi) // 2 + 1
            if point(a_)[2] <= point(b_)[2]:
                hi = b_
            else:
                lo = a_
        for m in range(lo, hi + 1):
            point(m)
        best = min(seen.values(), key=lambda p: (p[2], -p[0]))
    pts = sorted(seen.values())
    feasible = best[2] <= 1.0 - eps_sou
    return MOptimum(m=best[0], chi=best[1], p_fail=best[2], feasible=feasible, grid=tuple(pts))


@dataclass(frozen=True)
class OutlookPoint:
    phi: float
    t_qc: float
    h: float
    R_Q: float
    m: int
    chi: float
    bits_per_min: float

    @property
    def reaches_beacon_rate(self) -> bool:
        return self.bits_per_min >= NIST_BEACON_BITS_PER_MIN


def _chi_quantile(m: int, phi: float, p_fail_target: float) -> float:
    # XEB of a fidelity-phi sampler has mean phi and variance below 3/m; bracket at 12 sigma
    def hit(c):
        return _fidelity_mix(m, c, phi, upper=False, cache=False) >= p_fail_target

    w = 12.0 * math.sqrt(3.0 / m)
    lo, hi = max(-1.0, phi - w), phi + w
    if hit(lo):
        lo = -1.0
    if not hit(hi):
        hi = 10.0
    return _bisect(hit, lo, hi, tol=1e-8)


def _r_star(m: int, chi: float, eps_sou: float, phi_hi: float = 1.0) -> float:
    # largest PT fraction R whose pass probability stays <= eps_sou
    def sf(r):
        return _fidelity_mix(m, chi, r, upper=True, cache=True)

    if sf(0.0) > eps_sou:
        return 0.0
    if sf(phi_hi) <= eps_sou:
        return phi_hi
    return _bisect(lambda r: sf(r) > eps_sou, 0.0, phi_hi, tol=1e-8) - 1e-8


_DEFAULT_OUTLOOK_M = tuple(int(v) for v in np.unique(np.geomspace(50, 12000, 20).astype(int)))


@lru_cache(maxsize=256)
def _scan(phi: float, p_fail_target: float, eps_sou: float, m_grid: tuple) -> tuple:
    # independent of t_qc, so one scan serves a whole row of the outlook grid
    out = []
    for m in m_grid:
        chi = _chi_quantile(m, phi, p_fail_target)
        out.append((m, chi, _r_star(m, chi, eps_sou)))
    return tuple(out)


def _outlook_scan(phi, t_qc, p_fail_target, eps_sou, m_grid):
    return _scan(float(phi), float(p_fail_target), float(eps_sou), tuple(int(m) for m in m_grid))


def asymptotic_rate(
    phi: float,
    t_qc: float,
    *,
    adversary_frontier: float = 4,
    eps_sou: float = 1e-6,
    p_fail_target: float = 1e-4,
    T_budget: float = FULL_SCALE["m"] * FULL_SCALE["B_flops"],
    n: int = 56,
    frontier_flops: float = FRONTIER_FLOPS,
    m_grid: Sequence[int] = _DEFAULT_OUTLOOK_M,
) -> OutlookPoint:
    """Entropy rate in the limit M -> infinity at fixed verification budget.

    The fraction of PT samples an adversary can present is
    R = R_Q + (1 - R_Q) <phi_A> with <phi_A> = min(1, P t / ((1 - R_Q) T / m)),
    which simplifies to R = min(1, R_Q + P t m / T).  For each m the
    threshold is set so the honest server fails with ``p_fail_target`` and
    the certified R_Q is the largest value keeping the adversary's pass
    probability at or below eps_sou.  h = R_Q (n - 1) / n, maximized over m.
    The per-sample time threshold is taken equal to ``t_qc``.
    """
    P = adversary_frontier * frontier_flops
    best = OutlookPoint(phi, t_qc, 0.0, 0.0, int(m_grid[0]), math.nan, 0.0)
    for m, chi, r_star in _outlook_scan(phi, t_qc, p_fail_target, eps_sou, m_grid):
        rq = max(0.0, r_star - P * t_qc * m / T_budget)
        if rq > best.R_Q:
            h = rq * (n - 1) / n
            best = OutlookPoint(phi, t_qc, h, rq, m, chi, h * n * 60.0 / t_qc)
    return best


def max_adversary(
    phi: float,
    t_qc: float,
    *,
    h_target: float = 0.01,
    eps_sou: float = 1e-6,
    p_fail_target: float = 1e-4,
    T_budget: float = FULL_SCALE["m"] * FULL_SCALE["B_flops"],
    n: int = 56,
    frontier_flops: float = FRONTIER_FLOPS,
    m_grid: Sequence[int] = _DEFAULT_OUTLOOK_M,
) -> float:
    """Largest adversary (Frontier-units) against which rate ``h_target`` is still certified."""
    r_target = h_target * n / (n - 1)
    best = 0.0
    for m, _, r_star in _outlook_scan(phi, t_qc, p_fail_target, eps_sou, m_grid):
        if r_star > r_target:
            best = max(best, (r_star - r_target) * T_budget / (t_qc * m) / frontier_flops)
    return best


def min_eps_sou(
    phi: float,
    t_qc: float,
    *,
    h_target: float = 0.01,
    adversary_frontier: float = 4,
    p_fail_target: float = 1e-4,
    T_budget: float = FULL_SCALE["m"] * FULL_SCALE["B_flops"],
    n: int = 56,
    frontier_flops: float = FRONTIER_FLOPS,
    m_grid: Sequence[int] = _DEFAULT_OUTLOOK_M,
) -> float:
    """Smallest soundness parameter at which rate ``h_target`` is certified (1.0 if none)."""
    r_target = h_target * n / (n - 1)
    P = adversary_frontier * frontier_flops
    best = 1.0
    for m in m_grid:
        r_need = r_target + P * t_qc * m / T_budget
        if r_need >= phi:
            continue
        chi = _chi_quantile(m, phi, p_fail_target)
        best = min(best, sf_xeb_fidelity(m, chi, min(1.0, r_need)))
    return best


@dataclass(frozen=True)
class Expansion:
    no_reuse: float
    seed_reuse: float


def expansion(ell: float, ext_seed_len: float, r: float, p_omega: float) -> Expansion:
    """Expected net randomness gained: p_omega*(ell - |K_ext|) - r, and p_omega*ell - r with a reused seed."""
    if not 0 <= p_omega <= 1:
        raise ValueError("p_omega must be a probability")
    return Expansion(no_reuse=p_omega * (ell - ext_seed_len) - r, seed_reuse=p_omega * ell - r)
