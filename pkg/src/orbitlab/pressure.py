"""Pressure, its root s0, drift and variance (three routes each), Gibbs chain, pressure gaps."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .potential import Potential, block_birkhoff_sums, cycle_mean_extremes, is_eventually_positive
from .sft_core import DEFAULT_CAP, Sft, iter_fixed_blocks
from .transfer_op import build, perron, perron_root_of

# Step sizes: truncation h²·P'''/6 vs. cancellation eps·|P|/h.  With eps ≈ 1e-16 and
# |P| = O(1) the first-derivative optimum is near 1e-5 (error ~1e-11); the second
# difference, with error h²·P''''/12 + 4·eps/h², balances near 1e-4 (error ~1e-8).
FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-4
DEGENERATE_VARIANCE = 1e-10
ROOT_TOL = 1e-12
ROOT_MAX = 2.0 ** 40


class PressureError(ArithmeticError):
    pass


class NotEventuallyPositive(PressureError):
    pass


class DegenerateVariance(UserWarning):
    pass


def pressure(sft: Sft, p: Potential, t: float) -> float:
    """P(σ, tφ) as the log of the Perron root of the transfer matrix."""
    return math.log(perron(build(sft, p, float(t))).lam)


def pressure_of_matrix(b: np.ndarray) -> float:
    """log spectral radius of a nonnegative matrix that may be reducible or periodic.

    Each strongly connected block with at least one edge is irreducible, so adding
    the identity makes it primitive with Perron root ρ + 1.
    """
    b = np.asarray(b, dtype=float)
    count, labels = connected_components(b > 0, directed=True, connection="strong")
    best = 0.0
    for c in range(count):
        idx = np.nonzero(labels == c)[0]
        sub = b[np.ix_(idx, idx)]
        if not (sub > 0).any():
            continue
        if idx.size == 1:
            rho = float(sub[0, 0])
        else:
            lam, _, _, _ = perron_root_of(sub + np.identity(idx.size))
            rho = lam - 1.0
        best = max(best, rho)
    return math.log(best) if best > 0 else -math.inf


def general_pressure(sft: Sft, p: Potential, t: float) -> float:
    return pressure_of_matrix(build(sft, p, float(t)).entries.real)


def find_root(sft: Sft, p: Potential, horizon: int = 64) -> float:
    """Unique s0 > 0 with P(−s0·φ) = 0, by bisection."""
    ok, _ = is_eventually_positive(p, horizon)
    if not ok:
        raise NotEventuallyPositive("potential is not eventually positive within the horizon")

    def f(t):
        return pressure(sft, p, -t)

    lo, hi = 0.0, 1.0
    if f(lo) <= 0.0:
        raise PressureError("zero topological entropy: no positive root")
    while f(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > ROOT_MAX:
            raise PressureError("bracket failure")
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    if abs(f(root)) > 1e-10:
        raise PressureError(f"root residual {f(root):.3e} above 1e-10")
    return root


@dataclass(frozen=True, eq=False)
class GibbsChain:
    """Stationary Markov chain on depth-k windows realizing the equilibrium state."""

    stationary: np.ndarray
    kernel: np.ndarray
    lam: float
    right: np.ndarray
    left: np.ndarray


def gibbs_chain(sft: Sft, p: Potential, t: float) -> GibbsChain:
    M = build(sft, p, float(t))
    data = perron(M)
    b = M.real_entries()
    kernel = b * data.right[None, :] / (data.lam * data.right[:, None])
    stationary = data.left * data.right
    stationary = stationary / stationary.sum()
    return GibbsChain(stationary, kernel, data.lam, data.right, data.left)


@dataclass(frozen=True)
class ThreeWay:
    gibbs: float
    fd: float
    emp: float
    emp_by_n: dict = field(default_factory=dict)


def weighted_moments(sft: Sft, p: Potential, s0: float, n: int, cap: int = DEFAULT_CAP) -> tuple:
    """(mean S_n, mean (S_n)²) over Fix(σ^n), weights exp(−s0·S_n), shifted for stability."""
    sums = np.concatenate([block_birkhoff_sums(p, b) for b in iter_fixed_blocks(sft, n, cap)])
    logw = -s0 * sums
    w = np.exp(logw - logw.max())
    total = w.sum()
    mean = float((w * sums).sum() / total)
    centered = sums - mean
    second = float((w * centered * centered).sum() / total)
    return mean, second


def drift(sft: Sft, p: Potential, s0: float, n_emp: int = 16, chain: GibbsChain | None = None) -> ThreeWay:
    chain = chain or gibbs_chain(sft, p, -s0)
    a_gibbs = float(chain.stationary @ p.table)
    h = FD_STEP_FIRST
    a_fd = (pressure(sft, p, -s0 + h) - pressure(sft, p, -s0 - h)) / (2 * h)
    mean, _ = weighted_moments(sft, p, s0, n_emp)
    return ThreeWay(a_gibbs, a_fd, mean / n_emp, {n_emp: mean / n_emp})


def green_kubo(chain: GibbsChain, values: np.ndarray) -> tuple:
    """Asymptotic variance of Σ f(X_i) for the chain; returns (σ², mean)."""
    pi, kern = chain.stationary, chain.kernel
    mean = float(pi @ values)
    centered = values - mean
    size = kern.shape[0]
    # (I − P + 1π) g = f̄ fixes the constant direction so that π·g = 0
    fundamental = np.identity(size) - kern + np.outer(np.ones(size), pi)
    g = np.linalg.solve(fundamental, centered)
    incr = centered[:, None] + g[None, :] - g[:, None]
    return float(np.sum(pi[:, None] * kern * incr * incr)), mean


def variance(sft: Sft, p: Potential, s0: float, alpha: float | None = None,
             emp_ns: Sequence[int] = (12, 16, 20), chain: GibbsChain | None = None) -> ThreeWay:
    chain = chain or gibbs_chain(sft, p, -s0)
    s_gk, _ = green_kubo(chain, p.table)
    h = FD_STEP_SECOND
    s_fd = (pressure(sft, p, -s0 + h) - 2 * pressure(sft, p, -s0) + pressure(sft, p, -s0 - h)) / h ** 2
    by_n = {}
    for n in emp_ns:
        _, second = weighted_moments(sft, p, s0, n)
        by_n[n] = second / n
    # Richardson-style trend: fit V_n = σ² + c/n by least squares
    ns = np.array(sorted(by_n), dtype=float)
    vs = np.array([by_n[int(n)] for n in ns])
    if ns.size >= 2:
        design = np.column_stack([np.ones_like(ns), 1.0 / ns])
        s_emp = float(np.linalg.lstsq(design, vs, rcond=None)[0][0])
    else:
        s_emp = float(vs[0])
    if s_gk < DEGENERATE_VARIANCE:
        warnings.warn("degenerate variance (lattice/cohomologous potential)", DegenerateVariance, stacklevel=2)
    return ThreeWay(s_gk, s_fd, s_emp, by_n)


def cohomologous_to_constant(p: Potential, tol: float = 1e-12) -> bool:
    """True when every cycle of the window graph has the same mean (Livšic criterion)."""
    lo, hi = cycle_mean_extremes(p)
    return hi - lo <= tol


@dataclass(frozen=True, eq=False)
class PressureProfile:
    s0: float
    alpha: float
    sigma2: float
    gibbs: GibbsChain
    drift: ThreeWay
    variance: ThreeWay
    cohomologous: bool

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.sigma2, 0.0))

    def summary(self) -> dict:
        return {
            "s0": self.s0, "alpha": self.alpha, "sigma2": self.sigma2,
            "alpha_gibbs": self.drift.gibbs, "alpha_fd": self.drift.fd, "alpha_emp": self.drift.emp,
            "sigma2_gk": self.variance.gibbs, "sigma2_fd": self.variance.fd, "sigma2_emp": self.variance.emp,
            "sigma2_emp_by_n": {str(k): v for k, v in self.variance.emp_by_n.items()},
            "perron_root": self.gibbs.lam, "cohomologous_to_constant": self.cohomologous,
        }


def build_profile(sft: Sft, p: Potential, n_drift: int = 16, variance_ns: Sequence[int] = (12, 16, 20)) -> PressureProfile:
    s0 = find_root(sft, p)
    chain = gibbs_chain(sft, p, -s0)
    d = drift(sft, p, s0, n_drift, chain)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateVariance)
        v = variance(sft, p, s0, d.gibbs, variance_ns, chain)
    return PressureProfile(s0, d.gibbs, max(v.gibbs, 0.0), chain, d, v, cohomologous_to_constant(p))


def pressure_gap(parent: tuple, sub: tuple, embedding: Sequence[int], t: float) -> float:
    """P_parent(tφ) − P_sub(tφ) for a depth-1 subsystem embedded by a state map.

    ``embedding[i]`` is the parent state carrying sub state i.  Transitions and
    potential values of the subsystem must agree with the parent's.
    """
    psft, ppot = parent
    ssft, spot = sub
    if ppot.depth != 1 or spot.depth != 1:
        raise PressureError("pressure_gap expects depth-1 potentials")
    emb = list(embedding)
    if len(emb) != ssft.size or len(set(emb)) != len(emb):
        raise PressureError("embedding inconsistency: not an injective state map")
    for i in range(ssft.size):
        for j in range(ssft.size):
            if ssft.matrix[i, j] and not psft.matrix[emb[i], emb[j]]:
                raise PressureError(f"embedding inconsistency: transition {i}->{j} missing in parent")
        if abs(spot.table[i] - ppot.table[emb[i]]) > 1e-12:
            raise PressureError(f"embedding inconsistency: potential differs at state {i}")
    return general_pressure(psft, ppot, t) - general_pressure(ssft, spot, t)
