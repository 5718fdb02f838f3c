"""Primitive-orbit counts in intervals, mollified counts, and the asymptotic predictor."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .potential import Potential, block_birkhoff_sums
from .pressure import DEGENERATE_VARIANCE, PressureProfile
from .sft_core import DEFAULT_CAP, Sft, map_fixed_blocks, rotation_flags


class CountError(ArithmeticError):
    pass


class SandwichViolated(CountError):
    pass


class VarianceDegenerate(CountError):
    pass


@dataclass(frozen=True)
class IntervalSchedule:
    """I_n = [p − ℓ_n/2, p + ℓ_n/2] with ℓ_n = c (constant) or c·n^(−γ) (power-shrink)."""

    kind: str = "constant"
    c: float = 1.0
    gamma: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power-shrink"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError("interval length constant must be positive")
        if self.kind == "power-shrink" and self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def ell(self, n: int) -> float:
        return self.c if self.kind == "constant" else self.c * float(n) ** (-self.gamma)

    def midpoint(self, n: int) -> float:
        return self.p

    def interval(self, n: int) -> tuple:
        half = 0.5 * self.ell(n)
        return self.p - half, self.p + half

    def compact_bound(self, n_min: int = 1) -> float:
        # ℓ_n is nonincreasing, so the widest interval occurs at n_min
        return abs(self.p) + 0.5 * self.ell(max(n_min, 1))


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_mass() -> float:
    return quad(lambda x: math.exp(-1.0 / (1.0 - x * x)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_PANELS = 8


def bump_cdf(u) -> np.ndarray:
    """H(u) = ∫_{−1}^{u} η for the unit-mass bump η, vectorized.

    Composite Gauss-Legendre on [−1, min(u, −u)], using H(u) = 1 − H(−u) to keep
    the integration range on the short side.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    active = np.abs(u) < 1.0
    if not active.any():
        return out
    ua = u[active]
    flip = ua > 0
    v = np.where(flip, -ua, ua)
    width = v + 1.0
    total = np.zeros_like(v)
    for k in range(_PANELS):
        lo = -1.0 + width * k / _PANELS
        half = 0.5 * width / _PANELS
        pts = lo[:, None] + half[:, None] * (_GL_NODES + 1.0)
        total += half * (_bump(pts) @ _GL_WEIGHTS)
    h = total / _bump_mass()
    out[active] = np.where(flip, 1.0 - h, h)
    return out


@lru_cache(maxsize=4096)
def bump_cdf_adaptive(u: float) -> float:
    """Scalar H(u) by adaptive quadrature (reference path, cached)."""
    if u <= -1.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    val = quad(lambda x: math.exp(-1.0 / (1.0 - x * x)), -1.0, u, epsabs=1e-15, epsrel=1e-13)[0]
    return val / _bump_mass()


class Mollifier:
    """ψ = G ∗ η_δ with G = (1+ε/4)·1 on [−(1+ε/4)/2, (1+ε/4)/2] and δ = ε/8.

    The convolution of an indicator with η_δ is a difference of two values of the
    bump's cumulative integral, so ψ is evaluated in closed form through H.
    """

    GRID = 10_000

    def __init__(self, epsilon: float, delta: float | None = None, verify: bool = True):
        if not 0.0 < epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        self.epsilon = float(epsilon)
        self.delta = float(delta) if delta is not None else self.epsilon / 8.0
        self.height = 1.0 + self.epsilon / 4.0
        self.half_width = 0.5 * self.height
        self.support_radius = self.half_width + self.delta
        self.integral = None
        self.sup = None
        if verify:
            self._load_or_verify()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        hi = bump_cdf((x + self.half_width) / self.delta)
        lo = bump_cdf((x - self.half_width) / self.delta)
        return self.height * (hi - lo)

    def reference(self, x: float) -> float:
        return self.height * (bump_cdf_adaptive((x + self.half_width) / self.delta)
                              - bump_cdf_adaptive((x - self.half_width) / self.delta))

    def _cache_path(self):
        root = os.environ.get("ORBITLAB_CACHE")
        if not root:
            return None
        return Path(root) / f"mollifier_eps{self.epsilon!r}_delta{self.delta!r}.json"

    def _load_or_verify(self):
        path = self._cache_path()
        if path is not None and path.exists():
            doc = json.loads(path.read_text())
            self.integral, self.sup = doc["integral"], doc["sup"]
            return
        self.verify()
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps({"integral": self.integral, "sup": self.sup, "epsilon": self.epsilon}))

    def verify(self) -> None:
        eps = self.epsilon
        outer = 0.5 * (1.0 + eps)
        grid = np.linspace(-outer - 0.1, outer + 0.1, self.GRID)
        vals = self(grid)
        inner = np.abs(grid) <= 0.5
        if np.any(vals[inner] < 1.0):
            raise SandwichViolated("psi < 1 on [-1/2, 1/2]")
        if np.any(vals > 1.0 + eps):
            raise SandwichViolated("psi exceeds 1 + epsilon")
        if np.any(vals[np.abs(grid) >= outer] != 0.0):
            raise SandwichViolated("psi nonzero outside the allowed support")
        pieces = [-self.support_radius, -self.half_width + self.delta, self.half_width - self.delta, self.support_radius]
        self.integral = math.fsum(
            quad(lambda t: float(self(t)), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            for a, b in zip(pieces[:-1], pieces[1:])
        )
        if not 1.0 <= self.integral <= 1.0 + eps:
            raise SandwichViolated(f"integral {self.integral} outside [1, 1 + epsilon]")
        self.sup = float(vals.max())


def mollifier_build(epsilon: float) -> Mollifier:
    return Mollifier(epsilon)


@dataclass(frozen=True)
class CountStats:
    n: int
    pi_count: int
    chi_smoothed: float
    pi_smoothed: float
    fixed_points: int
    primitive_orbits: int
    # (1/n)·Σ ψ over points of smaller minimal period; equals χ_ψ − π_ψ without cancellation
    nonprimitive: float = 0.0


def count_statistics(sft: Sft, p: Potential, alpha: float, schedule: IntervalSchedule,
                     mollifier: Mollifier | None, n: int, cap: int = DEFAULT_CAP, threads: int = 1) -> CountStats:
    """One enumeration pass producing the sharp count and both smoothed counts."""
    a, b = schedule.interval(n)
    ell, mid = schedule.ell(n), schedule.midpoint(n)
    shift = n * alpha

    def work(block):
        z = block_birkhoff_sums(p, block) - shift
        primitive, least = rotation_flags(block, sft.size)
        prim = primitive & least
        inside = (z >= a) & (z <= b)
        if mollifier is not None:
            psi = mollifier((z - mid) / ell)
            chi, pis, extra = float(np.sum(psi)), float(np.sum(psi[prim])), float(np.sum(psi[~primitive]))
        else:
            chi = pis = extra = 0.0
        return int(np.count_nonzero(inside & prim)), chi, pis, block.shape[0], int(np.count_nonzero(prim)), extra

    parts = map_fixed_blocks(sft, n, work, cap, threads)
    return CountStats(
        n,
        sum(r[0] for r in parts),
        math.fsum(r[1] for r in parts) / n,
        math.fsum(r[2] for r in parts),
        sum(r[3] for r in parts),
        sum(r[4] for r in parts),
        math.fsum(r[5] for r in parts) / n,
    )


def pi_count(sft, p, profile: PressureProfile, schedule, n, cap=DEFAULT_CAP, threads=1) -> int:
    return count_statistics(sft, p, profile.alpha, schedule, None, n, cap, threads).pi_count


def chi_smoothed(sft, p, profile: PressureProfile, schedule, mollifier, n, cap=DEFAULT_CAP, threads=1) -> float:
    return count_statistics(sft, p, profile.alpha, schedule, mollifier, n, cap, threads).chi_smoothed


def pi_smoothed(sft, p, profile: PressureProfile, schedule, mollifier, n, cap=DEFAULT_CAP, threads=1) -> float:
    return count_statistics(sft, p, profile.alpha, schedule, mollifier, n, cap, threads).pi_smoothed


def exp_integral(s0: float, a: float, b: float) -> float:
    """∫_a^b e^{s0 t} dt, with a series for tiny s0·(b − a)."""
    length = b - a
    x = s0 * length
    if abs(x) < 1e-8:
        return math.exp(s0 * a) * length * (1.0 + x / 2.0 + x * x / 6.0)
    return math.exp(s0 * a) * math.expm1(x) / s0


def predictor(profile: PressureProfile, schedule: IntervalSchedule, n: int) -> float:
    if profile.sigma2 < DEGENERATE_VARIANCE:
        raise VarianceDegenerate("variance degenerate: the local limit predictor is undefined")
    a, b = schedule.interval(n)
    return (exp_integral(profile.s0, a, b) / (math.sqrt(2 * math.pi) * profile.sigma)
            * math.exp(profile.s0 * profile.alpha * n) / n ** 1.5)


@dataclass(frozen=True)
class CountRow:
    n: int
    pi_count: int
    chi_smoothed: float
    pi_smoothed: float
    predictor: float
    ratio: float
    runtime: float


@dataclass
class OrbitCountReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def ratios(self) -> dict:
        return {r.n: r.ratio for r in self.rows}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            # wall time stays out of the CSV so identical configs give identical bytes
            writer.writerow(["n", "pi_count", "chi_smoothed", "pi_smoothed", "predictor", "ratio"])
            for r in self.rows:
                writer.writerow([r.n, r.pi_count, f"{r.chi_smoothed:.17g}", f"{r.pi_smoothed:.17g}",
                                 f"{r.predictor:.17g}", f"{r.ratio:.17g}"])


def count_report(sft: Sft, p: Potential, profile: PressureProfile, schedule: IntervalSchedule,
                 mollifier: Mollifier | None, ns: Sequence[int], cap: int = DEFAULT_CAP, threads: int = 1) -> OrbitCountReport:
    rows = []
    for n in ns:
        start = time.perf_counter()
        stats = count_statistics(sft, p, profile.alpha, schedule, mollifier, n, cap, threads)
        pred = predictor(profile, schedule, n)
        rows.append(CountRow(n, stats.pi_count, stats.chi_smoothed, stats.pi_smoothed, pred,
                             stats.pi_count / pred, time.perf_counter() - start))
    meta = {"schedule": asdict(schedule), "potential": p.name, "s0": profile.s0,
            "alpha": profile.alpha, "sigma": profile.sigma, "threads": threads,
            "epsilon": mollifier.epsilon if mollifier else None}
    return OrbitCountReport(rows, meta)


def ratio_band_check(report: OrbitCountReport, band=(0.5, 2.0), early=(16, 19), late=(21, 24)) -> dict:
    """Band membership of every ratio and the early-vs-late mean |log ratio| trend."""
    ratios = report.ratios()
    in_band = all(band[0] <= r <= band[1] for r in ratios.values())

    def window_mean(lo, hi):
        vals = [abs(math.log(ratios[n])) for n in range(lo, hi + 1) if n in ratios and ratios[n] > 0]
        return sum(vals) / len(vals) if vals else math.nan

    early_mean, late_mean = window_mean(*early), window_mean(*late)
    return {"in_band": in_band, "early_mean_abs_log": early_mean, "late_mean_abs_log": late_mean,
            "trend_ok": bool(late_mean <= early_mean) if not math.isnan(early_mean + late_mean) else None}


@dataclass
class GapTable:
    rows: list
    slope: float | None
    bound: float
    passed: bool


def nonprimitive_gap(sft: Sft, p: Potential, profile: PressureProfile, schedule: IntervalSchedule,
                     mollifier: Mollifier, ns: Sequence[int], eta: float = 0.05,
                     cap: int = DEFAULT_CAP, threads: int = 1) -> GapTable:
    """|χ_ψ(n) − π_ψ(n)| per n and the least-squares slope of its log against n."""
    rows = []
    for n in ns:
        st = count_statistics(sft, p, profile.alpha, schedule, mollifier, n, cap, threads)
        rows.append((n, st.nonprimitive))
    bound = 0.5 * profile.s0 * profile.alpha + eta
    pts = [(n, math.log(g)) for n, g in rows if g > 0]
    if len(pts) < 2:
        return GapTable(rows, None, bound, True)
    x = np.array([q[0] for q in pts], dtype=float)
    y = np.array([q[1] for q in pts])
    slope = float(np.polyfit(x, y, 1)[0])
    return GapTable(rows, slope, bound, slope <= bound)
