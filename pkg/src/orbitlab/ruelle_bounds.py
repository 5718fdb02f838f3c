"""Checks of the periodic-point representation, the telescoping identity and the
cylinder/operator bounds, with empirically fitted constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .potential import Potential, block_birkhoff_sums
from .pressure import general_pressure
from .sft_core import Sft, admissible_words, iter_fixed_blocks
from .transfer_op import (
    apply_power,
    build,
    cylinder_function,
    cylinder_image,
    cylinder_image_at,
    holder_norm,
    operator_norm_estimate,
)


def least_extension(sft: Sft, word: Sequence[int], length: int) -> tuple:
    """Lexicographically least admissible word of the given length starting with ``word``."""
    out = list(word)
    a = sft.matrix
    while len(out) < length:
        out.append(int(np.nonzero(a[out[-1]])[0][0]))
    return tuple(out)


def reference_point(sft: Sft, word: Sequence[int], length: int, periodic: bool) -> tuple:
    """Prefix of x_ω: the periodic point ω^∞ when allowed and requested, else the least extension."""
    word = tuple(word)
    if periodic and sft.is_admissible(word, cyclic=True):
        reps = -(-max(length, len(word)) // len(word))
        return (word * reps)[: max(length, len(word))]
    return least_extension(sft, word, max(length, len(word)))


def partition_function(sft: Sft, p: Potential, s: complex, n: int) -> complex:
    """Z_n(s) = Σ over Fix(σ^n) of exp(s·S_nφ), by enumeration of periodic words."""
    re, im = [], []
    for block in iter_fixed_blocks(sft, n):
        z = np.exp(complex(s) * block_birkhoff_sums(p, block))
        re.append(float(np.sum(z.real)))
        im.append(float(np.sum(z.imag)))
    return complex(math.fsum(re), math.fsum(im))


@dataclass(frozen=True)
class RepresentationCheck:
    n: int
    s: complex
    lhs: complex
    rhs: complex
    abs_err: float
    rel_err: float


def verify_representation(sft: Sft, p: Potential, s: complex, n: int) -> RepresentationCheck:
    """Z_n(s) against Σ_{|ω|=n} (L^n χ_ω)(x_ω) using the closed form of L^n χ_ω."""
    lhs = partition_function(sft, p, s, n)
    M = build(sft, p, s)
    terms = []
    for word in admissible_words(sft, n).tolist():
        x = reference_point(sft, word, n + p.depth, periodic=True)
        terms.append(cylinder_image_at(M, word, x))
    rhs = complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))
    err = abs(lhs - rhs)
    return RepresentationCheck(n, complex(s), lhs, rhs, err, err / max(abs(lhs), 1e-300))


@dataclass
class TelescopeTable:
    n: int
    s: complex
    direct: complex
    double_sum: complex
    layers: dict = field(default_factory=dict)
    rel_err: float = 0.0


def _t_sum(M, sft: Sft, p: Potential, n: int) -> complex:
    total = 0j
    for j in range(sft.size):
        image = apply_power(M, cylinder_function(sft, (j,)), n)
        total += image(reference_point(sft, (j,), p.depth, periodic=n == 1))
    return total


def telescope(sft: Sft, p: Potential, s: complex, n: int) -> TelescopeTable:
    """Z_n − T_n directly and as the layered sum over m = 2..n of cylinder differences.

    Inner points: x_ω is the σ^n-periodic point of C_ω at m = n when it exists;
    otherwise (and at every m < n) the least admissible extension of ω.
    """
    M = build(sft, p, s)
    k = p.depth
    z_n = partition_function(sft, p, s, n)
    direct = z_n - _t_sum(M, sft, p, n)
    layers = {}
    for m in range(2, n + 1):
        acc = 0j
        for word in admissible_words(sft, m).tolist():
            image = apply_power(M, cylinder_image(M, word), n - m)
            here = reference_point(sft, word, m + k, periodic=m == n)
            parent = reference_point(sft, word[:-1], m - 1 + k, periodic=m - 1 == n)
            acc += image(here) - image(parent)
        layers[m] = acc
    double = sum(layers.values(), 0j)
    rel = abs(direct - double) / max(abs(z_n), 1e-300)
    return TelescopeTable(n, complex(s), direct, double, layers, rel)


@dataclass(frozen=True)
class GridSpec:
    params: tuple
    re: tuple
    im: tuple

    def points(self):
        for m in self.params:
            for a in self.re:
                for b in self.im:
                    yield m, complex(a, b)


@dataclass
class BoundFit:
    bound_id: str
    epsilon: float
    rows: list
    fitted_C: float
    margin: dict = field(default_factory=dict)


def _fit(bound_id: str, epsilon: float, rows: list) -> BoundFit:
    ratios = np.array([r["ratio"] for r in rows])
    c = float(ratios.max()) if ratios.size else math.nan
    margin = {"max_ratio": c, "median_ratio": float(np.median(ratios)) if ratios.size else math.nan,
              "points": len(rows)}
    return BoundFit(bound_id, epsilon, rows, c, margin)


@lru_cache(maxsize=4096)
def _pressure_cached(p: Potential, t: float) -> float:
    return general_pressure(p.sft, p, t)


def _check_im(s: complex, b0: float):
    if abs(s.imag) < b0:
        raise ValueError(f"|Im s| = {abs(s.imag)} below b0 = {b0}")


def fit_cylinder_bound(sft: Sft, p: Potential, epsilon: float, grid: GridSpec, alpha: float = 1.0, b0: float = 1.0) -> BoundFit:
    """Σ_{|ω|=k} ‖L^k χ_ω‖ against |Im s|·θ^α·e^{k(P(Re s·φ)+ε)}."""
    theta = sft.theta
    rows = []
    for k, s in grid.points():
        _check_im(s, b0)
        M = build(sft, p, s)
        lhs = math.fsum(holder_norm(cylinder_image(M, w), alpha, theta) for w in admissible_words(sft, k).tolist())
        rhs = abs(s.imag) * theta ** alpha * math.exp(k * (_pressure_cached(p, s.real) + epsilon))
        rows.append({"param": k, "s": s, "lhs": lhs, "rhs_without_C": rhs, "ratio": lhs / rhs})
    return _fit("cylinder", epsilon, rows)


def _operator_norms(M, n_max: int, alpha: float) -> list:
    return [operator_norm_estimate(M, j, alpha).upper for j in range(n_max + 1)]


def fit_remainder_bound(sft: Sft, p: Potential, epsilon: float, grid: GridSpec, alpha: float = 1.0, b0: float = 1.0) -> BoundFit:
    """|Z_n − T_n| against |Im s|·Σ_{m=2}^n ‖L^{n−m}‖(θ^α e^{P+ε})^m."""
    return _fit_tail("remainder", sft, p, epsilon, grid, alpha, b0, start=2)


def fit_partition_bound(sft: Sft, p: Potential, epsilon: float, grid: GridSpec, alpha: float = 1.0, b0: float = 1.0) -> BoundFit:
    """|Z_n| against |Im s|·Σ_{m=1}^n ‖L^{n−m}‖(θ^α e^{P+ε})^m."""
    return _fit_tail("partition", sft, p, epsilon, grid, alpha, b0, start=1)


def _fit_tail(bound_id, sft, p, epsilon, grid, alpha, b0, start) -> BoundFit:
    theta = sft.theta
    rows = []
    norms_at = {}
    for n, s in grid.points():
        _check_im(s, b0)
        M = build(sft, p, s)
        if s not in norms_at or len(norms_at[s]) <= n:
            norms_at[s] = _operator_norms(M, max(grid.params), alpha)
        norms = norms_at[s]
        rate = theta ** alpha * math.exp(_pressure_cached(p, s.real) + epsilon)
        rhs = abs(s.imag) * math.fsum(norms[n - m] * rate ** m for m in range(start, n + 1))
        z_n = partition_function(sft, p, s, n)
        lhs = abs(z_n - _t_sum(M, sft, p, n)) if start == 2 else abs(z_n)
        rows.append({"param": n, "s": s, "lhs": lhs, "rhs_without_C": rhs, "ratio": lhs / rhs})
    return _fit(bound_id, epsilon, rows)


def fit_separated_set(sft: Sft, p: Potential, epsilon: float, ns: Sequence[int], re: Sequence[float]) -> BoundFit:
    """Z_n(a) ≤ C·e^{n(P(aφ)+ε)} at real a."""
    rows = []
    for n in ns:
        for a in re:
            lhs = partition_function(sft, p, a, n).real
            rhs = math.exp(n * (_pressure_cached(p, float(a)) + epsilon))
            rows.append({"param": n, "s": complex(a, 0.0), "lhs": lhs, "rhs_without_C": rhs, "ratio": lhs / rhs})
    return _fit("separated", epsilon, rows)


def default_grids(s0: float, a0_factor: float = 2.0, b0: float = 1.0, n_max: int = 10) -> tuple:
    """Coarse grid and its refinement (the refinement contains the coarse points)."""
    a0 = a0_factor * s0
    coarse = GridSpec(tuple(range(2, n_max + 1, 2)), (-a0, 0.0, a0), (b0, 2 * b0, 4 * b0, 8 * b0))
    fine = GridSpec(tuple(range(2, n_max + 1)), tuple(np.linspace(-a0, a0, 5)),
                    (b0, 1.5 * b0, 2 * b0, 3 * b0, 4 * b0, 6 * b0, 8 * b0))
    return coarse, fine


@dataclass(frozen=True)
class RefinementStudy:
    bound_id: str
    coarse_C: float
    fine_C: float

    @property
    def factor(self) -> float:
        return self.fine_C / self.coarse_C

    @property
    def stable(self) -> bool:
        return 0.5 <= self.factor <= 2.0 and self.coarse_C > 0 and math.isfinite(self.fine_C)


def refinement_study(fit_fn, sft, p, epsilon, coarse: GridSpec, fine: GridSpec, **kw) -> RefinementStudy:
    c = fit_fn(sft, p, epsilon, coarse, **kw)
    f = fit_fn(sft, p, epsilon, fine, **kw)
    return RefinementStudy(c.bound_id, c.fitted_C, f.fitted_C)
