"""The ten end-to-end acceptance checks, shared by the CLI and the test suite."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import orbit_count as oc
from . import ruelle_bounds as rb
from . import thurston_coding as tc
from .potential import bundled_example, constant_potential
from .pressure import DegenerateVariance, build_profile, find_root, pressure, variance
from .sft_core import (
    count_fixed_points,
    full_shift,
    golden_mean,
    primitive_orbit_count,
    primitive_orbits,
    trace_power,
)
from .transfer_op import build, spectral_radius


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    ok: bool


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    budget: float = math.inf
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks) and self.seconds <= self.budget

    def line(self) -> str:
        failed = [c.name for c in self.checks if not c.ok]
        if self.seconds > self.budget:
            failed.append(f"runtime {self.seconds:.1f}s > {self.budget:.0f}s")
        status = "PASS" if self.passed else "FAIL"
        tail = f" failed: {', '.join(failed)}" if failed else ""
        return f"criterion {self.number:2d} {status} {self.title} ({self.seconds:.1f}s){tail}"

    def add(self, name: str, value: float, limit: float, ok: bool) -> None:
        self.checks.append(Check(name, float(value), float(limit), bool(ok)))

    def at_most(self, name: str, value: float, limit: float) -> None:
        self.add(name, value, limit, value <= limit)

    def at_least(self, name: str, value: float, limit: float) -> None:
        self.add(name, value, limit, value >= limit)


def _timed(number: int, title: str, budget: float):
    def wrap(fn):
        def run(**kw) -> CriterionResult:
            res = CriterionResult(number, title, budget=budget)
            start = time.perf_counter()
            fn(res, **kw)
            res.seconds = time.perf_counter() - start
            return res
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1, "exact fixed-point and primitive-orbit counts", 10.0)
def exact_counting(res: CriterionResult, n_max: int = 14) -> None:
    for sft in (golden_mean(), full_shift(2)):
        for n in range(1, n_max + 1):
            fixed = count_fixed_points(sft, n)
            res.add(f"{sft.name} trace n={n}", fixed, trace_power(sft.matrix, n), fixed == trace_power(sft.matrix, n))
            enumerated = sum(1 for _ in primitive_orbits(sft, n))
            mob = primitive_orbit_count(sft, n)
            res.add(f"{sft.name} primitive n={n}", enumerated, mob, enumerated == mob)


@_timed(2, "closed-form pressure on the full 2-shift", 1.0)
def closed_form_pressure(res: CriterionResult) -> None:
    sft, p = bundled_example("nonlattice")
    a0, a1 = p.table
    worst = 0.0
    for t in np.linspace(-3.0, 3.0, 41):
        exact = math.log(math.exp(t * a0) + math.exp(t * a1))
        worst = max(worst, abs(pressure(sft, p, t) - exact))
    res.at_most("max |P - log(e^{t a0} + e^{t a1})|", worst, 1e-10)


@_timed(3, "pressure root", 1.0)
def pressure_root(res: CriterionResult) -> None:
    for d in (2, 3, 4):
        sft = full_shift(d)
        s0 = find_root(sft, constant_potential(sft, 1.0))
        res.at_most(f"|s0 - log {d}|", abs(s0 - math.log(d)), 1e-10)
    sft, p = bundled_example("nonlattice")
    s0 = find_root(sft, p)
    res.at_most("nonlattice residual |P(-s0 phi)|", abs(pressure(sft, p, -s0)), 1e-10)
    res.details["s0"] = s0


@_timed(4, "drift and variance agree three ways", 120.0)
def drift_variance(res: CriterionResult) -> None:
    sft, p = bundled_example("nonlattice")
    prof = build_profile(sft, p, n_drift=16, variance_ns=(16, 18, 20))
    d, v = prof.drift, prof.variance
    res.at_most("|alpha_gibbs - alpha_fd|", abs(d.gibbs - d.fd), 1e-6)
    res.at_most("|sigma2_gk - sigma2_fd|", abs(v.gibbs - v.fd), 1e-6)
    res.at_most("|alpha_emp - alpha_gibbs|", abs(d.emp - d.gibbs), 1e-2)
    res.at_most("|sigma2_emp - sigma2_gk| / sigma2_gk", abs(v.emp - v.gibbs) / v.gibbs, 0.1)
    a0, a1 = p.table
    w0, w1 = math.exp(-prof.s0 * a0), math.exp(-prof.s0 * a1)
    q = w0 / (w0 + w1)
    res.at_most("|sigma2_gk - q(1-q)(a0-a1)^2|", abs(v.gibbs - q * (1 - q) * (a0 - a1) ** 2), 1e-8)
    res.details.update(prof.summary())


@_timed(5, "degenerate variance detection", 10.0)
def degeneracy(res: CriterionResult) -> None:
    sft = full_shift(2)
    const = constant_potential(sft, 1.0)
    s0 = find_root(sft, const)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateVariance)
        v = variance(sft, const, s0, emp_ns=(12,))
    res.at_most("constant potential sigma2", abs(v.gibbs), 1e-10)
    prof_const = build_profile(sft, const, n_drift=12, variance_ns=(12,))
    res.add("cohomology diagnostic fires", float(prof_const.cohomologous), 1.0, prof_const.cohomologous)
    sft, p = bundled_example("nonlattice")
    prof = build_profile(sft, p, n_drift=12, variance_ns=(12,))
    res.at_least("nonlattice sigma2", prof.sigma2, 1e-3)
    res.add("nonlattice not cohomologous", float(not prof.cohomologous), 1.0, not prof.cohomologous)


IDENTITY_EXAMPLES = ("nonlattice", "lattice", "golden_mean", "ladder_full2", "ladder_golden")
FIT_EXAMPLES = ("ladder_golden", "ladder_full2")


def _s_grid(s0: float) -> list:
    return [complex(a, b) for a in (-s0, 0.0, s0) for b in (1.0, 2.0, 5.0)]


@_timed(6, "periodic-point representation, telescope and fitted bounds", 300.0)
def representation_identities(res: CriterionResult, n_rep: int = 12, n_tel: int = 10,
                        fit_examples=FIT_EXAMPLES) -> None:
    worst_rep = worst_tel = 0.0
    for name in IDENTITY_EXAMPLES:
        sft, p = bundled_example(name)
        s0 = find_root(sft, p)
        for s in _s_grid(s0):
            for n in range(1, n_rep + 1):
                worst_rep = max(worst_rep, rb.verify_representation(sft, p, s, n).rel_err)
            for n in range(2, n_tel + 1):
                worst_tel = max(worst_tel, rb.telescope(sft, p, s, n).rel_err)
    res.at_most("representation rel_err", worst_rep, 1e-9)
    res.at_most("telescope rel_err", worst_tel, 1e-9)
    for name in fit_examples:
        sft, p = bundled_example(name)
        s0 = find_root(sft, p)
        coarse, fine = rb.default_grids(s0)
        for fn in (rb.fit_cylinder_bound, rb.fit_remainder_bound, rb.fit_partition_bound):
            st = rb.refinement_study(fn, sft, p, 0.1, coarse, fine)
            res.add(f"{name} {st.bound_id} refinement factor", st.factor, 2.0, st.stable)
            res.details[f"{name}:{st.bound_id}"] = {"coarse_C": st.coarse_C, "fine_C": st.fine_C}
        c = rb.fit_separated_set(sft, p, 0.1, coarse.params, coarse.re)
        f = rb.fit_separated_set(sft, p, 0.1, fine.params, fine.re)
        factor = f.fitted_C / c.fitted_C
        res.add(f"{name} separated-set refinement factor", factor, 2.0, 0.5 <= factor <= 2.0)


def spectrum_scan(sft, p, s0: float, ts) -> list:
    return [(float(t), spectral_radius(build(sft, p, complex(-s0, t)))) for t in ts]


SCAN_TS = [k * 0.25 * sign for k in range(1, 33) for sign in (1, -1)]


@_timed(7, "spectral-radius gap off the real axis", 60.0)
def spectral_gap(res: CriterionResult) -> None:
    sft, p = bundled_example("nonlattice")
    s0 = find_root(sft, p)
    scan = spectrum_scan(sft, p, s0, SCAN_TS)
    worst_t, worst = max(scan, key=lambda r: r[1])
    res.at_most(f"nonlattice max radius (t={worst_t})", worst, 1 - 1e-3)
    sft, p = bundled_example("lattice")
    s0 = find_root(sft, p)
    (_, rho), = spectrum_scan(sft, p, s0, [2 * math.pi])
    res.at_least("lattice radius at t=2pi", rho, 1 - 1e-6)
    res.details["nonlattice_scan"] = scan


@_timed(8, "local limit band for the primitive count", 900.0)
def local_clt_band(res: CriterionResult, threads: int = 1, ns=range(16, 25), shrink_ns=range(18, 25)) -> None:
    sft, p = bundled_example("nonlattice")
    prof = build_profile(sft, p)
    const = oc.count_report(sft, p, prof, oc.IntervalSchedule("constant", 1.0), None, list(ns), threads=threads)
    band = oc.ratio_band_check(const)
    res.add("constant schedule ratios in [0.5, 2]", min(const.ratios().values()), 0.5, band["in_band"])
    res.add("late mean |log ratio| <= early mean", band["late_mean_abs_log"], band["early_mean_abs_log"],
            bool(band["trend_ok"]))
    shrink = oc.count_report(sft, p, prof, oc.IntervalSchedule("power-shrink", 1.0, 0.25), None,
                             list(shrink_ns), threads=threads)
    band2 = oc.ratio_band_check(shrink)
    res.add("power-shrink ratios in [0.5, 2]", min(shrink.ratios().values()), 0.5, band2["in_band"])
    res.details.update({"constant": const.ratios(), "power_shrink": shrink.ratios(), "band": band})


@_timed(9, "non-primitive smoothed error slope", 300.0)
def nonprimitive_slope(res: CriterionResult, threads: int = 1, epsilon: float = 0.2) -> None:
    sft, p = bundled_example("nonlattice")
    prof = build_profile(sft, p)
    table = oc.nonprimitive_gap(sft, p, prof, oc.IntervalSchedule("constant", 1.0), oc.Mollifier(epsilon),
                                range(8, 21), threads=threads)
    res.add("slope of log|chi - pi|", table.slope if table.slope is not None else -math.inf,
            table.bound, table.passed)
    res.details["rows"] = table.rows


@_timed(10, "Thurston coding of the bundled pillow", 120.0)
def thurston(res: CriterionResult, data: tc.SubdivisionData | None = None) -> None:
    data = data or tc.bundled_subdivision()
    rep = tc.analyze(data, n_max=8)
    res.add("validation problems", len(rep.problems), 0, not rep.problems)
    res.add("row sums by color", rep.row_sums.total, 2 * data.degree, rep.row_sums.consistent)
    res.add("A_delta primitive", float(rep.delta_primitive), 1, rep.delta_primitive)
    res.add("2-to-1 lift on cycles <= 8", rep.lifts.max_lifts, 2, rep.lifts.two_to_one)
    for g in rep.gaps:
        res.at_least(f"P_delta - P_I at t={g.t:.6g}", g.gap_edges, 0.05)
        res.at_least(f"P_delta - P_vertex at t={g.t:.6g}", g.gap_vertices, 0.05)
        res.at_most(f"|P_I - P_II| at t={g.t:.6g}", g.edge_mismatch, 1e-8)
    limit = rep.decay.edge_rate + 0.02
    res.at_most("edge rate + 0.02 below 1", limit, 1.0 - 1e-12)
    worst = max(r["root_Pi"] for r in rep.decay.rows if r["im"] == 0.0)
    res.at_most("max |Pi_n(-s0)|^(1/n), n in [4, 10]", worst, limit)
    res.add("aggregate degree identity n <= 8", sum(not r.ok for r in rep.degree.aggregate), 0,
            all(r.ok for r in rep.degree.aggregate))
    res.details.update(rep.summary())


CRITERIA = {
    1: exact_counting, 2: closed_form_pressure, 3: pressure_root, 4: drift_variance, 5: degeneracy,
    6: representation_identities, 7: spectral_gap, 8: local_clt_band, 9: nonprimitive_slope, 10: thurston,
}


def run(number: int, **kw) -> CriterionResult:
    if number not in CRITERIA:
        raise KeyError(f"no criterion {number}")
    return CRITERIA[number](**kw)
