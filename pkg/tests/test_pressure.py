import math

import numpy as np
import pytest
from scipy.optimize import brentq

from oracles import SQRT2, make_sft
from orbitlab.potential import Potential, bundled_example, constant_potential, depth1_potential
from orbitlab.pressure import (
    DegenerateVariance,
    NotEventuallyPositive,
    PressureError,
    build_profile,
    cohomologous_to_constant,
    drift,
    find_root,
    general_pressure,
    gibbs_chain,
    pressure,
    pressure_gap,
    pressure_of_matrix,
    variance,
)
from orbitlab.sft_core import full_shift

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2


def nonlattice_root():
    return brentq(lambda s: math.exp(-s) + math.exp(-SQRT2 * s) - 1.0, 0.01, 5.0, xtol=1e-15)


def test_pressure_closed_forms(full2, golden, nonlattice):
    for t in (-2.0, 0.0, 1.5):
        assert pressure(full2, constant_potential(full2), t) == pytest.approx(math.log(2) + t, abs=1e-13)
    assert pressure(full2, nonlattice, -1.0) == pytest.approx(math.log(math.exp(-1) + math.exp(-SQRT2)), abs=1e-13)
    assert pressure(golden, constant_potential(golden, 0.0), 1.0) == pytest.approx(math.log(GOLDEN_RATIO), abs=1e-13)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_root_full_shift_constant(d):
    sft = full_shift(d)
    assert find_root(sft, constant_potential(sft, 1.0)) == pytest.approx(math.log(d), abs=1e-12)
    assert find_root(sft, constant_potential(sft, 2.5)) == pytest.approx(math.log(d) / 2.5, abs=1e-12)


def test_root_nonlattice(full2, nonlattice):
    assert find_root(full2, nonlattice) == pytest.approx(nonlattice_root(), abs=1e-12)


def test_root_requires_positivity(golden):
    with pytest.raises(NotEventuallyPositive):
        find_root(golden, depth1_potential(golden, [-0.1, 1.0]))


def test_drift_constant(golden):
    d = drift(golden, constant_potential(golden, 1.7), find_root(golden, constant_potential(golden, 1.7)))
    assert d.gibbs == pytest.approx(1.7, abs=1e-12)
    assert d.fd == pytest.approx(1.7, abs=1e-7)
    assert d.emp == pytest.approx(1.7, abs=1e-12)


def test_drift_and_variance_bernoulli(full2, nonlattice):
    s0 = nonlattice_root()
    q = math.exp(-s0)
    alpha = q * 1.0 + math.exp(-SQRT2 * s0) * SQRT2
    d = drift(full2, nonlattice, s0)
    assert d.gibbs == pytest.approx(alpha, abs=1e-12)
    assert d.fd == pytest.approx(alpha, abs=1e-7)
    assert d.emp == pytest.approx(alpha, abs=1e-12)
    v = variance(full2, nonlattice, s0, emp_ns=(10, 14, 18))
    oracle = q * (1 - q) * (1.0 - SQRT2) ** 2
    assert v.gibbs == pytest.approx(oracle, abs=1e-12)
    assert v.fd == pytest.approx(oracle, abs=1e-5)
    assert v.emp == pytest.approx(oracle, abs=1e-9)


def test_variance_golden_closed_form(golden):
    p = depth1_potential(golden, [0.0, 1.0])
    t = -0.5
    # λ² = λ + e^t for the matrix [[1, 1], [e^t, 0]]
    e, r = math.exp(t), math.sqrt(1 + 4 * math.exp(t))
    lam = (1 + r) / 2
    d1 = e / r
    d2 = e / r - 2 * e * e / r ** 3
    second = (d2 * lam - d1 * d1) / lam ** 2
    v = variance(golden, p, -t, emp_ns=(12, 16, 20))
    assert second > 0
    assert v.gibbs == pytest.approx(second, rel=1e-10)
    assert v.fd == pytest.approx(second, rel=1e-4)


def test_variance_degenerate_for_coboundary(golden):
    # c + g(b) − g(a) on the window ab
    g = {0: 0.4, 1: -1.1}
    p = Potential(golden, 2, {(a, b): 2.0 + g[b] - g[a] for a, b in [(0, 0), (0, 1), (1, 0)]})
    assert cohomologous_to_constant(p)
    s0 = find_root(golden, p)
    with pytest.warns(DegenerateVariance):
        v = variance(golden, p, s0)
    assert abs(v.gibbs) < 1e-12


def test_variance_positive_for_lattice_example():
    sft, p = bundled_example("lattice")
    assert not cohomologous_to_constant(p)
    prof = build_profile(sft, p, variance_ns=(10, 12))
    assert prof.sigma2 > 0.01


def test_gibbs_chain_is_stochastic(golden):
    sft, p = bundled_example("ladder_golden")
    chain = gibbs_chain(sft, p, -0.7)
    assert np.allclose(chain.kernel.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(chain.stationary @ chain.kernel, chain.stationary, atol=1e-12)


def test_pressure_monotone_and_convex(full2, nonlattice):
    ts = np.linspace(-3, 3, 61)
    vals = np.array([pressure(full2, nonlattice, t) for t in ts])
    assert np.all(np.diff(vals) > 0)
    assert np.all(np.diff(vals, 2) > -1e-12)


def test_pressure_gap_examples(full2, golden):
    loop = make_sft([[1]])
    loop_pot = constant_potential(loop, 0.0)
    assert pressure_gap((full2, constant_potential(full2, 0.0)), (loop, loop_pot), [0], 0.0) == pytest.approx(math.log(2))
    gap = pressure_gap((golden, constant_potential(golden, 0.0)), (loop, loop_pot), [0], 0.0)
    assert gap == pytest.approx(math.log(GOLDEN_RATIO))
    with pytest.raises(PressureError):
        pressure_gap((golden, constant_potential(golden, 0.0)), (loop, loop_pot), [1], 0.0)


def test_reducible_pressure():
    # two loops joined one way; the larger loop dominates
    b = np.array([[2.0, 1.0], [0.0, 0.5]])
    assert pressure_of_matrix(b) == pytest.approx(math.log(2.0))
    periodic = np.array([[0.0, 3.0], [1.0 / 3.0, 0.0]])
    assert pressure_of_matrix(periodic) == pytest.approx(0.0, abs=1e-12)
    assert pressure_of_matrix(np.zeros((2, 2))) == -math.inf


def test_general_pressure_agrees_on_primitive(golden):
    sft, p = bundled_example("ladder_golden")
    for t in (-1.0, 0.0, 0.8):
        assert general_pressure(sft, p, t) == pytest.approx(pressure(sft, p, t), abs=1e-12)


def test_profile_summary_fields(full2, nonlattice):
    prof = build_profile(full2, nonlattice, variance_ns=(10, 12))
    summary = prof.summary()
    assert summary["s0"] == pytest.approx(nonlattice_root(), abs=1e-12)
    assert summary["perron_root"] == pytest.approx(1.0, abs=1e-12)
    assert summary["cohomologous_to_constant"] is False
