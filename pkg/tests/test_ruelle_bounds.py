import cmath
import math

import numpy as np
import pytest

from orbitlab.potential import bundled_example, constant_potential
from orbitlab.pressure import find_root
from orbitlab.ruelle_bounds import (
    GridSpec,
    fit_partition_bound,
    default_grids,
    fit_cylinder_bound,
    fit_remainder_bound,
    fit_separated_set,
    least_extension,
    partition_function,
    reference_point,
    refinement_study,
    telescope,
    verify_representation,
)
from orbitlab.sft_core import fixed_points

EXAMPLES = ["nonlattice", "lattice", "golden_mean", "ladder_full2", "ladder_golden"]


def test_partition_constant_full2(full2):
    p = constant_potential(full2)
    check = verify_representation(full2, p, -math.log(2), 5)
    assert check.lhs == pytest.approx(1.0, abs=1e-14)
    assert check.rhs == pytest.approx(1.0, abs=1e-14)


def test_partition_constant_golden(golden):
    check = verify_representation(golden, constant_potential(golden), 1.0, 3)
    assert check.lhs == pytest.approx(4 * math.e ** 3, rel=1e-14)
    assert check.rel_err < 1e-14


@pytest.mark.parametrize("name", EXAMPLES)
def test_partition_function_naive(name):
    sft, p = bundled_example(name)
    s = complex(-0.4, 2.0)
    for n in (1, 4, 7):
        naive = sum(cmath.exp(s * _naive_sum(p, w)) for w in fixed_points(sft, n))
        assert partition_function(sft, p, s, n) == pytest.approx(naive, rel=1e-12)


def _naive_sum(p, w):
    n, k = len(w), p.depth
    return math.fsum(p.value(tuple(w[(i + j) % n] for j in range(k))) for i in range(n))


@pytest.mark.parametrize("name", EXAMPLES)
def test_representation_holds(name):
    sft, p = bundled_example(name)
    for n in (1, 2, 5, 8):
        for s in (complex(-0.5, 1.0), complex(0.3, 5.0)):
            assert verify_representation(sft, p, s, n).rel_err < 1e-10


def test_words_without_fixed_point_contribute_zero(golden):
    # the word 01 extended periodically is fine, but 1 repeated is not: x_ω falls back
    x = reference_point(golden, (1,), 3, periodic=True)
    assert x == (1, 0, 0)
    assert least_extension(golden, (0, 1), 4) == (0, 1, 0, 0)


@pytest.mark.parametrize("name", EXAMPLES)
def test_telescope_identity(name):
    sft, p = bundled_example(name)
    for n in (2, 3, 6):
        table = telescope(sft, p, complex(-0.3, 2.0), n)
        assert table.rel_err < 1e-10
        assert sorted(table.layers) == list(range(2, n + 1))


def test_telescope_two_term(golden):
    sft, p = bundled_example("ladder_golden")
    table = telescope(sft, p, complex(0.1, 1.0), 2)
    assert list(table.layers) == [2]
    assert table.double_sum == pytest.approx(table.layers[2])


def test_telescope_constant_layers_vanish(full2):
    table = telescope(full2, constant_potential(full2), 0.7, 6)
    assert all(abs(v) < 1e-12 for v in table.layers.values())
    assert abs(table.direct) < 1e-14 * abs(partition_function(full2, constant_potential(full2), 0.7, 6))


def test_depth1_full_shift_layers_vanish(full2, nonlattice):
    # L^m χ_ω does not depend on the point when every transition is allowed
    s0 = find_root(full2, nonlattice)
    table = telescope(full2, nonlattice, complex(-s0, 5.0), 8)
    assert all(v == 0 for v in table.layers.values())


def test_telescope_layers_decay():
    sft, p = bundled_example("ladder_full2")
    s0 = find_root(sft, p)
    table = telescope(sft, p, complex(-s0, 5.0), 8)
    mags = [abs(table.layers[m]) for m in range(2, 9)]
    assert mags[-1] < mags[0]


def test_fits_are_finite_and_positive():
    sft, p = bundled_example("ladder_golden")
    s0 = find_root(sft, p)
    grid = GridSpec((2, 4), (-s0, 0.0), (1.0, 3.0))
    for fit in (fit_cylinder_bound(sft, p, 0.05, grid), fit_remainder_bound(sft, p, 0.05, grid),
                fit_partition_bound(sft, p, 0.05, grid)):
        assert math.isfinite(fit.fitted_C) and fit.fitted_C > 0
        assert len(fit.rows) == 8
        assert fit.margin["max_ratio"] == fit.fitted_C
        assert all(r["lhs"] <= fit.fitted_C * r["rhs_without_C"] * (1 + 1e-12) for r in fit.rows)


def test_small_imaginary_part_rejected():
    sft, p = bundled_example("ladder_golden")
    with pytest.raises(ValueError):
        fit_cylinder_bound(sft, p, 0.05, GridSpec((2,), (0.0,), (0.5,)))


def test_separated_set_bound():
    sft, p = bundled_example("ladder_full2")
    s0 = find_root(sft, p)
    fit = fit_separated_set(sft, p, 0.05, range(2, 11), (-s0, 0.0, s0))
    assert 0 < fit.fitted_C < 10


def test_cylinder_bound_scales_with_imaginary_part(full2):
    p = constant_potential(full2)
    fit = fit_cylinder_bound(full2, p, 0.0, GridSpec((3,), (0.0,), (10.0, 20.0, 40.0)))
    ratios = [r["ratio"] for r in fit.rows]
    # the seminorm grows linearly in |Im s| only through |e^{is}| = 1 terms, so the ratio falls like 1/|Im s|
    assert np.allclose(np.array(ratios) * np.array([10.0, 20.0, 40.0]), ratios[0] * 10.0, rtol=1e-12)


def test_default_grids_nest():
    coarse, fine = default_grids(1.0)
    assert set(coarse.params) <= set(fine.params)
    assert set(coarse.re) <= set(np.round(fine.re, 12))
    assert set(coarse.im) <= set(fine.im)


def test_refinement_study_stable_on_ladder():
    sft, p = bundled_example("ladder_full2")
    s0 = find_root(sft, p)
    coarse, fine = default_grids(s0, n_max=6)
    study = refinement_study(fit_remainder_bound, sft, p, 0.05, coarse, fine)
    assert study.stable, study
