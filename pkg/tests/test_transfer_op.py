import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import SQRT2
from orbitlab.potential import Potential, bundled_example, constant_potential, depth1_potential
from orbitlab.pressure import find_root
from orbitlab.sft_core import admissible_words
from orbitlab.transfer_op import (
    LocallyConstantFunction,
    TransferError,
    apply,
    apply_power,
    build,
    constant_function,
    cylinder_function,
    cylinder_image,
    cylinder_image_at,
    export_csv,
    holder_norm,
    operator_norm_estimate,
    perron,
    spectral_radius,
    spectral_radius_of,
)

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2


def test_build_full2_constant(full2):
    M = build(full2, constant_potential(full2), 0.0)
    assert np.array_equal(M.entries, np.ones((2, 2)))


def test_build_golden_depth1(golden):
    t, a0, a1 = 0.7, 0.3, -1.2
    M = build(golden, depth1_potential(golden, [a0, a1]), t)
    expected = [[math.exp(t * a0), math.exp(t * a0)], [math.exp(t * a1), 0.0]]
    assert np.allclose(M.entries, expected, rtol=1e-15)


def test_build_at_zero_is_successor_pattern(golden):
    p = Potential(golden, 3, np.linspace(-1, 1, admissible_words(golden, 3).shape[0]))
    M = build(golden, p, 0.0)
    assert np.array_equal(M.entries.real, p.graph.astype(float))


def test_apply_constant(full2, nonlattice):
    out = apply(build(full2, nonlattice, 0.0), constant_function(full2))
    assert np.allclose(out.values, 2.0)


def test_cylinder_examples(golden):
    s = 0.4 + 1.3j
    p = depth1_potential(golden, [0.5, 2.0])
    M = build(golden, p, s)
    assert apply(M, cylinder_function(golden, (1,)))((1,)) == 0
    assert apply(M, cylinder_function(golden, (0,)))((0,)) == pytest.approx(cmath.exp(s * 0.5))


@pytest.mark.parametrize("name", ["ladder_golden", "ladder_full2", "golden_mean"])
def test_cylinder_image_matches_iteration(name):
    sft, p = bundled_example(name)
    M = build(sft, p, -0.3 + 2.0j)
    for m in (1, 2, 4):
        for word in admissible_words(sft, m).tolist():
            closed = cylinder_image(M, word)
            if m <= p.depth:
                iterated = apply_power(M, cylinder_function(sft, word), m)
            else:
                iterated = _image_by_preimages(M, word)
            assert np.allclose(closed.values, iterated.values, rtol=1e-12, atol=1e-14)
            for w in closed.windows.tolist():
                point = list(w) + [0] * p.depth
                if sft.is_admissible(point[: p.depth]):
                    assert cylinder_image_at(M, word, w) == pytest.approx(closed(w), rel=1e-12, abs=1e-14)


def _image_by_preimages(M, word):
    """(L^m χ_ω)(x) = Σ over y with σ^m y = x, y ∈ C_ω of exp(s S_m φ(y)); only y = ωx qualifies."""
    p = M.potential
    sft = p.sft
    out = []
    for w in p.windows.tolist():
        seq = list(word) + list(w)
        if not sft.is_admissible(seq):
            out.append(0j)
            continue
        total = math.fsum(p.value(seq[j:j + p.depth]) for j in range(len(word)))
        out.append(cmath.exp(M.s * total))
    return LocallyConstantFunction(sft, p.depth, np.array(out))


def test_depth_overflow(golden):
    M = build(golden, depth1_potential(golden, [0.0, 1.0]), 1.0)
    with pytest.raises(TransferError):
        apply(M, cylinder_function(golden, (0, 1)))


def test_perron_closed_forms(full2, golden):
    t = -0.8
    assert perron(build(full2, constant_potential(full2), t)).lam == pytest.approx(2 * math.exp(t), rel=1e-13)
    p = depth1_potential(full2, [1.0, SQRT2])
    assert perron(build(full2, p, t)).lam == pytest.approx(math.exp(t) + math.exp(SQRT2 * t), rel=1e-13)
    assert perron(build(golden, constant_potential(golden, 0.0), 0.0)).lam == pytest.approx(GOLDEN_RATIO, rel=1e-13)


def test_perron_vectors(golden):
    p = Potential(golden, 2, {(0, 0): 0.3, (0, 1): 0.7, (1, 0): -0.1})
    M = build(golden, p, 1.0)
    data = perron(M)
    b = M.real_entries()
    assert np.allclose(b @ data.right, data.lam * data.right, rtol=1e-12)
    assert np.allclose(data.left @ b, data.lam * data.left, rtol=1e-12)
    assert data.lam == pytest.approx(max(abs(np.linalg.eigvals(b))), rel=1e-12)


def test_spectral_radius_at_root_is_one(full2, nonlattice):
    s0 = find_root(full2, nonlattice)
    M = build(full2, nonlattice, -s0)
    assert spectral_radius(M) == pytest.approx(1.0, rel=1e-6)
    assert spectral_radius(M) == pytest.approx(perron(M).lam, rel=1e-6)


def test_spectral_radius_full2(full2, nonlattice):
    assert spectral_radius(build(full2, nonlattice, 0.0)) == pytest.approx(2.0, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi))
def test_spectral_radius_2x2(l1, scale, l2, phase):
    # B = V diag(λ1, λ2) V⁻¹ with |λ1| ≠ |λ2| kept apart
    lam1 = complex(l1 + math.copysign(scale, l1 or 1.0))
    lam2 = 0.5 * abs(lam1) * cmath.exp(1j * phase)
    v = np.array([[1.0, 0.3], [0.2, 1.0]], dtype=complex)
    b = v @ np.diag([lam1, lam2]) @ np.linalg.inv(v)
    assert spectral_radius_of(b) == pytest.approx(abs(lam1), rel=1e-6)


def test_holder_norm_examples(golden):
    assert holder_norm(constant_function(golden, 3 - 4j), 1.0, 0.5) == pytest.approx(5.0)
    assert holder_norm(constant_function(golden, 0.0), 1.0, 0.5) == 0.0
    chi = cylinder_function(golden, (0, 1))
    # the windows 00 and 01 differ first at index 1, so the seminorm is 1/θ
    assert holder_norm(chi, 1.0, 0.5) == pytest.approx(1.0 + 2.0)
    chi3 = cylinder_function(golden, (1, 0, 0))
    assert holder_norm(chi3, 1.0, 0.5) == pytest.approx(1.0 + 4.0)


def test_operator_norm_identity(golden):
    M = build(golden, depth1_potential(golden, [0.2, 0.9]), 0.5 + 1j)
    assert operator_norm_estimate(M, 0).lower == pytest.approx(1.0)


def test_operator_norm_tracks_perron(full2, nonlattice):
    s0 = find_root(full2, nonlattice)
    M = build(full2, nonlattice, -s0)
    norms = [operator_norm_estimate(M, n).upper for n in (5, 10, 20, 40)]
    assert max(norms) / min(norms) < 1.5
    with pytest.raises(ValueError):
        operator_norm_estimate(M, -1)


def test_operator_norm_decays_off_axis(full2, nonlattice):
    s0 = find_root(full2, nonlattice)
    M = build(full2, nonlattice, complex(-s0, 5.0))
    assert operator_norm_estimate(M, 40).upper < 0.5 * operator_norm_estimate(M, 5).upper


def test_linearity(golden):
    sft, p = bundled_example("ladder_golden")
    M = build(sft, p, 0.2 - 0.7j)
    rng = np.random.default_rng(3)
    n = admissible_words(sft, p.depth).shape[0]
    u = LocallyConstantFunction(sft, p.depth, rng.normal(size=n) + 1j * rng.normal(size=n))
    v = LocallyConstantFunction(sft, p.depth, rng.normal(size=n))
    lhs = apply_power(M, u * 2.0 + v, 3)
    rhs = apply_power(M, u, 3) * 2.0 + apply_power(M, v, 3)
    assert np.allclose(lhs.values, rhs.values, rtol=1e-12)


def test_export_csv(tmp_path, golden):
    M = build(golden, depth1_potential(golden, [0.1, 0.2]), 1j)
    path = tmp_path / "m.csv"
    export_csv(M, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,re,im"
    assert len(lines) == 1 + 3
