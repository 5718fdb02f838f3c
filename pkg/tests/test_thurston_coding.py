import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest

import orbitlab
from orbitlab.sft_core import count_fixed_points, is_primitive, trace_power
from orbitlab.thurston_coding import (
    COLORS,
    ThurstonError,
    analyze,
    build_A_I,
    build_A_II,
    build_A_delta,
    build_vertex_system,
    bundled_subdivision,
    check,
    coding_potentials,
    consistency_check,
    correction_decay,
    corrections,
    degree_excess,
    degree_identity_check,
    lift_counts,
    load_subdivision,
    pressure_gaps,
    row_sums,
    tile_root,
    validate,
)

DATA_FILE = Path(orbitlab.__file__).with_name("data") / "lattes_pillow.json"


@pytest.fixture
def doc():
    return json.loads(DATA_FILE.read_text())


@pytest.fixture
def pillow():
    return bundled_subdivision()


def zero_tables(data):
    return {"tiles": {t: 0.0 for t in data.tile_names}, "edges": {e: 0.0 for e in data.edge_names},
            "vertices": {v: 0.0 for v in data.vertex_names}}


def closed_walks(sft, allowed):
    """Brute-force count of cyclic words whose i-th letter lies in allowed[i]."""
    index = {s: i for i, s in enumerate(sft.states)}
    a = sft.matrix
    total = 0
    for walk in itertools.product(*[sorted(s) for s in allowed]):
        idx = [index[w] for w in walk]
        total += all(a[i, j] for i, j in zip(idx, idx[1:] + idx[:1]))
    return total


def test_bundled_is_valid(pillow):
    assert validate(pillow) == []


def test_row_sums_depend_on_color(pillow):
    report = row_sums(pillow)
    assert report.consistent
    assert report.by_color == {"black": 4, "white": 4}
    assert report.total == 8


def test_tile_matrix_primitive(pillow):
    a = build_A_delta(pillow)
    assert a.size == 8
    assert is_primitive(a)[0]


def test_degree_one_rejected(doc):
    doc["degree"] = 1
    doc["tiles"] = {"F": {"color": "black", "loc": "black"}, "K": {"color": "white", "loc": "white"}}
    problems = validate(load_subdivision(doc))
    assert any("degree 1 < 2" in p for p in problems)
    with pytest.raises(ThurstonError):
        check(load_subdivision(doc))


def test_empty_edges_rejected(doc):
    doc["edges1"] = {}
    data = load_subdivision(doc)
    assert "no 1-edges" in validate(data)
    with pytest.raises(ThurstonError):
        build_A_I(data)


def test_missing_field(doc):
    del doc["tiles"]
    with pytest.raises(ThurstonError):
        load_subdivision(doc)


def test_wrong_side_tile_detected(doc):
    doc["side_tile"]["B2"]["black"] = "K10"
    assert any("side tile K10" in p for p in validate(load_subdivision(doc)))


def test_recolor_symmetry(pillow):
    flipped = pillow.recolored()
    assert validate(flipped) == []
    a, b = build_A_delta(pillow).matrix, build_A_delta(flipped).matrix
    # swapping colors maps each tile's row to the partner tile on the other face
    partner = [pillow.tile_names.index(t.replace("F", "#").replace("K", "F").replace("#", "K"))
               for t in pillow.tile_names]
    perm = np.eye(8, dtype=np.int64)[partner]
    assert np.array_equal(perm @ a @ perm.T, b)
    assert lift_counts(flipped, 6) == lift_counts(pillow, 6)


def test_lifts_two_to_one(pillow):
    report = lift_counts(pillow, 8)
    assert report.two_to_one
    assert report.cycles == 1020
    assert report.closed_lifts == {0: 510, 2: 510}


@pytest.mark.parametrize("n", range(1, 9))
def test_traces(pillow, n):
    a_d, a_i, a_ii, a_v = build_A_delta(pillow), build_A_I(pillow), build_A_II(pillow), build_vertex_system(pillow)
    assert trace_power(a_d.matrix, n) == 4 ** n
    assert trace_power(a_i.matrix, n) == 2 ** (n + 1)
    assert trace_power(a_ii.matrix, n) == 2 ** (n + 1)
    assert trace_power(a_v.matrix, n) == 1
    for sft in (a_d, a_i, a_ii, a_v):
        assert count_fixed_points(sft, n) == trace_power(sft.matrix, n)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_corrections_at_zero(pillow, n):
    ct = corrections(pillow, 0.0, n, tables=zero_tables(pillow))
    assert ct.Pi_n == pytest.approx(-1.0)
    assert ct.I_n == 0
    assert ct.Z_f_n == pytest.approx(4 ** n + 1)


def test_degree_excess_with_critical_cycle(pillow, doc):
    tables = zero_tables(pillow)
    tables["vertices"]["v00"] = 0.5
    doc["post_map"]["v00"]["degree"] = 2
    crit = load_subdivision(doc)
    # a fixed critical point of local degree 2 contributes (2^n − 1)·e^{s·n·φ}
    assert degree_excess(crit, 1.0, 3, tables) == pytest.approx(7 * math.exp(1.5))
    assert degree_excess(pillow, 1.0, 3, tables) == 0


def test_degree_identity(pillow):
    report = degree_identity_check(pillow, 8)
    assert report.passed
    assert [r.degree_count for r in report.aggregate] == [4 ** n + 1 for n in range(1, 9)]
    assert [r.rhs for r in report.aggregate] == [4 ** n + 1 for n in range(1, 9)]


def test_pointwise_rows_match_brute_force(pillow):
    a_d, a_i, a_ii, a_v = build_A_delta(pillow), build_A_I(pillow), build_A_II(pillow), build_vertex_system(pillow)
    report = degree_identity_check(pillow, 6)
    for row in report.pointwise:
        pt = pillow.points[row.point]
        n = row.n
        assert row.M_delta == closed_walks(a_d, [set(pt.tiles)] * n)
        assert row.M_I == closed_walks(a_i, [set(pt.edges)] * n)
        assert row.M_II == closed_walks(a_ii, [{f"{e}/{c}" for e in pt.edges for c in COLORS}] * n)
    bottom = {r.n: (r.M_delta, r.M_II, r.M_I, r.M_vertex) for r in report.pointwise if r.point == "p_bottom"}
    assert bottom[1] == (0, 0, 1, 0)
    assert bottom[2] == (2, 2, 1, 0)


def test_no_points_warns(doc):
    doc.pop("points")
    with pytest.warns(UserWarning):
        report = degree_identity_check(load_subdivision(doc), 3)
    assert report.pointwise == [] and report.passed


def test_consistency(pillow, doc):
    assert consistency_check(pillow) == []
    doc["potential"]["edges"]["B2"] = 9.0
    assert consistency_check(load_subdivision(doc))


def test_pressure_gaps(pillow):
    at_zero = pressure_gaps(pillow, 0.0)
    assert at_zero.P_delta == pytest.approx(math.log(4))
    assert at_zero.P_I == pytest.approx(math.log(2))
    assert at_zero.P_vertex == pytest.approx(0.0, abs=1e-14)
    s0 = tile_root(pillow)
    at_root = pressure_gaps(pillow, -s0)
    assert at_root.P_delta == pytest.approx(0.0, abs=1e-10)
    assert at_root.gap_edges > 0.4
    assert at_root.gap_vertices > 0
    assert at_root.edge_mismatch < 1e-12


def test_colored_edges_share_edge_pressure(pillow):
    pots = coding_potentials(pillow)
    for t in (-1.0, 0.0, 0.5):
        g = pressure_gaps(pillow, t, pots)
        assert g.P_II == pytest.approx(g.P_I, abs=1e-12)


def test_correction_decay(pillow):
    fit = correction_decay(pillow, ns=range(4, 9), im=(0.0, 2.0))
    assert fit.kappa < 1
    assert max(r["root_Pi"] for r in fit.rows) <= fit.kappa
    assert math.isfinite(fit.fitted_C) and fit.fitted_C > 0


def test_analyze_summary(pillow):
    summary = analyze(pillow, 6).summary()
    assert summary["valid"] and summary["degree_identity"] and summary["lift_two_to_one"]
    assert summary["A_delta_primitive"]
    assert summary["consistency_problems"] == []
