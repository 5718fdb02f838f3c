"""Tile and edge codings of a Thurston map from combinatorial subdivision data.

Tiles and edges are opaque names.  The data declares, for each 1-tile, its
color (which 0-tile it maps onto) and its location (which 0-tile contains it);
for each 1-edge on the curve, the 0-edge containing it and the 0-edge it maps
onto; the 1-tile on each side of a 1-edge; and the map on postcritical points.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .potential import Potential
from .pressure import find_root, general_pressure
from .sft_core import Sft, admissible_words, is_primitive, trace_power
from .transfer_op import build

COLORS = ("black", "white")


class ThurstonError(ValueError):
    pass


@dataclass(frozen=True)
class Tile:
    color: str
    loc: str
    edges: tuple = ()


@dataclass(frozen=True)
class Edge:
    edge0: str
    image: str


@dataclass(frozen=True)
class PostPoint:
    image: str
    degree: int


@dataclass(frozen=True)
class DeclaredPoint:
    """A periodic point with the 1-tiles and curve 1-edges containing it."""

    image: str
    tiles: tuple
    edges: tuple
    vertex: str | None = None
    degree: int = 1


@dataclass(frozen=True, eq=False)
class SubdivisionData:
    degree: int
    tiles: dict
    edges0: tuple
    edges1: dict
    side_tile: dict
    post_map: dict
    points: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    theta: float = 0.5
    name: str = ""

    @property
    def tile_names(self) -> list:
        return sorted(self.tiles)

    @property
    def edge_names(self) -> list:
        return sorted(self.edges1)

    @property
    def colored_edges(self) -> list:
        return [(e, c) for e in self.edge_names for c in COLORS]

    @property
    def vertex_names(self) -> list:
        return sorted(self.post_map)

    def recolored(self) -> "SubdivisionData":
        """Swap black and white everywhere."""
        swap = {"black": "white", "white": "black"}
        tiles = {t: Tile(swap[v.color], swap[v.loc], v.edges) for t, v in self.tiles.items()}
        side = {(e, swap[c]): t for (e, c), t in self.side_tile.items()}
        return SubdivisionData(self.degree, tiles, self.edges0, self.edges1, side, self.post_map,
                               self.points, self.tables, self.theta, self.name + "-recolored")


def subdivision_from_dict(doc: dict) -> SubdivisionData:
    try:
        tiles = {t: Tile(v["color"], v["loc"], tuple(v.get("edges", ()))) for t, v in doc["tiles"].items()}
        edges1 = {e: Edge(v["edge0"], v["image"]) for e, v in doc["edges1"].items()}
        side = {(e, c): t for e, by_color in doc["side_tile"].items() for c, t in by_color.items()}
        post = {v: PostPoint(d["image"], int(d.get("degree", 1))) for v, d in doc["post_map"].items()}
        points = {
            name: DeclaredPoint(d["image"], tuple(d.get("tiles", ())), tuple(d.get("edges", ())),
                                d.get("vertex"), int(d.get("degree", 1)))
            for name, d in doc.get("points", {}).items()
        }
        return SubdivisionData(int(doc["degree"]), tiles, tuple(doc["edges0"]), edges1, side, post,
                               points, dict(doc.get("potential", {})), float(doc.get("theta", 0.5)),
                               doc.get("name", ""))
    except KeyError as exc:
        raise ThurstonError(f"missing field {exc.args[0]!r}") from None


def load_subdivision(source) -> SubdivisionData:
    if isinstance(source, dict):
        return subdivision_from_dict(source)
    return subdivision_from_dict(json.loads(Path(source).read_text()))


def bundled_subdivision(name: str = "lattes_pillow") -> SubdivisionData:
    return load_subdivision(Path(__file__).with_name("data") / f"{name}.json")


def validate(data: SubdivisionData) -> list:
    """Human-readable list of inconsistencies (empty when the data is valid)."""
    out = []
    if data.degree < 2:
        out.append(f"degree {data.degree} < 2")
    for t, tile in data.tiles.items():
        if tile.color not in COLORS or tile.loc not in COLORS:
            out.append(f"tile {t}: color/loc must be black or white")
        for e in tile.edges:
            if e not in data.edges1:
                out.append(f"tile {t}: unknown edge {e}")
    for c in COLORS:
        n = sum(1 for tile in data.tiles.values() if tile.color == c)
        if n != data.degree:
            out.append(f"{n} tiles of color {c}, expected degree {data.degree}")
    if not data.edges1:
        out.append("no 1-edges")
    for e, edge in data.edges1.items():
        if edge.edge0 not in data.edges0:
            out.append(f"edge {e}: unknown container {edge.edge0}")
        if edge.image not in data.edges0:
            out.append(f"edge {e}: unknown image {edge.image}")
    for e0 in data.edges0:
        if not any(edge.edge0 == e0 for edge in data.edges1.values()):
            out.append(f"0-edge {e0} contains no 1-edge")
    for e in data.edges1:
        for c in COLORS:
            t = data.side_tile.get((e, c))
            if t is None:
                out.append(f"side tile of ({e}, {c}) missing")
            elif t not in data.tiles:
                out.append(f"side tile of ({e}, {c}): unknown tile {t}")
            else:
                if data.tiles[t].loc != c:
                    out.append(f"side tile {t} of ({e}, {c}) lies in the {data.tiles[t].loc} 0-tile")
                if data.tiles[t].edges and e not in data.tiles[t].edges:
                    out.append(f"side tile {t} does not contain edge {e}")
    for v, pt in data.post_map.items():
        if pt.image not in data.post_map:
            out.append(f"postcritical point {v} maps outside the set ({pt.image})")
        if pt.degree < 1:
            out.append(f"postcritical point {v} has degree {pt.degree}")
    for name, pt in data.points.items():
        if pt.image not in data.points:
            out.append(f"declared point {name}: image {pt.image} not declared")
        for t in pt.tiles:
            if t not in data.tiles:
                out.append(f"declared point {name}: unknown tile {t}")
        for e in pt.edges:
            if e not in data.edges1:
                out.append(f"declared point {name}: unknown edge {e}")
        if pt.vertex is not None and pt.vertex not in data.post_map:
            out.append(f"declared point {name}: unknown vertex {pt.vertex}")
    return out


def check(data: SubdivisionData) -> SubdivisionData:
    problems = validate(data)
    if problems:
        raise ThurstonError("; ".join(problems))
    return data


def build_A_delta(data: SubdivisionData) -> Sft:
    """A(X, X') = 1 iff X' lies in the 0-tile that X maps onto."""
    names = data.tile_names
    mat = [[int(data.tiles[y].loc == data.tiles[x].color) for y in names] for x in names]
    return Sft(tuple(names), np.array(mat), data.theta, f"{data.name}:tiles")


def build_A_I(data: SubdivisionData) -> Sft:
    """A(e, e') = 1 iff e' lies in the 0-edge that e maps onto."""
    names = data.edge_names
    if not names:
        raise ThurstonError("no 1-edges")
    mat = [[int(data.edges1[y].edge0 == data.edges1[x].image) for y in names] for x in names]
    return Sft(tuple(names), np.array(mat), data.theta, f"{data.name}:edges")


def _color_step(data: SubdivisionData, e: str, c: str) -> str:
    return data.tiles[data.side_tile[(e, c)]].color


def build_A_II(data: SubdivisionData) -> Sft:
    """Colored edges: (e, c) -> (e', c') iff e -> e' and the side tile X(e, c) maps onto the c' 0-tile."""
    states = data.colored_edges
    mat = [
        [int(data.edges1[e2].edge0 == data.edges1[e1].image and _color_step(data, e1, c1) == c2)
         for (e2, c2) in states]
        for (e1, c1) in states
    ]
    return Sft(tuple(f"{e}/{c}" for e, c in states), np.array(mat), data.theta, f"{data.name}:colored-edges")


def build_vertex_system(data: SubdivisionData) -> Sft:
    names = data.vertex_names
    mat = [[int(data.post_map[v].image == w) for w in names] for v in names]
    return Sft(tuple(names), np.array(mat), data.theta, f"{data.name}:postcritical")


@dataclass(frozen=True)
class RowSumReport:
    by_color: dict
    consistent: bool
    total: int


def row_sums(data: SubdivisionData) -> RowSumReport:
    """Row sums of A_delta grouped by tile color; they depend only on the color."""
    a = build_A_delta(data).matrix
    names = data.tile_names
    by_color = {c: sorted({int(a[i].sum()) for i, t in enumerate(names) if data.tiles[t].color == c}) for c in COLORS}
    per_loc = {c: sum(1 for t in names if data.tiles[t].loc == c) for c in COLORS}
    consistent = all(len(v) == 1 for v in by_color.values()) and all(
        by_color[c] == [per_loc[c]] for c in COLORS)
    total = sum(v[0] for v in by_color.values() if len(v) == 1)
    return RowSumReport({c: v[0] if len(v) == 1 else v for c, v in by_color.items()}, consistent, total)


@dataclass(frozen=True)
class LiftReport:
    max_length: int
    cycles: int
    min_lifts: int
    max_lifts: int
    closed_lifts: dict

    @property
    def two_to_one(self) -> bool:
        return self.min_lifts == self.max_lifts == 2


def lift_counts(data: SubdivisionData, max_length: int = 8) -> LiftReport:
    """Lifts of every edge cycle of length ≤ max_length to colored-edge paths.

    The cycle ω is read as the path ω_0 … ω_{n−1} ω_0; each path must have exactly
    two colored lifts.  ``closed_lifts`` tallies how many lifts return to their
    starting color (those are the periodic lifts).
    """
    a_i = build_A_I(data)
    a_ii = build_A_II(data)
    cycles, lo, hi = 0, math.inf, -math.inf
    closed = {}
    for n in range(1, max_length + 1):
        for word in admissible_words(a_i, n).tolist():
            if not a_i.matrix[word[-1], word[0]]:
                continue
            cycles += 1
            allowed = [{f"{a_i.states[i]}/{c}" for c in COLORS} for i in word + word[:1]]
            lifts = _restricted_paths(a_ii.matrix, a_ii.states, allowed)
            closed_here = _restricted_walks(a_ii.matrix, a_ii.states, allowed[:-1])
            lo, hi = min(lo, lifts), max(hi, lifts)
            closed[closed_here] = closed.get(closed_here, 0) + 1
    return LiftReport(max_length, cycles, int(lo), int(hi), dict(sorted(closed.items())))


@dataclass(frozen=True, eq=False)
class CodingPotentials:
    tiles: Potential
    edges: Potential
    colored: Potential
    vertices: Potential


def coding_potentials(data: SubdivisionData, tables: dict | None = None) -> CodingPotentials:
    """Depth-1 value tables on the three codings and on the postcritical set."""
    tables = tables if tables is not None else data.tables
    for key in ("tiles", "edges", "vertices"):
        if key not in tables:
            raise ThurstonError(f"missing value table {key!r}")
    a_d, a_i, a_ii, a_v = build_A_delta(data), build_A_I(data), build_A_II(data), build_vertex_system(data)

    def table(sft, source, names):
        missing = [n for n in names if n not in source]
        if missing:
            raise ThurstonError(f"missing values for {missing}")
        return Potential(sft, 1, np.array([float(source[n]) for n in names]))

    edges = tables["edges"]
    return CodingPotentials(
        table(a_d, tables["tiles"], data.tile_names),
        table(a_i, edges, data.edge_names),
        table(a_ii, {f"{e}/{c}": edges[e] for e in data.edge_names if e in edges for c in COLORS}, a_ii.states),
        table(a_v, tables["vertices"], data.vertex_names),
    )


def weighted_trace(p: Potential, s: complex, n: int) -> complex:
    """Σ over period-n points of exp(s·S_nφ) for a depth-1 table: trace of B^n."""
    b = build(p.sft, p, s).entries
    return complex(np.trace(np.linalg.matrix_power(b, n)))


def postcritical_cycles(data: SubdivisionData) -> list:
    """Primitive periodic cycles of the map on postcritical points, each from its least vertex."""
    seen, out = set(), []
    for v in data.vertex_names:
        path, x = [], v
        while x not in path and len(path) <= len(data.post_map):
            path.append(x)
            x = data.post_map[x].image
        if x == v:
            key = frozenset(path)
            if key not in seen:
                seen.add(key)
                out.append(tuple(path))
    return out


def eta_values(data: SubdivisionData, s0: float, tables: dict | None = None) -> dict:
    """η_τ = deg_f(τ)·exp(−s0·Σ_τ φ) for postcritical cycles with a critical point."""
    tables = tables if tables is not None else data.tables
    out = {}
    for tau in postcritical_cycles(data):
        deg = math.prod(data.post_map[v].degree for v in tau)
        if deg > 1:
            length = math.fsum(float(tables["vertices"][v]) for v in tau)
            out[tau] = deg * math.exp(-s0 * length)
    return out


@dataclass(frozen=True)
class CorrectionTerms:
    n: int
    s: complex
    I_n: complex
    Pi_n: complex
    Z_delta_n: complex
    Z_f_n: complex


def degree_excess(data: SubdivisionData, s: complex, n: int, tables: dict | None = None) -> complex:
    """I_n(s): Σ (deg_{f^n}(x) − 1)·exp(s·S_nφ(x)) over postcritical x with f^n x = x."""
    tables = tables if tables is not None else data.tables
    total = 0j
    for tau in postcritical_cycles(data):
        k = len(tau)
        if n % k:
            continue
        m = n // k
        deg = math.prod(data.post_map[v].degree for v in tau) ** m
        if deg > 1:
            length = math.fsum(float(tables["vertices"][v]) for v in tau)
            total += k * (deg - 1) * np.exp(complex(s) * m * length)
    return complex(total)


def corrections(data: SubdivisionData, s: complex, n: int, tables: dict | None = None,
                potentials: CodingPotentials | None = None) -> CorrectionTerms:
    pots = potentials or coding_potentials(data, tables)
    z_delta = weighted_trace(pots.tiles, s, n)
    pi_n = weighted_trace(pots.colored, s, n) - weighted_trace(pots.edges, s, n) - weighted_trace(pots.vertices, s, n)
    i_n = degree_excess(data, s, n, tables)
    return CorrectionTerms(n, complex(s), i_n, pi_n, z_delta, z_delta - i_n - pi_n)


@dataclass(frozen=True)
class AggregateRow:
    n: int
    degree_count: int
    trace_delta: int
    trace_II: int
    trace_I: int
    vertex_fixed: int

    @property
    def rhs(self) -> int:
        return self.trace_delta - self.trace_II + self.trace_I + self.vertex_fixed

    @property
    def ok(self) -> bool:
        return self.rhs == self.degree_count


@dataclass(frozen=True)
class PointwiseRow:
    point: str
    n: int
    degree: int
    M_delta: int
    M_II: int
    M_I: int
    M_vertex: int

    @property
    def ok(self) -> bool:
        return self.degree == self.M_delta - self.M_II + self.M_I + self.M_vertex


@dataclass
class DegreeIdentityReport:
    aggregate: list
    pointwise: list

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.aggregate) and all(r.ok for r in self.pointwise)


def _orbit(data: SubdivisionData, name: str, n: int) -> list:
    out = [name]
    for _ in range(n - 1):
        out.append(data.points[out[-1]].image)
    return out


def _restricted_paths(a: np.ndarray, states: Sequence[str], allowed: list) -> int:
    """Paths X_0 … X_{m−1} with X_i in allowed[i]."""
    count = np.array([s in allowed[0] for s in states], dtype=object).astype(object)
    a = np.asarray(a, dtype=object)
    for allow in allowed[1:]:
        count = count.dot(a) * np.array([s in allow for s in states], dtype=object)
    return int(count.sum())


def _restricted_walks(a: np.ndarray, states: Sequence[str], allowed: list) -> int:
    """Closed walks X_0 … X_{n−1} X_0 with X_i in allowed[i]."""
    masks = [np.array([s in allow for s in states], dtype=object) for allow in allowed]
    a = np.asarray(a, dtype=object)
    prod = np.diag(masks[0]).astype(object)
    for i in range(len(allowed)):
        nxt = masks[(i + 1) % len(allowed)]
        prod = prod.dot(a * nxt[None, :])
    return int(np.trace(prod))


def degree_identity_check(data: SubdivisionData, n_max: int = 8) -> DegreeIdentityReport:
    """deg_{f^n} = M_Δ − M_II + M_I + M_• in aggregate and at declared points.

    The aggregate left side is deg(f)^n + 1, the number of fixed points of f^n
    counted with local degree for a branched self-cover of the sphere.
    """
    a_d, a_i, a_ii, a_v = build_A_delta(data), build_A_I(data), build_A_II(data), build_vertex_system(data)
    aggregate = [
        AggregateRow(n, data.degree ** n + 1, trace_power(a_d.matrix, n), trace_power(a_ii.matrix, n),
                     trace_power(a_i.matrix, n), trace_power(a_v.matrix, n))
        for n in range(1, n_max + 1)
    ]
    pointwise = []
    if not data.points:
        warnings.warn("no declared fibers: pointwise degree identity skipped", UserWarning, stacklevel=2)
    for name, pt in sorted(data.points.items()):
        for n in range(1, n_max + 1):
            orbit = _orbit(data, name, n)
            if data.points[orbit[-1]].image != name:
                continue
            pts = [data.points[x] for x in orbit]
            degree = math.prod(p.degree if p.vertex is None else data.post_map[p.vertex].degree for p in pts)
            m_d = _restricted_walks(a_d.matrix, a_d.states, [set(p.tiles) for p in pts])
            m_i = _restricted_walks(a_i.matrix, a_i.states, [set(p.edges) for p in pts])
            m_ii = _restricted_walks(a_ii.matrix, a_ii.states,
                                     [{f"{e}/{c}" for e in p.edges for c in COLORS} for p in pts])
            m_v = _restricted_walks(a_v.matrix, a_v.states, [{p.vertex} if p.vertex else set() for p in pts])
            pointwise.append(PointwiseRow(name, n, degree, m_d, m_ii, m_i, m_v))
    return DegreeIdentityReport(aggregate, pointwise)


def consistency_check(data: SubdivisionData, max_period: int = 8, tol: float = 1e-12,
                      tables: dict | None = None) -> list:
    """Birkhoff sums of declared periodic points must agree across codings.

    Returns a list of mismatches; the tables are user-supplied pullbacks, and this
    is the only place they are compared.
    """
    tables = tables if tables is not None else data.tables
    pots = coding_potentials(data, tables)
    problems = []
    codings = (("tiles", build_A_delta(data), pots.tiles, lambda p: p.tiles),
               ("edges", build_A_I(data), pots.edges, lambda p: p.edges))
    for name in sorted(data.points):
        period = next((n for n in range(1, max_period + 1)
                       if data.points[_orbit(data, name, n)[-1]].image == name), None)
        if period is None:
            continue
        # some codings only see the point at a multiple of its period
        for n in range(period, max_period + 1, period):
            pts = [data.points[x] for x in _orbit(data, name, n)]
            sums = set()
            for label, sft, pot, cells in codings:
                for walk in itertools.product(*[sorted(cells(p)) for p in pts]):
                    idx = [sft.states.index(w) for w in walk]
                    if all(sft.matrix[i, j] for i, j in zip(idx, idx[1:] + idx[:1])):
                        sums.add((label, round(math.fsum(pot.table[i] for i in idx), 12)))
            vertex_sum = ([math.fsum(float(tables["vertices"][p.vertex]) for p in pts)]
                          if all(p.vertex for p in pts) else [])
            values = [v for _, v in sums] + vertex_sum
            if values and max(values) - min(values) > tol:
                problems.append(f"point {name}, n={n}: Birkhoff sums disagree {sorted(sums)} {vertex_sum}")
                break
    return problems


@dataclass(frozen=True)
class GapReport:
    t: float
    P_delta: float
    P_I: float
    P_II: float
    P_vertex: float

    @property
    def gap_edges(self) -> float:
        return self.P_delta - self.P_I

    @property
    def gap_vertices(self) -> float:
        return self.P_delta - self.P_vertex

    @property
    def edge_mismatch(self) -> float:
        return abs(self.P_I - self.P_II)


def pressure_gaps(data: SubdivisionData, t: float, potentials: CodingPotentials | None = None) -> GapReport:
    pots = potentials or coding_potentials(data)
    return GapReport(float(t), *(general_pressure(p.sft, p, t)
                                 for p in (pots.tiles, pots.edges, pots.colored, pots.vertices)))


def tile_root(data: SubdivisionData, potentials: CodingPotentials | None = None) -> float:
    """s0 with P(σ_Δ, −s0·φ) = 0."""
    pots = potentials or coding_potentials(data)
    return find_root(pots.tiles.sft, pots.tiles)


@dataclass
class DecayFit:
    s0: float
    rows: list
    edge_rate: float
    kappa: float
    fitted_C: float


def correction_decay(data: SubdivisionData, ns: Sequence[int] = tuple(range(4, 11)),
                     im: Sequence[float] = (0.0, 1.0, 2.0, 5.0), margin: float = 0.02) -> DecayFit:
    """|Π_n(−s0)|^{1/n} per n, and the fit |I_n + Π_n| ≤ C·κ^n on Re s = −s0."""
    pots = coding_potentials(data)
    s0 = tile_root(data, pots)
    gaps = pressure_gaps(data, -s0, pots)
    edge_rate = math.exp(gaps.P_I)
    kappa = math.exp(max(gaps.P_I, gaps.P_vertex)) + margin
    rows = []
    for n in ns:
        for b in im:
            ct = corrections(data, complex(-s0, b), n, potentials=pots)
            rows.append({"n": n, "im": b, "abs_Pi": abs(ct.Pi_n), "root_Pi": abs(ct.Pi_n) ** (1.0 / n),
                         "abs_I": abs(ct.I_n), "abs_total": abs(ct.I_n + ct.Pi_n)})
    c = max(r["abs_total"] / kappa ** r["n"] for r in rows)
    return DecayFit(s0, rows, edge_rate, kappa, c)


@dataclass
class ThurstonReport:
    problems: list
    row_sums: RowSumReport
    delta_primitive: bool
    lifts: LiftReport
    s0: float
    gaps: list
    decay: DecayFit
    degree: DegreeIdentityReport
    eta: dict
    consistency: list

    def summary(self) -> dict:
        return {
            "valid": not self.problems, "problems": self.problems,
            "row_sums": self.row_sums.by_color, "row_sums_consistent": self.row_sums.consistent,
            "A_delta_primitive": self.delta_primitive,
            "lift_two_to_one": self.lifts.two_to_one, "lift_cycles": self.lifts.cycles,
            "closed_lifts": {str(k): v for k, v in self.lifts.closed_lifts.items()},
            "s0": self.s0,
            "gaps": [{"t": g.t, "P_delta": g.P_delta, "P_I": g.P_I, "P_II": g.P_II, "P_vertex": g.P_vertex}
                     for g in self.gaps],
            "edge_rate": self.decay.edge_rate, "kappa": self.decay.kappa, "fitted_C": self.decay.fitted_C,
            "degree_identity": self.degree.passed,
            "eta": {"->".join(k): v for k, v in self.eta.items()},
            "consistency_problems": self.consistency,
        }


def analyze(data: SubdivisionData, n_max: int = 8) -> ThurstonReport:
    problems = validate(data)
    if problems:
        raise ThurstonError("; ".join(problems))
    pots = coding_potentials(data)
    s0 = tile_root(data, pots)
    return ThurstonReport(
        problems, row_sums(data), is_primitive(build_A_delta(data))[0], lift_counts(data, n_max), s0,
        [pressure_gaps(data, t, pots) for t in (0.0, -s0)], correction_decay(data),
        degree_identity_check(data, n_max), eta_values(data, s0), consistency_check(data),
    )
