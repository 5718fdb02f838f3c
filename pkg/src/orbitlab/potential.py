"""Depth-k locally constant potentials: Birkhoff sums, drift shift, positivity, Hölder seminorm."""
from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .sft_core import Sft, admissible_words, is_primitive, load_sft


class PotentialError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt, "log": math.log, "exp": math.exp, "sin": math.sin, "cos": math.cos}
_CONSTS = {"pi": math.pi, "e": math.e}


def evaluate_expression(text) -> float:
    """Evaluate a small arithmetic expression such as ``"sqrt(2)"`` or ``"1/3"``."""
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        raise PotentialError(f"unsupported expression {text!r}")

    try:
        return float(ev(ast.parse(str(text), mode="eval")))
    except SyntaxError:
        raise PotentialError(f"cannot parse value {text!r}") from None


class Potential:
    """A real function of the first ``depth`` symbols of a point.

    ``windows`` lists the admissible depth-k words in lexicographic order and
    ``table`` holds the matching values.  ``lookup`` maps the base-q code of any
    k-word to its value (NaN for inadmissible words).
    """

    def __init__(self, sft: Sft, depth: int, values, name: str = ""):
        if depth < 1:
            raise PotentialError("depth must be >= 1")
        self.sft = sft
        self.depth = int(depth)
        self.name = name
        self.windows = admissible_words(sft, self.depth)
        q = sft.size
        codes = np.zeros(self.windows.shape[0], dtype=np.int64)
        for col in range(self.depth):
            codes = codes * q + self.windows[:, col]
        self.window_codes = codes
        self.index = {tuple(int(s) for s in w): i for i, w in enumerate(self.windows.tolist())}
        table = np.empty(len(self.index))
        if isinstance(values, dict):
            given = {tuple(k): float(v) for k, v in values.items()}
            extra = set(given) - set(self.index)
            if extra:
                raise PotentialError(f"values given for inadmissible words {sorted(extra)}")
            for w, i in self.index.items():
                if w not in given:
                    raise PotentialError(f"missing value for word {sft.label(w)}")
                table[i] = given[w]
        else:
            table[:] = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(table)):
            raise PotentialError("potential values must be finite")
        table.setflags(write=False)
        self.table = table
        self.lookup = np.full(q ** self.depth, np.nan)
        self.lookup[codes] = table

    @cached_property
    def graph(self) -> np.ndarray:
        return window_graph(self)

    @cached_property
    def primitive(self) -> bool:
        return is_primitive(self.graph)[0]

    def value(self, window: Sequence[int]) -> float:
        try:
            return float(self.table[self.index[tuple(window)]])
        except KeyError:
            raise PotentialError(f"word {tuple(window)} is not admissible on {self.sft.name or 'this shift'}") from None

    def scaled(self, c: float) -> "Potential":
        return Potential(self.sft, self.depth, c * self.table, self.name)

    def shifted(self, c: float) -> "Potential":
        return Potential(self.sft, self.depth, self.table - c, self.name)

    def refine(self, depth: int) -> "Potential":
        """Same function, tabulated on longer windows."""
        if depth < self.depth:
            raise PotentialError("cannot refine to a smaller depth")
        if depth == self.depth:
            return self
        longer = admissible_words(self.sft, depth)
        vals = [self.table[self.index[tuple(w[: self.depth])]] for w in longer.tolist()]
        return Potential(self.sft, depth, np.array(vals), self.name)

    def values_dict(self) -> dict:
        return {self.sft.label(w): float(self.table[i]) for w, i in self.index.items()}


@dataclass(frozen=True)
class NormalizedPotential:
    """Potential minus its drift."""

    base: Potential
    drift: float

    @property
    def potential(self) -> Potential:
        return self.base.shifted(self.drift)

    def birkhoff_sum(self, word: Sequence[int]) -> float:
        return birkhoff_sum(self.base, word) - len(word) * self.drift


def normalize(p: Potential, alpha: float) -> NormalizedPotential:
    return NormalizedPotential(p, float(alpha))


def cyclic_windows(word: Sequence[int], depth: int) -> list:
    n = len(word)
    return [tuple(word[(j + i) % n] for i in range(depth)) for j in range(n)]


def birkhoff_sum(p: Potential, word: Sequence[int]) -> float:
    """Sum of the potential over the n cyclic windows of a periodic word."""
    if not p.sft.is_admissible(word, cyclic=True):
        raise PotentialError(f"word {tuple(word)} is not a periodic word of this shift")
    return math.fsum(p.value(w) for w in cyclic_windows(word, p.depth))


def block_birkhoff_sums(p: Potential, words: np.ndarray) -> np.ndarray:
    """Cyclic Birkhoff sums for each row of ``words``, Kahan-compensated across columns."""
    n = words.shape[1]
    q = p.sft.size
    total = np.zeros(words.shape[0])
    comp = np.zeros(words.shape[0])
    w = words.astype(np.int64)
    for j in range(n):
        code = np.zeros(words.shape[0], dtype=np.int64)
        for i in range(p.depth):
            code = code * q + w[:, (j + i) % n]
        y = p.lookup[code] - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def min_plus_power_minima(p: Potential, n_max: int) -> np.ndarray:
    """m[N] = exact minimum of S_N over all points, for N = 1..n_max (index 0 unused)."""
    graph = p.graph
    vals = p.table
    best = vals.copy()
    out = np.full(n_max + 1, np.nan)
    out[1] = best.min()
    # best[w] = min over admissible paths of N windows ending at w
    pred = [np.nonzero(graph[:, j])[0] for j in range(graph.shape[0])]
    for big_n in range(2, n_max + 1):
        best = np.array([best[pr].min() for pr in pred]) + vals
        out[big_n] = best.min()
    return out


def window_graph(p: Potential) -> np.ndarray:
    """Boolean successor relation on admissible depth-k windows (one-step shift)."""
    w = p.windows.astype(np.int64)
    k = p.depth
    a = p.sft.matrix
    size = w.shape[0]
    if k == 1:
        return a.astype(bool).copy()
    by_prefix = {}
    for i, row in enumerate(w.tolist()):
        by_prefix.setdefault(tuple(row[:-1]), []).append(i)
    g = np.zeros((size, size), dtype=bool)
    for i, row in enumerate(w.tolist()):
        for j in by_prefix.get(tuple(row[1:]), []):
            g[i, j] = True
    return g


def cycle_mean_extremes(p: Potential) -> tuple:
    """(minimum, maximum) mean weight of a cycle in the window graph, by Karp's algorithm."""
    return _karp(p.graph, p.table), -_karp(p.graph, -p.table)


def _karp(graph: np.ndarray, weights: np.ndarray) -> float:
    size = graph.shape[0]
    best = np.inf
    pred = [np.nonzero(graph[:, j])[0] for j in range(size)]
    # node weight charged on leaving the node; handle each strongly connected start by a virtual source
    d = np.full((size + 1, size), np.inf)
    d[0, :] = 0.0
    for step in range(1, size + 1):
        for v in range(size):
            pr = pred[v]
            if pr.size:
                d[step, v] = np.min(d[step - 1, pr] + weights[pr])
    for v in range(size):
        if not np.isfinite(d[size, v]):
            continue
        worst = -np.inf
        for step in range(size):
            if np.isfinite(d[step, v]):
                worst = max(worst, (d[size, v] - d[step, v]) / (size - step))
        best = min(best, worst)
    return float(best)


def is_eventually_positive(p: Potential, horizon: int = 64) -> tuple:
    """Certify S_n φ > 0 for all n ≥ N on every point.

    The minimum cycle mean mu must be positive; then every path of n windows has
    sum ≥ n·mu − V·(mu − vmin)⁺, which is positive past an explicit n₀.  Below n₀
    the exact minima from min-plus powers are checked.  Returns ``(True, N)`` with
    the least such N ≤ horizon, else ``(False, None)``.
    """
    mu, _ = cycle_mean_extremes(p)
    if not mu > 0:
        return False, None
    size = p.table.size
    slack = size * max(0.0, mu - float(p.table.min()))
    n0 = max(1, int(math.floor(slack / mu)) + 1)
    minima = min_plus_power_minima(p, max(n0, horizon))
    last = max(n0, horizon)
    certificate = None
    for big_n in range(last, 0, -1):
        if minima[big_n] > 0:
            certificate = big_n
        else:
            break
    if certificate is None or certificate > horizon:
        return False, None
    return True, certificate


def holder_seminorm_table(windows: np.ndarray, values: np.ndarray, theta: float, alpha: float) -> float:
    """Exact α-Hölder seminorm of a function of the first k symbols.

    Two points first disagreeing at index j are θ^j apart; the largest value gap
    among windows sharing a length-j prefix and differing at j is attained.
    """
    k = windows.shape[1]
    vals = np.asarray(values)
    best = 0.0
    rows = windows.tolist()
    for j in range(k):
        groups = {}
        for i, row in enumerate(rows):
            groups.setdefault(tuple(row[:j]), {}).setdefault(row[j], []).append(i)
        gap = 0.0
        for branches in groups.values():
            if len(branches) < 2:
                continue
            keys = list(branches)
            for a_pos in range(len(keys)):
                va = vals[branches[keys[a_pos]]]
                for b_pos in range(a_pos + 1, len(keys)):
                    vb = vals[branches[keys[b_pos]]]
                    gap = max(gap, float(np.max(np.abs(va[:, None] - vb[None, :]))))
        best = max(best, gap / theta ** (alpha * j))
    return best


def holder_seminorm(p: Potential, alpha: float) -> float:
    if not 0 < alpha <= 1:
        raise PotentialError("alpha must lie in (0, 1]")
    return holder_seminorm_table(p.windows, p.table, p.sft.theta, alpha)


def _parse_key(sft: Sft, key: str, depth: int) -> tuple:
    if "," in key:
        word = sft.parse(" ".join(s.strip() for s in key.split(",")))
    else:
        word = sft.parse(key)
    if len(word) != depth:
        raise PotentialError(f"key {key!r} has length {len(word)}, expected {depth}")
    return word


def potential_from_dict(sft: Sft, doc: dict, name: str = "") -> Potential:
    try:
        depth = int(doc["depth"])
        raw = doc["values"]
    except KeyError as exc:
        raise PotentialError(f"missing field {exc.args[0]!r}") from None
    values = {_parse_key(sft, str(k), depth): evaluate_expression(v) for k, v in raw.items()}
    return Potential(sft, depth, values, doc.get("name", name))


def load_potential(sft: Sft, source) -> Potential:
    if isinstance(source, dict):
        return potential_from_dict(sft, source)
    path = Path(source)
    return potential_from_dict(sft, json.loads(path.read_text()), path.stem)


def constant_potential(sft: Sft, c: float = 1.0, depth: int = 1) -> Potential:
    words = admissible_words(sft, depth)
    return Potential(sft, depth, np.full(words.shape[0], float(c)), f"constant{c}")


def depth1_potential(sft: Sft, values: Sequence[float], name: str = "") -> Potential:
    return Potential(sft, 1, np.asarray(values, dtype=float), name)


def bundled_example(name: str):
    """Load a bundled (sft, potential) pair from the package data directory."""
    data = Path(__file__).with_name("data") / f"{name}.json"
    doc = json.loads(data.read_text())
    sft = load_sft(doc["sft"])
    return sft, potential_from_dict(sft, doc["potential"], name)
