"""Subshifts of finite type: validation, admissible words, periodic points, orbits."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

DEFAULT_CAP = 2 ** 26
# rows per enumeration partition; keeps each block at a few MB
_BLOCK_TARGET = 2 ** 18


class SftError(ValueError):
    pass


class CapExceeded(RuntimeError):
    def __init__(self, estimate: int, cap: int):
        super().__init__(f"cap exceeded: estimated {estimate} words > cap {cap}")
        self.estimate = estimate
        self.cap = cap


@dataclass(frozen=True, eq=False)
class Sft:
    """One-sided subshift given by a 0/1 matrix; ``matrix[i, j] = 1`` lets j follow i."""

    states: tuple
    matrix: np.ndarray
    theta: float = 0.5
    name: str = ""

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.int64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise SftError("transition matrix must be square")
        if len(self.states) != mat.shape[0]:
            raise SftError("states and matrix size disagree")
        mat.setflags(write=False)
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def size(self) -> int:
        return len(self.states)

    def bool_matrix(self) -> np.ndarray:
        return self.matrix != 0

    def is_admissible(self, word: Sequence[int], cyclic: bool = False) -> bool:
        if len(word) == 0:
            return False
        a = self.matrix
        ok = all(a[word[i], word[i + 1]] == 1 for i in range(len(word) - 1))
        if cyclic:
            ok = ok and a[word[-1], word[0]] == 1
        return bool(ok)

    def label(self, word: Sequence[int]) -> str:
        names = [self.states[i] for i in word]
        sep = "" if all(len(s) == 1 for s in self.states) else " "
        return sep.join(names)

    def parse(self, text: str) -> tuple:
        """Inverse of :meth:`label`."""
        index = {s: i for i, s in enumerate(self.states)}
        parts = list(text) if all(len(s) == 1 for s in self.states) else text.split()
        try:
            return tuple(index[p] for p in parts)
        except KeyError as exc:
            raise SftError(f"unknown state {exc.args[0]!r} in {text!r}") from None

    def to_dict(self) -> dict:
        return {"states": list(self.states), "matrix": self.matrix.tolist(), "theta": self.theta}


@dataclass(frozen=True)
class CyclicWord:
    """A rotation class, stored by its lexicographically least rotation."""

    representative: tuple
    minimal_period: int = field(default=0)

    def __post_init__(self):
        rep = least_rotation(self.representative)
        object.__setattr__(self, "representative", rep)
        object.__setattr__(self, "minimal_period", minimal_period(rep))

    @property
    def length(self) -> int:
        return len(self.representative)

    def rotations(self) -> list:
        w = self.representative
        return [w[i:] + w[:i] for i in range(len(w))]


def validate(sft: Sft) -> list:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out = []
    mat = sft.matrix
    bad = np.argwhere((mat != 0) & (mat != 1))
    for i, j in bad:
        out.append(f"non-binary entry {int(mat[i, j])} at ({sft.states[i]}, {sft.states[j]})")
    nz = mat != 0
    for i in range(sft.size):
        if not nz[i].any():
            out.append(f"state {sft.states[i]} has no successor")
        if not nz[:, i].any():
            out.append(f"state {sft.states[i]} has no predecessor")
    if not 0.0 < sft.theta < 1.0:
        out.append(f"theta {sft.theta} outside (0, 1)")
    return out


def check(sft: Sft) -> Sft:
    problems = validate(sft)
    if problems:
        raise SftError("; ".join(problems))
    return sft


def is_primitive(sft, max_power: int | None = None) -> tuple:
    """Least n with A^n > 0 entrywise, by boolean matrix powers.

    Returns ``(True, n)`` or ``(False, None)``.  ``sft`` may be an :class:`Sft`
    or a square array.
    """
    a = (np.asarray(sft.matrix if isinstance(sft, Sft) else sft) != 0).astype(np.int64)
    size = a.shape[0]
    if max_power is None:
        max_power = (size - 1) ** 2 + 1
    power = a.copy()
    for n in range(1, max_power + 1):
        if power.all():
            return True, n
        power = ((power @ a) > 0).astype(np.int64)
    return False, None


def matrix_power_exact(matrix, n: int) -> np.ndarray:
    """Integer matrix power in arbitrary precision (object dtype)."""
    base = np.array(np.asarray(matrix).tolist(), dtype=object)
    result = np.identity(base.shape[0], dtype=np.int64).astype(object)
    while n:
        if n & 1:
            result = result.dot(base)
        base = base.dot(base)
        n >>= 1
    return result


def trace_power(matrix, n: int) -> int:
    return int(np.trace(matrix_power_exact(matrix, n)))


def mobius(n: int) -> int:
    if n < 1:
        raise ValueError("mobius needs n >= 1")
    result, m, d = 1, n, 2
    while d * d <= m:
        if m % d == 0:
            m //= d
            if m % d == 0:
                return 0
            result = -result
        d += 1
    return -result if m > 1 else result


def divisors(n: int) -> list:
    return [d for d in range(1, n + 1) if n % d == 0]


def primitive_orbit_count(sft: Sft, n: int) -> int:
    """Number of primitive n-orbits from traces by Möbius inversion."""
    total = sum(mobius(d) * trace_power(sft.matrix, n // d) for d in divisors(n))
    if total % n:
        raise ArithmeticError("Möbius sum not divisible by n")
    return total // n


def least_rotation(word: Sequence[int]) -> tuple:
    w = tuple(word)
    return min(w[i:] + w[:i] for i in range(len(w))) if w else w


def minimal_period(word: Sequence[int]) -> int:
    w = tuple(word)
    n = len(w)
    for p in divisors(n):
        if w[p:] + w[:p] == w:
            return p
    return n


def _reachability(a: np.ndarray, n: int) -> list:
    """reach[r][i, j] is True when a walk of exactly r steps joins i to j."""
    ab = a.astype(np.int64)
    reach = [np.identity(a.shape[0], dtype=bool)]
    cur = reach[0].astype(np.int64)
    for _ in range(n):
        cur = ((cur @ ab) > 0).astype(np.int64)
        reach.append(cur.astype(bool))
    return reach


def _symbol_dtype(size: int):
    return np.uint8 if size <= 256 else np.int32


def _extend(a, prefixes: np.ndarray, feasible=None) -> np.ndarray:
    """Append one symbol to every prefix, keeping lexicographic order."""
    rows, size = prefixes.shape[0], a.shape[0]
    if rows == 0:
        return np.empty((0, prefixes.shape[1] + 1), dtype=prefixes.dtype)
    last = prefixes[:, -1].astype(np.intp)
    ok = a[last] != 0
    if feasible is not None:
        ok &= feasible
    ridx, sym = np.nonzero(ok)
    out = np.empty((ridx.size, prefixes.shape[1] + 1), dtype=prefixes.dtype)
    out[:, :-1] = prefixes[ridx]
    out[:, -1] = sym
    return out


@lru_cache(maxsize=256)
def admissible_words(sft: Sft, m: int) -> np.ndarray:
    """All admissible (linear, not cyclic) words of length m, lexicographic, one per row.

    The returned array is cached and read-only.
    """
    if m < 1:
        raise ValueError("word length must be >= 1")
    a = sft.matrix
    words = np.arange(sft.size, dtype=_symbol_dtype(sft.size)).reshape(-1, 1)
    for _ in range(m - 1):
        words = _extend(a, words)
    words.setflags(write=False)
    return words


def _partition_prefixes(sft: Sft, n: int, reach) -> np.ndarray:
    a = sft.matrix
    size = sft.size
    per_symbol = max(1, int(math.floor(math.log2(_BLOCK_TARGET) / max(math.log2(size), 1.0))))
    lead = max(1, n - per_symbol)
    words = np.array([[i] for i in range(size) if reach[n][i, i]], dtype=_symbol_dtype(size)).reshape(-1, 1)
    for m in range(1, lead):
        first = words[:, 0].astype(np.intp)
        feas = reach[n - m].T[first]  # feas[r, j]: j can still reach first symbol in n-m steps
        words = _extend(a, words, feas)
    return words


def _complete(sft: Sft, n: int, reach, prefixes: np.ndarray) -> np.ndarray:
    a = sft.matrix
    words = prefixes
    for m in range(prefixes.shape[1], n):
        first = words[:, 0].astype(np.intp)
        words = _extend(a, words, reach[n - m].T[first])
    return words


def _fixed_block_plan(sft: Sft, n: int, cap: int):
    if n < 1:
        raise ValueError("n must be >= 1")
    estimate = trace_power(sft.matrix, n)
    if estimate > cap:
        raise CapExceeded(estimate, cap)
    reach = _reachability(sft.matrix, n)
    heads = _partition_prefixes(sft, n, reach)
    if heads.shape[1] >= n:
        keep = sft.matrix[heads[:, -1].astype(np.intp), heads[:, 0].astype(np.intp)] != 0
        return reach, [heads[keep]], True
    per_head = estimate / max(heads.shape[0], 1)
    group = max(1, int(_BLOCK_TARGET // max(per_head, 1.0)))
    return reach, [heads[i:i + group] for i in range(0, heads.shape[0], group)], False


def iter_fixed_blocks(sft: Sft, n: int, cap: int = DEFAULT_CAP) -> Iterator[np.ndarray]:
    """Yield wrap-admissible length-n words as 2-D arrays, globally in lexicographic order.

    The search is a pruned depth-first expansion: a prefix survives only if its last
    symbol can still return to its first one in the remaining number of steps.
    """
    reach, chunks, done = _fixed_block_plan(sft, n, cap)
    for h in chunks:
        block = h if done else _complete(sft, n, reach, h)
        if block.shape[0]:
            yield block


def map_fixed_blocks(sft: Sft, n: int, fn, cap: int = DEFAULT_CAP, threads: int = 1) -> list:
    """Apply ``fn`` to every enumeration block; results come back in partition order.

    Partitions are keyed by a leading block of symbols, so the result list (and any
    reduction done over it in order) does not depend on ``threads``.
    """
    reach, chunks, done = _fixed_block_plan(sft, n, cap)

    def work(h):
        block = h if done else _complete(sft, n, reach, h)
        return fn(block)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, chunks))
    return [work(h) for h in chunks]


def word_codes(words: np.ndarray, base: int) -> np.ndarray:
    """Integer code of each row read as base-``base`` digits (lexicographic order preserved)."""
    n = words.shape[1]
    if n * math.log2(max(base, 2)) >= 62:
        raise OverflowError("word codes exceed 62 bits")
    codes = np.zeros(words.shape[0], dtype=np.int64)
    for col in range(n):
        codes = codes * base + words[:, col]
    return codes


def rotation_flags(words: np.ndarray, base: int) -> tuple:
    """(is_primitive, is_least_rotation) for each row."""
    n = words.shape[1]
    codes = word_codes(words, base)
    primitive = np.ones(codes.shape[0], dtype=bool)
    least = np.ones(codes.shape[0], dtype=bool)
    high = base ** n
    for r in range(1, n):
        scale = base ** r
        rotated = (codes % (high // scale)) * scale + codes // (high // scale)
        primitive &= codes != rotated
        least &= codes <= rotated
    return primitive, least


def primitive_mask(words: np.ndarray, base: int) -> np.ndarray:
    """Rows that are the least rotation of a class with minimal period equal to the length."""
    primitive, least = rotation_flags(words, base)
    return primitive & least


def count_fixed_points(sft: Sft, n: int, cap: int = DEFAULT_CAP) -> int:
    """card Fix(σ^n) by enumeration (independent of the trace formula)."""
    return sum(int(b.shape[0]) for b in iter_fixed_blocks(sft, n, cap))


def fixed_points(sft: Sft, n: int, cap: int = DEFAULT_CAP) -> Iterator[tuple]:
    """Each wrap-admissible length-n word once, lexicographically."""
    for block in iter_fixed_blocks(sft, n, cap):
        for row in block.tolist():
            yield tuple(row)


def primitive_orbits(sft: Sft, n: int, cap: int = DEFAULT_CAP) -> Iterator[CyclicWord]:
    """One least-rotation representative per primitive n-orbit, lexicographically."""
    for block in iter_fixed_blocks(sft, n, cap):
        for row in block[primitive_mask(block, sft.size)].tolist():
            yield CyclicWord(tuple(row))


def shift_metric(sft: Sft, x: Sequence[int], y: Sequence[int], identical: bool = False) -> float:
    """θ^m where m is the first index with x_m != y_m."""
    if identical:
        return 0.0
    for m, (a, b) in enumerate(zip(x, y)):
        if a != b:
            return sft.theta ** m
    raise ValueError("undecidable on given prefixes")


def full_shift(d: int, theta: float = 0.5) -> Sft:
    return Sft(tuple(str(i) for i in range(d)), np.ones((d, d), dtype=int), theta, f"full{d}")


def golden_mean(theta: float = 0.5) -> Sft:
    return Sft(("0", "1"), [[1, 1], [1, 0]], theta, "golden_mean")


def sft_from_dict(doc: dict, name: str = "") -> Sft:
    try:
        return check(Sft(tuple(doc["states"]), doc["matrix"], doc.get("theta", 0.5), doc.get("name", name)))
    except KeyError as exc:
        raise SftError(f"missing field {exc.args[0]!r}") from None


def load_sft(source) -> Sft:
    if isinstance(source, dict):
        return sft_from_dict(source)
    path = Path(source)
    return sft_from_dict(json.loads(path.read_text()), path.stem)


def write_orbits_csv(path, sft: Sft, ns: Sequence[int], primitive: bool = True, cap: int = DEFAULT_CAP) -> int:
    """Stream orbits (or fixed points) to CSV; returns the number of rows written."""
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "representative", "minimal_period"])
        for n in ns:
            if primitive:
                for orbit in primitive_orbits(sft, n, cap):
                    writer.writerow([n, sft.label(orbit.representative), orbit.minimal_period])
                    rows += 1
            else:
                for word in fixed_points(sft, n, cap):
                    writer.writerow([n, sft.label(word), minimal_period(word)])
                    rows += 1
    return rows
