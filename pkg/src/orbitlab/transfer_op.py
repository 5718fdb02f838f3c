"""Twisted transfer operator as a matrix on depth-k cylinders.

Functions are indexed by the leading k-window of a point.  The preimage jx of x
has window (j, x_0, ..., x_{k-2}); that window is a predecessor of the window of
x in the shift graph.  Entries are stored predecessor-first:
``entries[w, w2] = exp(s * phi(w))`` when w2 follows w, and ``L u = entries.T @ u``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .potential import Potential, holder_seminorm_table
from .sft_core import Sft, admissible_words


class TransferError(ArithmeticError):
    pass


class NotPrimitive(TransferError):
    pass


class NoConvergence(TransferError):
    pass


@dataclass(frozen=True, eq=False)
class TwistedTransferMatrix:
    potential: Potential
    s: complex
    entries: np.ndarray

    @property
    def sft(self) -> Sft:
        return self.potential.sft

    @property
    def depth(self) -> int:
        return self.potential.depth

    @property
    def windows(self) -> np.ndarray:
        return self.potential.windows

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def real_entries(self) -> np.ndarray:
        if abs(complex(self.s).imag) != 0.0:
            raise TransferError("real entries requested at complex s")
        return self.entries.real.copy()


@dataclass(frozen=True, eq=False)
class LocallyConstantFunction:
    """Complex function of the first ``depth`` symbols, tabulated on admissible windows."""

    sft: Sft
    depth: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", vals)
        if vals.shape != (admissible_words(self.sft, self.depth).shape[0],):
            raise TransferError("value table does not match the admissible windows")

    @property
    def windows(self) -> np.ndarray:
        return admissible_words(self.sft, self.depth)

    def __call__(self, point: Sequence[int]) -> complex:
        """Evaluate at a point given by a prefix of length ≥ depth."""
        window = tuple(int(c) for c in point[: self.depth])
        for i, row in enumerate(self.windows.tolist()):
            if tuple(row) == window:
                return complex(self.values[i])
        raise TransferError(f"point prefix {window} is not admissible")

    def refine(self, depth: int) -> "LocallyConstantFunction":
        if depth < self.depth:
            raise TransferError("cannot refine to a smaller depth")
        if depth == self.depth:
            return self
        own = {tuple(r): i for i, r in enumerate(self.windows.tolist())}
        longer = admissible_words(self.sft, depth).tolist()
        return LocallyConstantFunction(self.sft, depth, self.values[[own[tuple(r[: self.depth])] for r in longer]])

    def __add__(self, other):
        d = max(self.depth, other.depth)
        return LocallyConstantFunction(self.sft, d, self.refine(d).values + other.refine(d).values)

    def __mul__(self, c):
        return LocallyConstantFunction(self.sft, self.depth, self.values * c)

    __rmul__ = __mul__


def build(sft: Sft, potential: Potential, s: complex) -> TwistedTransferMatrix:
    if potential.sft is not sft and not (
        sft.states == potential.sft.states and np.array_equal(sft.matrix, potential.sft.matrix)
    ):
        raise TransferError("potential lives on a different shift")
    graph = potential.graph
    weights = np.exp(complex(s) * potential.table)
    entries = np.where(graph, weights[:, None], 0.0).astype(complex)
    entries.setflags(write=False)
    return TwistedTransferMatrix(potential, complex(s), entries)


def constant_function(sft: Sft, c: complex = 1.0, depth: int = 1) -> LocallyConstantFunction:
    n = admissible_words(sft, depth).shape[0]
    return LocallyConstantFunction(sft, depth, np.full(n, c, dtype=complex))


def cylinder_function(sft: Sft, word: Sequence[int]) -> LocallyConstantFunction:
    """Indicator χ_ω of the cylinder of an admissible word."""
    word = tuple(int(c) for c in word)
    wins = admissible_words(sft, len(word))
    vals = np.all(wins == np.array(word, dtype=wins.dtype), axis=1).astype(complex)
    if not vals.any():
        raise TransferError(f"word {word} is not admissible")
    return LocallyConstantFunction(sft, len(word), vals)


def apply(M: TwistedTransferMatrix, u: LocallyConstantFunction) -> LocallyConstantFunction:
    if u.depth > M.depth:
        raise TransferError(f"depth overflow: function depth {u.depth} > matrix depth {M.depth}")
    v = u.refine(M.depth).values
    return LocallyConstantFunction(M.sft, M.depth, M.entries.T @ v)


def apply_power(M: TwistedTransferMatrix, u: LocallyConstantFunction, n: int) -> LocallyConstantFunction:
    if u.depth > M.depth:
        raise TransferError(f"depth overflow: function depth {u.depth} > matrix depth {M.depth}")
    v = u.refine(M.depth).values
    bt = M.entries.T
    for _ in range(n):
        v = bt @ v
    return LocallyConstantFunction(M.sft, M.depth, v)


def cylinder_image(M: TwistedTransferMatrix, word: Sequence[int]) -> LocallyConstantFunction:
    """Closed form of L^m χ_ω for |ω| = m, as a depth-k function.

    (L^m χ_ω)(x) = exp(s·S_mφ(ωx)) when ωx is admissible and 0 otherwise; the
    sum reads windows of ω followed by the first k-1 symbols of x.
    """
    p = M.potential
    word = tuple(int(c) for c in word)
    if not p.sft.is_admissible(word):
        raise TransferError(f"word {word} is not admissible")
    k, m = p.depth, len(word)
    wins = p.windows.astype(np.int64)
    q = p.sft.size
    seq = np.concatenate([np.tile(np.array(word, dtype=np.int64), (wins.shape[0], 1)), wins[:, : k - 1]], axis=1)
    total = np.zeros(wins.shape[0])
    for j in range(m):
        code = np.zeros(wins.shape[0], dtype=np.int64)
        for i in range(k):
            code = code * q + seq[:, j + i]
        total += p.lookup[code]
    joins = p.sft.matrix[word[-1], wins[:, 0]] == 1
    out = np.where(joins, np.exp(M.s * np.where(joins, total, 0.0)), 0.0)
    return LocallyConstantFunction(p.sft, k, out)


def cylinder_image_at(M: TwistedTransferMatrix, word: Sequence[int], point: Sequence[int]) -> complex:
    """(L^m χ_ω)(x) for |ω| = m at a single point x given by a prefix of length ≥ k."""
    p = M.potential
    k, m = p.depth, len(word)
    if p.sft.matrix[word[-1], point[0]] != 1:
        return 0j
    seq = tuple(word) + tuple(point[: k - 1])
    return complex(np.exp(M.s * math.fsum(p.value(seq[j:j + k]) for j in range(m))))


@dataclass(frozen=True)
class PerronData:
    lam: float
    right: np.ndarray
    left: np.ndarray
    iterations: int


def _power_iteration(b: np.ndarray, tol: float, cap: int) -> tuple:
    v = np.ones(b.shape[0])
    best_gap = np.inf
    stalled = 0
    converged_at = None
    for it in range(1, cap + 1):
        w = b @ v
        ratios = w / v
        lo, hi = ratios.min(), ratios.max()
        gap = (hi - lo) / hi
        lam = w.sum() / v.sum()
        v = w / w.sum()
        if converged_at is None and gap <= tol:
            converged_at = it
        if converged_at is not None:
            # keep polishing to machine precision while the bracket still shrinks
            if gap < best_gap:
                best_gap, stalled = gap, 0
            else:
                stalled += 1
            if gap <= 4 * np.finfo(float).eps or stalled >= 3 or it - converged_at > 200:
                return lam, v, it
        else:
            best_gap = min(best_gap, gap)
    raise NoConvergence(f"power iteration did not converge in {cap} steps (gap {best_gap:.3e})")


def perron_root_of(b: np.ndarray, tol: float = 1e-13, cap: int = 1_000_000) -> tuple:
    """Perron root and normalized right/left vectors of a primitive nonnegative matrix."""
    lam, right, it1 = _power_iteration(b, tol, cap)
    lam_left, left, it2 = _power_iteration(b.T, tol, cap)
    right = right / right.sum()
    left = left / (left @ right)
    return 0.5 * (lam + lam_left), right, left, max(it1, it2)


def perron(M: TwistedTransferMatrix, tol: float = 1e-13, cap: int = 1_000_000) -> PerronData:
    b = M.real_entries()
    if not M.potential.primitive:
        raise NotPrimitive("transition pattern is not primitive")
    lam, right, left, its = perron_root_of(b, tol, cap)
    return PerronData(float(lam), right, left, its)


def spectral_radius_of(b: np.ndarray, squarings: int = 24, tol: float = 1e-6) -> float:
    """lim ‖B^N‖^{1/N} by normalized repeated squaring with Richardson extrapolation."""
    b = np.asarray(b, dtype=complex)
    norm = np.abs(b).sum(axis=1).max()
    if norm == 0.0:
        return 0.0
    x = b / norm
    log_scale = math.log(norm)
    logs = [log_scale]
    for j in range(1, squarings + 1):
        y = x @ x
        ny = np.abs(y).sum(axis=1).max()
        if ny == 0.0:
            return 0.0
        log_scale = 2 * log_scale + math.log(ny)
        x = y / ny
        logs.append(log_scale / 2 ** j)
    extrap = [2 * logs[j] - logs[j - 1] for j in range(1, len(logs))]
    rho, prev = math.exp(extrap[-1]), math.exp(extrap[-2])
    if abs(rho - prev) > tol * max(rho, 1e-300):
        raise NoConvergence(f"spectral radius not converged: {prev} vs {rho}")
    return rho


def spectral_radius(M: TwistedTransferMatrix, squarings: int = 24) -> float:
    return spectral_radius_of(M.entries, squarings)


def holder_norm(u: LocallyConstantFunction, alpha: float, theta: float) -> float:
    """Sup-norm plus exact α-Hölder seminorm in the metric θ^(first disagreement)."""
    if u.values.size == 0:
        return 0.0
    sup = float(np.abs(u.values).max())
    return sup + holder_seminorm_table(u.windows, u.values, theta, alpha)


@dataclass(frozen=True)
class NormEstimate:
    lower: float
    upper: float


def operator_norm_estimate(M: TwistedTransferMatrix, n: int, alpha: float = 1.0) -> NormEstimate:
    """Bounds on ‖L^n‖ over depth-k functions in the Hölder norm.

    lower: max over cylinder indicators χ_ω of ‖L^n χ_ω‖/‖χ_ω‖;
    upper: Σ_ω ‖L^n χ_ω‖, valid because ‖u‖_∞ ≤ ‖u‖.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    theta = M.sft.theta
    dim = M.dim
    power = np.linalg.matrix_power(M.entries, n) if n else np.identity(dim, dtype=complex)
    lower, upper = 0.0, 0.0
    for w in range(dim):
        basis = np.zeros(dim, dtype=complex)
        basis[w] = 1.0
        chi = LocallyConstantFunction(M.sft, M.depth, basis)
        image = LocallyConstantFunction(M.sft, M.depth, power[w, :])
        norm_img = holder_norm(image, alpha, theta)
        lower = max(lower, norm_img / holder_norm(chi, alpha, theta))
        upper += norm_img
    return NormEstimate(lower, upper)


def export_csv(M: TwistedTransferMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for i, j in zip(*np.nonzero(M.entries)):
            z = M.entries[i, j]
            writer.writerow([int(i), int(j), f"{z.real:.17g}", f"{z.imag:.17g}"])
