"""Permutation estimators and the project-after-sorting meta estimator.

Every estimator returns rank maps (see :class:`~biso.core.Permutation`)
whose induced order sorts the relevant scores ascending, so that
``permute_matrix(Y, pi.inverse(), sigma.inverse())`` is approximately
bivariate isotonic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Matrix, Permutation, SeedLike, as_matrix, make_rng
from .isotonic import DEFAULT_MAX_CYCLES, DEFAULT_TOL, project_biso_permuted

DEFAULT_CONSTANT = 16.0

ESTIMATORS = ("borda", "refsort", "tds", "project-only")


class SortMode(str, enum.Enum):
    DETERMINISTIC = "deterministic"  # ties broken by smallest index
    RANDOM = "random"  # uniform among admissible choices


class Provenance(str, enum.Enum):
    REFERENCE = "reference-contiguous"
    DATA = "data-dependent"


@dataclass(frozen=True)
class Thresholds:
    """Comparison thresholds for one orientation of the data.

    ``constant`` replaces the leading factor 16; everything else follows the
    formulas of the sorting procedures with ``log`` the natural logarithm.
    """

    n1: int
    n2: int
    N: float
    zeta: float
    constant: float = DEFAULT_CONSTANT

    @property
    def log_term(self) -> float:
        return math.log(self.n1 * self.n2)

    @property
    def prefactor(self) -> float:
        return self.constant * (max(self.zeta, 1.0) + 1.0)

    @property
    def additive(self) -> float:
        return self.n1 * self.n2 / self.N * self.log_term

    @property
    def eta_full(self) -> float:
        return self.prefactor * (
            math.sqrt(self.n1 * self.n2**2 * self.log_term / self.N) + self.additive
        )

    def eta_block(self, size) -> float:
        return self.prefactor * (
            np.sqrt(self.n1 * self.n2 * np.asarray(size, dtype=float) * self.log_term / self.N)
            + self.additive
        )

    @property
    def tau(self) -> float:
        return self.prefactor * (
            math.sqrt(self.n1**2 * self.n2 * self.log_term / self.N) + self.additive
        )

    @property
    def beta(self) -> float:
        return self.n2 * math.sqrt(self.n1 * self.log_term / self.N)

    def transposed(self) -> "Thresholds":
        return Thresholds(self.n2, self.n1, self.N, self.zeta, self.constant)


def compute_thresholds(n1: int, n2: int, N: float, zeta: float = 1.0, constant: float = DEFAULT_CONSTANT) -> Thresholds:
    if n1 < 1 or n2 < 1 or not N > 0:
        raise ValueError("n1, n2 and N must be positive")
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    if not constant > 0:
        raise ValueError("threshold constant must be positive")
    return Thresholds(int(n1), int(n2), float(N), float(zeta), float(constant))


@dataclass(frozen=True)
class Blocking:
    """Ordered partition of column indices.

    ``order`` is a rank map under which every block occupies consecutive
    positions; blocks are listed in that order.
    """

    blocks: tuple[np.ndarray, ...]
    order: Permutation
    provenance: Provenance

    def __post_init__(self) -> None:
        n = len(self.order)
        seen = np.concatenate(self.blocks) if self.blocks else np.zeros(0, dtype=np.int64)
        if not np.array_equal(np.sort(seen), np.arange(n)):
            raise ValueError("blocks do not partition the column indices")
        pos = 0
        for b in self.blocks:
            ranks = np.sort(self.order.ranks[b])
            if not np.array_equal(ranks, np.arange(pos, pos + len(b))):
                raise ValueError("block is not contiguous under the blocking order")
            pos += len(b)

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    def indicator(self) -> np.ndarray:
        """``(n2, K)`` 0/1 matrix with a 1 where column ``j`` belongs to block ``k``."""
        out = np.zeros((len(self.order), len(self.blocks)))
        for k, b in enumerate(self.blocks):
            out[b, k] = 1.0
        return out


def reference_blocking(n1: int, n2: int, N: float) -> Blocking:
    """Contiguous near-equal blocks of size about ``n2 sqrt(n1 log(n1 n2) / N)``."""
    if n1 < 1 or n2 < 1 or not N > 0:
        raise ValueError("n1, n2 and N must be positive")
    u = n2 * math.sqrt(n1 * math.log(n1 * n2) / N)
    u = min(max(u, 1.0), float(n2))
    # flooring keeps the larger of the near-equal sizes at or below u
    k = math.ceil(n2 / math.floor(u))
    blocks = tuple(np.asarray(b, dtype=np.int64) for b in np.array_split(np.arange(n2), k))
    return Blocking(blocks, Permutation.identity(n2), Provenance.REFERENCE)


@dataclass(eq=False)
class ComparisonGraph:
    """Directed graph on ``range(n)`` stored as a dense boolean adjacency matrix."""

    adjacency: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.adjacency, dtype=bool)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(np.diag(A)):
            raise ValueError("self-loops are not allowed")
        self.adjacency = A

    @classmethod
    def from_edges(cls, n: int, edges) -> "ComparisonGraph":
        A = np.zeros((n, n), dtype=bool)
        for u, v in edges:
            A[u, v] = True
        return cls(A)

    @property
    def n(self) -> int:
        return int(self.adjacency.shape[0])

    @property
    def edges(self) -> set[tuple[int, int]]:
        return set(zip(*(x.tolist() for x in np.nonzero(self.adjacency))))

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComparisonGraph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)


def topological_sort(
    G: ComparisonGraph, mode: SortMode | str = SortMode.DETERMINISTIC, seed: SeedLike = None
) -> Permutation | None:
    """Kahn's algorithm; returns ``pi`` with ``pi(u) < pi(v)`` for each edge, or ``None`` on a cycle."""
    mode = SortMode(mode)
    rng = make_rng(seed) if mode is SortMode.RANDOM else None
    A = G.adjacency
    n = G.n
    indeg = A.sum(axis=0).astype(np.int64)
    placed = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    for pos in range(n):
        ready = np.flatnonzero((indeg == 0) & ~placed)
        if ready.size == 0:
            return None
        u = ready[0] if rng is None else ready[rng.integers(ready.size)]
        order[pos] = u
        placed[u] = True
        indeg -= A[u]
    return Permutation.from_order(order)


def borda_graph(Y) -> ComparisonGraph:
    """Edge ``u -> v`` iff row sum of ``v`` exceeds that of ``u``."""
    S = as_matrix(Y, name="Y").sum(axis=1)
    return ComparisonGraph(S[None, :] - S[:, None] > 0)


def _sort_scores(scores: np.ndarray, mode: SortMode, seed: SeedLike) -> Permutation:
    if SortMode(mode) is SortMode.RANDOM:
        tiebreak = make_rng(seed).permutation(scores.size)
        order = np.lexsort((tiebreak, scores))
    else:
        order = np.argsort(scores, kind="stable")
    return Permutation.from_order(order)


def borda_sort(Y, mode: SortMode | str = SortMode.DETERMINISTIC, seed: SeedLike = None) -> Permutation:
    """Rank rows by ascending row sum; tied rows get index order or a uniform sub-permutation."""
    return _sort_scores(as_matrix(Y, name="Y").sum(axis=1), SortMode(mode), seed)


def partial_sum_graph(Y, blocking: Blocking, th: Thresholds) -> ComparisonGraph:
    """Edge ``u -> v`` iff the full row sum or some block partial sum of ``v`` beats ``u`` by its threshold."""
    Y = as_matrix(Y, name="Y")
    S = Y.sum(axis=1)
    A = (S[None, :] - S[:, None]) > th.eta_full
    partial = Y @ blocking.indicator()
    eta = th.eta_block(blocking.sizes)
    for k in range(partial.shape[1]):
        col = partial[:, k]
        A |= (col[None, :] - col[:, None]) > eta[k]
    np.fill_diagonal(A, False)
    return ComparisonGraph(A)


def resolve_graph(
    G: ComparisonGraph,
    fallback: str,
    mode: SortMode | str = SortMode.DETERMINISTIC,
    seed: SeedLike = None,
) -> tuple[Permutation, bool]:
    """Topological sort of ``G``, or the fallback (``"identity"`` or ``"random"``) on a cycle.

    Returns the permutation and whether the fallback was used.
    """
    rng = make_rng(seed)
    pi = topological_sort(G, mode, rng)
    if pi is not None:
        return pi, False
    if fallback == "identity":
        return Permutation.identity(G.n), True
    if fallback == "random":
        return Permutation.random(G.n, rng), True
    raise ValueError(f"unknown fallback {fallback!r}")


def sort_partial_sums(
    Y,
    blocking: Blocking,
    th: Thresholds,
    mode: SortMode | str = SortMode.DETERMINISTIC,
    seed: SeedLike = None,
) -> Permutation:
    """Row permutation from thresholded full and partial row-sum comparisons.

    Falls back to a uniformly random permutation when the comparison graph
    has a cycle.  In random mode this is a pairwise-difference (PDD) estimator.
    """
    return resolve_graph(partial_sum_graph(Y, blocking, th), "random", mode, seed)[0]


def column_presort(Y) -> Permutation:
    """Rank map sorting column sums ascending, ties by smallest index."""
    return Permutation.from_order(np.argsort(as_matrix(Y, name="Y").sum(axis=0), kind="stable"))


def blocking_subroutine(Y1, th: Thresholds) -> Blocking:
    """Data-dependent column blocking from binned column sums, with small blocks aggregated."""
    Y1 = as_matrix(Y1, name="Y1")
    n2 = Y1.shape[1]
    C = Y1.sum(axis=0)
    pre = column_presort(Y1)
    tau = th.tau
    K = max(1, math.ceil(n2 / tau))
    bins = np.clip(np.floor(C / tau), 0, K - 1).astype(np.int64)
    ordered = pre.order
    # bins are non-decreasing along the presort, so each bin is a contiguous run
    runs = [ordered[bins[ordered] == k] for k in range(K)]
    runs = [r for r in runs if r.size]

    beta = th.beta
    smalls = [i for i, r in enumerate(runs) if r.size < beta]
    groups: list[list[int]] = []
    current: list[int] = []
    size = 0
    for i in smalls:
        current.append(i)
        size += runs[i].size
        if size >= beta / 2:
            groups.append(current)
            current, size = [], 0
    if current:
        if groups:
            groups[-1].extend(current)
        else:
            groups.append(current)
    # each output block is anchored at the position of its first constituent run
    anchor = {}
    for i, r in enumerate(runs):
        if r.size >= beta:
            anchor[i] = r
    for g in groups:
        anchor[g[0]] = np.concatenate([runs[i] for i in g])
    merged = [anchor[k] for k in sorted(anchor)]

    blocks = tuple(b[np.argsort(pre.ranks[b], kind="stable")] for b in merged)
    order = Permutation.from_order(np.concatenate(blocks))
    return Blocking(blocks, order, Provenance.DATA)


@dataclass
class TdsEstimate:
    pi_hat: Permutation
    sigma_hat: Permutation
    diagnostics: dict = field(default_factory=dict)


def _tds_one_side(Y1, Y2, th: Thresholds, mode: SortMode, rng) -> tuple[Permutation, dict]:
    blocking = blocking_subroutine(Y1, th)
    G = partial_sum_graph(Y2, blocking, th)
    pi, fell_back = resolve_graph(G, "identity", mode, rng)
    return pi, {"block_sizes": blocking.sizes, "edges": G.n_edges, "fallback": fell_back}


def two_dimensional_sort(
    Y1,
    Y2,
    th_rows: Thresholds,
    th_cols: Thresholds | None = None,
    seed: SeedLike = None,
    mode: SortMode | str = SortMode.DETERMINISTIC,
) -> TdsEstimate:
    """Row and column permutation estimates from two independent observation matrices.

    Blocking comes from ``Y1``, comparisons from ``Y2``; columns are handled
    by the same steps on the transposes.  A cyclic comparison graph falls
    back to the identity.
    """
    Y1 = as_matrix(Y1, name="Y1")
    Y2 = as_matrix(Y2, name="Y2")
    if Y1.shape != Y2.shape:
        raise ValueError(f"Y1 and Y2 shapes differ: {Y1.shape} vs {Y2.shape}")
    if th_cols is None:
        th_cols = th_rows.transposed()
    if (th_rows.n1, th_rows.n2) != Y1.shape or (th_cols.n1, th_cols.n2) != Y1.shape[::-1]:
        raise ValueError("threshold dimensions do not match the data")
    mode = SortMode(mode)
    rng = make_rng(seed)
    pi, d_rows = _tds_one_side(Y1, Y2, th_rows, mode, rng)
    sigma, d_cols = _tds_one_side(Y1.T, Y2.T, th_cols, mode, rng)
    return TdsEstimate(pi, sigma, {"rows": d_rows, "cols": d_cols})


def meta_estimate(
    Y,
    pi_hat: Permutation,
    sigma_hat: Permutation,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> Matrix:
    """Project ``Y`` onto matrices that are bivariate isotonic along the estimated permutations."""
    return project_biso_permuted(Y, pi_hat, sigma_hat, tol, max_cycles)
