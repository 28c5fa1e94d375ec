"""Shared domain types: permutations, noise models, class predicates, matrix I/O.

Matrices are plain ``numpy.ndarray`` objects of shape ``(n1, n2)``; the
helpers here validate and convert them.  Permutations are rank maps:
``ranks[i]`` is the 0-based position assigned to index ``i``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import numpy.typing as npt

DEFAULT_TOL = 1e-9

Matrix = npt.NDArray[np.float64]
SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def as_matrix(data, *, name: str = "matrix") -> Matrix:
    """Validate and return a finite 2-D float array (copy-free when possible)."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on ``range(n)`` stored as a rank map.

    ``ranks[i] < ranks[j]`` means index ``i`` is ordered before ``j``.
    """

    ranks: np.ndarray = field()

    def __post_init__(self) -> None:
        r = np.asarray(self.ranks)
        if r.ndim != 1:
            raise ValueError("ranks must be one-dimensional")
        if r.size and not np.issubdtype(r.dtype, np.integer):
            if not np.all(r == np.round(r)):
                raise ValueError("ranks must be integers")
        r = r.astype(np.int64)
        if not np.array_equal(np.sort(r), np.arange(r.size)):
            raise ValueError("ranks is not a bijection of range(n)")
        r.setflags(write=False)
        object.__setattr__(self, "ranks", r)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, seed: SeedLike = None) -> "Permutation":
        return cls(make_rng(seed).permutation(n))

    @classmethod
    def from_order(cls, order) -> "Permutation":
        """Build the rank map that places ``order[0]`` first, ``order[1]`` second, ..."""
        order = np.asarray(order, dtype=np.int64)
        ranks = np.empty_like(order)
        ranks[order] = np.arange(order.size)
        return cls(ranks)

    @classmethod
    def from_ranks_1based(cls, ranks) -> "Permutation":
        return cls(np.asarray(ranks, dtype=np.int64) - 1)

    def __len__(self) -> int:
        return int(self.ranks.size)

    def __call__(self, i):
        return self.ranks[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.ranks, other.ranks)

    def __hash__(self) -> int:
        return hash(self.ranks.tobytes())

    def __repr__(self) -> str:
        return f"Permutation({self.ranks.tolist()})"

    @property
    def order(self) -> np.ndarray:
        """Indices listed by position: ``order[p]`` is the index at position ``p``."""
        out = np.empty_like(self.ranks)
        out[self.ranks] = np.arange(self.ranks.size)
        return out

    def inverse(self) -> "Permutation":
        return Permutation(self.order)

    def compose(self, other: "Permutation") -> "Permutation":
        """Return ``self ∘ other``, i.e. ``i -> self(other(i))``."""
        if len(self) != len(other):
            raise ValueError("cannot compose permutations of different lengths")
        return Permutation(self.ranks[other.ranks])

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.ranks, np.arange(self.ranks.size)))

    def to_1based(self) -> list[int]:
        return (self.ranks + 1).tolist()


def permute_matrix(M, pi: Permutation, sigma: Permutation) -> Matrix:
    """Return ``out[i, j] = M[pi(i), sigma(j)]``."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("M must be 2-D")
    n1, n2 = M.shape
    if len(pi) != n1 or len(sigma) != n2:
        raise ValueError(
            f"permutation lengths ({len(pi)}, {len(sigma)}) do not match matrix shape {M.shape}"
        )
    return M[np.ix_(pi.ranks, sigma.ranks)]


def is_biso(M, tol: float = DEFAULT_TOL) -> bool:
    """True iff rows and columns are non-decreasing and entries lie in [0, 1], up to ``tol``."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        return False
    if M.min() < -tol or M.max() > 1 + tol:
        return False
    if M.shape[1] > 1 and np.any(np.diff(M, axis=1) < -tol):
        return False
    if M.shape[0] > 1 and np.any(np.diff(M, axis=0) < -tol):
        return False
    return True


def is_sst(M, tol: float = DEFAULT_TOL) -> bool:
    """Strong stochastic transitivity check for a square matrix of win probabilities.

    Requires ``M + M.T == 1`` and that, after ordering items by decreasing row
    sum, rows are non-decreasing and columns non-increasing.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"is_sst requires a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        return False
    if M.min() < -tol or M.max() > 1 + tol:
        return False
    if np.max(np.abs(M + M.T - 1.0)) > tol:
        return False
    order = np.argsort(-M.sum(axis=1), kind="stable")
    P = M[np.ix_(order, order)]
    if np.any(np.diff(P, axis=1) < -tol):
        return False
    if np.any(np.diff(P, axis=0) > tol):
        return False
    return True


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.GAUSSIAN
    zeta: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not self.zeta >= 0:
            raise ValueError("zeta must be nonnegative")

    @classmethod
    def gaussian(cls, zeta: float = 1.0) -> "NoiseModel":
        return cls(NoiseKind.GAUSSIAN, zeta)

    @classmethod
    def bernoulli(cls, zeta: float = 1.0) -> "NoiseModel":
        return cls(NoiseKind.BERNOULLI, zeta)

    def check_matrix(self, M) -> None:
        if self.kind is NoiseKind.BERNOULLI:
            M = np.asarray(M)
            if M.min() < 0 or M.max() > 1:
                raise ValueError("Bernoulli noise requires every entry of M* to lie in [0, 1]")


class MatrixClass(str, enum.Enum):
    BISO = "biso"
    BISO_PERMUTED = "biso_permuted"
    PERM_RC = "perm_rc"
    PERM_R = "perm_r"
    SST = "sst"


@dataclass(frozen=True)
class MatrixClassTag:
    """Matrix class label; ``BISO_PERMUTED`` carries the permutations it refers to."""

    kind: MatrixClass
    pi: Permutation | None = None
    sigma: Permutation | None = None

    def check_dims(self, n1: int, n2: int) -> None:
        if self.kind is MatrixClass.SST and n1 != n2:
            raise ValueError("SST class requires a square matrix")
        if self.kind is MatrixClass.BISO_PERMUTED:
            if self.pi is None or self.sigma is None:
                raise ValueError("BISO_PERMUTED requires both permutations")
            if len(self.pi) != n1 or len(self.sigma) != n2:
                raise ValueError("permutation lengths do not match dimensions")

    def contains(self, M, tol: float = DEFAULT_TOL) -> bool:
        """Membership test where it is decidable in polynomial time."""
        M = np.asarray(M, dtype=np.float64)
        self.check_dims(*M.shape)
        if self.kind is MatrixClass.BISO:
            return is_biso(M, tol)
        if self.kind is MatrixClass.BISO_PERMUTED:
            return is_biso(permute_matrix(M, self.pi.inverse(), self.sigma.inverse()), tol)
        if self.kind is MatrixClass.SST:
            return is_sst(M, tol)
        # For PERM_RC and PERM_R, sorting by row/column sums recovers a valid
        # ordering whenever one exists (monotone rows/columns have monotone sums).
        rows = Permutation.from_order(np.argsort(M.sum(axis=1), kind="stable"))
        cols = (
            Permutation.from_order(np.argsort(M.sum(axis=0), kind="stable"))
            if self.kind is MatrixClass.PERM_RC
            else Permutation.identity(M.shape[1])
        )
        return is_biso(permute_matrix(M, rows.inverse(), cols.inverse()), tol)


def write_matrix(path, M) -> None:
    """Write ``M`` as ``"n1 n2"`` followed by one space-separated line per row."""
    M = as_matrix(M)
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in M)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> Matrix:
    text = Path(path).read_text().split("\n")
    header = text[0].split()
    if len(header) != 2:
        raise ValueError(f"{path}: header must be 'n1 n2'")
    n1, n2 = int(header[0]), int(header[1])
    rows = [line.split() for line in text[1:] if line.strip()]
    if len(rows) != n1 or any(len(r) != n2 for r in rows):
        raise ValueError(f"{path}: expected {n1} rows of {n2} values")
    return as_matrix([[float(x) for x in r] for r in rows], name=str(path))
