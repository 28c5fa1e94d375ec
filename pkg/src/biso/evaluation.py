"""Error metrics, ground-truth generators and log-log rate fitting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import Matrix, Permutation, SeedLike, as_matrix, make_rng, permute_matrix

NOISY_SORTING_GAP = 0.25


class Family(str, enum.Enum):
    ADDITIVE = "additive"
    NOISY_SORTING = "noisy-sorting"
    SST = "sst"


@dataclass(frozen=True)
class GroundTruth:
    """Latent bivariate isotonic ``M_star`` with the permutations that hide it.

    The matrix actually observed is ``permute_matrix(M_star, pi_star, sigma_star)``.
    """

    M_star: Matrix
    pi_star: Permutation
    sigma_star: Permutation
    family: Family

    @property
    def observed(self) -> Matrix:
        return permute_matrix(self.M_star, self.pi_star, self.sigma_star)

    @property
    def shape(self) -> tuple[int, int]:
        return self.M_star.shape


def frobenius_error(M_star, M_hat) -> float:
    """Mean squared entrywise difference, ``||M_hat - M_star||_F^2 / (n1 n2)``."""
    A = as_matrix(M_star, name="M_star")
    B = as_matrix(M_hat, name="M_hat")
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.mean((A - B) ** 2))


def max_row_norm_error(truth: GroundTruth, pi_hat: Permutation) -> float:
    """Worst row-wise mean squared gap between each observed row and the latent row at its estimated rank."""
    n1, n2 = truth.shape
    if len(pi_hat) != n1:
        raise ValueError(f"pi_hat has length {len(pi_hat)}, expected {n1}")
    B = truth.M_star[:, truth.sigma_star.ranks]
    diff = B[truth.pi_star.ranks] - B[pi_hat.ranks]
    return float(np.max(np.sum(diff**2, axis=1)) / n2)


def max_col_norm_error(truth: GroundTruth, sigma_hat: Permutation) -> float:
    """Column analogue of :func:`max_row_norm_error`."""
    transposed = GroundTruth(truth.M_star.T, truth.sigma_star, truth.pi_star, truth.family)
    if len(sigma_hat) != truth.shape[1]:
        raise ValueError(f"sigma_hat has length {len(sigma_hat)}, expected {truth.shape[1]}")
    return max_row_norm_error(transposed, sigma_hat)


def variation(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("variation of an empty vector")
    return float(v.max() - v.min())


def additive_matrix(x, y) -> Matrix:
    return np.clip((np.asarray(x, float)[:, None] + np.asarray(y, float)[None, :]) / 2, 0.0, 1.0)


def noisy_sorting_sst(n: int, gap: float = NOISY_SORTING_GAP) -> Matrix:
    """Win-probability matrix: ``1/2 + gap`` above the diagonal, ``1/2 - gap`` below."""
    if not 0 <= gap <= 0.5:
        raise ValueError("noisy sorting gap must lie in [0, 1/2]")
    M = np.full((n, n), 0.5)
    M[np.triu_indices(n, 1)] += gap
    M[np.tril_indices(n, -1)] -= gap
    return M


def link_sst(x) -> Matrix:
    """``M[i, j] = F(x_j - x_i)`` with ``F(t) = clip(1/2 + t/2)``; rows increase, columns decrease for sorted ``x``."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(0.5 + (x[None, :] - x[:, None]) / 2, 0.0, 1.0)


def generate_ground_truth(
    family: Family | str,
    n1: int,
    n2: int,
    seed: SeedLike = None,
    *,
    gap: float = NOISY_SORTING_GAP,
) -> GroundTruth:
    """Draw a latent matrix of the given family and uniformly random hiding permutations.

    SST-type families are produced with rows increasing and columns
    decreasing, then flipped vertically so both directions are non-decreasing.
    """
    family = Family(family)
    if n1 < 1 or n2 < 1:
        raise ValueError("dimensions must be positive")
    rng = make_rng(seed)
    if family is Family.ADDITIVE:
        M = additive_matrix(np.sort(rng.random(n1)), np.sort(rng.random(n2)))
    else:
        if n1 != n2:
            raise ValueError(f"{family.value} family requires n1 == n2")
        sst = noisy_sorting_sst(n1, gap) if family is Family.NOISY_SORTING else link_sst(np.sort(rng.random(n1)))
        M = np.flipud(sst).copy()
    pi = Permutation.random(n1, rng)
    sigma = Permutation.random(n2, rng)
    return GroundTruth(M, pi, sigma, family)


@dataclass(frozen=True)
class RateFit:
    points: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    r_squared: float

    def predict(self, n: float) -> float:
        return math.exp(self.intercept + self.slope * math.log(n))


def fit_rate(points) -> RateFit:
    """Least-squares line through ``(ln n, ln error)``."""
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError("fit_rate needs at least 3 points")
    if any(n <= 0 or e <= 0 for n, e in pts):
        raise ValueError("fit_rate requires positive n and error values")
    logs = tuple((math.log(n), math.log(e)) for n, e in pts)
    x, y = np.array(logs).T
    if np.ptp(x) == 0:
        raise ValueError("fit_rate needs at least two distinct n values")
    res = stats.linregress(x, y)
    r2 = 1.0 if np.ptp(y) == 0 else float(res.rvalue**2)
    return RateFit(logs, float(res.slope), float(res.intercept), r2)
