"""Poissonized trace-regression sampling and the averaged observation matrix."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import Matrix, NoiseKind, NoiseModel, SeedLike, as_matrix, make_rng


def derive_seed(seed: int, *keys) -> np.random.SeedSequence:
    """Deterministic child stream for ``(seed, *keys)``; string keys are hashed with CRC32."""
    entropy = [int(seed)]
    for k in keys:
        entropy.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.SeedSequence(entropy)


class SplitMode(str, enum.Enum):
    INDEPENDENT = "independent"
    THINNING = "thinning"


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observed ``(row, col, value)`` triples with nominal sample size ``N``.

    Indices are 0-based.  ``N`` is the Poisson mean used when the set was
    drawn, and is the normalizer of :func:`build_observation_matrix`.
    """

    n1: int
    n2: int
    N: float
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (rows.size == cols.size == values.size):
            raise ValueError("rows, cols and values must have equal length")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("dimensions must be positive")
        if self.N < 0:
            raise ValueError("N must be nonnegative")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n1 or cols.min() < 0 or cols.max() >= self.n2:
                raise ValueError("observation index out of bounds")
            if not np.all(np.isfinite(values)):
                raise ValueError("observation values must be finite")
        for name, arr in (("rows", rows), ("cols", cols), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            (self.n1, self.n2, self.N) == (other.n1, other.n2, other.N)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def subset(self, index, N: float) -> "ObservationSet":
        return ObservationSet(self.n1, self.n2, N, self.rows[index], self.cols[index], self.values[index])

    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0) | (self.values == 1)))

    def to_bytes(self) -> bytes:
        header = np.array([self.n1, self.n2], dtype=np.int64).tobytes() + np.float64(self.N).tobytes()
        return header + self.rows.tobytes() + self.cols.tobytes() + self.values.tobytes()


def _draw_values(M: Matrix, rows, cols, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    mean = M[rows, cols]
    if noise.kind is NoiseKind.BERNOULLI:
        return (rng.random(mean.size) < mean).astype(np.float64)
    return mean + rng.standard_normal(mean.size)


def sample_observations(M_star, noise: NoiseModel, N: float, seed: SeedLike = None) -> ObservationSet:
    """Draw ``Poi(N)`` observations at uniformly random entries of ``M_star``."""
    M = as_matrix(M_star, name="M_star")
    noise.check_matrix(M)
    if N < 0:
        raise ValueError("N must be nonnegative")
    rng = make_rng(seed)
    count = int(rng.poisson(N)) if N > 0 else 0
    return _sample_count(M, noise, N, count, rng)


def sample_fixed(M_star, noise: NoiseModel, N: int, seed: SeedLike = None) -> ObservationSet:
    """Draw exactly ``N`` observations (the non-Poissonized model)."""
    M = as_matrix(M_star, name="M_star")
    noise.check_matrix(M)
    return _sample_count(M, noise, float(N), int(N), make_rng(seed))


def _sample_count(M: Matrix, noise: NoiseModel, N: float, count: int, rng) -> ObservationSet:
    n1, n2 = M.shape
    flat = rng.integers(0, n1 * n2, size=count)
    rows, cols = np.divmod(flat, n2)
    values = _draw_values(M, rows, cols, noise, rng)
    return ObservationSet(n1, n2, float(N), rows, cols, values)


def build_observation_matrix(obs: ObservationSet) -> Matrix:
    """Entrywise sums of observations scaled by ``n1 n2 / N``; unobserved entries are 0."""
    n1, n2 = obs.n1, obs.n2
    if obs.N == 0:
        if len(obs):
            raise ValueError("N = 0 with a nonempty observation set")
        return np.zeros((n1, n2))
    sums = np.bincount(obs.rows * n2 + obs.cols, weights=obs.values, minlength=n1 * n2)
    return (n1 * n2 / obs.N) * sums.reshape(n1, n2)


def thin(obs: ObservationSet, seed: SeedLike = None) -> tuple[ObservationSet, ObservationSet]:
    """Route each observation to one of two halves by a fair coin; each half has nominal ``N/2``."""
    rng = make_rng(seed)
    coin = rng.random(len(obs)) < 0.5
    return obs.subset(~coin, obs.N / 2), obs.subset(coin, obs.N / 2)


def merge(a: ObservationSet, b: ObservationSet) -> ObservationSet:
    """Union of two observation sets on the same grid; nominal sizes add."""
    if (a.n1, a.n2) != (b.n1, b.n2):
        raise ValueError("cannot merge observation sets of different shapes")
    return ObservationSet(
        a.n1,
        a.n2,
        a.N + b.N,
        np.concatenate([a.rows, b.rows]),
        np.concatenate([a.cols, b.cols]),
        np.concatenate([a.values, b.values]),
    )


def split_sample(
    M_star,
    noise: NoiseModel,
    N: float,
    mode: SplitMode | str = SplitMode.INDEPENDENT,
    seed: SeedLike = None,
) -> tuple[ObservationSet, ObservationSet]:
    """Two independent sub-samples.

    ``INDEPENDENT`` draws each side as its own ``Poi(N)`` sample; ``THINNING``
    draws one ``Poi(N)`` sample and splits it into two ``Poi(N/2)`` halves.
    """
    mode = SplitMode(mode)
    rng = make_rng(seed)
    first = sample_observations(M_star, noise, N, rng)
    if mode is SplitMode.INDEPENDENT:
        return first, sample_observations(M_star, noise, N, rng)
    return thin(first, rng)


def fixed_n_wrapper(
    obs_exact: ObservationSet,
    estimator: Callable[[ObservationSet], Matrix],
    seed: SeedLike = None,
) -> Matrix:
    """Run a Poissonized estimator on a sample of exactly ``N`` observations.

    Draws ``Ñ ~ Poi(N/2)``.  If ``Ñ <= N`` the estimator sees the first ``Ñ``
    observations of a seeded shuffle, presented as a set with nominal size
    ``N/2``; otherwise the all-zeros matrix is returned.
    """
    N = len(obs_exact)
    if obs_exact.N != N:
        raise ValueError(f"observation set has {N} entries but nominal N = {obs_exact.N}")
    floor = 4 * math.log(obs_exact.n1 * obs_exact.n2)
    if N < floor:
        raise ValueError(f"fixed-N reduction requires N >= 4 log(n1 n2) = {floor:.3f}, got N = {N}")
    rng = make_rng(seed)
    n_tilde = int(rng.poisson(N / 2))
    if n_tilde > N:
        return np.zeros((obs_exact.n1, obs_exact.n2))
    keep = rng.permutation(N)[:n_tilde]
    return estimator(obs_exact.subset(keep, N / 2))


def write_observations(path, obs: ObservationSet) -> None:
    """Header ``"n1 n2 N count"`` then one ``"i j y"`` line per observation, 1-based."""
    lines = [f"{obs.n1} {obs.n2} {obs.N!r} {len(obs)}"]
    lines.extend(f"{i + 1} {j + 1} {y!r}" for i, j, y in obs.entries)
    Path(path).write_text("\n".join(lines) + "\n")


def read_observations(path) -> ObservationSet:
    lines = [line for line in Path(path).read_text().split("\n") if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty observation file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}: header must be 'n1 n2 N count'")
    n1, n2, N, count = int(head[0]), int(head[1]), float(head[2]), int(head[3])
    body = lines[1:]
    if len(body) != count:
        raise ValueError(f"{path}: header declares {count} observations, found {len(body)}")
    if count:
        table = np.array([line.split() for line in body], dtype=np.float64)
        rows, cols, values = table[:, 0].astype(np.int64) - 1, table[:, 1].astype(np.int64) - 1, table[:, 2]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        values = np.zeros(0)
    return ObservationSet(n1, n2, N, rows, cols, values)
