"""Mixture constructions for the two-vector cone testing problem.

Two random pairs ``(u, v)`` with ``u <= v`` coordinatewise are built here,
together with the chi-square divergence between a Poissonized observation
of a uniform bump mixture and the all-half null.  The Gaussian divergence
has a closed form; both noise models also get a Monte Carlo estimate.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import NoiseKind, SeedLike, make_rng

DELTA_MAX = 0.4
GAUSSIAN_PRODUCT_MAX = 0.4
BERNOULLI_PRODUCT_MAX = 0.1


@dataclass(frozen=True)
class MixtureConfig:
    """Parameters of a bump mixture.

    Attributes:
        d: Vector length.
        lam: Poisson rate per coordinate.
        delta: Bump height, at most 2/5.
        r: Bump (or staircase step) width.
        s: Number of candidate bump positions per block.
        t: Number of outer blocks in the monotone construction.
    """

    d: int
    lam: float
    delta: float
    r: int = 1
    s: int = 1
    t: int = 1

    def __post_init__(self) -> None:
        if min(self.d, self.r, self.s, self.t) < 1:
            raise ValueError("d, r, s and t must be positive integers")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0 <= self.delta <= DELTA_MAX:
            raise ValueError(f"delta must lie in [0, {DELTA_MAX}]")

    @property
    def product(self) -> float:
        return self.lam * self.delta**2 * self.r

    def bound(self, noise: NoiseKind | str = NoiseKind.GAUSSIAN) -> float:
        """Upper bound on the divergence: ``2 lam delta^2 r / s`` (Gaussian) or ``8 lam delta^2 r / s``."""
        factor = 2.0 if NoiseKind(noise) is NoiseKind.GAUSSIAN else 8.0
        return factor * self.product / self.s


def orthant_mixture_draw(cfg: MixtureConfig, seed: SeedLike = None) -> tuple[np.ndarray, np.ndarray]:
    """All-half ``u`` and ``v = u`` plus one bump of height ``delta`` per consecutive block of ``s`` coordinates."""
    if cfg.d % cfg.s:
        raise ValueError(f"s = {cfg.s} does not divide d = {cfg.d}")
    rng = make_rng(seed)
    blocks = cfg.d // cfg.s
    u = np.full(cfg.d, 0.5)
    v = u.copy()
    v[np.arange(blocks) * cfg.s + rng.integers(0, cfg.s, size=blocks)] += cfg.delta
    return u, v


def staircase_pair(cfg: MixtureConfig, J) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic monotone pair for given step indices ``J`` (1-based, one per outer block).

    Block ``k`` (1-based) sits at base level ``1/4 + (k - 1) / (2t)``.  On odd
    blocks, ``u`` steps up by ``delta / t`` after sub-block ``J_k`` and ``v``
    from sub-block ``J_k`` on, so the two differ on exactly ``r`` coordinates.
    Entries on even blocks are ignored.
    """
    r, s, t = cfg.r, cfg.s, cfg.t
    if r * s * t != cfg.d:
        raise ValueError(f"r * s * t = {r * s * t} must equal d = {cfg.d}")
    J = np.asarray(J, dtype=np.int64).ravel()
    if J.size != t or J.min() < 1 or J.max() > s:
        raise ValueError(f"J must hold {t} indices in [1, {s}]")
    step = cfg.delta / t
    sub = np.repeat(np.arange(1, s + 1), r)
    u_parts, v_parts = [], []
    for k in range(1, t + 1):
        base = np.full(r * s, 0.25 + (k - 1) / (2 * t))
        if k % 2:
            u_parts.append(base + step * (sub > J[k - 1]))
            v_parts.append(base + step * (sub >= J[k - 1]))
        else:
            u_parts.append(base)
            v_parts.append(base.copy())
    return np.concatenate(u_parts), np.concatenate(v_parts)


def monotone_mixture_draw(cfg: MixtureConfig, seed: SeedLike = None) -> tuple[np.ndarray, np.ndarray]:
    """Monotone staircase pair with independent uniform step positions in each odd block."""
    if cfg.r * cfg.s * cfg.t != cfg.d:
        raise ValueError(f"r * s * t = {cfg.r * cfg.s * cfg.t} must equal d = {cfg.d}")
    J = make_rng(seed).integers(1, cfg.s + 1, size=cfg.t)
    return staircase_pair(cfg, J)


def chi_square_closed_form(cfg: MixtureConfig) -> float:
    """Exact Gaussian chi-square divergence ``(exp(lam r (e^{delta^2} - 1)) - 1) / s``.

    Raises:
        ValueError: if ``lam * delta^2 * r > 2/5``, outside the regime where
            the divergence bound ``2 lam delta^2 r / s`` is claimed.
    """
    if cfg.product > GAUSSIAN_PRODUCT_MAX:
        raise ValueError(
            f"lam * delta^2 * r = {cfg.product:.6g} exceeds 2/5; "
            "the Gaussian chi-square bound requires lam * delta^2 * r <= 2/5"
        )
    return math.expm1(cfg.lam * cfg.r * math.expm1(cfg.delta**2)) / cfg.s


def chi_square_monte_carlo(
    cfg: MixtureConfig,
    trials: int,
    seed: SeedLike = None,
    noise: NoiseKind | str = NoiseKind.GAUSSIAN,
    chunk: int = 20000,
) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the mixture chi-square divergence.

    Each trial draws Poisson counts ``kappa`` over ``r * s`` coordinates
    grouped into ``s`` bump sets ``I_k`` of width ``r`` and averages
    ``g(m_k) / s**2`` over ``k``, minus ``1/s``, where ``m_k`` is the count
    on ``I_k``.  ``g(m) = exp(delta^2 m)`` for Gaussian noise and
    ``(1 + 4 delta^2)^m`` for Bernoulli noise.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials for a standard error")
    noise = NoiseKind(noise)
    rng = make_rng(seed)
    log_base = cfg.delta**2 if noise is NoiseKind.GAUSSIAN else math.log1p(4 * cfg.delta**2)
    values = np.empty(trials)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        counts = rng.poisson(cfg.lam * cfg.r, size=(m, cfg.s))  # sum of r Poisson(lam) is Poisson(lam r)
        values[done : done + m] = np.exp(log_base * counts).sum(axis=1) / cfg.s**2 - 1.0 / cfg.s
        done += m
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(trials))


SWEEP_HEADER = ("lam", "delta", "r", "s", "noise", "closed_form", "mc_estimate", "stderr", "bound", "ratio")


@dataclass(frozen=True)
class SweepRow:
    lam: float
    delta: float
    r: int
    s: int
    noise: str
    closed_form: float
    mc_estimate: float
    stderr: float
    bound: float
    ratio: float


def cone_sweep(
    lams,
    deltas,
    rs,
    ss,
    trials: int,
    seed: int = 0,
    noise: NoiseKind | str = NoiseKind.GAUSSIAN,
) -> list[SweepRow]:
    """Evaluate the divergence over a parameter grid, skipping points outside the bound's hypotheses.

    ``closed_form`` is NaN for Bernoulli rows; ``ratio`` is the Monte Carlo
    estimate over the bound.
    """
    noise = NoiseKind(noise)
    limit = GAUSSIAN_PRODUCT_MAX if noise is NoiseKind.GAUSSIAN else BERNOULLI_PRODUCT_MAX
    rows = []
    for idx, (lam, delta, r, s) in enumerate(itertools.product(lams, deltas, rs, ss)):
        cfg = MixtureConfig(d=int(r) * int(s), lam=float(lam), delta=float(delta), r=int(r), s=int(s))
        if cfg.product > limit:
            continue
        closed = chi_square_closed_form(cfg) if noise is NoiseKind.GAUSSIAN else math.nan
        est, se = chi_square_monte_carlo(cfg, trials, np.random.SeedSequence([seed, idx]), noise)
        bound = cfg.bound(noise)
        rows.append(SweepRow(cfg.lam, cfg.delta, cfg.r, cfg.s, noise.value, closed, est, se, bound, est / bound if bound > 0 else 0.0))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(row).values()])
    return buf.getvalue()


def write_sweep(path, rows) -> None:
    Path(path).write_text(sweep_csv(rows))
