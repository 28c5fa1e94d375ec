"""Monte Carlo experiment grid: configuration, per-trial pipeline, CSV rows, rate summaries."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Matrix, NoiseKind, NoiseModel, Permutation, permute_matrix
from .estimators import (
    ESTIMATORS,
    DEFAULT_CONSTANT,
    borda_sort,
    compute_thresholds,
    meta_estimate,
    partial_sum_graph,
    reference_blocking,
    resolve_graph,
    two_dimensional_sort,
)
from .evaluation import (
    Family,
    GroundTruth,
    RateFit,
    fit_rate,
    frobenius_error,
    generate_ground_truth,
    max_col_norm_error,
    max_row_norm_error,
)
from .sampling import ObservationSet, SplitMode, build_observation_matrix, derive_seed, merge, split_sample

log = logging.getLogger(__name__)

EXPERIMENT_TOL = 1e-4
EXPERIMENT_MAX_CYCLES = 5000


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass(frozen=True)
class NRule:
    """Sample size rule: ``fixed`` uses ``value`` as N, ``prop`` uses ``value * n1 * n2``."""

    kind: str
    value: float

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "prop"):
            raise ConfigError(f"n_rule: kind must be 'fixed' or 'prop', got {self.kind!r}")
        if not self.value > 0:
            raise ConfigError("n_rule: value must be positive")

    def N(self, n1: int, n2: int) -> float:
        return float(self.value) if self.kind == "fixed" else float(self.value * n1 * n2)

    @classmethod
    def parse(cls, text: str) -> "NRule":
        kind, sep, value = text.strip().partition(":")
        if not sep:
            raise ConfigError(f"n_rule: expected 'fixed:N' or 'prop:c', got {text!r}")
        try:
            return cls(kind.strip(), float(value))
        except ValueError as exc:
            raise ConfigError(f"n_rule: {exc}") from None

    def __str__(self) -> str:
        return f"{self.kind}:{self.value!r}"


def parse_dims(text: str) -> tuple[tuple[int, int], ...]:
    """``"64x64,128x128"`` -> ``((64, 64), (128, 128))``."""
    dims = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        a, sep, b = item.lower().partition("x")
        try:
            n1, n2 = int(a), int(b)
        except ValueError:
            raise ConfigError(f"dims: cannot parse {item!r}; expected n1xn2") from None
        if not sep or n1 < 1 or n2 < 1:
            raise ConfigError(f"dims: invalid entry {item!r}")
        dims.append((n1, n2))
    return tuple(dims)


def _parse_bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dims: tuple[tuple[int, int], ...]
    n_rule: NRule = NRule("prop", 1.0)
    noise: NoiseModel = NoiseModel(NoiseKind.BERNOULLI)
    estimators: tuple[str, ...] = ("tds", "borda")
    family: Family = Family.ADDITIVE
    trials: int = 10
    seed: int = 0
    split_mode: SplitMode = SplitMode.INDEPENDENT
    output_path: str = "results.csv"
    threshold_constant: float = DEFAULT_CONSTANT
    tol: float = EXPERIMENT_TOL
    max_cycles: int = EXPERIMENT_MAX_CYCLES
    workers: int = 1
    record_timing: bool = False
    fixed_truth: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple((int(a), int(b)) for a, b in self.dims))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        try:
            object.__setattr__(self, "family", Family(self.family))
        except ValueError:
            raise ConfigError(f"family: unknown family {self.family!r}") from None
        try:
            object.__setattr__(self, "split_mode", SplitMode(self.split_mode))
        except ValueError:
            raise ConfigError(f"split: unknown split mode {self.split_mode!r}") from None
        if not self.dims:
            raise ConfigError("dims: at least one dimension pair is required")
        if any(a < 1 or b < 1 for a, b in self.dims):
            raise ConfigError("dims: dimensions must be positive")
        if not self.estimators:
            raise ConfigError("estimators: at least one estimator is required")
        for name in self.estimators:
            if name not in ESTIMATORS:
                raise ConfigError(f"estimators: unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("estimators: duplicates are not allowed")
        if self.trials < 1:
            raise ConfigError("trials: must be at least 1")
        if self.family is not Family.ADDITIVE and any(a != b for a, b in self.dims):
            raise ConfigError(f"dims: family {self.family.value} needs square dimensions")
        if not self.threshold_constant > 0:
            raise ConfigError("threshold_constant: must be positive")
        if not self.tol > 0:
            raise ConfigError("tol: must be positive")
        if self.max_cycles < 1:
            raise ConfigError("max_cycles: must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")

    # key=value text form ------------------------------------------------

    def to_text(self) -> str:
        values = {
            "dims": ",".join(f"{a}x{b}" for a, b in self.dims),
            "n_rule": str(self.n_rule),
            "noise": self.noise.kind.value,
            "zeta": repr(self.noise.zeta),
            "estimators": ",".join(self.estimators),
            "family": self.family.value,
            "trials": str(self.trials),
            "seed": str(self.seed),
            "split": self.split_mode.value,
            "out": self.output_path,
            "threshold_constant": repr(self.threshold_constant),
            "tol": repr(self.tol),
            "max_cycles": str(self.max_cycles),
            "workers": str(self.workers),
            "record_timing": str(self.record_timing).lower(),
            "fixed_truth": str(self.fixed_truth).lower(),
        }
        return "".join(f"{k} = {v}\n" for k, v in values.items())

    @classmethod
    def from_mapping(cls, items: dict[str, str], base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Build a config from string values, layered over ``base`` when given."""
        kw = {} if base is None else {f.name: getattr(base, f.name) for f in dataclasses.fields(cls)}
        noise_kind = base.noise.kind if base else NoiseKind.BERNOULLI
        zeta = base.noise.zeta if base else 1.0
        for key, raw in items.items():
            value = raw.strip()
            try:
                if key == "dims":
                    kw["dims"] = parse_dims(value)
                elif key == "n_rule":
                    kw["n_rule"] = NRule.parse(value)
                elif key == "noise":
                    noise_kind = NoiseKind(value)
                elif key == "zeta":
                    zeta = float(value)
                elif key == "estimators":
                    kw["estimators"] = tuple(s.strip() for s in value.split(",") if s.strip())
                elif key == "family":
                    kw["family"] = value
                elif key in ("trials", "seed", "max_cycles", "workers"):
                    kw[key] = int(value)
                elif key == "split":
                    kw["split_mode"] = value
                elif key == "out":
                    kw["output_path"] = value
                elif key in ("threshold_constant", "tol"):
                    kw[key] = float(value)
                elif key in ("record_timing", "fixed_truth"):
                    kw[key] = _parse_bool(value, key)
                else:
                    raise ConfigError(f"{key}: unknown configuration key")
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        try:
            kw["noise"] = NoiseModel(noise_kind, zeta)
        except ValueError as exc:
            raise ConfigError(f"zeta: {exc}") from None
        if "dims" not in kw:
            raise ConfigError("dims: required")
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        items = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected key = value")
            items[key.strip()] = value
        return cls.from_mapping(items, base)

    def with_updates(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


RESULT_HEADER = (
    "n1", "n2", "N", "trial", "estimator", "frobenius", "max_row", "max_col", "runtime_ms", "fallback_flag",
)


@dataclass(frozen=True)
class ResultRow:
    n1: int
    n2: int
    N: float
    trial: int
    estimator: str
    frobenius: float
    max_row: float
    max_col: float
    runtime_ms: float
    fallback_flag: int

    def __post_init__(self) -> None:
        for name in ("frobenius", "max_row", "max_col", "runtime_ms"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")


def emit_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_HEADER)
    for r in rows:
        writer.writerow(
            [r.n1, r.n2, repr(r.N), r.trial, r.estimator, repr(r.frobenius), repr(r.max_row),
             repr(r.max_col), repr(r.runtime_ms), r.fallback_flag]
        )
    return buf.getvalue()


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != RESULT_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        n1, n2, N, trial, est, fro, mr, mc, rt, fb = rec
        rows.append(
            ResultRow(int(n1), int(n2), float(N), int(trial), est, float(fro), float(mr), float(mc), float(rt), int(fb))
        )
    return rows


# per-trial pipeline ---------------------------------------------------------


@dataclass
class EstimatorOutput:
    M_hat: Matrix
    pi_hat: Permutation
    sigma_hat: Permutation
    fallback: bool = False
    details: dict = field(default_factory=dict)


def run_estimator(
    name: str,
    first: ObservationSet,
    second: ObservationSet,
    *,
    zeta: float = 1.0,
    constant: float = DEFAULT_CONSTANT,
    sigma_known: Permutation | None = None,
    tol: float = EXPERIMENT_TOL,
    max_cycles: int = EXPERIMENT_MAX_CYCLES,
    seed=None,
) -> EstimatorOutput:
    """Estimate permutations with ``name`` and project the pooled observations along them.

    Every estimator projects the union of the two sub-samples.  Only ``tds``
    uses the split; ``refsort`` needs the column order ``sigma_known`` (rank
    map of each observed column).
    """
    pool = merge(first, second)
    Y = build_observation_matrix(pool)
    n1, n2 = Y.shape
    fallback = False
    details: dict = {}
    if name == "project-only":
        pi, sigma = Permutation.identity(n1), Permutation.identity(n2)
    elif name == "borda":
        pi, sigma = borda_sort(Y), borda_sort(Y.T)
    elif name == "refsort":
        if sigma_known is None:
            raise ValueError("refsort needs the column order")
        th = compute_thresholds(n1, n2, pool.N, zeta, constant)
        blocking = reference_blocking(n1, n2, pool.N)
        Ys = permute_matrix(Y, Permutation.identity(n1), sigma_known.inverse())
        G = partial_sum_graph(Ys, blocking, th)
        pi, fallback = resolve_graph(G, "random", seed=seed)
        sigma = sigma_known
        details = {"edges": G.n_edges}
    elif name == "tds":
        Y1, Y2 = build_observation_matrix(first), build_observation_matrix(second)
        # each side of the comparison uses the nominal size of the sample it is computed from
        th_rows = compute_thresholds(n1, n2, second.N, zeta, constant)
        est = two_dimensional_sort(Y1, Y2, th_rows, th_rows.transposed(), seed=seed)
        pi, sigma = est.pi_hat, est.sigma_hat
        fallback = est.diagnostics["rows"]["fallback"] or est.diagnostics["cols"]["fallback"]
        details = est.diagnostics
    else:
        raise ValueError(f"unknown estimator {name!r}")
    M_hat = meta_estimate(Y, pi, sigma, tol, max_cycles)
    return EstimatorOutput(M_hat, pi, sigma, bool(fallback), details)


def _trial_task(args) -> list[ResultRow]:
    cfg, n1, n2, trial = args
    truth_trial = 0 if cfg.fixed_truth else trial
    truth = generate_ground_truth(cfg.family, n1, n2, derive_seed(cfg.seed, "truth", n1, n2, truth_trial))
    N = cfg.n_rule.N(n1, n2)
    first, second = split_sample(
        truth.observed, cfg.noise, N, cfg.split_mode, derive_seed(cfg.seed, "sample", n1, n2, trial)
    )
    rows = []
    for name in cfg.estimators:
        start = time.perf_counter()
        out = run_estimator(
            name,
            first,
            second,
            zeta=cfg.noise.zeta,
            constant=cfg.threshold_constant,
            sigma_known=truth.sigma_star,
            tol=cfg.tol,
            max_cycles=cfg.max_cycles,
            seed=derive_seed(cfg.seed, "estimate", n1, n2, trial, name),
        )
        elapsed = (time.perf_counter() - start) * 1000 if cfg.record_timing else 0.0
        rows.append(_score(truth, out, name, N, trial, elapsed))
    return rows


def _score(truth: GroundTruth, out: EstimatorOutput, name: str, N: float, trial: int, elapsed: float) -> ResultRow:
    n1, n2 = truth.shape
    return ResultRow(
        n1, n2, N, trial, name,
        frobenius_error(truth.observed, out.M_hat),
        max_row_norm_error(truth, out.pi_hat),
        max_col_norm_error(truth, out.sigma_hat),
        elapsed,
        int(out.fallback),
    )


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run every (dims, trial) cell and return rows ordered by (dims, trial, estimator).

    Each cell draws its ground truth and samples from streams derived from
    ``cfg.seed``, so the rows do not depend on ``cfg.workers``.
    """
    tasks = [(cfg, n1, n2, t) for n1, n2 in cfg.dims for t in range(cfg.trials)]
    results: list[list[ResultRow]] = []
    if cfg.workers == 1:
        for task in tasks:
            results.append(_trial_task(task))
            _log_cell(task)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for task, rows in zip(tasks, pool.map(_trial_task, tasks)):
                results.append(rows)
                _log_cell(task)
    return [row for chunk in results for row in chunk]


def _log_cell(task) -> None:
    _, n1, n2, t = task
    log.info("done %dx%d trial %d", n1, n2, t)


def mean_by_dim(rows, estimator: str, metric: str = "frobenius") -> dict[int, float]:
    """Arithmetic mean of ``metric`` per square dimension ``n`` for one estimator."""
    acc: dict[int, list[float]] = {}
    for r in rows:
        if r.estimator == estimator and r.n1 == r.n2:
            acc.setdefault(r.n1, []).append(getattr(r, metric))
    return {n: float(np.mean(v)) for n, v in sorted(acc.items())}


def summarize_rates(rows, metric: str = "frobenius") -> dict[str, RateFit]:
    """Log-log slope of the per-dimension mean error, one fit per estimator."""
    if metric not in ("frobenius", "max_row", "max_col"):
        raise ValueError(f"unknown metric {metric!r}")
    fits = {}
    for name in dict.fromkeys(r.estimator for r in rows):
        means = mean_by_dim(rows, name, metric)
        if len(means) < 3:
            raise ValueError(f"estimator {name!r} has {len(means)} distinct square dims; need at least 3")
        fits[name] = fit_rate(means.items())
    return fits


RATES_HEADER = ("estimator", "metric", "slope", "intercept", "r_squared", "n_points")


def emit_rates_csv(fits: dict[str, RateFit], metric: str = "frobenius") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RATES_HEADER)
    for name, fit in fits.items():
        writer.writerow([name, metric, repr(fit.slope), repr(fit.intercept), repr(fit.r_squared), len(fit.points)])
    return buf.getvalue()


def write_results(path, rows) -> None:
    Path(path).write_text(emit_csv(rows))
