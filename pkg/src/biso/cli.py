"""Command-line entry point: ``biso {simulate,estimate,experiment,rates,conetest}``.

Exit status is 0 on success, 2 for configuration errors and 3 for runtime
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import cone
from .core import NoiseModel, write_matrix
from .estimators import ESTIMATORS
from .evaluation import Family, generate_ground_truth
from .experiment import (
    ConfigError,
    ExperimentConfig,
    NRule,
    emit_csv,
    emit_rates_csv,
    parse_csv,
    parse_dims,
    run_estimator,
    run_experiment,
    summarize_rates,
)
from .sampling import SplitMode, derive_seed, read_observations, sample_observations, thin, write_observations

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("biso")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--noise", choices=["gaussian", "bernoulli"])
    p.add_argument("--zeta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biso", description="Estimate permuted bivariate isotonic matrices.")
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log one line per finished cell")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="draw a ground truth and write its observations")
    _add_common(sim)
    sim.add_argument("--dims", required=True, help="a single n1xn2 pair")
    sim.add_argument("--family", default="additive", choices=[f.value for f in Family])
    sim.add_argument("--n-rule", default="prop:1")
    sim.add_argument("--truth-out", help="also write the observed-order ground truth matrix")

    est = sub.add_parser("estimate", parents=[common], help="run one estimator on observation files")
    est.add_argument("--obs", required=True, help="observation file")
    est.add_argument("--obs2", help="second independent sample (tds); otherwise --obs is thinned")
    est.add_argument("--estimator", required=True, choices=[e for e in ESTIMATORS if e != "refsort"])
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--zeta", type=float, default=1.0)
    est.add_argument("--threshold-constant", type=float)
    est.add_argument("--out", required=True, help="path for the estimated matrix")

    exp = sub.add_parser("experiment", parents=[common], help="Monte Carlo grid written as CSV")
    _add_common(exp)
    exp.add_argument("--config")
    exp.add_argument("--trials", type=int)
    exp.add_argument("--estimator", action="append", choices=list(ESTIMATORS))
    exp.add_argument("--dims")
    exp.add_argument("--family", choices=[f.value for f in Family])
    exp.add_argument("--n-rule")
    exp.add_argument("--split", choices=[m.value for m in SplitMode])
    exp.add_argument("--workers", type=int)
    exp.add_argument("--threshold-constant", type=float)
    exp.add_argument("--tol", type=float)
    exp.add_argument("--timing", action="store_true", help="record wall-clock runtime_ms (breaks byte-identical reruns)")
    exp.add_argument("--fixed-truth", action="store_true", help="reuse one ground truth per dimension across trials")

    rates = sub.add_parser("rates", parents=[common], help="log-log slopes from an experiment CSV")
    rates.add_argument("--in", dest="inp", required=True)
    rates.add_argument("--metric", default="frobenius", choices=["frobenius", "max_row", "max_col"])
    rates.add_argument("--out")

    ct = sub.add_parser("conetest", parents=[common], help="chi-square divergence sweep for the bump mixtures")
    _add_common(ct)
    ct.add_argument("--lambdas", default="0.5,1,2")
    ct.add_argument("--deltas", default="0.1,0.25,0.4")
    ct.add_argument("--rs", default="1,2")
    ct.add_argument("--ss", default="2,5,10")
    ct.add_argument("--trials", type=int, default=10000)
    return parser


def _experiment_config(args) -> ExperimentConfig:
    base = None
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config: no such file {args.config}")
        base = ExperimentConfig.from_text(path.read_text())
    overrides = {}
    simple = {
        "dims": args.dims, "n_rule": args.n_rule, "noise": args.noise, "family": args.family,
        "split": args.split, "out": args.out,
    }
    overrides.update({k: v for k, v in simple.items() if v is not None})
    for key in ("zeta", "trials", "seed", "workers", "threshold_constant", "tol"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = str(value)
    if args.estimator:
        overrides["estimators"] = ",".join(args.estimator)
    if args.timing:
        overrides["record_timing"] = "true"
    if args.fixed_truth:
        overrides["fixed_truth"] = "true"
    return ExperimentConfig.from_mapping(overrides, base)


def cmd_simulate(args) -> None:
    dims = parse_dims(args.dims)
    if len(dims) != 1:
        raise ConfigError("dims: simulate takes exactly one n1xn2 pair")
    n1, n2 = dims[0]
    seed = 0 if args.seed is None else args.seed
    noise = NoiseModel(args.noise or "bernoulli", 1.0 if args.zeta is None else args.zeta)
    try:
        truth = generate_ground_truth(args.family, n1, n2, derive_seed(seed, "truth"))
    except ValueError as exc:
        raise ConfigError(f"dims: {exc}") from None
    N = NRule.parse(args.n_rule).N(n1, n2)
    obs = sample_observations(truth.observed, noise, N, derive_seed(seed, "sample"))
    if not args.out:
        raise ConfigError("out: simulate needs --out")
    write_observations(args.out, obs)
    if args.truth_out:
        write_matrix(args.truth_out, truth.observed)


def cmd_estimate(args) -> None:
    first = read_observations(args.obs)
    if args.obs2:
        second = read_observations(args.obs2)
    else:
        first, second = thin(first, derive_seed(args.seed, "thin"))
    kw = {} if args.threshold_constant is None else {"constant": args.threshold_constant}
    out = run_estimator(args.estimator, first, second, zeta=args.zeta, seed=derive_seed(args.seed, "estimate"), **kw)
    write_matrix(args.out, out.M_hat)
    print("pi_hat", *out.pi_hat.to_1based())
    print("sigma_hat", *out.sigma_hat.to_1based())
    print("fallback", int(out.fallback))


def cmd_experiment(args) -> None:
    cfg = _experiment_config(args)
    rows = run_experiment(cfg)
    Path(cfg.output_path).write_text(emit_csv(rows))


def cmd_rates(args) -> None:
    path = Path(args.inp)
    if not path.is_file():
        raise ConfigError(f"in: no such file {args.inp}")
    try:
        fits = summarize_rates(parse_csv(path.read_text()), args.metric)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(emit_rates_csv(fits, args.metric), args.out)


def cmd_conetest(args) -> None:
    try:
        rows = cone.cone_sweep(
            _floats(args.lambdas), _floats(args.deltas), _ints(args.rs), _ints(args.ss),
            args.trials, 0 if args.seed is None else args.seed, args.noise or "gaussian",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(cone.sweep_csv(rows), args.out)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "rates": cmd_rates,
    "conetest": cmd_conetest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"biso: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"biso: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure maps to one exit code
        print(f"biso: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
