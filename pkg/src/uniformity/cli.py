"""Command-line entry point.

Exit codes: 0 accept/success, 1 reject (or no certificate), 2 usage error,
3 runtime failure such as an exhausted stream or a spent sample budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import secrets
import sys

from . import core, harness, lowerbound
from .errors import (
    BadFamilyParams,
    EpsOutOfRange,
    InvalidDistribution,
    SamplingFailure,
    UniformityError,
)
from .estimator import EstimatorConfig, estimate_l2_squared
from .sampling import make_stream, make_synthetic, parse_family, realize
from .tester import TesterConfig, test_uniformity

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer (>= 1), got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _add_source(p: argparse.ArgumentParser, streams: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", metavar="SPEC", help="synthetic family, e.g. bilevel:n=1000,f=0.1,t=0.9")
    src.add_argument("--dist", metavar="FILE", help="distribution file with '<label>,<prob>' lines")
    if streams:
        src.add_argument("--stdin", action="store_true", help="read one sample token per line from stdin")
        src.add_argument("--samples", metavar="FILE", help="read one sample token per line from FILE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uniformity",
        description="Generalized uniformity testing from samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run the two-stage uniformity tester")
    _add_source(p)
    p.add_argument("--eps", type=float, required=True, help="distance parameter in (0, 0.5]")
    p.add_argument("--k3", type=_positive_int, help="3-way collision limit (default ceil(eps^-18))")
    p.add_argument("--c", type=_positive_float,
                   help="stage-1 pairwise-collision target (default ceil(6500/delta^4))")
    p.add_argument("--budget", type=_positive_int, help="total sample budget")
    p.add_argument("--seed", type=_seed, help="seed for synthetic sources (printed if omitted)")
    p.add_argument("--reuse-stage1", action="store_true",
                   help="count stage-2 collisions on top of the stage-1 samples")
    p.add_argument("--json", action="store_true", help="emit the verdict as JSON")

    p = sub.add_parser("estimate-l2", help="estimate ||p||_2^2 by collision counting")
    _add_source(p)
    p.add_argument("--eps", type=float, required=True, help="accuracy parameter in (0, 0.5)")
    p.add_argument("--k", type=_positive_int, help="collision target (overrides ceil(C/eps^4))")
    p.add_argument("--c", type=_positive_float, default=6500.0, help="constant C (default 6500)")
    p.add_argument("--budget", type=_positive_int, help="sample budget (default 1e9)")
    p.add_argument("--seed", type=_seed, help="seed for synthetic sources (printed if omitted)")
    p.add_argument("--json", action="store_true", help="emit the estimate as JSON")

    p = sub.add_parser("lowerbound", help="largest certified-indistinguishable sample budget")
    _add_source(p, streams=False)
    p.add_argument("--kcap", type=_positive_int, required=True, help="largest k to consider")
    p.add_argument("--jmax", type=_positive_int, help="fixed moment truncation (default adaptive)")

    p = sub.add_parser("gen-dist", help="write a family as a distribution file")
    p.add_argument("--family", metavar="SPEC", required=True)
    p.add_argument("--out", metavar="FILE", required=True, help="output path, '-' for stdout")

    p = sub.add_parser("experiment", help="run a Monte Carlo scenario file")
    p.add_argument("--scenario", metavar="FILE", required=True)
    p.add_argument("--out-csv", metavar="FILE", required=True, help="per-trial CSV ('-' for stdout)")
    p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("lemma-check", help="check the structural inequalities on random inputs")
    p.add_argument("--count", type=_positive_int, required=True)
    p.add_argument("--max-points", type=_positive_int, required=True, help="at most 64")
    p.add_argument("--seed", type=_seed, help="sweep seed (printed if omitted)")
    return parser


def _diag(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(64)
        _diag(f"seed: {args.seed}")
    return args.seed


def _distribution(args) -> core.Distribution:
    if args.family:
        return realize(parse_family(args.family))
    return core.read_distribution(args.dist)


def _oracle(args):
    if getattr(args, "stdin", False):
        return make_stream(sys.stdin)
    if getattr(args, "samples", None):
        return make_stream(open(args.samples, encoding="utf-8"))
    return make_synthetic(_distribution(args), _resolve_seed(args))


def _check_eps(eps: float, upper: float, closed: bool) -> None:
    ok = 0 < eps <= upper if closed else 0 < eps < upper
    if not ok:
        bracket = "]" if closed else ")"
        raise UsageError(f"--eps must lie in (0, {upper:g}{bracket}, got {eps}")


def cmd_test(args) -> int:
    _check_eps(args.eps, 0.5, closed=True)
    est = EstimatorConfig(k_override=None if args.c is None else int(-(-args.c // 1)))
    config = TesterConfig(
        estimator=est,
        k3_override=args.k3,
        fresh_stage2=not args.reuse_stage1,
        sample_budget=args.budget,
    )
    verdict = test_uniformity(_oracle(args), args.eps, config)
    if args.json:
        print(json.dumps(verdict.to_dict()))
    else:
        print(verdict.summary())
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def cmd_estimate(args) -> int:
    _check_eps(args.eps, 0.5, closed=False)
    config = EstimatorConfig(c_constant=args.c, k_override=args.k, sample_budget=args.budget)
    est = estimate_l2_squared(_oracle(args), args.eps, config)
    if args.json:
        print(json.dumps(est.to_dict()))
    else:
        print(f"||p||_2^2 ~ {est.gamma:.6g} (k={est.k} collisions in m={est.m} samples, "
              f"s2_final={est.s2_final})")
    return EXIT_OK


def cmd_lowerbound(args) -> int:
    q = _distribution(args)
    found = lowerbound.search_k(q, args.kcap, args.jmax)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["k", "linf_ok", "discrepancy", "tail", "passes"])
    for rep in found.grid:
        writer.writerow([rep.k, rep.linf_ok, repr(rep.discrepancy), repr(rep.tail), rep.passes])
    if found.best is None:
        _diag(f"no k in [1, {args.kcap}] passes both conditions")
        return EXIT_REJECT
    l3 = core.norms(q, 3).l3_cubed ** (1 / 3)
    _diag(f"k* = {found.best.k} (k*·||q||_3 = {found.best.k * l3:.6g}); "
          f"grid monotone: {found.monotone}")
    return EXIT_OK


def cmd_gen_dist(args) -> int:
    spec = parse_family(args.family)
    dist = realize(spec)
    if args.out == "-":
        core.write_distribution(dist, sys.stdout, header=f"family: {spec}")
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            core.write_distribution(dist, fh, header=f"family: {spec}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        scenario = harness.load_scenario(args.scenario)
    except (OSError, ValueError) as exc:
        raise UsageError(f"--scenario: {exc}") from exc
    stats = harness.run_trials(scenario, workers=args.workers)
    if args.out_csv == "-":
        harness.write_trials_csv(stats, sys.stdout)
        _diag(harness.summary_json(stats))
    else:
        with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
            harness.write_trials_csv(stats, fh)
        print(harness.summary_json(stats))
    return EXIT_OK


def cmd_lemma_check(args) -> int:
    if args.max_points > 64:
        raise UsageError(f"--max-points must lie in [1, 64], got {args.max_points}")
    seed = _resolve_seed(args)
    report = harness.lemma_sweep(args.count, args.max_points, seed)
    print(json.dumps({
        "count": report.count,
        "seed": seed,
        "lemma_instances": report.lemma_instances,
        "violations": len(report.violations),
    }))
    for v in report.violations:
        _diag(f"violation [{v.check}] instance {v.index} (seed {v.seed}, {v.kind}): {v.detail}")
    return EXIT_OK if report.ok else EXIT_REJECT


COMMANDS = {
    "test": cmd_test,
    "estimate-l2": cmd_estimate,
    "lowerbound": cmd_lowerbound,
    "gen-dist": cmd_gen_dist,
    "experiment": cmd_experiment,
    "lemma-check": cmd_lemma_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, BadFamilyParams, EpsOutOfRange) as exc:
        _diag(f"{parser.prog} {args.command}: error: {exc}")
        return EXIT_USAGE
    except SamplingFailure as exc:
        _diag(f"{type(exc).__name__}: {exc}")
        _diag(json.dumps(exc.diagnostics, sort_keys=True, default=str))
        return EXIT_RUNTIME
    except (InvalidDistribution, OSError, UniformityError) as exc:
        _diag(f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
