"""Command-line interface: ``lowrank approx|stats|oracle|selftest``.

Exit codes: 0 ok, 1 usage, 2 I/O or parse error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import selftest
from .io import MatrixFormatError, encode_matrix, extension, read_matrix
from .linalg import DEFAULT_RANK_TOL, SVDConvergenceError, frobenius_dist_sq, svd
from .oracle import (
    MAX_ENUM_LIGHT,
    VerificationError,
    distortion_report,
    enumerate_outcomes,
    expected_distortion_closed_form,
    outcome_error,
)
from .sampler import LowRankSampler, SamplerError, make_rng

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3
SCHEMA = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load(path):
    try:
        return read_matrix(path)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from None
    except MatrixFormatError as exc:
        raise MatrixFormatError(f"{path}: {exc}") from None


def cmd_approx(args) -> int:
    mf = _load(args.input)
    sampler = LowRankSampler(mf.payload, args.rank, permute_segments=args.permute_segments,
                             rank_tol=args.rank_tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = extension(mf)
    total = None
    records = []
    for i in range(args.samples):
        q, sample = sampler.draw(make_rng(args.seed, i))
        total = q.copy() if total is None else total + q
        records.append({
            "sample": i,
            "index_set": list(sample.index_set),
            "uniform_draw": sample.uniform_draw,
            "distortion": frobenius_dist_sq(sampler.p, q),
        })
        if args.emit_samples:
            (out / f"sample_{i:04d}{ext}").write_bytes(encode_matrix(mf.like(q)))
    average = total / args.samples
    (out / f"average{ext}").write_bytes(encode_matrix(mf.like(average)))
    plan = sampler.plan
    meta = {
        "schema": SCHEMA,
        "input": str(args.input),
        "format": mf.format,
        "shape": list(sampler.p.shape),
        "rank_budget": args.rank,
        "numerical_rank": plan.n,
        "heavy": plan.k,
        "fill_value": plan.c,
        "seed": args.seed,
        "samples": args.samples,
        "permute_segments": args.permute_segments,
        "expected_distortion": expected_distortion_closed_form(plan.d, args.rank),
        "average_distortion": frobenius_dist_sq(sampler.p, average),
        "draws": records,
    }
    (out / "metadata.json").write_text(_dump(meta))
    return EXIT_OK


def cmd_stats(args) -> int:
    mf = _load(args.input)
    factors = svd(mf.payload, args.rank_tol)
    rep = distortion_report(mf.payload, args.rank, args.samples, args.seed,
                            threads=args.threads, factors=factors)
    if args.json:
        body = {
            "schema": SCHEMA,
            "rank_budget": args.rank,
            "numerical_rank": rep.rank,
            "heavy": rep.heavy,
            "fill_value": rep.fill_value,
            "expected_distortion": rep.expected_distortion,
            "lower_bound": rep.lower_bound,
            "truncation_baseline": rep.truncation_baseline,
            "empirical_mean_distortion": rep.empirical_mean_distortion,
            "confidence_radius": rep.confidence_radius,
            "samples": rep.samples,
            "seed": args.seed,
            "bound_matched": rep.bound_matched,
            "empirical_within_radius": rep.empirical_ok,
        }
        sys.stdout.write(_dump(body))
    else:
        print(f"numerical rank        {rep.rank}")
        print(f"heavy components      {rep.heavy}")
        print(f"fill value            {rep.fill_value!r}")
        print(f"expected distortion   {rep.expected_distortion!r}")
        print(f"lower bound           {rep.lower_bound!r}")
        print(f"truncation baseline   {rep.truncation_baseline!r}")
        print(f"empirical distortion  {rep.empirical_mean_distortion!r} "
              f"+/- {rep.confidence_radius!r} ({rep.samples} samples)")
        print(f"bound matched         {'yes' if rep.bound_matched else 'NO'}")
    return EXIT_OK if rep.bound_matched else EXIT_VERIFY


def cmd_oracle(args) -> int:
    mf = _load(args.input)
    factors = svd(mf.payload, args.rank_tol)
    sampler = LowRankSampler(mf.payload, args.rank, factors=factors)
    plan = sampler.plan
    if plan.n_light > MAX_ENUM_LIGHT:
        raise UsageError(f"{plan.n_light} light components; oracle supports at most {MAX_ENUM_LIGHT}")
    table = enumerate_outcomes(plan)
    rows = [
        {"index_set": list(I), "probability": mass, "distortion": outcome_error(plan, I)}
        for I, mass in table.outcomes
    ]
    if args.json:
        sys.stdout.write(_dump({
            "schema": SCHEMA,
            "rank_budget": args.rank,
            "heavy": plan.k,
            "fill_value": plan.c,
            "outcomes": rows,
            "expected_distortion": expected_distortion_closed_form(plan.d, args.rank),
        }))
    else:
        print("index_set\tprobability\tdistortion")
        for row in rows:
            I = "{" + ",".join(str(i) for i in row["index_set"]) + "}"
            print(f"{I}\t{row['probability']!r}\t{row['distortion']!r}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = selftest.run(seed=args.seed, quick=args.quick)
    for res in results:
        status = "PASS" if res.ok else "FAIL"
        line = f"{status} {res.name:22s} {res.cases:6d} cases {res.failures:4d} failures {res.seconds:6.2f}s"
        if res.detail and not res.ok:
            line += f"  [{res.detail}]"
        print(line)
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowrank", description="Unbiased minimum-distortion low-rank sampling.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, samples=True):
        p.add_argument("--input", required=True, help="CSV (real or a+bi cells) or PGM file")
        p.add_argument("--rank", required=True, type=_positive)
        p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
        if samples:
            p.add_argument("--samples", type=_positive, default=16)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("approx", help="draw unbiased rank-r approximations")
    common(p)
    p.add_argument("--permute-segments", action="store_true")
    p.add_argument("--emit-samples", action="store_true", help="write every sample, not just the average")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("stats", help="expected vs empirical distortion")
    common(p)
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("oracle", help="exact outcome table")
    common(p, samples=False)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("selftest", help="run the seeded verification sweeps")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lowrank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MatrixFormatError) as exc:
        print(f"lowrank: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SVDConvergenceError, VerificationError, SamplerError) as exc:
        print(f"lowrank: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
