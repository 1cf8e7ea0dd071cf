#!/usr/bin/env python3
"""
cf-sampler command line.

    cf-sampler sample   --dist '{"family":"poisson","params":{"lambda":1}}' -n 5 --seed 7
    cf-sampler envelope --dist @binomial.json
    cf-sampler table    --family poisson-tweedie --grid paper --format json
    cf-sampler validate --dist '{"family":"poisson","params":{"lambda":10}}'

Exit codes: 0 success, 1 failed validation, 2 invalid input, 3 iteration limit.
"""

import argparse
import json
import logging
import pathlib
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from cf_sampler.bench import TABLE_FAMILIES, build_table, run_validation
from cf_sampler.config import load_config
from cf_sampler.distributions import (
    PARAM_NAMES,
    DistributionSpec,
    Family,
    InvalidParametersError,
    MissingDerivativesError,
    NotSquareIntegrableError,
)
from cf_sampler.envelope import (
    build_envelope,
    compute_c,
    compute_k,
    envelope_for,
    resolve_anchor,
    select_m_mean,
    select_m_star,
)
from cf_sampler.quadrature import ConsistencyError, PfEvaluator, QuadratureError
from cf_sampler.sampler import IterationLimitError, UniformStream, sample_n

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_ITERATION_LIMIT = 3

TOL_RANGE = (1e-14, 1e-6)
U64 = 2 ** 64


class UsageError(ValueError):
    """A flag value that parsed but is out of range."""


def _read_arg(value: str) -> str:
    if value.startswith("@"):
        return pathlib.Path(value[1:]).read_text()
    return value


def parse_dist(value: str) -> DistributionSpec:
    return DistributionSpec.from_json_text(_read_arg(value))


def parse_seed(value: Any) -> int:
    if str(value).strip().lower() == "random":
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    try:
        seed = int(value)
    except ValueError:
        raise UsageError(f"--seed must be an unsigned 64-bit integer or 'random', got {value!r}")
    if not 0 <= seed < U64:
        raise UsageError(f"--seed must lie in [0, 2^64), got {seed}")
    return seed


def check_tol(tol: float) -> float:
    lo, hi = TOL_RANGE
    if not lo <= tol <= hi:
        raise UsageError(f"--tol must lie in [{lo:g}, {hi:g}], got {tol!r}")
    return tol


def parse_grid(value: str, family: Family) -> Optional[List[tuple]]:
    """'paper' (the published grid, as None) or @file holding a JSON list or a CSV with one column per parameter."""
    if value in ("paper", "published"):
        return None
    if not value.startswith("@"):
        raise UsageError(f"--grid must be 'paper' or @file, got {value!r}")
    names = PARAM_NAMES[family]
    path = pathlib.Path(value[1:])
    if path.suffix.lower() == ".csv":
        frame = pd.read_csv(path)
        missing = [n for n in names if n not in frame.columns]
        if missing:
            raise InvalidParametersError(family.value, [f"grid file lacks column {n!r}" for n in missing])
        return [tuple(float(v) for v in row) for row in frame[list(names)].itertuples(index=False)]

    cells = json.loads(path.read_text())
    if not isinstance(cells, list):
        raise InvalidParametersError(family.value, ["grid file must hold a JSON list"])
    grid = []
    for cell in cells:
        if isinstance(cell, dict):
            cell = [cell[n] for n in names]
        elif not isinstance(cell, (list, tuple)):
            cell = [cell]
        if len(cell) != len(names):
            raise InvalidParametersError(family.value, [f"grid cell {cell!r} needs parameters {names}"])
        grid.append(tuple(float(v) for v in cell))
    return grid


def _fmt(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _emit_record(record: Dict[str, Any], fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(record))
    else:
        for key, value in record.items():
            print(f"{key},{_fmt(value)}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sample(args, cfg: Dict[str, Any]) -> int:
    spec = parse_dist(args.dist)
    n = args.n if args.n is not None else cfg["n"]
    if n < 1:
        raise UsageError(f"-n must be at least 1, got {n}")
    env = envelope_for(spec, args.m_rule, args.tol)
    pf = PfEvaluator(spec, args.tol)
    report = sample_n(env, pf, UniformStream(args.seed), n)

    stats = {
        "seed": args.seed, "n": n, "iterations": report.iterations,
        "acceptance_rate": report.acceptance_rate, "guard_rejections": report.guard_rejections,
        "strategy": pf.strategy.value,
    }
    stats.update(env.as_dict())
    samples = [int(x) for x in report.samples]
    if args.format == "json":
        print(json.dumps({"samples": samples, "stats": stats}))
    else:
        print("\n".join(str(x) for x in samples))
        print("# " + ",".join(stats))
        print("# " + ",".join(_fmt(v) for v in stats.values()))
    return EXIT_OK


def cmd_envelope(args, cfg: Dict[str, Any]) -> int:
    spec = parse_dist(args.dist)
    m_star = select_m_star(spec, args.tol)
    m_mean = select_m_mean(spec)
    known_k = {m: compute_k(spec, m, args.tol) for m in {m_star, m_mean}}
    rule = str(args.m_rule).strip().lower()
    m = {"star": m_star, "mean": m_mean}.get(rule)
    if m is None:
        m = resolve_anchor(spec, args.m_rule, args.tol)
    env = build_envelope(spec, m, args.tol, c=compute_c(spec, args.tol),
                         k_m=known_k.get(m))
    record = {
        "distribution": spec.label(),
        "m_star": m_star,
        "m_mean": m_mean,
        "c": env.c,
        "k_star": known_k[m_star],
        "k_mean": known_k[m_mean],
    }
    record.update({k: v for k, v in env.as_dict().items() if k != "c"})
    record["degenerate"] = env.degenerate
    _emit_record(record, args.format)
    return EXIT_OK


def cmd_table(args, cfg: Dict[str, Any]) -> int:
    family = Family.parse(args.family)
    if family not in TABLE_FAMILIES:
        raise UsageError(f"--family must be one of {[f.value for f in TABLE_FAMILIES]}, got {args.family!r}")
    grid = parse_grid(args.grid, family)
    table = build_table(family, grid, tol=args.tol, threads=cfg.get("threads"))
    out = table.to_json() if args.format == "json" else table.to_csv()
    sys.stdout.write(out if out.endswith("\n") else out + "\n")
    return EXIT_OK


def cmd_validate(args, cfg: Dict[str, Any]) -> int:
    spec = parse_dist(args.dist)
    vcfg = cfg["validate"]
    n = args.n if args.n is not None else int(vcfg["n"])
    results = run_validation(spec, n=n, seed=args.seed, m_rule=args.m_rule, tol=args.tol,
                             level=float(vcfg["level"]), se_multiplier=float(vcfg["se_multiplier"]),
                             domination_width=float(vcfg["domination_width"]))
    if args.format == "json":
        print(json.dumps([r.as_dict() for r in results]))
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


COMMANDS = {
    "sample": cmd_sample,
    "envelope": cmd_envelope,
    "table": cmd_table,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cf-sampler",
                                     description="Universal rejection sampling from characteristic functions")
    parser.add_argument("--config", type=str, help="YAML configuration (default config/cf_sampler.yaml)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_dist: bool = True) -> None:
        if needs_dist:
            p.add_argument("--dist", required=True, help="distribution as JSON or @file")
            p.add_argument("-n", type=int, default=None, help="number of variates")
            p.add_argument("--seed", type=str, default=None, help="unsigned 64-bit seed or 'random'")
            p.add_argument("--m-rule", dest="m_rule", type=str, default=None, help="star, mean or an integer anchor")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--tol", type=float, default=None, help="absolute quadrature tolerance")

    common(sub.add_parser("sample", help="draw variates"))
    common(sub.add_parser("envelope", help="print the envelope constants"))
    common(sub.add_parser("validate", help="run GOF, acceptance and domination checks"))
    table = sub.add_parser("table", help="expected-complexity tables")
    common(table, needs_dist=False)
    table.add_argument("--family", required=True, help="poisson, binomial or poisson-tweedie")
    table.add_argument("--grid", default="paper", help="'paper' or @file (JSON list or CSV)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    logging.basicConfig(level=getattr(logging, str(cfg["log_level"]).upper(), logging.INFO),
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s', stream=sys.stderr)

    try:
        args.tol = check_tol(args.tol if args.tol is not None else float(cfg["tol"]))
        args.format = args.format or cfg["format"]
        if args.command != "table":
            args.seed = parse_seed(args.seed if args.seed is not None else cfg["seed"])
            args.m_rule = args.m_rule or str(cfg["m_rule"])
        return COMMANDS[args.command](args, cfg)
    except IterationLimitError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_ITERATION_LIMIT
    except (InvalidParametersError, MissingDerivativesError, NotSquareIntegrableError,
            ConsistencyError, UsageError, ValueError, KeyError, OSError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_INVALID
    except QuadratureError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
