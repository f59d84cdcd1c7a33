"""Command-line entry points.

Subcommands:
  run                 full experiment from a JSON config
  sweep               run with a parameter sweep given on the command line
  baselines           run a subset of the ablation schemes
  validate-integrals  randomized closed-form vs quadrature certification

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
The NRPOS_SEED environment variable overrides the default seed when no
--seed is given.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .errors import ConfigError, NumericalError
from .runner import emit_cdf_csv, emit_csv, run_monte_carlo, spec_from_dict
from .scenario import load_config_file


def _split_values(text: str) -> list:
    """Split a --values string on commas not nested in brackets; parse JSON items."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
        cur.append(ch)
    parts.append("".join(cur))
    out = []
    for p in parts:
        p = p.strip()
        if not p:
            raise ConfigError(f"empty sweep value in {text!r}")
        try:
            out.append(json.loads(p))
        except json.JSONDecodeError:
            out.append(p)
    return out


def _default_seed(args_seed: int | None) -> int | None:
    if args_seed is not None:
        return args_seed
    env = os.environ.get("NRPOS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"NRPOS_SEED must be an integer, got {env!r}") from exc
    return None


def _load_spec(args, schemes: list[str] | None = None, sweep=None):
    data = load_config_file(args.config) if args.config else {}
    spec = spec_from_dict(data)
    overrides = {}
    seed = _default_seed(args.seed)
    if seed is not None:
        overrides["seed"] = seed
    if getattr(args, "realizations", None) is not None:
        overrides["realizations"] = args.realizations
    if schemes is not None:
        overrides["schemes"] = tuple(schemes)
    if sweep is not None:
        overrides["sweep_param"] = sweep[0]
        overrides["sweep_values"] = tuple(sweep[1])
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    return spec


def _run_and_emit(spec, out_path: str | None) -> None:
    rows, cdf = run_monte_carlo(spec)
    if out_path:
        emit_csv(rows, out_path)
        if spec.emit_cdf:
            emit_cdf_csv(cdf, out_path + ".cdf.csv")
        print(f"wrote {len(rows)} rows to {out_path}")
    else:
        for r in sorted(rows, key=lambda r: (r.sweep, r.scheme)):
            print(
                f"sweep={r.sweep} scheme={r.scheme} mean={r.mean_max_err_m:.6g} "
                f"p50={r.p50:.6g} p90={r.p90:.6g}"
            )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nrpos", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--realizations", type=int, default=None)

    sw = sub.add_parser("sweep", help="run with a parameter sweep")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True, help="dotted path, e.g. scenario.bandwidth_hz")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--out", default=None)
    sw.add_argument("--realizations", type=int, default=None)

    bl = sub.add_parser("baselines", help="run a subset of the ablation schemes")
    bl.add_argument("--config", required=True)
    bl.add_argument("--schemes", required=True, help="comma-separated, e.g. BL0,BL1,proposed")
    bl.add_argument("--seed", type=int, default=None)
    bl.add_argument("--out", default=None)
    bl.add_argument("--realizations", type=int, default=None)

    vi = sub.add_parser("validate-integrals", help="closed forms vs quadrature oracle")
    vi.add_argument("--cases", type=int, default=200)
    vi.add_argument("--seed", type=int, default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            _run_and_emit(_load_spec(args), args.out)
        elif args.command == "sweep":
            sweep = (args.param, _split_values(args.values))
            _run_and_emit(_load_spec(args, sweep=sweep), args.out)
        elif args.command == "baselines":
            schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
            _run_and_emit(_load_spec(args, schemes=schemes), args.out)
        elif args.command == "validate-integrals":
            from .oracles import run_integral_validation

            seed = _default_seed(args.seed) or 0
            reports = run_integral_validation(args.cases, seed)
            failed = [r for r in reports if not r.passed]
            worst = max(reports, key=lambda r: r.rel_error / r.tolerance)
            print(
                f"{len(reports) - len(failed)}/{len(reports)} integral cases passed; "
                f"worst {worst.case_id}: rel err {worst.rel_error:.3e} (tol {worst.tolerance:.0e})"
            )
            for r in failed:
                print(f"FAIL {r.case_id}: {r.main_value!r} vs {r.oracle_value!r} rel {r.rel_error:.3e}")
            if failed:
                return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
