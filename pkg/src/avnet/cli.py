"""Command-line entry point: ``avnet {generate,solve,sweep,verify,plotdata}``.

Exit codes: 0 success, 1 invalid input, 2 only infeasible results,
3 an oracle check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, load_config
from .scenario import GenerationError, Scenario, generate_case_study

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(p, density=False, seed=False):
    p.add_argument("--config", help="JSON config (default: $AVNET_CONFIG, then built-in)")
    p.add_argument("--grid-step", type=float, help="override the slicing grid step")
    if density:
        p.add_argument("--density", type=float, help="AVs per metre")
    if seed:
        p.add_argument("--seed", type=int, help="scenario seed")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="avnet", description="Bandwidth slicing and MEC placement for vehicular networks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write one scenario as JSON")
    _add_common(p, density=True, seed=True)
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("solve", help="solve one scenario and write solution JSONs")
    _add_common(p, density=True, seed=True)
    p.add_argument("--scenario", help="scenario JSON (default: generate from --density/--seed)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="run the seeded density sweep")
    _add_common(p)
    p.add_argument("--density", type=float, action="append", help="restrict to this density (repeatable)")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--replications", type=int, help="override the replication count")
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("verify", help="compare the solvers with brute-force oracles")
    p.add_argument("--size", choices=("tiny", "full"), default="tiny")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plotdata", help="aggregate a sweep CSV into per-figure CSVs")
    p.add_argument("sweep_csv")
    p.add_argument("--out", required=True, help="output directory")
    return ap


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if getattr(args, "grid_step", None) is not None:
        cfg = cfg.with_solver(grid_step=args.grid_step)
        cfg.validate()
    return cfg


def _scenario(args, cfg) -> Scenario:
    if getattr(args, "scenario", None):
        p = Path(args.scenario)
        if not p.is_file():
            raise ConfigError(f"scenario file not found: {p}")
        return Scenario.from_json(p.read_text())
    if args.density is None:
        raise ConfigError("--density is required")
    return generate_case_study(args.density, 0 if args.seed is None else args.seed, cfg)


def cmd_generate(args) -> int:
    cfg = _config(args)
    text = _scenario(args, cfg).to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    from .mec import joint_solve
    from .slicing import home_mec_members, solve_max_sinr

    cfg = _config(args)
    s = _scenario(args, cfg)
    res = joint_solve(s, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    members = home_mec_members(s, cfg.solver.d_min_m)
    for mid, sol in sorted(res.slicing.items()):
        (out / f"slicing_{mid}.json").write_text(sol.to_json() + "\n")
        base = solve_max_sinr(s, s.mec(mid), settings=cfg.solver, av_ids=members[mid])
        (out / f"baseline_{mid}.json").write_text(base.to_json() + "\n")
    (out / "assignment.json").write_text(res.assignment.to_json() + "\n")
    summary = {"converged": res.converged, "iterations": res.iterations, "feasible": res.feasible,
               "slicing_utility": res.slicing_utility, "mec_utility": res.assignment.utility,
               "total_utility": res.total_utility}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_sweep(args) -> int:
    from dataclasses import replace

    from .harness import run_sweep

    cfg = _config(args)
    kw = {}
    if args.density:
        kw["densities"] = tuple(args.density)
    if args.seed is not None:
        kw["base_seed"] = args.seed
    if args.replications is not None:
        kw["replications"] = args.replications
    if kw:
        cfg = replace(cfg, **kw)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    records = run_sweep(cfg, args.out, jobs=args.jobs)
    n_ok = sum(r.feasible for r in records)
    print(f"{len(records)} rows, {n_ok} feasible -> {args.out}")
    if records and n_ok == 0:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracles import run_verification

    checks = run_verification(args.size, args.seed)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def cmd_plotdata(args) -> int:
    from .harness import plotdata

    p = Path(args.sweep_csv)
    if not p.is_file():
        raise ConfigError(f"sweep CSV not found: {p}")
    for f in plotdata(p, args.out):
        print(f)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "sweep": cmd_sweep,
            "verify": cmd_verify, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, GenerationError, ValueError, OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        print(f"avnet: error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
