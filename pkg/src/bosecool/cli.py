"""Command line front end: ``bosecool <command> [--config F] [--out DIR] [--set k=v ...]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .coarse_dynamics import coarse_trajectory_table, full_trajectory_table, stationary_json
from .experiments import (ConfigError, RunConfig, load_config, run_check_algebra, run_coarse,
                          run_compare, run_evolve, run_rates, run_sweep, run_vacua, write_sweep,
                          write_table)
from .fock_basis import BasisTooLarge
from .liouville import NumericalFailure
from .tables import write_csv, write_json
from .vacua import LadderError, RankAmbiguityError, StructuralError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 1, 2, 3
COMMANDS = ("check-algebra", "vacua", "rates", "evolve", "coarse", "compare", "sweep")


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")


def _cmd_check_algebra(cfg: RunConfig, out: Path) -> int:
    rep = run_check_algebra(cfg)
    write_json(out / "algebra.json", rep)
    _emit(rep)
    return EXIT_OK if rep["ok"] else EXIT_INVARIANT


def _cmd_vacua(cfg: RunConfig, out: Path) -> int:
    table = run_vacua(cfg)
    write_json(out / "vacua.json", table)
    _emit({"N": table["N"], "L_max": table["L_max"], "dim": table["dim"],
           "n_counts": [c["n"] for c in table["counts"].values()],
           "m_counts": [c["m"] for c in table["counts"].values()],
           "labels": [f"{v['l']}.{v['s']}.{v['v']}" for v in table["vacua"]],
           "explicit_vacuum_checks": table["explicit_vacuum_checks"]})
    return EXIT_OK


def _cmd_rates(cfg: RunConfig, out: Path) -> int:
    rates = run_rates(cfg)
    write_json(out / "rates.json", rates)
    _emit(rates)
    return EXIT_OK


def _write_full(res, cfg, out, name="trajectory"):
    header, rows = full_trajectory_table(res["trajectory"], res["setup"].projector)
    write_table(out / name, header, rows, cfg.format)


def _numerical_status(summary, cfg) -> int:
    if summary["status"] == "positivity" and "L11" not in cfg.terms:
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_evolve(cfg: RunConfig, out: Path) -> int:
    res = run_evolve(cfg)
    _write_full(res, cfg, out)
    write_json(out / "summary.json", res["summary"])
    _emit(res["summary"])
    return _numerical_status(res["summary"], cfg)


def _cmd_coarse(cfg: RunConfig, out: Path) -> int:
    res = run_coarse(cfg)
    header, rows = coarse_trajectory_table(res["trajectory"])
    write_table(out / "coarse_trajectory", header, rows, cfg.format)
    write_json(out / "stationary.json", stationary_json(res["setup"].model, res["stationary"]))
    write_json(out / "summary.json", res["summary"])
    _emit(res["summary"])
    return EXIT_OK


def _cmd_compare(cfg: RunConfig, out: Path) -> int:
    res = run_compare(cfg)
    _write_full(res, cfg, out)
    header, rows = coarse_trajectory_table(res["coarse"])
    write_table(out / "coarse_trajectory", header, rows, cfg.format)
    labels = res["setup"].model.labels
    dev = res["deviation"]
    header = ["t", "max_abs_dn"] + [f"dn_{w}" for w in labels]
    rows = [[t, d.max()] + list(d) for t, d in zip(res["trajectory"].times, dev)]
    write_table(out / "deviation", header, rows, cfg.format)
    s = res["summary"]
    write_json(out / "summary.json", s)
    _emit(s)
    code = _numerical_status(s, cfg)
    if code == EXIT_OK and s["max_deviation"] >= cfg.compare_tol:
        code = EXIT_INVARIANT
    return code


def _cmd_sweep(cfg: RunConfig, out: Path) -> int:
    rows = run_sweep(cfg)
    write_sweep(rows, out / "sweep.csv")
    _emit({"points": len(rows), "failed": sum(r["status"] != "ok" for r in rows),
           "output": str(out / "sweep.csv")})
    return EXIT_OK


HANDLERS = {
    "check-algebra": _cmd_check_algebra,
    "vacua": _cmd_vacua,
    "rates": _cmd_rates,
    "evolve": _cmd_evolve,
    "coarse": _cmd_coarse,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosecool", description="Cooling dynamics of trapped ideal bosons.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON config file")
        s.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field; VALUE is parsed as JSON when possible")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        out = args.out if args.out is not None else Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out)
    except (ConfigError, BasisTooLarge) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        traj = exc.trajectory
        if traj is not None and args.command in ("evolve", "compare"):
            write_json((args.out or Path(cfg.output_dir)) / "summary.json",
                       {"status": "failed", "message": str(exc), "t_reached": float(traj.times[-1]),
                        "max_trace_drift": float(traj.trace_drift.max()),
                        "max_leak_top2": float(traj.leak_top2.max())})
        return EXIT_NUMERICAL
    except (StructuralError, RankAmbiguityError, LadderError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
