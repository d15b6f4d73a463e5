"""Command-line entry point: ``opencarnot validate|run|cycle|loop``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Sequence

from . import paths as P
from .config import SUITES, ExperimentConfig, load_config
from .cycles import carnot_ratios, carnot_residual, run_cycle, virtual_work
from .errors import ConfigError, ThermoError
from .harness import (
    Runner,
    convergence_csv,
    exit_code,
    to_csv,
    to_jsonl,
    to_table,
    write_reports,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opencarnot",
                                 description="Open-system Carnot cycle simulator and checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse and validate a config file")
    v.add_argument("config")

    r = sub.add_parser("run", help="run a suite and emit residual reports")
    r.add_argument("config")
    r.add_argument("--suite", default="all",
                   help=f"built-in ({', '.join(SUITES)}) or a suite named in the config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="directory for report.csv/.jsonl and convergence.csv")
    r.add_argument("--format", choices=("csv", "jsonl", "table"), default="table",
                   help="format printed to stdout")

    c = sub.add_parser("cycle", help="integrate one configured cycle and print its ledger")
    c.add_argument("config")
    c.add_argument("--id", required=True)

    lp = sub.add_parser("loop", help="loop functionals, optionally with staircase refinement")
    lp.add_argument("config")
    lp.add_argument("--id", required=True)
    lp.add_argument("--refine", default=None, help="comma-separated staircase sizes, e.g. 8,16,32")
    return ap


def _cmd_validate(cfg: ExperimentConfig) -> int:
    runner = Runner(cfg)
    print(f"ok: {cfg.source}")
    print(f"  species: {', '.join(sp.id for sp in cfg.species)}")
    print(f"  standard state: T0={cfg.standard_state.T0:g} K, p0={cfg.standard_state.p0:g} Pa")
    print(f"  seed={cfg.seed} wss_mode={cfg.wss_mode} builtin_experiments={cfg.builtin_experiments}")
    print(f"  cycles: {len(runner.cycle_specs)}  loops: {len(runner.loops)}  "
          f"staircases: {len(runner.staircases)}")
    if cfg.suites:
        print(f"  custom suites: {', '.join(sorted(cfg.suites))}")
    return EXIT_OK


def _cmd_run(cfg: ExperimentConfig, args) -> int:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    runner = Runner(cfg)
    rows = runner.run(args.suite)
    for msg in runner.errors:
        print(f"error: {msg}", file=sys.stderr)
    if args.out:
        write_reports(args.out, rows, runner.convergence)
    emit = {"csv": to_csv, "jsonl": to_jsonl, "table": to_table}[args.format]
    sys.stdout.write(emit(rows))
    return exit_code(rows)


def _cmd_cycle(cfg: ExperimentConfig, args) -> int:
    runner = Runner(cfg)
    specs = {s.id: s for s in runner.cycle_specs}
    if args.id not in specs:
        raise ConfigError(f"unknown cycle id {args.id!r}")
    spec = specs[args.id]
    L = run_cycle(spec, cfg.species, cfg.standard_state, wss_mode=cfg.wss_mode,
                  closure_rtol=cfg.tolerances["closure"])
    print(f"cycle {spec.id} ({L.kind}), T1={L.T1:g} K, T2={L.T2:g} K")
    width = max(len(k) for k in L.terms)
    for k, v in L.terms.items():
        print(f"  {k:<{width}}  {v: .10e}")
    q12, t12 = carnot_ratios(L)
    vw = virtual_work(L)
    for name, val in (("W_tot", L.W_tot), ("Q1_tot", L.Q1_tot), ("Q2_tot", L.Q2_tot),
                      ("dU_conv", L.dU_conv), ("E_supply", L.E_supply),
                      ("carnot_residual", carnot_residual(L)), ("Q1/Q2", q12), ("T1/T2", t12),
                      ("W_vir", vw.W_vir), ("virtual_work_residual", vw.residual),
                      ("first_law_residual", L.first_law_residual),
                      ("closure_gap", L.closure_gap)):
        print(f"{name:>22} = {val: .17g}")
    return EXIT_OK


def _cmd_loop(cfg: ExperimentConfig, args) -> int:
    runner = Runner(cfg)
    loops = {lp.id: lp for lp in runner.loops}
    if args.id not in loops:
        raise ConfigError(f"unknown loop id {args.id!r}")
    loop = loops[args.id]
    F = P.loop_functionals(loop, cfg.species, cfg.standard_state)
    for name in ("I_tot", "I_dia", "I_conv", "I_gd", "decomposition_gap", "product_gap",
                 "abs_tot", "quad_error", "bound"):
        print(f"{name:>18} = {getattr(F, name): .17g}")
    if args.refine:
        try:
            Ns = [int(x) for x in args.refine.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"--refine expects comma-separated integers, got {args.refine!r}")
        if not isinstance(loop, P.FourierLoop):
            raise ConfigError("staircase refinement needs a fourier loop")
        _, rows = P.staircase_refine(loop, Ns, cfg.species, cfg.standard_state, F)
        sys.stdout.write(convergence_csv([(loop.id, r) for r in rows]))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            return _cmd_validate(cfg)
        if args.command == "run":
            return _cmd_run(cfg, args)
        if args.command == "cycle":
            return _cmd_cycle(cfg, args)
        return _cmd_loop(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ThermoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
