"""Command line entry point: ``strategic-bandits <subcommand> --config PATH``.

Every subcommand writes CSV (to ``--out``, the config's ``out`` key, or
stdout) and exits 0 exactly when all of its checks pass.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..caos import CaosContext
from ..engine import DeviationSpec, a_profile, caos_profile, deviation_profile, run_episode
from ..verify import (
    Bench,
    MicroConfig,
    all_passed,
    property_report,
    regret_summary,
    verify_nash,
    verify_oer_fixed_point,
    verify_regret_domination,
    verify_subgame,
    victim_scenario,
)
from . import io
from .config import ConfigError, ExperimentConfig, load_config
from .montecarlo import fit_records, group_by, mean_regret, regret_max_dominates, run_regret_experiment

COMMANDS = ("verify-oer", "verify-nash", "verify-subgame", "simulate", "regret", "fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strategic-bandits", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH", help="output CSV ('-' for stdout)")
        p.add_argument("--seed-base", type=int, default=0, metavar="N", help="offset added to every seed")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for Monte Carlo")
        p.add_argument("--exact", action="store_true", help="rational arithmetic")
        if name == "fit":
            p.add_argument("--input", metavar="PATH", help="fit an existing regret CSV instead of simulating")
    return parser


def _micro(cfg: ExperimentConfig, exact: bool) -> MicroConfig:
    return MicroConfig(cfg.name, cfg.prior_rows, cfg.T, cfg.m, cfg.algorithm, exact, cfg.variant, cfg.node_budget)


def _summary(reports) -> None:
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports)} checks, {len(failed)} failed", file=sys.stderr)
    for r in failed:
        print(f"FAIL {r.claim_id} margin={r.margin_text()} {r.detail} {r.counterexample or ''}".rstrip(),
              file=sys.stderr)


def _emit_reports(reports, out: Optional[str]) -> int:
    io.write_text(io.render_csv(io.REPORT_HEADER, io.report_rows(reports)), out)
    _summary(reports)
    return 0 if all_passed(reports) else 1


def cmd_verify_oer(cfg, args, out) -> int:
    bench = Bench(_micro(cfg, cfg.exact), sp=cfg.sp)
    reports = verify_oer_fixed_point(bench, sp=cfg.sp)
    if cfg.algorithm == "VICTIM":
        reports += victim_scenario(bench)
    else:
        reports += verify_regret_domination(bench)
    reports.append(property_report(bench))
    return _emit_reports(reports, out)


def cmd_verify_nash(cfg, args, out) -> int:
    bench = Bench(_micro(cfg, cfg.exact), sp=cfg.sp)
    reports = verify_nash(bench, sp=cfg.sp, exhaustive=cfg.exhaustive)
    reports.append(property_report(bench))
    return _emit_reports(reports, out)


def cmd_verify_subgame(cfg, args, out) -> int:
    bench = Bench(_micro(cfg, cfg.exact), sp=True)
    reports = verify_subgame(bench)
    reports.append(property_report(bench))
    return _emit_reports(reports, out)


def _trace_paths(out: Optional[str], seed: int, many: bool):
    if out is None or out == "-":
        return out, None
    p = Path(out)
    if many:
        p = p.with_name(f"{p.stem}-seed{seed}{p.suffix}")
    return str(p), str(p.with_suffix(".steps.csv"))


def cmd_simulate(cfg, args, out) -> int:
    """Sampled CAOS episodes with message traces and per-step membership."""
    bench = Bench(_micro(cfg, cfg.exact), sp=cfg.sp, check_properties=False)
    ctx: CaosContext = bench.ctx
    if cfg.deviation:
        kind, agent, trigger = cfg.deviation
        profile = deviation_profile(DeviationSpec(kind, agent, trigger), ctx)
    else:
        profile = caos_profile(ctx)
    failures = []
    seeds = [args.seed_base + s for s in cfg.seeds]
    for seed in seeds:
        hist = run_episode(profile, bench.prior, cfg.T, seed)
        records = [ctx.replay(v).records for v in hist.views]
        trace_out, steps_out = _trace_paths(out, seed, len(seeds) > 1)
        io.write_text(io.render_csv(io.TRACE_HEADER, io.trace_rows(hist)), trace_out)
        if steps_out:
            io.write_text(io.render_csv(io.STEP_HEADER, io.step_rows(hist, records)), steps_out)
        if cfg.deviation:
            continue
        for step in hist.steps:
            if step.rejected:
                failures.append(f"seed {seed} t={step.t}: rejected forwards in a compliant run")
        for s in range(cfg.T):
            views = {rec[s].active for rec in records}
            if len(views) > 1:
                failures.append(f"seed {seed} t={s + 1}: agents disagree on the active set")
            active = records[0][s].active
            rec = records[0][s].recommendation
            if active and rec is not None:
                played = [hist.steps[s].actions[i] for i in sorted(active)]
                if bench.solver.algorithm.symmetric and len(set(played)) > 1:
                    failures.append(f"seed {seed} t={s + 1}: active agents of a symmetric algorithm split")
    print(f"{len(seeds)} episodes, {len(failures)} failed checks", file=sys.stderr)
    for f in failures:
        print("FAIL", f, file=sys.stderr)
    return 0 if not failures else 1


def _exact_regret(cfg) -> tuple:
    """Compliant-mode regret rows from the exact evaluator, with the duality identity checked."""
    bench = Bench(_micro(cfg, True), check_properties=False)
    summ = regret_summary(bench, a_profile(bench.ctx))
    rows = []
    ok = True
    vmin = summ.baseline - summ.regret_max
    for i in range(cfg.m):
        rows.append((0, i, cfg.K, cfg.m, cfg.T, cfg.algorithm, summ.regret[i], vmin))
        ok &= summ.baseline - summ.value[i] == summ.regret[i]
        ok &= summ.regret_max >= summ.regret[i]
    return rows, ok


def cmd_regret(cfg, args, out) -> int:
    meta = {"compliant_mode": True, "config_digest": cfg.digest, "seed_base": args.seed_base,
            "profile": "all agents play the base algorithm with full sharing; no OER is computed"}
    if cfg.exact:
        rows, ok = _exact_regret(cfg)
        meta["arithmetic"] = "exact"
    else:
        records = run_regret_experiment(cfg, jobs=args.jobs, seed_base=args.seed_base)
        rows = io.regret_rows(records)
        ok = regret_max_dominates(records)
        meta["arithmetic"] = "float"
        meta["seeds"] = len(cfg.seeds)
    io.write_text(io.render_csv(io.REGRET_HEADER, rows), out)
    io.write_sidecar(out, meta)
    print(f"{len(rows)} rows, checks {'pass' if ok else 'fail'}", file=sys.stderr)
    return 0 if ok else 1


def cmd_fit(cfg, args, out) -> int:
    if not cfg.sweep:
        raise ConfigError("sweep", "fit needs a swept variable")
    records = io.read_regret_csv(args.input) if args.input else run_regret_experiment(
        cfg, jobs=args.jobs, seed_base=args.seed_base)
    groups = group_by(records, cfg.sweep)
    rows = [(x, len({r.run_id for r in g}), mean_regret(g)) for x, g in groups.items()]
    io.write_text(io.render_csv((cfg.sweep, "runs", "mean_regret"), rows), out)
    ok = True
    if len(groups) >= 2:
        fit = fit_records(records, cfg.sweep)
        print(f"slope vs {cfg.sweep}: {fit.slope!r}", file=sys.stderr)
        if cfg.slope_range:
            lo, hi = cfg.slope_range
            ok &= lo <= fit.slope <= hi
            print(f"slope band [{lo}, {hi}]: {'pass' if lo <= fit.slope <= hi else 'fail'}", file=sys.stderr)
    if cfg.ratio_range:
        lo, hi = cfg.ratio_range
        ratio = rows[0][2] / rows[-1][2] if rows[-1][2] else float("inf")
        ok &= lo <= ratio <= hi
        print(f"ratio first/last {ratio!r} band [{lo}, {hi}]: {'pass' if lo <= ratio <= hi else 'fail'}",
              file=sys.stderr)
    return 0 if ok else 1


HANDLERS = {
    "verify-oer": cmd_verify_oer,
    "verify-nash": cmd_verify_nash,
    "verify-subgame": cmd_verify_subgame,
    "simulate": cmd_simulate,
    "regret": cmd_regret,
    "fit": cmd_fit,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, "regret" if args.command == "fit" else args.command, args.exact)
        out = args.out if args.out is not None else cfg.out
        return HANDLERS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
