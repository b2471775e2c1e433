"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
Each criterion is computed once and cached, so criterion 4 can inspect the
solvers built by criteria 1 to 3. Bands and time limits are fixed below and
never derived from the results.
"""

import subprocess
import sys
import tempfile
import time
from functools import lru_cache
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(Path(__file__).parent))

from conftest import ASYM_2_ROWS, MICRO_1_ROWS, THREE_POINT_ROWS  # noqa: E402

from strategic_bandits.engine import DEVIATION_KINDS  # noqa: E402
from strategic_bandits.harness.config import load_config  # noqa: E402
from strategic_bandits.harness.montecarlo import (  # noqa: E402
    fit_records,
    group_by,
    mean_regret,
    regret_max_dominates,
    run_regret_experiment,
)
from strategic_bandits.verify import (  # noqa: E402
    Bench,
    MicroConfig,
    property_report,
    verify_nash,
    verify_nash_exhaustive,
    verify_oer_fixed_point,
    verify_regret_domination,
    verify_subgame,
    victim_scenario,
)

FLOAT_TOL = 1e-9
FIXED_POINT_SECONDS = 60
NASH_SECONDS = 600
SWEEP_SECONDS = 300

# Sweep bands. Each mean regret is an average over 100-200 runs, so its
# relative standard error is a few percent; the bands are several times wider.
UCB_RATIO = (3.0, 5.3)  # m=1 over m=4, K=5, T=2000, gap 0.2, 200 seeds
TS_SLOPE = (-0.7, -0.3)  # vs m in {1,2,4,8}, K=5, T=2000
FAEE_SLOPE = (0.55, 0.8)  # vs T in {2k,4k,8k,16k}
SE_SLOPE = (-1.3, -0.7)  # vs m in {2,4,8,16}, K=4

BENCHES = []  # every exact bench built by criteria 1-3, for criterion 4


def bench(name, rows, T, m, algorithm="MAUCB", sp=False, exact=True):
    b = Bench(MicroConfig(name, rows, T, m, algorithm, exact), sp=sp)
    BENCHES.append(b)
    return b


def line(number, passed, text):
    msg = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}"
    print(msg, flush=True)
    return passed, msg


def failures(reports):
    return [r for r in reports if not r.passed]


# -- 1 -------------------------------------------------------------------------


@lru_cache(None)
def criterion_1():
    cases = [
        ("micro1-T3", MICRO_1_ROWS, 3, 2, "MAUCB"),
        ("micro1-T3", MICRO_1_ROWS, 3, 2, "MASE"),
        ("three-point", THREE_POINT_ROWS, 3, 3, "MAUCB"),
        ("three-point", THREE_POINT_ROWS, 2, 2, "MASE"),
        ("asym2-T2", ASYM_2_ROWS, 2, 2, "MAUCB"),
    ]
    bad, slow, parts = [], [], []
    for name, rows, T, m, alg in cases:
        for exact in (True, False):
            t0 = time.perf_counter()
            reports = verify_oer_fixed_point(bench(name, rows, T, m, alg, exact=exact))
            dt = time.perf_counter() - t0
            root = reports[0]
            ok = root.margin == 0 if exact else abs(root.margin) <= FLOAT_TOL
            if not ok or failures(reports):
                bad.append(f"{name}/{alg}/{'exact' if exact else 'float'}")
            if dt > FIXED_POINT_SECONDS:
                slow.append(f"{name}/{alg} {dt:.0f}s")
            parts.append(dt)
    passed = not bad and not slow
    return line(1, passed, f"OER root = all-CAOS value on {len(cases)} configs x 2 arithmetics"
                f" (slowest {max(parts):.1f}s){'; bad: ' + ', '.join(bad + slow) if not passed else ''}")


# -- 2 -------------------------------------------------------------------------


@lru_cache(None)
def criterion_2():
    t0 = time.perf_counter()
    configs = [
        ("micro1-T3", MICRO_1_ROWS, 3, 2, "MAUCB"),
        ("three-point", THREE_POINT_ROWS, 3, 2, "MASE"),
        ("three-point", THREE_POINT_ROWS, 3, 3, "MAUCB"),
        ("asym2-T2", ASYM_2_ROWS, 2, 2, "MAUCB"),
    ]
    reports = []
    for name, rows, T, m, alg in configs:
        b = bench(name, rows, T, m, alg, sp=True)
        reports += verify_nash(b, sp=True)
    kinds = {r.claim_id.split(":")[1].split("@")[0] for r in reports if "@" in r.claim_id}
    exhaustive = []
    for name, rows in (("micro1-T2", MICRO_1_ROWS), ("asym2-T2", ASYM_2_ROWS)):
        for sp in (False, True):
            exhaustive += verify_nash_exhaustive(bench(name, rows, 2, 2, sp=sp))
    dt = time.perf_counter() - t0
    bad = failures(reports + exhaustive)
    passed = not bad and kinds == set(DEVIATION_KINDS) and dt <= NASH_SECONDS
    worst = min(r.margin for r in reports + exhaustive)
    return line(2, passed, f"{len(reports)} library checks ({len(kinds)} kinds, {len(configs)} configs) and "
                f"{len(exhaustive)} exhaustive searches, {len(bad)} failed, min margin {float(worst):.6g}, "
                f"{dt:.0f}s")


# -- 3 -------------------------------------------------------------------------


@lru_cache(None)
def criterion_3():
    t0 = time.perf_counter()
    reports = []
    for name, rows in (("micro1-T3", MICRO_1_ROWS), ("three-point", THREE_POINT_ROWS)):
        reports += verify_subgame(bench(name, rows, 3, 2, sp=True))
    psi = [r for r in reports if r.claim_id.startswith("psi-detect:")]
    departures = sum(int(r.detail.split()[0]) for r in psi)
    flags = [r for r in reports if r.claim_id.startswith("subgame:") and r.claim_id.endswith(("|deny-flag",
                                                                                              "|false-flag"))]
    absorbing = [r for r in reports if r.claim_id.startswith("collapse-absorbing:")]
    bad = failures(reports)
    passed = bool(not bad and departures > 0 and psi and flags and absorbing)
    return line(3, passed, f"{len(psi)} psi checks over {departures} departing histories, {len(flags)} flag-lie "
                f"continuations, {len(absorbing)} collapse checks, {len(reports)} total, {len(bad)} failed, "
                f"{time.perf_counter() - t0:.0f}s")


# -- 4 -------------------------------------------------------------------------


@lru_cache(None)
def criterion_4():
    criterion_1(), criterion_2(), criterion_3()
    reps = [property_report(b) for b in BENCHES]
    nodes = sum(b.solver.nodes_checked for b in BENCHES)
    violations = sum(len(b.solver.violations) for b in BENCHES)
    passed = violations == 0 and nodes > 0 and all(r.passed for r in reps)
    return line(4, passed, f"OER node properties on {nodes} nodes over {len(BENCHES)} solvers, "
                f"{violations} violations")


# -- 5 -------------------------------------------------------------------------


@lru_cache(None)
def criterion_5():
    reports = []
    for name, rows, T, m, alg in (
        ("micro1-T3", MICRO_1_ROWS, 3, 2, "MAUCB"),
        ("micro1-T3", MICRO_1_ROWS, 3, 2, "MATS"),
        ("three-point", THREE_POINT_ROWS, 3, 3, "MAUCB"),
        ("three-point", THREE_POINT_ROWS, 3, 2, "MASE"),
        ("asym2-T3", ASYM_2_ROWS, 3, 2, "VICTIM"),
    ):
        reports += verify_regret_domination(MicroConfig(name, rows, T, m, alg))
    victim = victim_scenario(MicroConfig("asym2", ASYM_2_ROWS, 2, 2))
    unravel = next(r for r in victim if r.claim_id == "victim:stop-set-empty")
    kept = next(r for r in victim if r.claim_id == "victim:symmetric-no-unravel")
    bad = failures(reports + victim)
    passed = not bad and unravel.passed and "helps=True" in kept.detail
    return line(5, passed, f"{len(reports)} domination checks, victim stops everyone at t=1 "
                f"({unravel.detail}) while MAUCB keeps the group ({kept.detail}), {len(bad)} failed")


# -- 6 -------------------------------------------------------------------------

SWEEP_RECORDS = {}


def _sweep(name, expected_points):
    cfg = load_config(ROOT / "configs" / f"{name}.cfg")
    assert tuple(getattr(p, cfg.sweep) for p in cfg.points()) == expected_points
    t0 = time.perf_counter()
    records = run_regret_experiment(cfg)
    SWEEP_RECORDS[name] = records
    return cfg, records, time.perf_counter() - t0


@lru_cache(None)
def criterion_6a():
    cfg, recs, dt = _sweep("ucb_sweep", (1, 4))
    assert cfg.K == 5 and cfg.T == 2000 and len(cfg.seeds) == 200
    means = [mean_regret(g) for g in group_by(recs, "m").values()]
    ratio = means[0] / means[1]
    lo, hi = UCB_RATIO
    passed = lo <= ratio <= hi and dt <= SWEEP_SECONDS
    return line("6a", passed, f"MAUCB regret m=1 {means[0]:.2f} / m=4 {means[1]:.2f} = {ratio:.3f}, "
                f"band [{lo}, {hi}], {dt:.1f}s")


def _slope_criterion(label, name, points, band, algorithm):
    cfg, recs, dt = _sweep(name, points)
    fit = fit_records(recs, cfg.sweep)
    lo, hi = band
    passed = lo <= fit.slope <= hi and dt <= SWEEP_SECONDS
    means = ", ".join(f"{x:g}:{y:.1f}" for x, y in zip(fit.xs, fit.means))
    return line(label, passed, f"{algorithm} log-log slope vs {cfg.sweep} {fit.slope:.3f}, band [{lo}, {hi}] "
                f"({means}), {dt:.1f}s")


@lru_cache(None)
def criterion_6b():
    return _slope_criterion("6b", "ts_sweep", (1, 2, 4, 8), TS_SLOPE, "MATS")


@lru_cache(None)
def criterion_6c():
    return _slope_criterion("6c", "faee_sweep", (2000, 4000, 8000, 16000), FAEE_SLOPE, "MAFAEE")


@lru_cache(None)
def criterion_6d():
    return _slope_criterion("6d", "se_sweep", (2, 4, 8, 16), SE_SLOPE, "MASE")


# -- 7 -------------------------------------------------------------------------


@lru_cache(None)
def criterion_7():
    for c in (criterion_6a, criterion_6b, criterion_6c, criterion_6d):
        c()
    sets = list(SWEEP_RECORDS.values())
    dominated = all(regret_max_dominates(r) for r in sets)
    rows = sum(len(r) for r in sets)
    exact = []
    for name, rows_, T, m, alg in (
        ("micro1-T3", MICRO_1_ROWS, 3, 2, "MAUCB"),
        ("three-point", THREE_POINT_ROWS, 3, 3, "MAUCB"),
        ("three-point", THREE_POINT_ROWS, 3, 2, "MASE"),
        ("asym2-T3", ASYM_2_ROWS, 3, 2, "VICTIM"),
    ):
        exact += [r for r in verify_regret_domination(MicroConfig(name, rows_, T, m, alg))
                  if r.claim_id.startswith(("duality:", "regret-max-bound:"))]
    duality_ok = all(r.passed and (r.margin == 0 or not r.claim_id.startswith("duality:")) for r in exact)
    passed = dominated and duality_ok
    return line(7, passed, f"Regret_max >= Regret_i on {len(sets)} Monte Carlo record sets ({rows} rows); "
                f"{len(exact)} exact duality and Regret_max checks, "
                f"{sum(not r.passed for r in exact)} failed")


# -- 8 -------------------------------------------------------------------------


def _cli(args):
    proc = subprocess.run([sys.executable, "-m", "strategic_bandits.harness.cli", *args],
                          capture_output=True, text=True)
    return proc.returncode


@lru_cache(None)
def criterion_8():
    runs = [
        ["regret", "--config", str(ROOT / "configs" / "se_sweep.cfg"), "--jobs", "1"],
        ["regret", "--config", str(ROOT / "configs" / "ts_sweep.cfg"), "--seed-base", "11", "--jobs", "2"],
        ["regret", "--exact", "--config", str(ROOT / "configs" / "three_point.cfg")],
        ["verify-nash", "--config", str(ROOT / "configs" / "micro1.cfg")],
        ["simulate", "--config", str(ROOT / "configs" / "simulate_micro1.cfg")],
    ]
    same, total = 0, 0
    with tempfile.TemporaryDirectory() as tmp:
        for k, args in enumerate(runs):
            outs = []
            for rep in range(2):
                d = Path(tmp) / f"{k}-{rep}"
                d.mkdir()
                _cli(args + ["--out", str(d / "out.csv")])
                outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
            total += 1
            same += outs[0] == outs[1] and bool(outs[0])
    return line(8, same == total, f"{same}/{total} CLI invocations byte-identical across two runs")


# -- pytest entry points -------------------------------------------------------

CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6a, criterion_6b, criterion_6c, criterion_6d, criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: c.__name__)
def test_criterion(criterion, capsys):
    with capsys.disabled():
        print()
        passed, msg = criterion()
    assert passed, msg


if __name__ == "__main__":
    results = [c()[0] for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
