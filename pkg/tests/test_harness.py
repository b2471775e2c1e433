import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategic_bandits.core import DiscretePrior
from strategic_bandits.harness import io
from strategic_bandits.harness.cli import main
from strategic_bandits.harness.config import ConfigError, gap_prior_rows, load_config, parse_config
from strategic_bandits.harness.montecarlo import (
    RegretRecord,
    fit_records,
    mean_regret,
    reference_run,
    regret_max_dominates,
    run_regret_experiment,
    scaling_fit,
    simulate_batch,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """
algorithm = MAUCB
instance = 0.6 0.4 0.4
m = 2
T = 50
seeds = 0..9
"""


# -- config ------------------------------------------------------------------


def test_parse_basic():
    cfg = parse_config(BASE)
    assert cfg.K == 3 and cfg.m == 2 and cfg.T == 50 and cfg.seeds == tuple(range(10))
    assert cfg.rows == (((0.6, 0.4, 0.4), 1.0),)


def test_seed_forms():
    assert parse_config(BASE.replace("0..9", "4")).seeds == (0, 1, 2, 3)
    assert parse_config(BASE.replace("0..9", "3 5 8")).seeds == (3, 5, 8)


@pytest.mark.parametrize("text,field", [
    (BASE + "m = 3\n", "m"),
    (BASE + "colour = red\n", "colour"),
    (BASE.replace("MAUCB", "EXP3"), "algorithm"),
    (BASE.replace("T = 50", "T = 0"), "T"),
    (BASE.replace("T = 50", "T = many"), "T"),
    (BASE.replace("seeds = 0..9", ""), "seeds"),
    (BASE.replace("0.6 0.4 0.4", "1.6 0.4 0.4"), "support"),
    (BASE + "support = 0.5 0.5 | 1\n", "support"),
    (BASE + "sweep = m\n", "sweep_values"),
    (BASE + "ratio_range = 5 3\n", "ratio_range"),
    ("m = 2\n", "support"),
    (BASE + "no equals sign\n", "line 7"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field


def test_support_rows_must_sum_to_one():
    text = "support = 0.9 0.1 | 0.5\nsupport = 0.1 0.9 | 0.4\nmode = verify-oer\n"
    with pytest.raises(ConfigError, match="sum to 1"):
        parse_config(text)


def test_verify_modes_need_no_seeds():
    cfg = parse_config(BASE.replace("seeds = 0..9", ""), mode="verify-oer")
    assert cfg.mode == "verify-oer" and cfg.seeds == ()


def test_exact_regret_needs_no_seeds():
    assert parse_config(BASE.replace("seeds = 0..9", ""), exact=True).exact


def test_missing_file():
    with pytest.raises(ConfigError, match="nowhere.cfg"):
        load_config("/nowhere/nowhere.cfg")


def test_gap_generator_rows():
    rows = gap_prior_rows(3, (0.1, 0.3), 0.5)
    assert len(rows) == 6
    assert sum(w for _, w in rows) == 1
    assert rows[0][0] == (0.6, 0.5, 0.5) and rows[5][0] == (0.5, 0.5, 0.8)


def test_digest_ignores_output_path():
    a = parse_config(BASE)
    assert a.digest == parse_config(BASE + "out = x.csv\n").digest
    assert a.digest != parse_config(BASE.replace("T = 50", "T = 51")).digest


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.cfg")):
        assert load_config(path, exact="exact = true" in path.read_text()).K >= 2


# -- Monte Carlo ---------------------------------------------------------------


@pytest.mark.parametrize("name", ["MAUCB", "MATS", "MAFAEE", "MASE"])
def test_batch_matches_reference(name):
    prior = DiscretePrior.from_rows((((0.7, 0.5, 0.3), 0.5), ((0.2, 0.6, 0.5), 0.5)), exact=False)
    seeds = list(range(6))
    regret, _, _, actions = simulate_batch(name, prior, 3, 60, seeds, return_actions=True)
    for k, seed in enumerate(seeds):
        ref, means = reference_run(name, prior, 3, 60, seed)
        assert np.array_equal(actions[k], ref)
        expected = (means.max() - means[ref]).sum(axis=0)
        assert np.allclose(regret[k], expected)


def test_single_arm_has_no_regret():
    prior = DiscretePrior.from_rows((((0.4,), 1.0),), exact=False)
    regret, _, worst = simulate_batch("MAUCB", prior, 2, 30, range(3))
    assert np.all(regret == 0) and np.all(worst == 0)


def test_equal_arms_have_no_regret():
    prior = DiscretePrior.from_rows((((0.5, 0.5, 0.5), 1.0),), exact=False)
    for name in ("MAUCB", "MASE", "MAFAEE", "MATS"):
        regret, _, _ = simulate_batch(name, prior, 2, 30, range(3))
        assert np.all(regret == 0)


def test_rows_are_deterministic_and_job_count_free():
    cfg = parse_config(BASE + "sweep = m\nsweep_values = 1 3\n")
    a = run_regret_experiment(cfg)
    b = run_regret_experiment(cfg, jobs=2, chunk=3)
    assert a == b
    assert io.render_csv(io.REGRET_HEADER, io.regret_rows(a)) == io.render_csv(io.REGRET_HEADER, io.regret_rows(b))
    assert [r.run_id for r in a] == sorted(r.run_id for r in a)


def test_seed_base_shifts_seeds():
    cfg = parse_config(BASE)
    assert {r.seed for r in run_regret_experiment(cfg, seed_base=100)} == set(range(100, 110))


def test_regret_max_dominates_on_asymmetric_algorithm():
    cfg = parse_config(BASE.replace("MAUCB", "MASE").replace("m = 2", "m = 3"))
    assert regret_max_dominates(run_regret_experiment(cfg))


def test_dominance_check_can_fail():
    rec = RegretRecord(0, 0, 2, 1, 10, "MAUCB", 2.0, 8.0, regret_max=1.0)
    assert not regret_max_dominates([rec])


def test_fit_constant_means_is_flat():
    fit = scaling_fit([1, 2, 4, 8], [3.0] * 4)
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_fit_recovers_power_law():
    xs = np.array([10, 100, 1000])
    assert scaling_fit(xs, 5 * xs ** 0.5).slope == pytest.approx(0.5)


def test_fit_degenerate_grid():
    with pytest.raises(ValueError, match="degenerate"):
        scaling_fit([5, 5], [1.0, 2.0])
    with pytest.raises(ValueError):
        scaling_fit([1, 2], [0.0, 1.0])


def test_fit_records_groups_by_variable():
    recs = [RegretRecord(r, 0, 2, m, 10, "MAUCB", float(m), 0.0) for r, m in enumerate([1, 1, 2, 2])]
    fit = fit_records(recs, "m")
    assert fit.xs == (1.0, 2.0) and fit.slope == pytest.approx(1.0)
    assert mean_regret(recs) == 1.5


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(1, 40), st.integers(0, 10**6))
def test_regret_is_bounded(m, T, seed):
    prior = DiscretePrior.from_rows((((0.8, 0.3, 0.5), 1.0),), exact=False)
    regret, min_sum, worst = simulate_batch("MAUCB", prior, m, T, [seed])
    assert np.all(regret >= 0) and np.all(regret <= 0.5 * T + 1e-9)
    assert np.all(worst >= regret.max(axis=1) - 1e-12)
    assert np.all(min_sum >= 0.3 * T - 1e-9)


# -- io ----------------------------------------------------------------------


def test_number_text():
    from fractions import Fraction
    assert io.number_text(Fraction(3, 4)) == "3/4"
    assert io.number_text(0.25) == "0.25"


def test_render_csv_uses_unix_newlines():
    assert io.render_csv(("a", "b"), [(1, 2)]) == "a,b\n1,2\n"


def test_regret_csv_round_trip(tmp_path):
    recs = run_regret_experiment(parse_config(BASE))
    path = tmp_path / "r.csv"
    io.write_text(io.render_csv(io.REGRET_HEADER, io.regret_rows(recs)), str(path))
    back = io.read_regret_csv(path)
    assert [(r.run_id, r.agent_id, r.regret_i) for r in back] == [(r.run_id, r.agent_id, r.regret_i) for r in recs]


# -- CLI ---------------------------------------------------------------------


def test_cli_verify_nash(tmp_path, capsys):
    out = tmp_path / "nash.csv"
    assert main(["verify-nash", "--config", str(CONFIGS / "micro1.cfg"), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == io.REPORT_HEADER
    assert len(rows) - 1 >= 8
    assert all(r[3] == "true" for r in rows[1:])


def test_cli_verify_oer(tmp_path):
    out = tmp_path / "oer.csv"
    assert main(["verify-oer", "--config", str(CONFIGS / "asym2.cfg"), "--out", str(out)]) == 0
    assert any(r.startswith("victim:") for r in out.read_text().splitlines())


def test_cli_regret_float_and_sidecar(tmp_path):
    cfg = tmp_path / "r.cfg"
    cfg.write_text(BASE)
    out = tmp_path / "r.csv"
    assert main(["regret", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(io.REGRET_HEADER)
    assert len(lines) == 1 + 10 * 2
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert meta["compliant_mode"] is True and meta["arithmetic"] == "float"


def test_cli_regret_exact(tmp_path):
    out = tmp_path / "x.csv"
    assert main(["regret", "--exact", "--config", str(CONFIGS / "micro1.cfg"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["regret_i"] for r in rows] == ["514/625", "514/625"]
    assert rows[0]["min_agent_reward_sum"] == "2347/1250"


def test_cli_regret_is_byte_identical(tmp_path):
    args = ["regret", "--config", str(CONFIGS / "ucb_sweep.cfg"), "--seed-base", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = tmp_path / "small.cfg"
    cfg.write_text((CONFIGS / "ucb_sweep.cfg").read_text().replace("T = 2000", "T = 100").replace("seeds = 200",
                                                                                                 "seeds = 5"))
    args[2] = str(cfg)
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b), "--jobs", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_cli_simulate_writes_traces(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["simulate", "--config", str(CONFIGS / "simulate_micro1.cfg"), "--out", str(out)]) == 0
    traces = sorted(p.name for p in tmp_path.iterdir())
    assert "trace-seed0.csv" in traces and "trace-seed0.steps.csv" in traces
    head = (tmp_path / "trace-seed0.steps.csv").read_text().splitlines()[0]
    assert head == ",".join(io.STEP_HEADER)


def test_cli_fit_from_csv(tmp_path, capsys):
    cfg = tmp_path / "f.cfg"
    cfg.write_text(BASE + "sweep = m\nsweep_values = 1 2\nratio_range = 0 100\n")
    data = tmp_path / "d.csv"
    main(["regret", "--config", str(cfg), "--out", str(data)])
    assert main(["fit", "--config", str(cfg), "--input", str(data), "--out", str(tmp_path / "fit.csv")]) == 0
    assert "ratio first/last" in capsys.readouterr().err


def test_cli_missing_config(capsys):
    assert main(["regret", "--config", "/does/not/exist.cfg"]) == 2
    assert "/does/not/exist.cfg" in capsys.readouterr().err


def test_cli_unknown_command():
    assert main(["dance", "--config", "x"]) == 2
