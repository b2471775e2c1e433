from fractions import Fraction as F

import pytest
from conftest import ASYM_2_ROWS, MICRO_1_ROWS, THREE_POINT_ROWS

import oracles
from strategic_bandits.verify import (
    MICRO_1,
    Bench,
    MicroConfig,
    all_passed,
    information_classes,
    property_report,
    regret_summary,
    verify_nash,
    verify_nash_exhaustive,
    verify_oer_fixed_point,
    verify_regret_domination,
    verify_subgame,
    victim_scenario,
)
from strategic_bandits.engine import DEVIATION_KINDS, a_profile, caos_profile


def by_id(reports):
    return {r.claim_id: r for r in reports}


@pytest.mark.parametrize("T,algorithm", [(2, "MAUCB"), (3, "MAUCB"), (3, "MATS"), (3, "MASE")])
def test_fixed_point_micro1(T, algorithm):
    reports = verify_oer_fixed_point(MicroConfig("m", MICRO_1_ROWS, T, 2, algorithm))
    assert all_passed(reports)
    assert all(r.margin == 0 for r in reports)


def test_fixed_point_in_float_mode():
    reports = verify_oer_fixed_point(MicroConfig("m", THREE_POINT_ROWS, 3, 2, exact=False))
    assert all_passed(reports)


def test_fixed_point_root_detail_names_the_oracle_value():
    root = by_id(verify_oer_fixed_point(MicroConfig("m", MICRO_1_ROWS, 3, 2)))["oer-fixed-point:root"]
    assert f"{float(oracles.group_oer(oracles.MICRO_1, 3, 2)[0]):.12g}" in root.detail


def test_nash_noop_is_zero_and_library_is_nonnegative():
    reports = verify_nash(MicroConfig("m", MICRO_1_ROWS, 3, 2), sp=True)
    ids = by_id(reports)
    assert ids["nash:none/agent0"].margin == 0 == ids["nash:none/agent1"].margin
    kinds = {r.claim_id.split(":")[1].split("@")[0] for r in reports if "@" in r.claim_id}
    assert kinds == set(DEVIATION_KINDS)
    assert all(r.margin >= 0 for r in reports)
    assert all_passed(reports)


def test_free_riding_strictly_loses_on_micro1():
    reports = verify_nash(MicroConfig("m", MICRO_1_ROWS, 3, 2), triggers=[1])
    margins = [r.margin for r in reports if "free-ride" in r.claim_id]
    assert margins and all(m > 0 for m in margins)


def test_exhaustive_search_on_micro1_t2():
    reports = verify_nash_exhaustive(MicroConfig("m", MICRO_1_ROWS, 2, 2))
    assert len(reports) == 2 and all_passed(reports)
    assert all("policies" in r.detail for r in reports)


def test_exhaustive_search_refuses_large_games():
    with pytest.raises(ValueError):
        verify_nash_exhaustive(MicroConfig("m", MICRO_1_ROWS, 3, 2))


def test_subgame_flag_lies_and_detection():
    reports = verify_subgame(MicroConfig("m", MICRO_1_ROWS, 3, 2), kinds=("wrong-arm", "deny-flag", "false-flag"),
                             triggers=[1])
    assert all_passed(reports)
    ids = by_id(reports)
    assert any(k.startswith("psi-detect:wrong-arm") for k in ids)
    assert not any(k.startswith("psi-detect:deny-flag") for k in ids)
    assert any(k.startswith("subgame:clean@1|false-flag") for k in ids)
    assert any(k.startswith("collapse-absorbing:false-flag") for k in ids)


def test_subgame_needs_sp_bench():
    with pytest.raises(ValueError):
        verify_subgame(Bench(MicroConfig("m", MICRO_1_ROWS, 2, 2), sp=False))


@pytest.mark.parametrize("rows,m", [(MICRO_1_ROWS, 2), (THREE_POINT_ROWS, 2), (ASYM_2_ROWS, 2)])
def test_regret_domination(rows, m):
    reports = verify_regret_domination(MicroConfig("m", rows, 3, m))
    assert all_passed(reports)
    assert any(r.claim_id.startswith("regret-max-symmetric") for r in reports)


def test_regret_max_is_the_worst_agent_for_asymmetric_a():
    bench = Bench(MicroConfig("m", THREE_POINT_ROWS, 3, 2, "MASE"))
    full = regret_summary(bench, a_profile(bench.ctx))
    assert all(full.regret_max >= r for r in full.regret)
    assert all_passed(verify_regret_domination(bench))


def test_exact_regret_micro1():
    bench = Bench(MicroConfig("m", MICRO_1_ROWS, 3, 2))
    caos = regret_summary(bench, caos_profile(bench.ctx))
    assert caos.baseline == F(27, 10)
    assert caos.regret == (caos.baseline - F("2.1976"),) * 2


def test_victim_unravels_on_asym2():
    reports = victim_scenario(MicroConfig("asym2", ASYM_2_ROWS, 2, 2))
    ids = by_id(reports)
    assert all_passed(reports)
    assert ids["victim:stop-set-empty"].margin == 0
    assert "helps=True" in ids["victim:symmetric-no-unravel"].detail


def test_victim_on_micro1_t2():
    assert all_passed(victim_scenario(MICRO_1))


def test_victim_single_agent():
    assert all_passed(victim_scenario(MicroConfig("solo", ASYM_2_ROWS, 2, 1)))


def test_properties_report_counts_nodes():
    bench = Bench(MicroConfig("m", THREE_POINT_ROWS, 3, 3))
    verify_oer_fixed_point(bench)
    rep = property_report(bench)
    assert rep.passed and bench.solver.nodes_checked > 0


def test_config_digest_is_stable_and_sensitive():
    a = MicroConfig("a", MICRO_1_ROWS, 3, 2)
    assert a.digest == MicroConfig("renamed", MICRO_1_ROWS, 3, 2).digest
    assert a.digest != MicroConfig("a", MICRO_1_ROWS, 2, 2).digest
    assert len(a.digest) == 16


def test_report_row_text():
    row = verify_oer_fixed_point(MicroConfig("m", MICRO_1_ROWS, 2, 2))[0].row()
    assert row["margin"] == "0/1" and row["pass"] == "true"


def test_information_classes_partition():
    items = [(1, type("H", (), {"views": ("a", "x")})()), (2, type("H", (), {"views": ("a", "y")})())]
    assert len(information_classes(items, 0)) == 1
    assert len(information_classes(items, 1)) == 2
