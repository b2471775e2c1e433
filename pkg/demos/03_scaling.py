"""
How regret scales with group size
=================================

Compliant-mode runs: every agent follows the base algorithm and shares
everything, which upper-bounds the regret of the collaborative protocol for
symmetric algorithms. Smaller versions of the shipped sweep configs keep
this under a minute.
"""

from pathlib import Path

from strategic_bandits.harness.config import load_config
from strategic_bandits.harness.montecarlo import fit_records, group_by, mean_regret, run_regret_experiment

configs = Path(__file__).resolve().parent.parent / "configs"

for name, seeds in (("ts_sweep", 40), ("se_sweep", 50), ("faee_sweep", 30)):
    cfg = load_config(configs / f"{name}.cfg").with_(seeds=tuple(range(seeds)))
    records = run_regret_experiment(cfg)
    fit = fit_records(records, cfg.sweep)
    print(f"{cfg.algorithm}: mean regret by {cfg.sweep}")
    for x, rows in group_by(records, cfg.sweep).items():
        print(f"  {cfg.sweep}={x:<6d} {mean_regret(rows):8.2f}")
    print(f"  log-log slope {fit.slope:+.3f} (acceptance band {cfg.slope_range})")

# %%
# MAUCB, m=1 against m=4. At T=2000 the confidence radius of the best arm is
# still comparable to the gap, so the ratio sits below its large-T value.
cfg = load_config(configs / "ucb_sweep.cfg")
for T in (2000, 8000):
    recs = run_regret_experiment(cfg.with_(T=T, seeds=tuple(range(50))))
    means = [mean_regret(g) for g in group_by(recs, "m").values()]
    print(f"MAUCB T={T}: m=1 {means[0]:.1f}, m=4 {means[1]:.1f}, ratio {means[0] / means[1]:.2f}")
