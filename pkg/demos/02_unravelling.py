"""
When collaboration unravels
===========================

With an asymmetric base algorithm, one agent may be asked to explore while
the other exploits. If the explorer would do better alone, it leaves, and
backward induction takes everyone else with it. The VICTIM algorithm is a
toy built to show this; MAUCB on the same prior keeps the group together.
"""

from strategic_bandits.verify import MicroConfig, victim_scenario

cfg = MicroConfig("asym2", (((0.1, 0.3), 0.5), ((0.7, 0.1), 0.5)), T=2, m=2)

for r in victim_scenario(cfg):
    print(f"{'ok ' if r.passed else 'BAD'} {r.claim_id:36s} margin={r.margin_text():>8s} {r.detail}")

# %%
# The same check on a prior where collaborating never pays (T=2, symmetric
# two-point prior): the stop set is empty for both algorithms, which is
# consistent but uninformative.
micro = MicroConfig("micro1", (((0.9, 0.1), 0.5), ((0.1, 0.9), 0.5)), T=2, m=2)
for r in victim_scenario(micro):
    if r.claim_id.startswith(("victim:stop", "victim:symmetric")):
        print(r.claim_id, r.detail)
