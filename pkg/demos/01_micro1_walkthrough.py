"""
Two agents, two arms, three steps
=================================

Each agent privately knows only the prior: one of the two arms pays with
probability 0.9, the other with 0.1, fifty-fifty. Alone, an agent has to
spend a pull finding out which. Together they can split that cost, provided
neither is tempted to free-ride.
"""

from strategic_bandits.core import DiscretePrior
from strategic_bandits.algos import make_algorithm, value_of_B
from strategic_bandits.oer import OerSolver, root_values
from strategic_bandits.caos import CaosContext
from strategic_bandits.engine import (
    DeviationSpec, b_profile, caos_profile, deviation_profile, expected_value, run_episode,
)

prior = DiscretePrior.from_rows((((0.9, 0.1), 0.5), ((0.1, 0.9), 0.5)))
T, m = 3, 2

# %%
# Playing alone: the Bayes-optimal single-agent value, computed exactly.
alone = value_of_B(prior.posterior(), 1, T)
print("alone      :", alone, "=", float(alone))

# %%
# The OER recursion decides, at every node, which subgroup keeps collaborating.
solver = OerSolver(prior, T, m, make_algorithm("MAUCB", prior.K, T, m, prior), check_properties=True)
ctx = CaosContext(solver)
print("OER root   :", root_values(solver))

# The all-compliant profile, evaluated by exhaustive expectation over the game tree,
# lands on exactly the same numbers.
together = expected_value(caos_profile(ctx), prior, T)
print("all comply :", together, "gain per agent", together[0] - alone)

# %%
# What if agent 1 free-rides from step 1? It is dropped from the group immediately.
for kind in ("free-ride", "withhold-reward", "early-stop"):
    dev = expected_value(deviation_profile(DeviationSpec(kind, 1, 1), ctx), prior, T)
    print(f"{kind:16s}: agent 1 gets {float(dev[1]):.4f} (complying: {float(together[1]):.4f})")

# %%
# One sampled episode, step by step.
hist = run_episode(caos_profile(ctx), prior, T, seed=4)
print("instance   :", prior.support[hist.instance_index].means)
for step in hist.steps:
    active = sorted(ctx.replay(hist.views[0]).records[step.t - 1].active)
    print(f"t={step.t} active={active} arms={list(step.actions)} rewards={list(step.rewards)} "
          f"messages={len(step.messages)}")

print("node property violations:", len(solver.violations), "over", solver.nodes_checked, "nodes")
