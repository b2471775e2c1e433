"""Optimistic Expected Reward: per-agent continuation values for a collaborating group.

The recursion works on the sufficient statistic of a compliant history: the
step ``t``, the group still collaborating ``C_prev`` and the group's pooled
:class:`~strategic_bandits.algos.AlgorithmState` (which also fixes the
posterior). For a candidate group ``C`` every member's value is its expected
reward under A's recommendation plus the next step's OER value; non-members
get the value of playing B alone.

``full`` scans subsets of ``C_prev`` largest first, lexicographic within a
size; ``efficient`` tries only ``C_prev`` itself and otherwise collapses
everyone to B.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from .algos import (
    DEFAULT_NODE_BUDGET,
    AlgorithmState,
    ExactHorizonTooLarge,
    MultiAgentAlgorithm,
    SingleAgentOracle,
)
from .core import DiscretePrior, Number, PosteriorState

FLOAT_MARGIN = 1e-9


def strictly_greater(x: Number, y: Number, exact: bool) -> bool:
    """``x > y``; in float mode ties within ``FLOAT_MARGIN`` count as not greater."""
    return x > y if exact else x > y + FLOAT_MARGIN


def stopping_set(rho, vB, exact: bool = True) -> frozenset:
    """Indices whose value strictly beats their fallback value."""
    if isinstance(rho, dict):
        return frozenset(i for i in rho if strictly_greater(rho[i], vB[i], exact))
    return frozenset(i for i, (r, v) in enumerate(zip(rho, vB)) if strictly_greater(r, v, exact))


@dataclass(frozen=True)
class OerNode:
    """One evaluated node: the values for every member of ``C_prev`` and the chosen group."""

    t: int
    members: frozenset
    rho: dict
    chosen: frozenset
    value_b: Number


@dataclass(frozen=True)
class PropertyViolation:
    name: str
    t: int
    members: tuple
    detail: str


class OerSolver:
    """Memoised OER over group states.

    One solver is bound to one prior, horizon, group size and base
    algorithm. ``check_properties`` recomputes the three OER properties at
    every freshly expanded node and records violations in ``violations``.
    """

    def __init__(
        self,
        prior: DiscretePrior,
        T: int,
        m: int,
        algorithm: MultiAgentAlgorithm,
        variant: str = "full",
        oracle: Optional[SingleAgentOracle] = None,
        node_budget: int = DEFAULT_NODE_BUDGET,
        check_properties: bool = False,
        memoize: bool = True,
    ):
        if variant not in ("full", "efficient"):
            raise ValueError(f"unknown OER variant {variant!r}")
        self.prior = prior
        self.T = T
        self.m = m
        self.algorithm = algorithm
        self.variant = variant
        self.exact = prior.exact
        self.node_budget = node_budget
        self.oracle = oracle or SingleAgentOracle(T, node_budget)
        self.check_properties = check_properties
        self.memoize = memoize
        self.violations: list[PropertyViolation] = []
        self.nodes_checked = 0
        self._nodes: dict = {}
        self._cont: dict = {}
        self._post: dict = {}

    # -- helpers -----------------------------------------------------------

    def guard(self, t: int):
        remaining = self.T - t + 1
        if remaining > 0 and (self.m + 1) * 2 ** (self.m * remaining) > self.node_budget:
            raise ExactHorizonTooLarge(f"(m+1)*2^(m*{remaining}) nodes with m={self.m}")

    def posterior(self, state: AlgorithmState) -> PosteriorState:
        key = state.stats
        post = self._post.get(key)
        if post is None:
            post = PosteriorState.from_counts(self.prior, key.counts, key.sums)
            self._post[key] = post
        return post

    def value_b(self, state: AlgorithmState, t: int) -> Number:
        return self.oracle.value(self.posterior(state), t)

    def coin_key(self, state: AlgorithmState, coin):
        if not self.algorithm.uses_coin:
            return None
        return self.algorithm.sampled_index(state, coin)

    def initial_state(self) -> AlgorithmState:
        return self.algorithm.initial_state()

    # -- recursion ---------------------------------------------------------

    def continuation(self, t: int, group: tuple, state: AlgorithmState, coin) -> dict:
        """Expected reward now plus next-step OER for each member of ``group`` playing A."""
        key = (t, group, state, self.coin_key(state, coin))
        if self.memoize and key in self._cont:
            return self._cont[key]
        rec = self.algorithm.recommend(state, group, t, coin)
        post = self.posterior(state)
        acc = {i: 0 for i in group}
        for outcome in post.outcomes(rec.actions):
            p = outcome.probability
            if not p:
                continue
            nxt_state = self.algorithm.observe(state, list(zip(rec.actions, outcome.rewards)))
            nxt = self.expected_values(t + 1, frozenset(group), nxt_state)
            for i, r in zip(rec.agents, outcome.rewards):
                acc[i] += p * (r + nxt[i])
        if self.memoize:
            self._cont[key] = acc
        return acc

    def expected_values(self, t: int, members: frozenset, state: AlgorithmState) -> dict:
        """OER values at step ``t`` averaged over that step's shared coin."""
        if t > self.T:
            return {i: 0 for i in members}
        out = {i: 0 for i in members}
        for w, coin in self.algorithm.coin_outcomes(state):
            node = self.node(t, members, state, coin)
            for i in members:
                out[i] += w * node.rho[i]
        return out

    def node(self, t: int, members: frozenset, state: AlgorithmState, coin=None) -> OerNode:
        members = frozenset(members)
        if t > self.T:
            return OerNode(t, members, {i: 0 for i in members}, frozenset(), 0)
        key = (t, members, state, self.coin_key(state, coin))
        if self.memoize:
            hit = self._nodes.get(key)
            if hit is not None:
                return hit
        self.guard(t)
        vb = self.value_b(state, t) if members else 0
        ordered = tuple(sorted(members))
        chosen: frozenset = frozenset()
        rho = {i: vb for i in ordered}
        if self.variant == "full":
            candidates = (c for size in range(len(ordered), 0, -1) for c in itertools.combinations(ordered, size))
        else:
            candidates = iter([ordered] if ordered else [])
        for group in candidates:
            cont = self.continuation(t, group, state, coin)
            if all(strictly_greater(cont[i], vb, self.exact) for i in group):
                chosen = frozenset(group)
                rho = {i: (cont[i] if i in chosen else vb) for i in ordered}
                break
        node = OerNode(t, members, rho, chosen, vb)
        if self.check_properties:
            self._check(node, state, coin)
        if self.memoize:
            self._nodes[key] = node
        return node

    # -- piggybacked property checks ---------------------------------------

    def _check(self, node: OerNode, state: AlgorithmState, coin):
        self.nodes_checked += 1
        members = tuple(sorted(node.members))
        if not members:
            return
        vb = node.value_b
        tol = 0 if self.exact else FLOAT_MARGIN
        for i in members:
            if node.rho[i] < vb - tol:
                self._violate("OER_moreB", node, f"agent {i}: {node.rho[i]} < {vb}")
        full = self.continuation(node.t, members, state, coin)
        if node.chosen == frozenset(members):
            for i in members:
                if abs(node.rho[i] - full[i]) > tol:
                    self._violate("OER_allin", node, f"agent {i}: {node.rho[i]} != {full[i]}")
        collapsed = [i for i in members if abs(node.rho[i] - vb) <= tol]
        if collapsed and not any(full[j] <= vb + tol for j in members):
            self._violate("OER_good", node, f"agents {collapsed} at fallback value but every full-group value beats it")

    def _violate(self, name, node, detail):
        self.violations.append(PropertyViolation(name, node.t, tuple(sorted(node.members)), detail))


def root_values(solver: OerSolver) -> tuple:
    """OER at step 1 with everyone active and an empty history, averaged over the first coin."""
    members = frozenset(range(solver.m))
    vals = solver.expected_values(1, members, solver.initial_state())
    return tuple(vals[i] for i in range(solver.m))


def oer(t: int, history, solver: OerSolver, coin=None) -> tuple:
    """OER value vector for a recorded global history before step ``t``.

    The active set comes from the history (agents who followed A and shared
    as required); agents outside it get the value of B on their own view.
    Without ``coin`` the result is averaged over step ``t``'s shared coin.
    """
    from .caos import history_group

    if t != len(history.steps) + 1:
        raise ValueError(f"history has {len(history.steps)} steps; OER is evaluated at step {len(history.steps) + 1}")
    members, state = history_group(solver, history)
    if t > solver.T:
        return (0,) * solver.m
    if coin is None:
        vals = solver.expected_values(t, members, state)
    else:
        vals = solver.node(t, members, state, coin).rho
    out = []
    for i in range(solver.m):
        if i in members:
            out.append(vals[i])
        else:
            out.append(solver.oracle.value(history.views[i].posterior(solver.prior), t))
    return tuple(out)
