"""Multi-agent base algorithms and the single-agent fallback.

The multi-agent algorithms (MASE, MAFAEE, MAUCB, MATS and a toy asymmetric
"victim" algorithm) are stateless policy objects acting on an immutable
:class:`AlgorithmState`. That state holds everything the algorithm needs from
the pooled history of the collaborating group, so it doubles as a memo key.

``log`` is the natural logarithm throughout; untried arms have an infinite
confidence radius and ties go to the lowest arm index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

from .core import DiscretePrior, Number, PosteriorState


class ExactHorizonTooLarge(RuntimeError):
    """The exact enumeration would exceed the configured node budget."""

    def __init__(self, detail: str = ""):
        msg = "exact horizon too large"
        super().__init__(f"{msg}: {detail}" if detail else msg)


DEFAULT_NODE_BUDGET = 10**7


@dataclass(frozen=True)
class ArmStats:
    counts: tuple
    sums: tuple

    @classmethod
    def empty(cls, K: int) -> "ArmStats":
        return cls((0,) * K, (0,) * K)

    @property
    def K(self) -> int:
        return len(self.counts)

    def add(self, pairs: Sequence[tuple[int, int]]) -> "ArmStats":
        counts = list(self.counts)
        sums = list(self.sums)
        for arm, reward in pairs:
            counts[arm] += 1
            sums[arm] += reward
        return ArmStats(tuple(counts), tuple(sums))

    def mean(self, arm: int) -> Fraction:
        """Empirical mean; 0 for an unpulled arm."""
        n = self.counts[arm]
        return Fraction(self.sums[arm], n) if n else Fraction(0)

    def radius(self, arm: int, log_tk: float) -> float:
        n = self.counts[arm]
        return math.sqrt(2.0 * log_tk / n) if n else math.inf

    def empirical_best(self, arms: Optional[Sequence[int]] = None) -> int:
        arms = range(self.K) if arms is None else arms
        return max(arms, key=lambda a: (self.mean(a), -a))


@dataclass(frozen=True)
class AlgorithmState:
    """Pooled-history summary for one collaborating group.

    ``active_arms`` is MASE's surviving arm set; ``chosen`` is MAFAEE's
    committed arm once exploration ends; ``steps`` counts completed steps.
    """

    stats: ArmStats
    active_arms: tuple = ()
    chosen: Optional[int] = None
    steps: int = 0


@dataclass(frozen=True)
class Recommendation:
    agents: tuple
    actions: tuple

    def __post_init__(self):
        if len(self.agents) != len(self.actions):
            raise ValueError("one action per active agent")

    def as_dict(self) -> dict:
        return dict(zip(self.agents, self.actions))


def mafaee_exploration_length(T: int, K: int, m: int) -> int:
    """Rounded ``T^(2/3) (K log T)^(1/3) / m^(1/3)``, clamped to ``[1, T]``."""
    if min(T, K, m) < 1:
        raise ValueError("T, K and m must all be at least 1")
    raw = T ** (2 / 3) * (K * math.log(T)) ** (1 / 3) / m ** (1 / 3)
    return int(min(max(round(raw), 1), T))


@dataclass(frozen=True)
class MultiAgentAlgorithm:
    """Base class. Subclasses implement :meth:`recommend` and may refine :meth:`observe`."""

    K: int
    T: int
    name = "A"
    symmetric = False
    uses_coin = False

    @property
    def log_tk(self) -> float:
        return math.log(self.T * self.K)

    def initial_state(self) -> AlgorithmState:
        return AlgorithmState(ArmStats.empty(self.K), tuple(range(self.K)))

    def recommend(self, state: AlgorithmState, active: Sequence[int], t: int, coin=None) -> Recommendation:
        raise NotImplementedError

    def observe(self, state: AlgorithmState, pairs: Sequence[tuple[int, int]]) -> AlgorithmState:
        return replace(state, stats=state.stats.add(pairs), steps=state.steps + 1)

    def coin_outcomes(self, state: AlgorithmState) -> list:
        """Finite distribution of the shared coin that matters for ``state``."""
        return [(1, None)]

    def coin_breakpoints(self, state: AlgorithmState) -> tuple:
        return ()

    def _rec(self, active, arms) -> Recommendation:
        return Recommendation(tuple(sorted(active)), tuple(arms))


def ucb_arm(stats: ArmStats, log_tk: float, arms: Optional[Sequence[int]] = None) -> int:
    arms = list(range(stats.K)) if arms is None else list(arms)
    for a in arms:
        if stats.counts[a] == 0:
            return a
    return max(arms, key=lambda a: (float(stats.mean(a)) + stats.radius(a, log_tk), -a))


@dataclass(frozen=True)
class MAUCB(MultiAgentAlgorithm):
    name = "MAUCB"
    symmetric = True

    def recommend(self, state, active, t, coin=None):
        arm = ucb_arm(state.stats, self.log_tk)
        return self._rec(active, [arm] * len(active))


def mase_eliminate(state: AlgorithmState, T: int) -> AlgorithmState:
    """Keep the active arms whose upper bound reaches the best lower bound."""
    stats = state.stats
    log_tk = math.log(T * stats.K)
    arms = state.active_arms
    lower = max(float(stats.mean(b)) - stats.radius(b, log_tk) for b in arms)
    kept = tuple(a for a in arms if float(stats.mean(a)) + stats.radius(a, log_tk) >= lower)
    return replace(state, active_arms=kept)


def spread(agents_sorted: Sequence[int], arms: Sequence[int], offset: int = 0) -> tuple:
    """Round-robin assignment of ranked agents to arms, starting at ``offset``."""
    n = len(arms)
    return tuple(arms[(rank + offset) % n] for rank in range(len(agents_sorted)))


@dataclass(frozen=True)
class MASE(MultiAgentAlgorithm):
    """Successive elimination spreading the group over the surviving arms.

    With fewer agents than arms the assignment rotates by ``|C|`` each step so
    every surviving arm keeps being sampled.
    """

    name = "MASE"

    def recommend(self, state, active, t, coin=None):
        agents = sorted(active)
        arms = state.active_arms
        offset = 0 if len(agents) >= len(arms) else (t - 1) * len(agents)
        return self._rec(agents, spread(agents, arms, offset))

    def observe(self, state, pairs):
        return mase_eliminate(super().observe(state, pairs), self.T)


@dataclass(frozen=True)
class MAFAEE(MultiAgentAlgorithm):
    """Fixed-arm explore-then-exploit.

    ``m`` is the configured number of agents used for the exploration
    length; ``N`` overrides the formula when given.
    """

    m: int = 1
    N: Optional[int] = None
    name = "MAFAEE"

    @property
    def exploration_length(self) -> int:
        return self.N if self.N is not None else mafaee_exploration_length(self.T, self.K, self.m)

    def recommend(self, state, active, t, coin=None):
        agents = sorted(active)
        if t > self.exploration_length:
            chosen = state.chosen if state.chosen is not None else state.stats.empirical_best()
            return self._rec(agents, [chosen] * len(agents))
        if len(agents) >= self.K:
            arms = [rank % self.K for rank in range(len(agents))]
        else:
            arms = [(rank + t) % self.K for rank in range(len(agents))]
        return self._rec(agents, arms)

    def observe(self, state, pairs):
        state = super().observe(state, pairs)
        if state.chosen is None and state.steps >= self.exploration_length:
            state = replace(state, chosen=state.stats.empirical_best())
        return state


@dataclass(frozen=True)
class _PosteriorAlgorithm(MultiAgentAlgorithm):
    prior: DiscretePrior = field(default=None, compare=False, repr=False)

    def posterior(self, state: AlgorithmState) -> PosteriorState:
        return PosteriorState.from_counts(self.prior, state.stats.counts, state.stats.sums)


@dataclass(frozen=True)
class MATS(_PosteriorAlgorithm):
    """Thompson sampling with one shared coin per step.

    The coin ``u`` in ``[0, 1)`` selects support point ``j`` by inverse CDF of
    the posterior weights; everyone plays that instance's best arm.
    """

    name = "MATS"
    symmetric = True
    uses_coin = True

    def sampled_index(self, state: AlgorithmState, coin) -> int:
        weights = self.posterior(state).weights
        acc = 0
        for j, w in enumerate(weights):
            acc += w
            if coin < acc:
                return j
        return max(j for j, w in enumerate(weights) if w > 0)

    def recommend(self, state, active, t, coin=None):
        if coin is None:
            raise ValueError("MATS needs the shared coin for this step")
        j = self.sampled_index(state, coin)
        arm = self.prior.support[j].best_arm
        return self._rec(active, [arm] * len(active))

    def coin_breakpoints(self, state):
        acc = 0
        points = []
        for w in self.posterior(state).weights[:-1]:
            acc += w
            points.append(acc)
        return tuple(points)

    def coin_outcomes(self, state):
        out = []
        lo = 0
        for w in self.posterior(state).weights:
            if w > 0:
                out.append((w, lo + w / 2))
            lo += w
        return out


@dataclass(frozen=True)
class Victim(_PosteriorAlgorithm):
    """Toy asymmetric algorithm: the lowest-ranked agent gets the worst posterior arm.

    Everyone else gets the best posterior arm. Not an algorithm from the
    literature; it exists to exercise the unravelling of asymmetric groups.
    """

    name = "VICTIM"

    def recommend(self, state, active, t, coin=None):
        agents = sorted(active)
        means = self.posterior(state).means()
        best = means.index(max(means))
        worst = max(range(len(means)), key=lambda a: (-means[a], a))
        arms = [best] * len(agents)
        if len(agents) >= 2:
            arms[0] = worst
        return self._rec(agents, arms)


ALGORITHMS = {"MAUCB": MAUCB, "MASE": MASE, "MAFAEE": MAFAEE, "MATS": MATS, "VICTIM": Victim}


def make_algorithm(name: str, K: int, T: int, m: int = 1, prior: Optional[DiscretePrior] = None, N: Optional[int] = None):
    name = name.upper()
    if name not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}")
    if name == "MAFAEE":
        return MAFAEE(K, T, m=m, N=N)
    if name in ("MATS", "VICTIM"):
        if prior is None:
            raise ValueError(f"{name} needs a prior")
        return ALGORITHMS[name](K, T, prior=prior)
    return ALGORITHMS[name](K, T)


def recommend_A(algorithm: MultiAgentAlgorithm, state: AlgorithmState, active, t: int, coin=None) -> Recommendation:
    if not active:
        raise ValueError("active set is empty")
    return algorithm.recommend(state, sorted(active), t, coin)


class SingleAgentOracle:
    """Bayes-optimal single-agent play by exhaustive dynamic programming.

    The value at step ``t`` is ``max_a sum_r P(r | a) (r + V(t+1, post | a, r))``,
    memoised on the remaining horizon and posterior weights. One oracle serves
    one prior.
    """

    def __init__(self, T: int, node_budget: int = DEFAULT_NODE_BUDGET):
        self.T = T
        self.node_budget = node_budget
        self._memo: dict = {}

    def _guard(self, K: int, remaining: int):
        if remaining > 0 and (2 * K) ** remaining > self.node_budget:
            raise ExactHorizonTooLarge(f"(2K)^{remaining} nodes for K={K}")

    def _solve(self, post: PosteriorState, remaining: int):
        if remaining <= 0:
            return 0, None
        key = (remaining, post.weights)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        best_value, best_arm = None, None
        for a in range(post.K):
            p1 = post.mean(a)
            q = 0
            if p1:
                q += p1 * (1 + self._solve(post.update(a, 1), remaining - 1)[0])
            if p1 != 1:
                q += (1 - p1) * self._solve(post.update(a, 0), remaining - 1)[0]
            if best_value is None or q > best_value:
                best_value, best_arm = q, a
        self._memo[key] = (best_value, best_arm)
        return best_value, best_arm

    def value(self, post: PosteriorState, t: int) -> Number:
        remaining = self.T - t + 1
        self._guard(post.K, remaining)
        return self._solve(post, remaining)[0]

    def action(self, post: PosteriorState, t: int) -> int:
        if t > self.T:
            raise ValueError(f"t={t} is past the horizon T={self.T}")
        remaining = self.T - t + 1
        self._guard(post.K, remaining)
        return self._solve(post, remaining)[1]


def value_of_B(post: PosteriorState, t: int, T: int, oracle: Optional[SingleAgentOracle] = None) -> Number:
    oracle = oracle or SingleAgentOracle(T)
    return oracle.value(post, t)


def recommend_B(post: PosteriorState, t: int, T: int, mode: str = "exact", stats: Optional[ArmStats] = None,
                oracle: Optional[SingleAgentOracle] = None) -> int:
    """First action of the single-agent fallback.

    ``exact`` is the Bayes-optimal DP; ``index`` is UCB over the agent's own
    observations ``stats``, a stand-in for horizons the DP cannot reach.
    """
    if t > T:
        raise ValueError(f"t={t} is past the horizon T={T}")
    if mode == "exact":
        return (oracle or SingleAgentOracle(T)).action(post, t)
    if mode == "index":
        if stats is None:
            raise ValueError("index mode needs the agent's own arm statistics")
        return ucb_arm(stats, math.log(T * stats.K))
    raise ValueError(f"unknown mode {mode!r}")
