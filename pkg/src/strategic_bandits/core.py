"""Bernoulli bandit instances, discrete priors and exact posteriors.

Every quantity here is either a :class:`fractions.Fraction` (exact mode) or a
``float`` (float mode). The mode is fixed by the prior: a prior built with
``exact=True`` carries rational means and weights, and every posterior,
outcome probability and value derived from it stays rational.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Number = Union[Fraction, float]

FLOAT_TOL = 1e-12


class InconsistentObservation(ValueError):
    """Raised when an observation has zero likelihood under every support point."""


def to_exact(x) -> Fraction:
    """Convert ``x`` to a Fraction, reading floats through their decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, int)) and not isinstance(x, bool)


def bernoulli_pmf(mean: Number, reward: int) -> Number:
    return mean if reward else 1 - mean


@dataclass(frozen=True)
class Instance:
    """A vector of Bernoulli arm means."""

    means: tuple

    def __post_init__(self):
        means = tuple(self.means)
        if not means:
            raise ValueError("an instance needs at least one arm")
        for x in means:
            if not 0 <= x <= 1:
                raise ValueError(f"arm mean {x!r} is outside [0, 1]")
        object.__setattr__(self, "means", means)

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def best_mean(self) -> Number:
        return max(self.means)

    @property
    def best_arm(self) -> int:
        return self.means.index(self.best_mean)

    def gaps(self) -> tuple:
        top = self.best_mean
        return tuple(top - x for x in self.means)


@dataclass(frozen=True)
class DiscretePrior:
    """Finite mixture over instances sharing the same number of arms."""

    support: tuple
    weights: tuple

    def __post_init__(self):
        support = tuple(self.support)
        weights = tuple(self.weights)
        if not support:
            raise ValueError("prior support is empty")
        if len(support) != len(weights):
            raise ValueError("support and weights differ in length")
        K = support[0].K
        if any(inst.K != K for inst in support):
            raise ValueError("all support instances must have the same number of arms")
        if any(w <= 0 for w in weights):
            raise ValueError("prior weights must be strictly positive")
        total = sum(weights)
        if all(_is_exact(w) for w in weights):
            if total != 1:
                raise ValueError(f"prior weights sum to {total}, not 1")
        elif abs(total - 1) > FLOAT_TOL:
            raise ValueError(f"prior weights sum to {total}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[Sequence, object]], exact: bool = True) -> "DiscretePrior":
        """Build a prior from ``(means, weight)`` rows.

        In exact mode, floats are read through their decimal representation, so
        ``0.9`` becomes ``9/10``. Float-mode weights are renormalised so that
        rounding in the input does not trip validation.
        """
        conv = to_exact if exact else float
        rows = list(rows)
        support = tuple(Instance(tuple(conv(x) for x in means)) for means, _ in rows)
        weights = [conv(w) for _, w in rows]
        if not exact:
            total = math.fsum(weights)
            weights = [w / total for w in weights]
        return cls(support, tuple(weights))

    @classmethod
    def uniform(cls, mean_vectors: Iterable[Sequence], exact: bool = True) -> "DiscretePrior":
        vectors = list(mean_vectors)
        w = Fraction(1, len(vectors)) if exact else 1.0 / len(vectors)
        return cls.from_rows([(v, w) for v in vectors], exact=exact)

    @classmethod
    def point(cls, means: Sequence, exact: bool = True) -> "DiscretePrior":
        return cls.from_rows([(means, 1)], exact=exact)

    @property
    def K(self) -> int:
        return self.support[0].K

    @property
    def exact(self) -> bool:
        return all(_is_exact(w) for w in self.weights)

    def __len__(self) -> int:
        return len(self.support)

    def expected_best_mean(self) -> Number:
        """Prior expectation of the best arm mean."""
        return sum(w * inst.best_mean for inst, w in zip(self.support, self.weights))

    def posterior(self) -> "PosteriorState":
        return PosteriorState(self, self.weights)

    def mean_matrix(self) -> np.ndarray:
        return np.array([[float(x) for x in inst.means] for inst in self.support])


def sample_index(prior: DiscretePrior, rng: np.random.Generator) -> int:
    p = np.array([float(w) for w in prior.weights])
    return int(rng.choice(len(p), p=p / p.sum()))


def sample_instance(prior: DiscretePrior, seed) -> Instance:
    """Draw one support instance; deterministic for a given seed."""
    return prior.support[sample_index(prior, np.random.default_rng(seed))]


@dataclass(frozen=True)
class RewardOutcome:
    rewards: tuple
    probability: Number


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Posterior weights over the support of ``prior``.

    Equality and hashing use the weight vector only, so posteriors can key
    memo tables directly.
    """

    prior: DiscretePrior
    weights: tuple

    def __eq__(self, other):
        return isinstance(other, PosteriorState) and self.weights == other.weights

    def __hash__(self):
        return hash(self.weights)

    @classmethod
    def from_counts(cls, prior: DiscretePrior, counts: Sequence[int], successes: Sequence[int]) -> "PosteriorState":
        """Posterior after ``counts[a]`` pulls of arm ``a`` with ``successes[a]`` ones.

        Exact priors are updated with rational arithmetic; float priors work in
        log space so long benchmark runs do not underflow.
        """
        if prior.exact:
            raw = []
            for inst, w in zip(prior.support, prior.weights):
                lik = w
                for mu, n, s in zip(inst.means, counts, successes):
                    if n:
                        lik *= mu**s * (1 - mu) ** (n - s)
                raw.append(lik)
            total = sum(raw)
            if total == 0:
                raise InconsistentObservation("inconsistent observation")
            return cls(prior, tuple(x / total for x in raw))
        mu = prior.mean_matrix()
        n = np.asarray(counts, dtype=float)
        s = np.asarray(successes, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            logw = np.log(np.array([float(w) for w in prior.weights]))
            hits = np.where(s > 0, s * np.log(mu), 0.0)
            misses = np.where(n - s > 0, (n - s) * np.log1p(-mu), 0.0)
        logw = logw + hits.sum(axis=1) + misses.sum(axis=1)
        top = logw.max()
        if not np.isfinite(top):
            raise InconsistentObservation("inconsistent observation")
        w = np.exp(logw - top)
        w /= w.sum()
        return cls(prior, tuple(float(x) for x in w))

    @property
    def K(self) -> int:
        return self.prior.K

    def update(self, arm: int, reward: int) -> "PosteriorState":
        if not 0 <= arm < self.K:
            raise ValueError(f"arm {arm} out of range for K={self.K}")
        raw = [w * bernoulli_pmf(inst.means[arm], reward) for inst, w in zip(self.prior.support, self.weights)]
        total = sum(raw)
        if total == 0:
            raise InconsistentObservation("inconsistent observation")
        return PosteriorState(self.prior, tuple(x / total for x in raw))

    def update_many(self, pairs: Iterable[tuple[int, int]]) -> "PosteriorState":
        post = self
        for arm, reward in pairs:
            post = post.update(arm, reward)
        return post

    def mean(self, arm: int) -> Number:
        if not 0 <= arm < self.K:
            raise ValueError(f"arm {arm} out of range for K={self.K}")
        return sum(w * inst.means[arm] for inst, w in zip(self.prior.support, self.weights))

    def means(self) -> tuple:
        return tuple(self.mean(a) for a in range(self.K))

    def greedy_arm(self) -> int:
        """Arm with the highest posterior mean, lowest index on ties."""
        m = self.means()
        return m.index(max(m))

    def outcomes(self, actions: Sequence[int]) -> list[RewardOutcome]:
        """All joint reward vectors for ``actions`` with their mixture probabilities.

        Rewards are independent given the instance but correlated through it,
        so each probability is a weighted sum over the support of products.
        """
        actions = tuple(actions)
        if not actions:
            raise ValueError("actions must be nonempty")
        out = []
        for rewards in itertools.product((0, 1), repeat=len(actions)):
            p = 0
            for inst, w in zip(self.prior.support, self.weights):
                term = w
                for a, r in zip(actions, rewards):
                    term *= bernoulli_pmf(inst.means[a], r)
                    if not term:
                        break
                p += term
            out.append(RewardOutcome(rewards, p))
        return out


def posterior_update(post: PosteriorState, arm: int, reward: int) -> PosteriorState:
    return post.update(arm, reward)


def posterior_mean(post: PosteriorState, arm: int) -> Number:
    return post.mean(arm)


def enumerate_outcomes(post: PosteriorState, actions: Sequence[int]) -> list[RewardOutcome]:
    return post.outcomes(actions)


def instance_outcomes(inst: Instance, actions: Sequence[int]) -> list[RewardOutcome]:
    """Joint reward distribution for ``actions`` under a known instance."""
    out = []
    for rewards in itertools.product((0, 1), repeat=len(actions)):
        p = 1
        for a, r in zip(actions, rewards):
            p *= bernoulli_pmf(inst.means[a], r)
        out.append(RewardOutcome(rewards, p))
    return out
