"""Monte Carlo regret experiments in compliant mode.

Every agent plays the multi-agent algorithm with full sharing (the profile
``pi_A``); no OER is computed. That profile's per-agent regret bounds the
regret of CAOS for symmetric algorithms, so rows are tagged
``compliant_mode`` and must not be read as CAOS traces.

Seeds are simulated in vectorised batches. :func:`reference_run` plays the
same seed step by step through the algorithm classes and is what the batch
code is tested against.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..algos import mafaee_exploration_length, make_algorithm
from ..core import DiscretePrior, sample_index
from .config import ExperimentConfig

SIMULATED = ("MAUCB", "MATS", "MAFAEE", "MASE")


@dataclass(frozen=True)
class RegretRecord:
    run_id: int
    agent_id: int
    K: int
    m: int
    T: int
    algorithm: str
    regret_i: float
    min_agent_reward_sum: float
    seed: int = 0
    regret_max: float = 0.0  # sum over steps of the worst agent's per-step pseudo-regret

    @property
    def point(self) -> tuple:
        return (self.algorithm, self.K, self.m, self.T)


def draw_streams(prior: DiscretePrior, T: int, m: int, seed: int):
    """Instance index, per-step coins and per-step agent uniforms for one seed."""
    rng = np.random.default_rng(seed)
    j = sample_index(prior, rng)
    coins = rng.random(T)
    draws = rng.random((T, m))
    return j, coins, draws


# -- scalar reference -----------------------------------------------------


def reference_run(name: str, prior: DiscretePrior, m: int, T: int, seed: int, N: Optional[int] = None):
    """One run through the algorithm classes. Returns the action matrix and the instance means."""
    alg = make_algorithm(name, prior.K, T, m, prior, N)
    j, coins, draws = draw_streams(prior, T, m, seed)
    means = [float(x) for x in prior.support[j].means]
    state = alg.initial_state()
    actions = np.zeros((T, m), dtype=np.int64)
    agents = list(range(m))
    for t in range(1, T + 1):
        rec = alg.recommend(state, agents, t, float(coins[t - 1]))
        arms = rec.actions
        rewards = [int(u < means[a]) for u, a in zip(draws[t - 1], arms)]
        state = alg.observe(state, list(zip(arms, rewards)))
        actions[t - 1] = arms
    return actions, np.array(means)


# -- vectorised batch -------------------------------------------------------


def _ucb(counts, sums, log_tk):
    untried = counts == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        index = sums / counts + np.sqrt(2.0 * log_tk / counts)
    first = np.argmax(untried, axis=1)
    return np.where(untried.any(axis=1), first, np.argmax(index, axis=1))


def _empirical_best(counts, sums):
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return np.argmax(mean, axis=1)


def simulate_batch(name: str, prior: DiscretePrior, m: int, T: int, seeds: Sequence[int],
                   N: Optional[int] = None, return_actions: bool = False):
    """Pseudo-regret per agent and worst-agent sums for each seed.

    Returns ``(regret, min_sum, regret_max)`` with shapes ``(S, m)``, ``(S,)``
    and ``(S,)``; with ``return_actions`` the ``(S, T, m)`` actions come last.
    ``regret_max`` accumulates the per-step maximum of the agents' pseudo-regret,
    so it dominates every agent's column term by term, rounding included.
    """
    name = name.upper()
    if name not in SIMULATED:
        raise ValueError(f"no batch simulator for {name}")
    K = prior.K
    S = len(seeds)
    streams = [draw_streams(prior, T, m, s) for s in seeds]
    idx = np.array([j for j, _, _ in streams], dtype=np.int64)
    coins = np.stack([c for _, c, _ in streams]) if S else np.zeros((0, T))
    draws = np.stack([d for _, _, d in streams]) if S else np.zeros((0, T, m))
    mu_all = prior.mean_matrix()
    mu = mu_all[idx]  # (S, K)
    best = mu.max(axis=1)
    rows = np.arange(S)
    counts = np.zeros((S, K), dtype=np.int64)
    sums = np.zeros((S, K), dtype=np.int64)
    regret = np.zeros((S, m))
    min_sum = np.zeros(S)
    worst = np.zeros(S)
    log_tk = math.log(T * K)
    acts = np.zeros((S, T, m), dtype=np.int64) if return_actions else None

    if name == "MATS":
        with np.errstate(divide="ignore"):
            log_mu = np.log(mu_all)
            log_1mu = np.log1p(-mu_all)
            log_w0 = np.log(np.array([float(w) for w in prior.weights]))
        best_arm = np.array([inst.best_arm for inst in prior.support], dtype=np.int64)
    if name == "MAFAEE":
        n_explore = N if N is not None else mafaee_exploration_length(T, K, m)
        chosen = np.zeros(S, dtype=np.int64)
    if name == "MASE":
        alive = np.ones((S, K), dtype=bool)
    ranks = np.arange(m)

    for t in range(1, T + 1):
        if name == "MAUCB":
            arms = np.repeat(_ucb(counts, sums, log_tk)[:, None], m, axis=1)
        elif name == "MATS":
            s = sums[:, None, :].astype(float)
            n = counts[:, None, :].astype(float)
            with np.errstate(invalid="ignore"):
                hits = np.where(s > 0, s * log_mu[None], 0.0)
                misses = np.where(n - s > 0, (n - s) * log_1mu[None], 0.0)
            logw = log_w0[None] + hits.sum(axis=2) + misses.sum(axis=2)
            w = np.exp(logw - logw.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            below = coins[:, t - 1][:, None] < np.cumsum(w, axis=1)
            last_pos = w.shape[1] - 1 - np.argmax((w > 0)[:, ::-1], axis=1)
            j = np.where(below.any(axis=1), np.argmax(below, axis=1), last_pos)
            arms = np.repeat(best_arm[j][:, None], m, axis=1)
        elif name == "MAFAEE":
            if t > n_explore:
                arms = np.repeat(chosen[:, None], m, axis=1)
            else:
                pattern = ranks % K if m >= K else (ranks + t) % K
                arms = np.repeat(pattern[None], S, axis=0)
        else:  # MASE
            n_alive = alive.sum(axis=1)
            order = np.argsort(~alive, axis=1, kind="stable")
            offset = np.where(m >= n_alive, 0, (t - 1) * m)
            pos = (ranks[None] + offset[:, None]) % n_alive[:, None]
            arms = np.take_along_axis(order, pos, axis=1)

        means_played = mu[rows[:, None], arms]
        rewards = (draws[:, t - 1, :] < means_played).astype(np.int64)
        for r in range(m):
            np.add.at(counts, (rows, arms[:, r]), 1)
            np.add.at(sums, (rows, arms[:, r]), rewards[:, r])
        step_regret = best[:, None] - means_played
        regret += step_regret
        worst += step_regret.max(axis=1)
        min_sum += means_played.min(axis=1)
        if acts is not None:
            acts[:, t - 1] = arms

        if name == "MAFAEE" and t == n_explore:
            chosen = _empirical_best(counts, sums)
        if name == "MASE":
            with np.errstate(divide="ignore", invalid="ignore"):
                mean = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
                rad = np.where(counts > 0, np.sqrt(2.0 * log_tk / np.maximum(counts, 1)), np.inf)
            lower = np.where(alive, mean - rad, -np.inf).max(axis=1)
            alive = alive & (mean + rad >= lower[:, None])

    out = (regret, min_sum, worst)
    return out + (acts,) if return_actions else out


# -- experiments ------------------------------------------------------------


def _chunk(args):
    name, rows, m, T, seeds, N = args
    prior = DiscretePrior.from_rows(rows, exact=False)
    return simulate_batch(name, prior, m, T, seeds, N)


def run_regret_experiment(config: ExperimentConfig, jobs: int = 1, seed_base: int = 0,
                          chunk: int = 50) -> list:
    """Regret rows for every sweep point and seed, ordered by run id."""
    records = []
    run_id = 0
    for point in config.points():
        seeds = [seed_base + s for s in point.seeds]
        tasks = [(point.algorithm, point.prior_rows, point.m, point.T, seeds[i:i + chunk], point.N)
                 for i in range(0, len(seeds), chunk)]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_chunk, tasks))
        else:
            parts = [_chunk(t) for t in tasks]
        regret = np.concatenate([p[0] for p in parts])
        min_sum = np.concatenate([p[1] for p in parts])
        worst = np.concatenate([p[2] for p in parts])
        for k, seed in enumerate(seeds):
            for i in range(point.m):
                records.append(RegretRecord(run_id, i, point.K, point.m, point.T, point.algorithm,
                                            float(regret[k, i]), float(min_sum[k]), seed, float(worst[k])))
            run_id += 1
    return records


def mean_regret(records: Sequence[RegretRecord]) -> float:
    return float(np.mean([r.regret_i for r in records])) if records else 0.0


def mean_regret_max(records: Sequence[RegretRecord]) -> float:
    """Average over runs of ``sum_t max_i (mu* - mu(a_i^t))``."""
    runs = {}
    for r in records:
        runs[r.run_id] = r.regret_max
    return float(np.mean(list(runs.values()))) if runs else 0.0


def regret_max_dominates(records: Sequence[RegretRecord]) -> bool:
    """Averaged Regret_max is at least each agent's averaged regret, per sweep point."""
    for group in group_by(records, "point").values():
        for rows in group_by(group, "agent_id").values():
            if np.mean([r.regret_max for r in rows]) < np.mean([r.regret_i for r in rows]):
                return False
    return True


def group_by(records: Sequence[RegretRecord], variable: str) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(getattr(r, variable), []).append(r)
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class ScalingFit:
    variable: str
    xs: tuple
    means: tuple
    slope: float
    intercept: float


def scaling_fit(xs: Sequence[float], means: Sequence[float], variable: str = "x") -> ScalingFit:
    """Least-squares slope of ``log(mean)`` against ``log(x)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(means, dtype=float)
    if len(xs) < 2 or len(np.unique(xs)) < 2:
        raise ValueError("degenerate grid: need at least two distinct values")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive values")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return ScalingFit(variable, tuple(xs.tolist()), tuple(ys.tolist()), float(slope), float(intercept))


def fit_records(records: Sequence[RegretRecord], variable: str) -> ScalingFit:
    groups = group_by(records, variable)
    return scaling_fit(list(groups), [mean_regret(g) for g in groups.values()], variable)
