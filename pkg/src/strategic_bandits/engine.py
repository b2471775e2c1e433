"""Episode runner and exact game-tree evaluator for strategy profiles.

The engine owns the only authoritative record of arms and rewards. Strategies
pick arms and recipient sets; message payloads are filled in from that
record, so shares cannot be forged, only withheld or sent selectively.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .caos import (
    ANNOUNCE,
    FLAG,
    FORWARD,
    SHARE,
    AgentView,
    CaosContext,
    CaosStrategy,
    FullSharingStrategy,
    Message,
    SingleAgentStrategy,
    Strategy,
)
from .core import DiscretePrior, Instance, PosteriorState, instance_outcomes, sample_index


@dataclass(frozen=True)
class GlobalStep:
    t: int
    coin: object
    actions: tuple
    rewards: tuple
    messages: tuple
    rejected: tuple = ()


@dataclass(frozen=True)
class GlobalHistory:
    """Everything that happened in an episode, plus every agent's view of it."""

    m: int
    steps: tuple = ()
    views: tuple = ()
    instance: Optional[Instance] = None
    instance_index: Optional[int] = None
    seed: object = None

    @classmethod
    def empty(cls, m: int, **kw) -> "GlobalHistory":
        return cls(m, (), tuple(AgentView(i, m) for i in range(m)), **kw)

    @property
    def t(self) -> int:
        return len(self.steps) + 1

    def observations(self) -> list:
        return [(a, r) for st in self.steps for a, r in zip(st.actions, st.rewards)]

    def messages(self) -> list:
        return [msg for st in self.steps for msg in st.messages]


# -- one synchronous step -------------------------------------------------


def _recipients(raw, sender: int, m: int) -> frozenset:
    out = frozenset(raw or ())
    bad = [j for j in out if not 0 <= j < m]
    if bad:
        raise ValueError(f"agent {sender} addressed unknown agents {sorted(bad)}")
    return out - {sender}


def pre_reward(profile: Sequence[Strategy], views: tuple, t: int, coin, K: int):
    """Phase 0 and action choice. Returns updated views, the action vector and the flag messages."""
    m = len(profile)
    views = tuple(v.begin(coin) for v in views)
    flags = [s.flag(t, v) for s, v in zip(profile, views)]
    msgs = tuple(
        Message(FLAG, j, frozenset(range(m)) - {j}, t, 0, flag=bool(flags[j])) for j in range(m) if flags[j] is not None
    )
    views = tuple(
        v.with_current(
            flag_out=None if flags[i] is None else bool(flags[i]),
            flags_in=tuple((j, bool(flags[j])) for j in range(m) if j != i and flags[j] is not None),
        )
        for i, v in enumerate(views)
    )
    actions = tuple(int(s.act(t, v)) for s, v in zip(profile, views))
    for i, a in enumerate(actions):
        if not 0 <= a < K:
            raise ValueError(f"agent {i} chose arm {a} with K={K}")
    views = tuple(v.with_current(arm=a) for v, a in zip(views, actions))
    return views, actions, msgs


def post_reward(profile: Sequence[Strategy], views: tuple, t: int, actions: tuple, rewards: tuple):
    """Phases 1 to 3. Returns closed views, delivered messages and rejected forwards."""
    m = len(profile)
    views = [v.with_current(reward=r) for v, r in zip(views, rewards)]
    msgs, rejected = [], []

    ann = [_recipients(s.announce(t, v), i, m) for i, (s, v) in enumerate(zip(profile, views))]
    for j in range(m):
        if ann[j]:
            msgs.append(Message(ANNOUNCE, j, ann[j], t, 1, arm=actions[j]))
    views = [
        v.with_current(announce_out=ann[i], announce_in=tuple((j, actions[j]) for j in range(m) if i in ann[j]))
        for i, v in enumerate(views)
    ]

    sh = [_recipients(s.share(t, v), i, m) for i, (s, v) in enumerate(zip(profile, views))]
    for j in range(m):
        if sh[j]:
            msgs.append(Message(SHARE, j, sh[j], t, 2, arm=actions[j], reward=rewards[j]))
    views = [
        v.with_current(share_out=sh[i], share_in=tuple((j, actions[j], rewards[j]) for j in range(m) if i in sh[j]))
        for i, v in enumerate(views)
    ]

    fwd_out = [[] for _ in range(m)]
    fwd_in = [[] for _ in range(m)]
    for j, (s, v) in enumerate(zip(profile, views)):
        held = {k for k, _, _ in v.current.share_in}
        for origin, raw in sorted((s.forward(t, v) or {}).items()):
            rec = _recipients(raw, j, m)
            msg = Message(FORWARD, j, rec, t, 3, arm=actions[origin], reward=rewards[origin], origin=origin)
            if origin not in held:
                rejected.append(msg)
                continue
            if not rec:
                continue
            msgs.append(msg)
            fwd_out[j].append((origin, rec))
            for i in sorted(rec):
                fwd_in[i].append((j, origin, actions[origin], rewards[origin]))
    views = tuple(
        v.with_current(forward_out=tuple(fwd_out[i]), forward_in=tuple(fwd_in[i])).close() for i, v in enumerate(views)
    )
    return views, tuple(msgs), tuple(rejected)


# -- sampled episodes -----------------------------------------------------


def run_episode(profile: Sequence[Strategy], prior: DiscretePrior, T: int, seed) -> GlobalHistory:
    """One seeded episode: sample the instance, then play ``T`` synchronous steps."""
    m = len(profile)
    rng = np.random.default_rng(seed)
    j = sample_index(prior, rng)
    inst = prior.support[j]
    means = [float(x) for x in inst.means]
    views = tuple(AgentView(i, m) for i in range(m))
    steps = []
    for t in range(1, T + 1):
        coin = float(rng.random())
        views, actions, flag_msgs = pre_reward(profile, views, t, coin, prior.K)
        draws = rng.random(m)
        rewards = tuple(int(u < means[a]) for u, a in zip(draws, actions))
        views, msgs, rejected = post_reward(profile, views, t, actions, rewards)
        steps.append(GlobalStep(t, coin, actions, rewards, flag_msgs + msgs, rejected))
    return GlobalHistory(m, tuple(steps), views, inst, j, seed)


# -- exact evaluation -----------------------------------------------------

Score = Callable[..., Sequence]


def reward_score(inst: Instance, actions: tuple, rewards: tuple, posterior=None) -> tuple:
    return rewards


def pseudo_regret_score(inst: Instance, actions: tuple, rewards: tuple, posterior=None) -> tuple:
    top = inst.best_mean
    return tuple(top - inst.means[a] for a in actions)


def min_mean_score(inst: Instance, actions: tuple, rewards: tuple, posterior=None) -> tuple:
    """Worst-off agent's expected reward given everything observed before the step."""
    post = posterior()
    return (min(post.mean(a) for a in actions),)


def coin_cells(profile: Sequence[Strategy], views: tuple, t: int) -> list:
    """``(weight, coin)`` cells of the shared coin that the profile can tell apart at step ``t``."""
    points = {Fraction(0), Fraction(1)}
    for s, v in zip(profile, views):
        points.update(Fraction(b) for b in s.breakpoints(t, v) if 0 < b < 1)
    pts = sorted(points)
    return [(hi - lo, (lo + hi) / 2) for lo, hi in zip(pts, pts[1:])]


def _tally(K: int, pairs) -> tuple:
    counts = [0] * K
    sums = [0] * K
    for a, r in pairs:
        counts[a] += 1
        sums[a] += r
    return tuple(counts), tuple(sums)


def instance_weights(prior: DiscretePrior, history: Optional[GlobalHistory]) -> tuple:
    """Posterior over the support given every reward in the engine's record."""
    if history is None or not history.steps:
        return prior.weights
    counts, sums = _tally(prior.K, history.observations())
    return PosteriorState.from_counts(prior, counts, sums).weights


def expected_value(
    profile: Sequence[Strategy],
    prior: DiscretePrior,
    T: int,
    history: Optional[GlobalHistory] = None,
    score: Score = reward_score,
) -> tuple:
    """Exact expected per-agent sum of ``score`` from the step after ``history`` to ``T``.

    Enumerates the instance (conditioned on the history), the shared coin's
    cells and every joint reward outcome. With the default score this is the
    expected cumulative reward vector.
    """
    m = len(profile)
    if history is None:
        history = GlobalHistory.empty(m)
    t = history.t
    width = len(score(prior.support[0], (0,) * m, (0,) * m, prior.posterior))
    total = [0] * width
    if t > T:
        return tuple(total)
    obs = _tally(prior.K, history.observations())
    for inst, w in zip(prior.support, instance_weights(prior, history)):
        if not w:
            continue
        vals = _evaluate(profile, history.views, t, T, inst, prior, score, width, obs)
        for k in range(width):
            total[k] += w * vals[k]
    return tuple(total)


def _evaluate(profile, views, t, T, inst, prior, score, width, obs) -> list:
    acc = [0] * width
    if t > T:
        return acc

    def posterior():
        return PosteriorState.from_counts(prior, *obs)

    for cw, coin in coin_cells(profile, views, t):
        pre_views, actions, _ = pre_reward(profile, views, t, coin, prior.K)
        for out in instance_outcomes(inst, actions):
            if not out.probability:
                continue
            nxt_views, _, _ = post_reward(profile, pre_views, t, actions, out.rewards)
            counts, sums = list(obs[0]), list(obs[1])
            for a, r in zip(actions, out.rewards):
                counts[a] += 1
                sums[a] += r
            nxt = _evaluate(profile, nxt_views, t + 1, T, inst, prior, score, width, (tuple(counts), tuple(sums)))
            sc = score(inst, actions, out.rewards, posterior)
            w = cw * out.probability
            for k in range(width):
                acc[k] += w * (sc[k] + nxt[k])
    return acc


def enumerate_histories(profile: Sequence[Strategy], prior: DiscretePrior, steps: int):
    """Yield ``(probability, history)`` for every reachable history of ``steps`` steps."""
    m = len(profile)

    def walk(hist: GlobalHistory, prob):
        if len(hist.steps) == steps:
            yield prob, hist
            return
        t = hist.t
        for cw, coin in coin_cells(profile, hist.views, t):
            pre_views, actions, flag_msgs = pre_reward(profile, hist.views, t, coin, prior.K)
            for out in instance_outcomes(hist.instance, actions):
                if not out.probability:
                    continue
                views, msgs, rejected = post_reward(profile, pre_views, t, actions, out.rewards)
                step = GlobalStep(t, coin, actions, out.rewards, flag_msgs + msgs, rejected)
                nxt = GlobalHistory(m, hist.steps + (step,), views, hist.instance, hist.instance_index)
                yield from walk(nxt, prob * cw * out.probability)

    for j, (inst, w) in enumerate(zip(prior.support, prior.weights)):
        yield from walk(GlobalHistory.empty(m, instance=inst, instance_index=j), w)


# -- standard profiles ----------------------------------------------------


def caos_profile(ctx: CaosContext) -> list:
    return [CaosStrategy(i, ctx) for i in range(ctx.m)]


def b_profile(ctx: CaosContext) -> list:
    return [SingleAgentStrategy(i, ctx) for i in range(ctx.m)]


def a_profile(ctx: CaosContext) -> list:
    return [FullSharingStrategy(i, ctx) for i in range(ctx.m)]


# -- deviation library ------------------------------------------------------

ONE_SHOT = ("wrong-arm", "withhold-announcement", "withhold-reward", "selective-share", "false-flag")
PERSISTENT = ("free-ride", "early-stop", "deny-flag")
DEVIATION_KINDS = ONE_SHOT + PERSISTENT
SP_ONLY = ("false-flag", "deny-flag")


@dataclass(frozen=True)
class DeviationSpec:
    """A unilateral departure by ``agent``; one-shot kinds act at ``trigger`` only, the rest from it on."""

    kind: str
    agent: int
    trigger: int = 1

    def __post_init__(self):
        if self.kind not in DEVIATION_KINDS + ("none",):
            raise ValueError(f"unknown deviation kind {self.kind!r}")
        if self.trigger < 1:
            raise ValueError("trigger step must be at least 1")

    @property
    def label(self) -> str:
        return f"{self.kind}@{self.trigger}/agent{self.agent}"


class DeviatingStrategy(Strategy):
    def __init__(self, spec: DeviationSpec, base: CaosStrategy):
        super().__init__(spec.agent)
        self.spec = spec
        self.base = base
        self.ctx = base.ctx
        self.name = f"{base.name}+{spec.label}"

    def _on(self, t: int, kinds) -> bool:
        k = self.spec.kind
        if k not in kinds:
            return False
        return t == self.spec.trigger if k in ONE_SHOT else t >= self.spec.trigger

    def _silent(self, t: int) -> bool:
        return self._on(t, ("free-ride", "early-stop"))

    def flag(self, t, view):
        if self._on(t, ("false-flag",)):
            return True
        if self._on(t, ("deny-flag",)):
            return False
        if self._on(t, ("free-ride",)):
            return None
        return self.base.flag(t, view)

    def act(self, t, view):
        if self._on(t, ("free-ride",)):
            return self.ctx.view_posterior(view).greedy_arm()
        if self._on(t, ("early-stop",)):
            return self.ctx.b_action(view, t)
        arm = self.base.act(t, view)
        if self._on(t, ("wrong-arm",)):
            return (arm + 1) % self.ctx.K
        return arm

    def announce(self, t, view):
        if self._silent(t) or self._on(t, ("withhold-announcement",)):
            return frozenset()
        return self.base.announce(t, view)

    def share(self, t, view):
        if self._silent(t) or self._on(t, ("withhold-reward",)):
            return frozenset()
        out = self.base.share(t, view)
        if self._on(t, ("selective-share",)) and out:
            out = out - {max(out)}
        return out

    def forward(self, t, view):
        if self._silent(t):
            return {}
        return self.base.forward(t, view)

    def breakpoints(self, t, view):
        return self.base.breakpoints(t, view)


def make_deviation(spec: DeviationSpec, ctx: CaosContext) -> Strategy:
    """Strategy for ``spec.agent``: CAOS (or SP-CAOS with ``ctx.sp``) altered as ``spec`` says."""
    base = CaosStrategy(spec.agent, ctx)
    if spec.kind == "none":
        return base
    return DeviatingStrategy(spec, base)


def deviation_profile(spec: DeviationSpec, ctx: CaosContext) -> list:
    profile = caos_profile(ctx)
    profile[spec.agent] = make_deviation(spec, ctx)
    return profile


def deviation_library(ctx: CaosContext, agents: Optional[Sequence[int]] = None, trigger: int = 1) -> list:
    """Every named deviation for every agent; flag kinds only make sense with ``ctx.sp``."""
    kinds = DEVIATION_KINDS if ctx.sp else tuple(k for k in DEVIATION_KINDS if k not in SP_ONLY)
    agents = range(ctx.m) if agents is None else agents
    return [DeviationSpec(k, i, trigger) for k in kinds for i in agents]


# -- exhaustive deterministic policies --------------------------------------


class NeedDecision(Exception):
    """Raised by :class:`TableStrategy` at an information set it has no entry for."""

    def __init__(self, key, options):
        super().__init__(key)
        self.key = key
        self.options = options


def _subsets(items) -> list:
    items = sorted(items)
    return [frozenset(c) for r in range(len(items) + 1) for c in itertools.combinations(items, r)]


class TableStrategy(Strategy):
    """Deterministic policy given as a table from information sets to choices.

    Information sets are ``(t, phase, view)``. Message choices are restricted
    to protocol-typed ones; at the last step they are fixed to silence
    because nothing sent then can change the sender's own reward.
    """

    name = "table"

    def __init__(self, agent: int, m: int, K: int, T: int, table: dict, flags: bool = False):
        super().__init__(agent)
        self.m, self.K, self.T = m, K, T
        self.table = table
        self.flags = flags
        self.others = frozenset(range(m)) - {agent}

    def _pick(self, key, options):
        if len(options) == 1:
            return options[0]
        if key not in self.table:
            raise NeedDecision(key, options)
        return self.table[key]

    def flag(self, t, view):
        if not self.flags:
            return None
        return self._pick((t, 0, view), [False, True])

    def act(self, t, view):
        return self._pick((t, "act", view), list(range(self.K)))

    def announce(self, t, view):
        return self._pick((t, 1, view), [frozenset()] if t == self.T else _subsets(self.others))

    def share(self, t, view):
        return self._pick((t, 2, view), [frozenset()] if t == self.T else _subsets(self.others))

    def forward(self, t, view):
        if t == self.T:
            return {}
        origins = sorted(k for k, _, _ in view.current.share_in)
        per = [_subsets(self.others - {k}) for k in origins]
        options = [dict(zip(origins, combo)) for combo in itertools.product(*per)]
        options = [{k: r for k, r in o.items() if r} for o in options]
        return self._pick((t, 3, view), options)


def enumerate_policies(evaluate: Callable[[dict], tuple]):
    """Yield ``(table, values)`` for every deterministic policy reachable by lazy branching.

    ``evaluate`` runs the game with a table strategy and either returns the
    value vector or raises :class:`NeedDecision` at an unassigned
    information set; each option then spawns a branch.
    """
    stack = [{}]
    while stack:
        table = stack.pop()
        try:
            yield table, evaluate(table)
        except NeedDecision as need:
            for opt in reversed(need.options):
                stack.append({**table, need.key: opt})
