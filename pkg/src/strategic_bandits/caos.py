"""The CAOS protocol and its subgame-perfect extension, from one agent's point of view.

A step runs in synchronous phases:

* phase 0 (SP-CAOS only): every agent broadcasts a deviation flag;
* the agent picks an arm and observes its reward;
* phase 1: active agents announce their arm to the active set ``C_t``;
* phase 2: they share their reward with the verified set ``W_t`` (members of
  ``C_t`` whose announcement matched A's recommendation);
* phase 3: they forward every reward received in phase 2 to ``W_t``.

Payloads are filled in by the engine from its authoritative log, so a
strategy only picks recipients. Everything an agent knows is in its
:class:`AgentView`; :meth:`CaosContext.replay` reconstructs from it the active
set, the group's algorithm state and whether a deviation is visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .algos import AlgorithmState, Recommendation
from .core import DiscretePrior, PosteriorState
from .oer import OerSolver

ANNOUNCE = "ArmAnnouncement"
SHARE = "RewardShare"
FORWARD = "RewardForward"
FLAG = "DeviationFlag"


@dataclass(frozen=True)
class Message:
    kind: str
    sender: int
    recipients: frozenset
    step: int
    phase: int
    arm: Optional[int] = None
    reward: Optional[int] = None
    origin: Optional[int] = None
    flag: Optional[bool] = None

    def payload(self) -> str:
        if self.kind == ANNOUNCE:
            return f"arm={self.arm}"
        if self.kind == SHARE:
            return f"arm={self.arm};reward={self.reward}"
        if self.kind == FORWARD:
            return f"origin={self.origin};arm={self.arm};reward={self.reward}"
        return f"flag={self.flag}"


class StepLog(NamedTuple):
    """What one agent did and received during one step."""

    coin: object = None
    flag_out: Optional[bool] = None
    flags_in: tuple = ()  # (sender, flag)
    arm: Optional[int] = None
    reward: Optional[int] = None
    announce_out: frozenset = frozenset()
    announce_in: tuple = ()  # (sender, arm)
    share_out: frozenset = frozenset()
    share_in: tuple = ()  # (sender, arm, reward)
    forward_out: tuple = ()  # (origin, recipients)
    forward_in: tuple = ()  # (sender, origin, arm, reward)

    def sent_data(self) -> bool:
        return bool(self.announce_out or self.share_out or any(r for _, r in self.forward_out))

    def received_data(self) -> bool:
        return bool(self.announce_in or self.share_in or self.forward_in)


@dataclass(frozen=True)
class AgentView:
    """The history ``H_i^t`` of one agent: completed steps plus the step in progress."""

    agent: int
    m: int
    steps: tuple = ()
    current: Optional[StepLog] = None

    @property
    def t(self) -> int:
        return len(self.steps) + 1

    def known_rewards(self, upto: Optional[int] = None) -> dict:
        """``(origin, step) -> (arm, reward)`` for every reward this agent holds."""
        known = {}
        for s, log in enumerate(self.steps[:upto], start=1):
            if log.arm is not None and log.reward is not None:
                known[(self.agent, s)] = (log.arm, log.reward)
            for sender, arm, reward in log.share_in:
                known[(sender, s)] = (arm, reward)
            for _, origin, arm, reward in log.forward_in:
                known[(origin, s)] = (arm, reward)
        return known

    def posterior(self, prior: DiscretePrior, upto: Optional[int] = None) -> PosteriorState:
        counts = [0] * prior.K
        sums = [0] * prior.K
        for arm, reward in self.known_rewards(upto).values():
            counts[arm] += 1
            sums[arm] += reward
        return PosteriorState.from_counts(prior, counts, sums)

    def begin(self, coin) -> "AgentView":
        return AgentView(self.agent, self.m, self.steps, StepLog(coin=coin))

    def with_current(self, **changes) -> "AgentView":
        return AgentView(self.agent, self.m, self.steps, self.current._replace(**changes))

    def close(self) -> "AgentView":
        return AgentView(self.agent, self.m, self.steps + (self.current,), None)


@dataclass(frozen=True)
class StepRecord:
    """One replayed step as seen by the viewing agent."""

    t: int
    members: frozenset  # C_{t-1}
    active: frozenset  # C_t
    recommendation: Optional[Recommendation]
    verified: frozenset  # W_t
    deviators: frozenset
    collapsed: bool


@dataclass(frozen=True)
class Replay:
    """Result of replaying an agent's completed history.

    ``members`` is the agent's estimate of the active set entering the next
    step and ``state`` the group's pooled algorithm state. ``deviation`` says
    some departure from CAOS is visible (own ones included); ``psi`` is the
    same minus the exempt case of an inactive agent not playing B.
    ``engaged`` is false once the agent belongs in the B fallback.
    """

    members: frozenset
    state: AlgorithmState
    engaged: bool
    deviation: bool = False
    psi: bool = False
    collapsed: bool = False
    records: tuple = ()


@dataclass(frozen=True)
class StepPlan:
    active: frozenset
    recommendation: Optional[Recommendation]
    arm: int
    announce_to: frozenset


class CaosContext:
    """Shared machinery for every CAOS agent of one game: solver, caches and protocol flavour."""

    def __init__(self, solver: OerSolver, sp: bool = False):
        self.solver = solver
        self.prior = solver.prior
        self.T = solver.T
        self.m = solver.m
        self.algorithm = solver.algorithm
        self.oracle = solver.oracle
        self.sp = sp
        self._replays: dict = {}
        self._posts: dict = {}

    @property
    def K(self) -> int:
        return self.prior.K

    def agents(self) -> frozenset:
        return frozenset(range(self.m))

    def view_posterior(self, view: AgentView, upto: Optional[int] = None) -> PosteriorState:
        """Posterior from every reward the view holds, cached by the reward tally."""
        counts = [0] * self.K
        sums = [0] * self.K
        for arm, reward in view.known_rewards(upto).values():
            counts[arm] += 1
            sums[arm] += reward
        key = (tuple(counts), tuple(sums))
        post = self._posts.get(key)
        if post is None:
            post = PosteriorState.from_counts(self.prior, *key)
            self._posts[key] = post
        return post

    def b_action(self, view: AgentView, t: int) -> int:
        return self.oracle.action(self.view_posterior(view), t)

    # -- replay ------------------------------------------------------------

    def replay(self, view: AgentView) -> Replay:
        steps = view.steps
        if not self.algorithm.uses_coin:
            # the coin cannot change anything, so histories differing only in it share an entry
            steps = tuple(log._replace(coin=None) for log in steps)
        key = (view.agent, steps)
        hit = self._replays.get(key)
        if hit is not None:
            return hit
        if not view.steps:
            result = Replay(self.agents(), self.solver.initial_state(), True)
        else:
            prev = self.replay(AgentView(view.agent, view.m, view.steps[:-1]))
            result = self._replay_step(view, prev)
        self._replays[key] = result
        return result

    def _replay_step(self, view: AgentView, prev: Replay) -> Replay:
        i = view.agent
        s = len(view.steps)
        log = view.steps[-1]
        deviation, psi, collapsed = prev.deviation, prev.psi, prev.collapsed

        if self.sp:
            senders = {j for j, _ in log.flags_in}
            if log.flag_out is None or senders != self.agents() - {i}:
                deviation = psi = True
            if log.flag_out or any(f for _, f in log.flags_in):
                # a true flag means someone deviated, or the flagger lied about it
                collapsed = deviation = psi = True

        if not prev.engaged or (self.sp and collapsed):
            bad = log.sent_data() or log.received_data()
            deviation = deviation or bad
            psi = psi or bad
            if log.arm != self._b_action_at(view, s):
                deviation = True
            rec = StepRecord(s, prev.members, frozenset(), None, frozenset(), frozenset(), collapsed)
            return Replay(prev.members, prev.state, False, deviation, psi, collapsed, prev.records + (rec,))

        node = self.solver.node(s, prev.members, prev.state, log.coin)
        active = node.chosen
        if i not in active:
            bad = log.sent_data() or log.received_data()
            deviation = deviation or bad
            psi = psi or bad
            if log.arm != self._b_action_at(view, s):
                deviation = True
            rec = StepRecord(s, prev.members, active, None, frozenset(), frozenset(), collapsed)
            return Replay(active, prev.state, False, deviation, psi, collapsed, prev.records + (rec,))

        recommendation = self.algorithm.recommend(prev.state, sorted(active), s, log.coin)
        wanted = recommendation.as_dict()
        others = active - {i}
        deviators = set()
        own_bad = log.arm != wanted[i] or log.announce_out != others

        announced = dict(log.announce_in)
        for j in others:
            if announced.get(j) != wanted[j]:
                deviators.add(j)
        deviators.update(j for j in announced if j not in active)
        verified = frozenset({i} | {j for j in others if announced.get(j) == wanted[j]})

        own_bad = own_bad or log.share_out != verified - {i}
        shared = {j: (arm, r) for j, arm, r in log.share_in}
        deviators.update(j for j in verified - {i} if j not in shared)
        deviators.update(j for j in shared if j not in verified)

        expected_out = {(k, frozenset(verified - {i, k})) for k in shared if verified - {i, k}}
        own_bad = own_bad or set(log.forward_out) != expected_out
        got = {(j, k) for j, k, _, _ in log.forward_in}
        expected_in = {(j, k) for j in verified - {i} for k in verified - {i, j}}
        deviators.update(j for j, k in expected_in - got)
        deviators.update(j for j, k in got - expected_in)

        if own_bad:
            deviators.add(i)
        seen = bool(deviators)
        deviation = deviation or seen
        psi = psi or seen

        staying = active - deviators
        pairs = [(log.arm, log.reward)] if i in staying else []
        pairs += [shared[j] for j in sorted(staying - {i}) if j in shared]
        state = self.algorithm.observe(prev.state, pairs)
        rec = StepRecord(s, prev.members, active, recommendation, verified, frozenset(deviators), collapsed)
        engaged = i in staying and not deviation
        return Replay(frozenset(staying), state, engaged, deviation, psi, collapsed, prev.records + (rec,))

    def _b_action_at(self, view: AgentView, s: int) -> int:
        return self.oracle.action(self.view_posterior(view, upto=s - 1), s)

    # -- prescriptions for the step in progress -----------------------------

    def plan(self, view: AgentView) -> Optional[StepPlan]:
        """CAOS prescription at the current step, or ``None`` when the agent belongs with B."""
        rp = self.replay(AgentView(view.agent, view.m, view.steps))
        if not rp.engaged or rp.deviation:
            return None
        cur = view.current
        if self.sp and cur is not None:
            if cur.flag_out or any(f for _, f in cur.flags_in):
                return None
            if {j for j, _ in cur.flags_in} != self.agents() - {view.agent}:
                return None
        t = view.t
        coin = cur.coin if cur is not None else None
        node = self.solver.node(t, rp.members, rp.state, coin)
        i = view.agent
        if i not in node.chosen:
            return None
        recommendation = self.algorithm.recommend(rp.state, sorted(node.chosen), t, coin)
        return StepPlan(node.chosen, recommendation, recommendation.as_dict()[i], node.chosen - {i})


def compute_active_set(ctx: CaosContext, view: AgentView) -> frozenset:
    """Agents the viewer believes are still collaborating entering step ``view.t``."""
    return ctx.replay(AgentView(view.agent, view.m, view.steps)).members


def psi(ctx: CaosContext, view: AgentView) -> bool:
    """Whether the view shows a departure from CAOS, the exempt case aside."""
    return ctx.replay(AgentView(view.agent, view.m, view.steps)).psi


class Strategy:
    """Decision procedure for one agent; each hook sees the view as of that phase."""

    name = "strategy"

    def __init__(self, agent: int):
        self.agent = agent

    def flag(self, t: int, view: AgentView) -> Optional[bool]:
        return None

    def act(self, t: int, view: AgentView) -> int:
        raise NotImplementedError

    def announce(self, t: int, view: AgentView) -> frozenset:
        return frozenset()

    def share(self, t: int, view: AgentView) -> frozenset:
        return frozenset()

    def forward(self, t: int, view: AgentView) -> dict:
        return {}

    def breakpoints(self, t: int, view: AgentView) -> tuple:
        return ()


class SingleAgentStrategy(Strategy):
    """Plays B on its own observations and never communicates."""

    name = "B"

    def __init__(self, agent: int, ctx: CaosContext):
        super().__init__(agent)
        self.ctx = ctx

    def act(self, t, view):
        return self.ctx.b_action(view, t)


class CaosStrategy(Strategy):
    """CAOS agent; with ``ctx.sp`` set it is the SP-CAOS agent."""

    def __init__(self, agent: int, ctx: CaosContext):
        super().__init__(agent)
        self.ctx = ctx

    @property
    def name(self):
        return "SP-CAOS" if self.ctx.sp else "CAOS"

    def flag(self, t, view):
        if not self.ctx.sp:
            return None
        return psi(self.ctx, view)

    def act(self, t, view):
        plan = self.ctx.plan(view)
        return plan.arm if plan else self.ctx.b_action(view, t)

    def announce(self, t, view):
        plan = self.ctx.plan(view)
        return plan.announce_to if plan else frozenset()

    def _verified(self, plan: StepPlan, view: AgentView) -> frozenset:
        wanted = plan.recommendation.as_dict()
        announced = dict(view.current.announce_in)
        return frozenset({self.agent} | {j for j in plan.announce_to if announced.get(j) == wanted[j]})

    def share(self, t, view):
        plan = self.ctx.plan(view)
        if not plan:
            return frozenset()
        return self._verified(plan, view) - {self.agent}

    def forward(self, t, view):
        plan = self.ctx.plan(view)
        if not plan:
            return {}
        verified = self._verified(plan, view)
        out = {k: frozenset(verified - {self.agent, k}) for k, _, _ in view.current.share_in}
        return {k: r for k, r in out.items() if r}

    def breakpoints(self, t, view):
        if not self.ctx.algorithm.uses_coin:
            return ()
        rp = self.ctx.replay(AgentView(view.agent, view.m, view.steps))
        if not rp.engaged or rp.deviation:
            return ()
        return self.ctx.algorithm.coin_breakpoints(rp.state)


class FullSharingStrategy(Strategy):
    """Plays A for the whole group and shares everything, never stopping (profile pi_A)."""

    name = "A"

    def __init__(self, agent: int, ctx: CaosContext):
        super().__init__(agent)
        self.ctx = ctx

    def _group_state(self, view: AgentView) -> AlgorithmState:
        state = self.ctx.solver.initial_state()
        for s, log in enumerate(view.steps, start=1):
            pairs = [(log.arm, log.reward)] + [(a, r) for _, a, r in log.share_in]
            state = self.ctx.algorithm.observe(state, pairs)
        return state

    def act(self, t, view):
        state = self._group_state(view)
        rec = self.ctx.algorithm.recommend(state, range(self.ctx.m), t, view.current.coin)
        return rec.as_dict()[self.agent]

    def announce(self, t, view):
        return self.ctx.agents() - {self.agent}

    def share(self, t, view):
        return self.ctx.agents() - {self.agent}

    def breakpoints(self, t, view):
        if not self.ctx.algorithm.uses_coin:
            return ()
        return self.ctx.algorithm.coin_breakpoints(self._group_state(view))


def history_group(solver: OerSolver, history) -> tuple:
    """Active set and pooled group state after a recorded global history.

    Uses the engine's full record: a member stays only if it played A's
    recommendation, announced it to the rest of ``C_t`` and shared its reward
    with every verified member.
    """
    members = frozenset(range(solver.m))
    state = solver.initial_state()
    logs_by_step = list(zip(*[v.steps for v in history.views])) if history.steps else []
    for s, logs in enumerate(logs_by_step, start=1):
        if not members:
            break
        node = solver.node(s, members, state, history.steps[s - 1].coin)
        active = node.chosen
        if not active:
            members = active
            continue
        wanted = solver.algorithm.recommend(state, sorted(active), s, history.steps[s - 1].coin).as_dict()
        verified = frozenset(j for j in active if logs[j].arm == wanted[j] and logs[j].announce_out >= active - {j})
        staying = frozenset(j for j in verified if logs[j].share_out >= verified - {j})
        state = solver.algorithm.observe(state, [(logs[j].arm, logs[j].reward) for j in sorted(staying)])
        members = staying
    return members, state
