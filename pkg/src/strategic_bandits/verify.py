"""Machine checks of the equilibrium and regret claims on micro instances.

Every check builds its own solver and context from a :class:`MicroConfig`,
runs the exact evaluator and returns :class:`VerificationReport` rows. A
report passes when its margin satisfies the claim's inequality: exactly in
rational mode, up to ``FLOAT_MARGIN`` in float mode.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .algos import DEFAULT_NODE_BUDGET, make_algorithm
from .caos import CaosContext, psi
from .core import DiscretePrior, Number
from .engine import (
    DEVIATION_KINDS,
    DeviationSpec,
    GlobalHistory,
    TableStrategy,
    a_profile,
    b_profile,
    caos_profile,
    deviation_library,
    deviation_profile,
    enumerate_histories,
    enumerate_policies,
    expected_value,
    min_mean_score,
    pseudo_regret_score,
)
from .oer import FLOAT_MARGIN, OerSolver, oer, root_values


@dataclass(frozen=True)
class MicroConfig:
    """A small exact game: prior rows, horizon, group size and base algorithm."""

    name: str
    rows: tuple
    T: int
    m: int
    algorithm: str = "MAUCB"
    exact: bool = True
    variant: str = "full"
    node_budget: int = DEFAULT_NODE_BUDGET

    def prior(self) -> DiscretePrior:
        return DiscretePrior.from_rows(self.rows, exact=self.exact)

    def canonical(self) -> dict:
        return {
            "rows": [[list(map(str, means)), str(w)] for means, w in self.rows],
            "T": self.T,
            "m": self.m,
            "algorithm": self.algorithm,
            "exact": self.exact,
            "variant": self.variant,
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


MICRO_1 = MicroConfig("micro1", (((0.9, 0.1), 0.5), ((0.1, 0.9), 0.5)), 2, 2)


@dataclass(frozen=True)
class VerificationReport:
    claim_id: str
    config_digest: str
    margin: Number
    passed: bool
    detail: str = ""
    counterexample: Optional[str] = None

    def margin_text(self) -> str:
        m = self.margin
        if isinstance(m, Fraction):
            return f"{m.numerator}/{m.denominator}"
        if isinstance(m, int):
            return str(m)
        return repr(float(m))

    def row(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "config_digest": self.config_digest,
            "margin": self.margin_text(),
            "pass": str(self.passed).lower(),
        }


def nonnegative(margin: Number, exact: bool) -> bool:
    return margin >= 0 if exact else margin >= -FLOAT_MARGIN


def zero(margin: Number, exact: bool) -> bool:
    return margin == 0 if exact else abs(margin) <= FLOAT_MARGIN


@dataclass
class Bench:
    """Solver and context for one config, shared by the checks run against it."""

    config: MicroConfig
    sp: bool = False
    check_properties: bool = True
    prior: DiscretePrior = field(init=False)
    solver: OerSolver = field(init=False)
    ctx: CaosContext = field(init=False)

    def __post_init__(self):
        c = self.config
        self.prior = c.prior()
        algorithm = make_algorithm(c.algorithm, self.prior.K, c.T, c.m, self.prior)
        self.solver = OerSolver(
            self.prior, c.T, c.m, algorithm, variant=c.variant, node_budget=c.node_budget,
            check_properties=self.check_properties,
        )
        self.ctx = CaosContext(self.solver, sp=self.sp)

    @property
    def exact(self) -> bool:
        return self.prior.exact

    def value(self, profile, history=None, score=None):
        kw = {} if score is None else {"score": score}
        return expected_value(profile, self.prior, self.config.T, history, **kw)

    def report(self, claim: str, margin, passed: bool, detail: str = "", counterexample=None):
        return VerificationReport(claim, self.config.digest, margin, passed, detail, counterexample)


def _as_bench(config, sp=False) -> Bench:
    return config if isinstance(config, Bench) else Bench(config, sp=sp)


def _merged(histories) -> list:
    """Reachable histories with positive probability, equal histories merged."""
    mass: dict = {}
    first: dict = {}
    for prob, hist in histories:
        if not prob:
            continue
        key = (hist.instance_index, hist.views)
        mass[key] = mass.get(key, 0) + prob
        first.setdefault(key, hist)
    return [(mass[k], first[k]) for k in mass]


def information_classes(histories, agent: int) -> list:
    """Group ``(probability, history)`` pairs by what ``agent`` has seen."""
    groups: dict = {}
    for prob, hist in histories:
        groups.setdefault(hist.views[agent], []).append((prob, hist))
    return list(groups.values())


def conditional_mean(cls, value) -> Number:
    """``E[value(h) | agent's view]`` over one information class."""
    total = sum(p for p, _ in cls)
    return sum(p * value(h) for p, h in cls) / total


# -- OER fixed point ---------------------------------------------------------


def verify_oer_fixed_point(config, sp: bool = False) -> list:
    """OER equals the all-CAOS continuation value at the root and on every compliant history."""
    bench = _as_bench(config, sp)
    c = bench.config
    profile = caos_profile(bench.ctx)
    root = root_values(bench.solver)
    value = bench.value(profile)
    diffs = [abs(a - b) for a, b in zip(root, value)]
    worst = max(diffs, default=0)
    reports = [bench.report("oer-fixed-point:root", worst, zero(worst, bench.exact),
                            f"oer={_fmt(root)} value={_fmt(value)}")]
    checked, worst_path, where = 0, 0, None
    for depth in range(1, c.T):
        hists = _merged(enumerate_histories(profile, bench.prior, depth))
        values = {id(h): bench.value(profile, h) for _, h in hists}
        for i in range(c.m):
            for cls in information_classes(hists, i):
                claimed = {oer(h.t, h, bench.solver)[i] for _, h in cls}
                rhs = conditional_mean(cls, lambda h: values[id(h)][i])
                d = max(abs(x - rhs) for x in claimed)
                checked += 1
                if d > worst_path:
                    worst_path, where = d, f"agent {i}: " + _describe(cls[0][1])
    reports.append(bench.report("oer-fixed-point:on-path", worst_path, zero(worst_path, bench.exact),
                                f"{checked} information sets", where))
    return reports


# -- Nash ----------------------------------------------------------------------


def verify_nash(config, sp: bool = False, triggers: Optional[Sequence[int]] = None,
                exhaustive: bool = False) -> list:
    """Compliance value minus deviation value, for each library deviation, agent and trigger step."""
    bench = _as_bench(config, sp)
    c = bench.config
    base = bench.value(caos_profile(bench.ctx))
    triggers = range(1, c.T + 1) if triggers is None else triggers
    reports = []
    for i in range(c.m):
        noop = bench.value(deviation_profile(DeviationSpec("none", i), bench.ctx))
        margin = base[i] - noop[i]
        reports.append(bench.report(f"nash:none/agent{i}", margin, zero(margin, bench.exact)))
    for s in triggers:
        for spec in deviation_library(bench.ctx, trigger=s):
            dev = bench.value(deviation_profile(spec, bench.ctx))
            margin = base[spec.agent] - dev[spec.agent]
            reports.append(bench.report(f"nash:{spec.label}", margin, nonnegative(margin, bench.exact),
                                        f"comply={_fmt([base[spec.agent]])} deviate={_fmt([dev[spec.agent]])}"))
    if exhaustive:
        reports.extend(verify_nash_exhaustive(bench))
    return reports


def verify_nash_exhaustive(config) -> list:
    """Best deterministic policy against CAOS, found by enumerating every protocol-typed policy."""
    bench = _as_bench(config)
    c = bench.config
    if c.m != 2 or bench.prior.K != 2 or c.T > 2:
        raise ValueError("exhaustive policy enumeration is limited to m=2, K=2, T<=2")
    base = bench.value(caos_profile(bench.ctx))
    reports = []
    for i in range(c.m):
        def evaluate(table, i=i):
            profile = caos_profile(bench.ctx)
            profile[i] = TableStrategy(i, c.m, bench.prior.K, c.T, table, flags=bench.ctx.sp)
            return bench.value(profile)

        best, count = None, 0
        for _, vals in enumerate_policies(evaluate):
            count += 1
            best = vals[i] if best is None else max(best, vals[i])
        margin = base[i] - best
        reports.append(bench.report(f"nash-exhaustive:agent{i}", margin, nonnegative(margin, bench.exact),
                                    f"{count} policies"))
    return reports


# -- subgame perfection and psi --------------------------------------------------


def verify_subgame(config, kinds: Sequence[str] = DEVIATION_KINDS, triggers: Optional[Sequence[int]] = None,
                   continuation: bool = True) -> list:
    """SP-CAOS checks after scripted single deviations.

    For each scripted deviation: at least two agents' psi fire on every
    history where it was a real departure; once a true flag is delivered
    every other agent plays B and stays silent; and from each resulting
    history no agent gains by a further deviation, flag lies included.
    """
    bench = _as_bench(config, sp=True)
    if not bench.ctx.sp:
        raise ValueError("subgame checks need an SP-CAOS context")
    c = bench.config
    triggers = range(1, c.T + 1) if triggers is None else triggers
    reports = []
    for s in triggers:
        for kind in kinds:
            for a in range(c.m):
                spec = DeviationSpec(kind, a, s)
                reports.extend(_scripted(bench, spec, continuation and s < c.T))
    if continuation:
        comply = caos_profile(bench.ctx)
        for depth in range(0, c.T):
            hists = _merged(enumerate_histories(comply, bench.prior, depth))
            reports.extend(_continuations(bench, hists, f"clean@{depth + 1}", depth + 1))
    return reports


def _scripted(bench: Bench, spec: DeviationSpec, continuation: bool) -> list:
    c = bench.config
    profile = deviation_profile(spec, bench.ctx)
    s = spec.trigger
    fired_min, departures = None, 0
    absorbing_bad, witness = 0, None
    for _, hist in _merged(enumerate_histories(profile, bench.prior, c.T)):
        if _departed(bench, spec, hist):
            departures += 1
            fired = sum(psi(bench.ctx, _prefix_view(v, s)) for v in hist.views)
            fired_min = fired if fired_min is None else min(fired_min, fired)
        bad = _collapse_breaches(bench, hist, spec.agent)
        if bad:
            absorbing_bad += bad
            witness = witness or _describe(hist)
    reports = []
    if spec.kind != "deny-flag":
        # denying on a clean history is indistinguishable from telling the truth
        margin = (fired_min if fired_min is not None else c.m) - 2
        reports.append(bench.report(f"psi-detect:{spec.label}", margin, margin >= 0,
                                    f"{departures} departing histories"))
    reports.append(bench.report(f"collapse-absorbing:{spec.label}", -absorbing_bad, absorbing_bad == 0,
                                counterexample=witness))
    if continuation:
        hists = _merged(enumerate_histories(profile, bench.prior, s))
        reports.extend(_continuations(bench, hists, spec.label, s + 1))
    return reports


def _continuations(bench: Bench, hists: list, tag: str, start: int) -> list:
    """Worst one-shot gain at step ``start``, per deviation kind, over every information set."""
    comply = caos_profile(bench.ctx)
    base = {id(h): bench.value(comply, h) for _, h in hists}
    worst: dict = {}
    # one-shot deviations at every reachable history cover later triggers
    for spec in deviation_library(bench.ctx, trigger=start):
        prof = deviation_profile(spec, bench.ctx)
        dev = {id(h): bench.value(prof, h)[spec.agent] for _, h in hists}
        for cls in information_classes(hists, spec.agent):
            margin = conditional_mean(cls, lambda h: base[id(h)][spec.agent] - dev[id(h)])
            if spec.kind not in worst or margin < worst[spec.kind][0]:
                worst[spec.kind] = (margin, spec.label, _describe(cls[0][1]))
    reports = []
    for kind, (margin, label, where) in sorted(worst.items()):
        reports.append(bench.report(f"subgame:{tag}|{kind}", margin, nonnegative(margin, bench.exact),
                                    f"{label}; {len(hists)} histories", where))
    return reports


def _prefix_view(view, steps: int):
    return type(view)(view.agent, view.m, view.steps[:steps])


def _departed(bench: Bench, spec: DeviationSpec, hist: GlobalHistory) -> bool:
    """Whether the scripted deviation was an observable departure from SP-CAOS on this history."""
    i, s = spec.agent, spec.trigger
    ctx = bench.ctx
    before = _prefix_view(hist.views[i], s - 1)
    rp = ctx.replay(before)
    log = hist.views[i].steps[s - 1]
    if spec.kind == "false-flag":
        return not rp.psi
    if spec.kind == "deny-flag":
        return False
    if not rp.engaged or rp.deviation:
        return False
    if any(f for _, f in log.flags_in):
        return False
    node = bench.solver.node(s, rp.members, rp.state, log.coin)
    # inactive agents send nothing anyway, and their arm is private
    return i in node.chosen


def _collapse_breaches(bench: Bench, hist: GlobalHistory, deviator: int) -> int:
    """Steps after a delivered true flag where a non-deviating agent left B or sent data."""
    start = next((st.t for st in hist.steps if any(msg.flag for msg in st.messages if msg.kind == "DeviationFlag")),
                 None)
    if start is None:
        return 0
    bad = 0
    for i, view in enumerate(hist.views):
        if i == deviator:
            continue
        for s in range(start, len(hist.steps) + 1):
            log = view.steps[s - 1]
            if log.sent_data() or log.arm != bench.ctx._b_action_at(view, s):
                bad += 1
    return bad


# -- OER node properties ---------------------------------------------------------


def property_report(bench: Bench, tag: str = "") -> VerificationReport:
    v = bench.solver.violations
    detail = f"{bench.solver.nodes_checked} nodes checked"
    first = f"{v[0].name} at t={v[0].t} members={v[0].members}: {v[0].detail}" if v else None
    return bench.report(f"oer-properties{tag}", -len(v), not v, detail, first)


# -- regret ------------------------------------------------------------------------


@dataclass(frozen=True)
class RegretSummary:
    baseline: Number  # T * E[mu*]
    value: tuple
    regret: tuple
    regret_max: Number


def regret_summary(bench: Bench, profile) -> RegretSummary:
    T = bench.config.T
    baseline = T * bench.prior.expected_best_mean()
    value = bench.value(profile)
    regret = bench.value(profile, score=pseudo_regret_score)
    vmin = bench.value(profile, score=min_mean_score)[0]
    return RegretSummary(baseline, value, regret, baseline - vmin)


def verify_regret_domination(config) -> list:
    """CAOS regret against the no-stopping profile: per agent when A is symmetric, against Regret_max always."""
    bench = _as_bench(config)
    ex = bench.exact
    caos = regret_summary(bench, caos_profile(bench.ctx))
    full = regret_summary(bench, a_profile(bench.ctx))
    symmetric = bench.solver.algorithm.symmetric
    reports = []
    for i in range(bench.config.m):
        if symmetric:
            margin = full.regret[i] - caos.regret[i]
            reports.append(bench.report(f"regret-vs-A:agent{i}", margin, nonnegative(margin, ex)))
            gap = full.regret_max - full.regret[i]
            reports.append(bench.report(f"regret-max-symmetric:agent{i}", gap, zero(gap, ex)))
        margin = full.regret_max - caos.regret[i]
        reports.append(bench.report(f"regret-vs-max:agent{i}", margin, nonnegative(margin, ex)))
    for tag, summ in (("CAOS", caos), ("A", full)):
        for i in range(bench.config.m):
            gap = summ.baseline - summ.value[i] - summ.regret[i]
            reports.append(bench.report(f"duality:{tag}/agent{i}", gap, zero(gap, ex)))
            above = summ.regret_max - summ.regret[i]
            reports.append(bench.report(f"regret-max-bound:{tag}/agent{i}", above, nonnegative(above, ex)))
    return reports


def victim_scenario(config) -> list:
    """Unravelling under the toy victim algorithm: OER stops everyone at step 1.

    The victim algorithm is a construction for this check, not a published
    algorithm. A symmetric substitute (MAUCB) is evaluated alongside to show
    the group then stays together whenever collaborating pays.
    """
    base = config.config if isinstance(config, Bench) else config
    victim = Bench(MicroConfig(base.name + "-victim", base.rows, base.T, base.m, "VICTIM", base.exact, base.variant))
    ex = victim.exact
    solver = victim.solver
    state = solver.initial_state()
    vb = solver.value_b(state, 1)
    members = frozenset(range(base.m))
    node = solver.node(1, members, state)
    reports = [victim.report("victim:stop-set-empty", -len(node.chosen), not node.chosen,
                             f"chosen={sorted(node.chosen)}")]
    for i in range(base.m):
        gap = node.rho[i] - vb
        reports.append(victim.report(f"victim:oer-equals-B/agent{i}", gap, zero(gap, ex)))
    caos = regret_summary(victim, caos_profile(victim.ctx))
    alone = regret_summary(victim, b_profile(victim.ctx))
    for i in range(base.m):
        gap = caos.regret[i] - alone.regret[i]
        reports.append(victim.report(f"victim:regret-equals-B/agent{i}", gap, zero(gap, ex)))
    full = regret_summary(victim, a_profile(victim.ctx))
    for i in range(base.m):
        margin = full.regret_max - caos.regret[i]
        reports.append(victim.report(f"victim:regret-vs-max/agent{i}", margin, nonnegative(margin, ex)))
    sym = Bench(MicroConfig(base.name + "-symmetric", base.rows, base.T, base.m, "MAUCB", base.exact, base.variant))
    sym_node = sym.solver.node(1, members, sym.solver.initial_state())
    helps = any(v > sym.solver.value_b(sym.solver.initial_state(), 1) for v in
                sym.solver.continuation(1, tuple(sorted(members)), sym.solver.initial_state(), None).values())
    ok = sym_node.chosen == members if helps else True
    reports.append(sym.report("victim:symmetric-no-unravel", len(sym_node.chosen), ok,
                              f"collaboration helps={helps} chosen={sorted(sym_node.chosen)}"))
    reports.append(property_report(victim, ":victim"))
    return reports


# -- formatting ------------------------------------------------------------------------


def _fmt(values) -> str:
    return "(" + ", ".join(f"{float(v):.12g}" for v in values) + ")"


def _describe(hist: GlobalHistory) -> str:
    parts = [f"instance={hist.instance_index}"]
    for st in hist.steps:
        parts.append(f"t{st.t}:a={list(st.actions)} r={list(st.rewards)}")
    return " ".join(parts)


def all_passed(reports: Sequence[VerificationReport]) -> bool:
    return all(r.passed for r in reports)
