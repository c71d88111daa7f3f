"""Transport on a whole network: junction coupling, two solvers, balances.

Two constructions are provided:

* :func:`solve_levelwise` walks the arcs in the order of their distance from
  the sources, so each arc is solved once with its complete inflow;
* :func:`solve_timestepped` marches over windows shorter than the fastest
  arc crossing time, so within a window every inflow is determined by
  states already known. It works on any topology, cycles included.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .arc_solver import (
    ArcProblem,
    ArcSolution,
    SmoothTestFunction,
    _require_smooth,
    balance_terms,
)
from .flow import ArcClock, build_clock
from .geometry import Network, Role, StructureError, natural_sorted, source_distance_partition
from .measure import DEFAULT_LP_CELLS, HybridMeasure, bl_distance, sum_measures, weight_by

WORKERS_ENV = "MEASURENET_MAX_WORKERS"
STEP_FRACTION = 0.9
_VERTEX_CONTINUITY_TOL = 1e-10


class CycleError(StructureError):
    """Level-by-level solution impossible: data reach arcs on a directed cycle."""


def max_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    return min(4, os.cpu_count() or 1)


def _map_ordered(fn, items: Sequence, workers: int | None = None) -> list:
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class Scenario:
    """A network with its initial arc measures and source inflows.

    Missing entries default to zero measures.
    """

    network: Network
    initial: Mapping[str, HybridMeasure] = field(default_factory=dict)
    inflows: Mapping[str, HybridMeasure] = field(default_factory=dict)

    def __post_init__(self):
        net = self.network
        T = net.horizon
        init = dict(self.initial)
        for aid in init:
            if aid not in net.arc_ids:
                raise StructureError(f"initial data given for unknown arc {aid}")
        for aid in net.arc_ids:
            mu = init.setdefault(aid, HybridMeasure.zero((0.0, 1.0)))
            if mu.domain != (0.0, 1.0):
                raise ValueError(f"initial measure on {aid} must live on [0, 1], got {mu.domain}")
        flows = dict(self.inflows)
        for vid in flows:
            if net.roles.get(vid) is not Role.SOURCE:
                raise StructureError(f"inflow given at {vid}, which is not a source vertex")
        for vid in net.sources:
            nu = flows.setdefault(vid, HybridMeasure.zero((0.0, T)))
            if nu.domain != (0.0, T):
                raise ValueError(f"inflow at {vid} must live on [0, {T!r}], got {nu.domain}")
        object.__setattr__(self, "initial", {a: init[a] for a in net.arc_ids})
        object.__setattr__(self, "inflows", {v: flows[v] for v in net.sources})

    @property
    def horizon(self) -> float:
        return self.network.horizon

    def scaled(self, c: float) -> "Scenario":
        return Scenario(
            self.network,
            {a: m.scale(c) for a, m in self.initial.items()},
            {v: m.scale(c) for v, m in self.inflows.items()},
        )

    def combined(self, other: "Scenario", alpha: float = 1.0, beta: float = 1.0) -> "Scenario":
        """``alpha * self + beta * other`` on the same network."""
        if not self.network.same_structure(other.network):
            raise ValueError("scenarios live on different networks")
        return Scenario(
            self.network,
            {a: self.initial[a].scale(alpha).add(other.initial[a].scale(beta)) for a in self.initial},
            {v: self.inflows[v].scale(alpha).add(other.inflows[v].scale(beta)) for v in self.inflows},
        )

    def carries_data(self) -> set[str]:
        """Arcs with nonzero initial data or fed by a nonzero source."""
        out = {a for a, m in self.initial.items() if not m.is_zero()}
        for v, m in self.inflows.items():
            if not m.is_zero():
                out.update(a.id for a in self.network.outgoing(v))
        return out


@dataclass(frozen=True)
class BalanceLedger:
    initial: float
    inflow: float
    terminal: float
    outflow: float

    @property
    def defect(self) -> float:
        return abs(self.terminal + self.outflow - self.initial - self.inflow)

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "inflow": self.inflow,
            "terminal": self.terminal,
            "outflow": self.outflow,
            "defect": self.defect,
        }


@dataclass(frozen=True, eq=False)
class NetworkSolution:
    """Per-arc solutions with their inflows, outflows and the well aggregates."""

    scenario: Scenario
    algorithm: str
    arcs: Mapping[str, ArcSolution]
    inflow: Mapping[str, HybridMeasure]
    outflow: Mapping[str, HybridMeasure]
    terminal: Mapping[str, HybridMeasure]
    wells: Mapping[str, HybridMeasure]

    @property
    def network(self) -> Network:
        return self.scenario.network

    def trace(self, arc_id: str, t: float) -> HybridMeasure:
        if t == self.network.horizon:
            return self.terminal[arc_id]
        return self.arcs[arc_id].trace_space(t)

    @property
    def ledger(self) -> BalanceLedger:
        s = self.scenario
        return BalanceLedger(
            initial=sum(m.total_mass() for m in s.initial.values()),
            inflow=sum(m.total_mass() for m in s.inflows.values()),
            terminal=sum(m.total_mass() for m in self.terminal.values()),
            outflow=sum(m.total_mass() for m in self.wells.values()),
        )


def _clocks(network: Network) -> dict[str, ArcClock]:
    return {a.id: build_clock(a.velocity) for a in network.arcs}


def _arc_inflow(network: Network, arc_id: str, upstream: Mapping[str, HybridMeasure], sources) -> HybridMeasure:
    """Inflow of one arc from its tail vertex, given upstream time measures."""
    arc = network.arc(arc_id)
    sched = network.schedules[arc.tail]
    T = network.horizon
    if network.roles[arc.tail] is Role.SOURCE:
        return weight_by(sources[arc.tail], sched.weight(None, arc_id))
    parts = [weight_by(upstream[k], sched.weight(k, arc_id)) for k in sched.incoming]
    return sum_measures((0.0, T), parts)


def _wells(network: Network, outflow: Mapping[str, HybridMeasure]) -> dict[str, HybridMeasure]:
    T = network.horizon
    return {w: sum_measures((0.0, T), [outflow[a.id] for a in network.incoming(w)]) for w in network.wells}


def _reachable_from(network: Network, arcs: set[str]) -> set[str]:
    seen = set(arcs)
    stack = list(arcs)
    while stack:
        a = network.arc(stack.pop())
        for b in network.outgoing(a.head):
            if b.id not in seen:
                seen.add(b.id)
                stack.append(b.id)
    return seen


def levelwise_applicable(scenario: Scenario) -> bool:
    net = scenario.network
    if not net.sources:
        return False
    part = source_distance_partition(net)
    return not (part.unresolved & _reachable_from(net, scenario.carries_data()))


def solve_levelwise(scenario: Scenario, workers: int | None = None) -> NetworkSolution:
    """Solve arc levels in order of their distance from the sources."""
    net = scenario.network
    T = net.horizon
    part = source_distance_partition(net)
    blocked = part.unresolved & _reachable_from(net, scenario.carries_data())
    if blocked:
        raise CycleError(
            "arcs " + ", ".join(natural_sorted(blocked)) + " lie on or below a directed cycle reached by data;"
            " use the time-stepping solver"
        )
    clocks = _clocks(net)
    sols: dict[str, ArcSolution] = {}
    inflow: dict[str, HybridMeasure] = {}
    outflow: dict[str, HybridMeasure] = {}
    zero_t = HybridMeasure.zero((0.0, T))
    for aid in part.unresolved:
        inflow[aid] = zero_t
        sols[aid] = ArcSolution(ArcProblem(clocks[aid], scenario.initial[aid], zero_t, T))
        outflow[aid] = zero_t

    def solve(aid: str):
        nu0 = _arc_inflow(net, aid, outflow, scenario.inflows)
        sol = ArcSolution(ArcProblem(clocks[aid], scenario.initial[aid], nu0, T))
        return nu0, sol, sol.outflow(), sol.terminal()

    terminal: dict[str, HybridMeasure] = {aid: sols[aid].terminal() for aid in part.unresolved}
    for level in part.levels:
        ids = natural_sorted(level)
        for aid, (nu0, sol, nu1, mu_T) in zip(ids, _map_ordered(solve, ids, workers)):
            inflow[aid], sols[aid], outflow[aid], terminal[aid] = nu0, sol, nu1, mu_T
    order = net.arc_ids
    return NetworkSolution(
        scenario,
        "levelwise",
        {a: sols[a] for a in order},
        {a: inflow[a] for a in order},
        {a: outflow[a] for a in order},
        {a: terminal[a] for a in order},
        _wells(net, outflow),
    )


def default_step(network: Network) -> float:
    return STEP_FRACTION * min(build_clock(a.velocity).total for a in network.arcs)


def time_windows(T: float, step: float) -> np.ndarray:
    """Window ends ``0 = t_0 < t_1 < ... < t_L = T`` with spacing ``step``.

    A last window shorter than ``1e-9 * step`` is merged into its
    predecessor.
    """
    n = math.ceil(T / step)
    ends = np.minimum(np.arange(n + 1) * step, T)
    ends[-1] = T
    if n >= 2 and ends[-1] - ends[-2] < 1e-9 * step:
        ends = np.delete(ends, -2)
    return ends


def solve_timestepped(scenario: Scenario, t_step: float | None = None, workers: int | None = None) -> NetworkSolution:
    """March over time windows shorter than the fastest arc crossing.

    Within a window no mass crosses a whole arc, so each arc's outflow is
    fixed by its state at the window start. Those outflows, routed through
    the schedules together with the source inflows, give every inflow of the
    window; each arc then restarts from its space trace at the window end.
    Inflows are taken on right-open windows ``[t_{l-1}, t_l)``, the last one
    closed at ``T``, which matches the outflow convention of the arc solver.
    """
    net = scenario.network
    T = net.horizon
    clocks = _clocks(net)
    limit = min(c.total for c in clocks.values())
    step = STEP_FRACTION * limit if t_step is None else float(t_step)
    if not step > 0:
        raise ValueError(f"time step must be positive, got {step!r}")
    if step >= limit:
        raise ValueError(f"time step {step!r} must be below the fastest arc crossing time {limit!r}")
    ends = time_windows(T, step)
    ids = net.arc_ids
    state = dict(scenario.initial)
    window_out: dict[str, list[HybridMeasure]] = {a: [] for a in ids}
    window_in: dict[str, list[HybridMeasure]] = {a: [] for a in ids}
    dom = (0.0, T)

    for l in range(1, ends.size):
        a, b = float(ends[l - 1]), float(ends[l])
        dt = b - a
        last = l == ends.size - 1
        zero_rel = HybridMeasure.zero((0.0, dt))

        def exits(aid: str) -> HybridMeasure:
            sol = ArcSolution(ArcProblem(clocks[aid], state[aid], zero_rel, dt))
            return sol.outflow().shifted(a, dom)

        outs = dict(zip(ids, _map_ordered(exits, ids, workers)))
        srcs = {v: m.restrict(a, b, closed_left=True, closed_right=last) for v, m in scenario.inflows.items()}
        ins = {aid: _arc_inflow(net, aid, outs, srcs) for aid in ids}

        def advance(aid: str) -> HybridMeasure:
            rel = ins[aid].restrict(a, b, closed_left=True, closed_right=last).shifted(-a, (0.0, dt))
            return ArcSolution(ArcProblem(clocks[aid], state[aid], rel, dt)).trace_space(dt)

        new_state = dict(zip(ids, _map_ordered(advance, ids, workers)))
        for aid in ids:
            window_out[aid].append(outs[aid])
            window_in[aid].append(ins[aid])
        state = new_state

    outflow = {aid: sum_measures(dom, window_out[aid]) for aid in ids}
    inflow = {aid: sum_measures(dom, window_in[aid]) for aid in ids}
    sols = {aid: ArcSolution(ArcProblem(clocks[aid], scenario.initial[aid], inflow[aid], T)) for aid in ids}
    return NetworkSolution(scenario, "timestepped", sols, inflow, outflow, state, _wells(net, outflow))


def solve(scenario: Scenario, algorithm: str = "auto", t_step: float | None = None) -> NetworkSolution:
    """Dispatch to a solver; ``auto`` prefers the level-by-level one when it applies."""
    if algorithm == "levelwise":
        return solve_levelwise(scenario)
    if algorithm == "timestepped":
        return solve_timestepped(scenario, t_step)
    if algorithm != "auto":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if levelwise_applicable(scenario):
        return solve_levelwise(scenario)
    return solve_timestepped(scenario, t_step)


# -- global checks ------------------------------------------------------------------

NetworkTestFunction = Mapping[str, SmoothTestFunction]


def check_vertex_continuity(network: Network, phi: NetworkTestFunction, samples: int = 7) -> None:
    """Reject per-arc test functions that disagree at a shared vertex."""
    for aid in network.arc_ids:
        if aid not in phi:
            raise ValueError(f"test function missing on arc {aid}")
        _require_smooth([phi[aid]])
    t = np.linspace(0.0, network.horizon, samples)
    for v in network.vertex_ids:
        values = [phi[a.id].value(1.0, t) for a in network.incoming(v)]
        values += [phi[a.id].value(0.0, t) for a in network.outgoing(v)]
        for other in values[1:]:
            if np.max(np.abs(np.asarray(other) - np.asarray(values[0]))) > _VERTEX_CONTINUITY_TOL:
                raise ValueError(f"test function is discontinuous at vertex {v}")


def global_balance_terms(solution: NetworkSolution, phis: Iterable[NetworkTestFunction]):
    """Both sides of the network-wide weak balance for each test function."""
    phis = list(phis)
    net = solution.network
    for phi in phis:
        check_vertex_continuity(net, phi)
    n = len(phis)
    lhs = np.zeros(n)
    rhs = np.zeros(n)
    scen = solution.scenario
    T = net.horizon

    def pair_time(mu: HybridMeasure, i: int, arc_id: str, x: float) -> float:
        return mu.pair(lambda s: phis[i][arc_id].value(x, s))

    for aid in net.arc_ids:
        sol = solution.arcs[aid]
        l_arc, r_arc = balance_terms(sol, [phi[aid] for phi in phis])
        lhs += l_arc
        # keep the terminal/initial parts; the boundary parts are replaced by well/source terms
        for i, phi in enumerate(phis):
            rhs[i] += solution.terminal[aid].pair(lambda x: phi[aid].value(x, T))
            rhs[i] -= scen.initial[aid].pair(lambda x: phi[aid].value(x, 0.0))
    for i in range(n):
        for w in net.wells:
            aid = net.incoming(w)[0].id
            rhs[i] += pair_time(solution.wells[w], i, aid, 1.0)
        for v in net.sources:
            aid = net.outgoing(v)[0].id
            rhs[i] -= pair_time(scen.inflows[v], i, aid, 0.0)
    return lhs, rhs


def global_balance(solution: NetworkSolution, phis: Iterable[NetworkTestFunction]) -> float:
    """Largest network-wide weak-balance residual over the family."""
    lhs, rhs = global_balance_terms(solution, phis)
    return float(np.max(np.abs(lhs - rhs), initial=0.0))


def network_continuity(
    a, b, cells: int = DEFAULT_LP_CELLS, solver: Callable[[Scenario], NetworkSolution] | None = None
) -> tuple[float, float]:
    """Output and input BL distances of two scenarios on the same network.

    ``a`` and ``b`` may be scenarios (solved with ``solver``, default
    :func:`solve`) or solutions.
    """
    solver = solver or solve
    sa = a if isinstance(a, NetworkSolution) else solver(a)
    sb = b if isinstance(b, NetworkSolution) else solver(b)
    net = sa.network
    if not net.same_structure(sb.network):
        raise ValueError("continuity estimate needs both scenarios on the same network")
    lhs = sum(bl_distance(sa.terminal[j], sb.terminal[j], cells) for j in net.arc_ids)
    lhs += sum(bl_distance(sa.wells[w], sb.wells[w], cells) for w in net.wells)
    ia, ib = sa.scenario, sb.scenario
    rhs = sum(bl_distance(ia.initial[j], ib.initial[j], cells) for j in net.arc_ids)
    rhs += sum(bl_distance(ia.inflows[v], ib.inflows[v], cells) for v in net.sources)
    return float(lhs), float(rhs)


def junction_defect(solution: NetworkSolution, t: float) -> float:
    """Largest in/out mass mismatch on ``[0, t]`` over the internal vertices."""
    net = solution.network
    worst = 0.0
    for v in net.vertices_with(Role.INTERNAL):
        into = sum(solution.outflow[a.id].masses_in(0.0, t) for a in net.incoming(v))
        out = sum(solution.inflow[a.id].masses_in(0.0, t) for a in net.outgoing(v))
        worst = max(worst, abs(into - out))
    return worst


def polynomial_family(network: Network, degree: int = 3, seed: int = 0, bumps: bool = True) -> list[dict]:
    """C1 test functions on the network that are continuous at every vertex.

    The family holds the constant one, vertex-interpolating functions
    ``((1 - x) w_tail + x w_head) t^b`` with seeded vertex weights, and
    interior bumps ``x (1 - x) x^a t^b`` that vanish at both ends of an
    arc. All are polynomials of degree at most ``degree`` in ``x`` and in
    ``t``.
    """
    rng = np.random.default_rng(seed)
    ids = network.arc_ids
    family = [{aid: SmoothTestFunction.constant(1.0) for aid in ids}]
    for b in range(degree + 1):
        w = dict(zip(network.vertex_ids, rng.uniform(-1.0, 1.0, len(network.vertex_ids))))
        phi = {}
        for arc in network.arcs:
            c = np.zeros((2, b + 1))
            c[0, b] = w[arc.tail]
            c[1, b] = w[arc.head] - w[arc.tail]
            phi[arc.id] = SmoothTestFunction.polynomial(c)
        family.append(phi)
    if bumps:
        for a in range(max(0, degree - 1)):
            for b in range(degree + 1):
                phi = {}
                for arc in network.arcs:
                    c = np.zeros((a + 3, b + 1))
                    c[a + 1, b] = 1.0  # x^(a+1) - x^(a+2)
                    c[a + 2, b] = -1.0
                    phi[arc.id] = SmoothTestFunction.polynomial(c)
                family.append(phi)
    return family
