"""Network topology, vertex roles and time-dependent distribution schedules."""

from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .flow import VelocityField
from .measure import StepWeight

ROW_SUM_TOL = 1e-12
_HORIZON_SLACK = 1e-12


class StructureError(ValueError):
    """The vertex/arc data do not describe a valid network."""


class ScheduleError(ValueError):
    """A distribution schedule is malformed or does not fit its vertex."""


class DomainError(ValueError):
    """A time argument lies outside ``[0, T]``."""


class NoSourcesError(StructureError):
    """Level partition requested on a network without source vertices."""


class Role(str, enum.Enum):
    INTERNAL = "internal"
    SOURCE = "source"
    WELL = "well"


def natural_key(name: str):
    """Sort key that orders ``E2`` before ``E10``."""
    return [(0, int(tok), "") if tok.isdigit() else (1, 0, tok) for tok in re.split(r"(\d+)", str(name)) if tok]


def natural_sorted(names: Iterable[str]) -> list[str]:
    return sorted(names, key=natural_key)


@dataclass(frozen=True)
class Vertex:
    id: str
    role: Role


@dataclass(frozen=True)
class Arc:
    """Oriented arc ``tail -> head`` parametrised by ``[0, 1]``."""

    id: str
    tail: str
    head: str
    velocity: VelocityField


@dataclass(frozen=True, eq=False)
class DistributionSchedule:
    """Piecewise-constant routing fractions at one vertex.

    ``matrices[l]`` applies on ``[breakpoints[l], breakpoints[l+1])``; the
    last piece is closed at ``T``. Rows follow ``incoming`` and columns
    follow ``outgoing``. At a source there are no incoming arcs and each
    matrix has a single row.
    """

    vertex: str
    incoming: tuple[str, ...]
    outgoing: tuple[str, ...]
    breakpoints: np.ndarray
    matrices: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float)
        mats = np.array(self.matrices, dtype=float)
        rows = max(1, len(self.incoming))
        cols = len(self.outgoing)
        where = f"schedule at {self.vertex}"
        if bp.ndim != 1 or bp.size < 2:
            raise ScheduleError(f"{where}: need at least two breakpoints")
        if np.any(np.diff(bp) <= 0):
            raise ScheduleError(f"{where}: breakpoints must be strictly increasing")
        if bp[0] != 0.0:
            raise ScheduleError(f"{where}: first breakpoint must be 0, got {bp[0]!r}")
        if mats.ndim == 2 and rows == 1:
            mats = mats[:, None, :]
        if mats.shape != (bp.size - 1, rows, cols):
            raise ScheduleError(
                f"{where}: expected {bp.size - 1} piece(s) of shape {rows}x{cols}, got {tuple(mats.shape)}"
            )
        if not np.all(np.isfinite(mats)) or np.any(mats < 0) or np.any(mats > 1):
            raise ScheduleError(f"{where}: entries must lie in [0, 1]")
        sums = mats.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            piece, row = (int(i) for i in bad[0])
            raise ScheduleError(f"row {row + 1} of {where} (piece {piece + 1}) sums to {sums[piece, row]:.15g}")
        bp.setflags(write=False)
        mats.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "incoming", tuple(self.incoming))
        object.__setattr__(self, "outgoing", tuple(self.outgoing))

    @classmethod
    def constant(cls, vertex, incoming, outgoing, matrix, horizon: float) -> "DistributionSchedule":
        m = np.asarray(matrix, dtype=float)
        return cls(vertex, tuple(incoming), tuple(outgoing), np.array([0.0, horizon]), m[None, ...])

    @property
    def is_source(self) -> bool:
        return not self.incoming

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    def piece_index(self, t: float) -> int:
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"t={t!r} outside [0, {self.horizon!r}]")
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(k, self.matrices.shape[0] - 1)

    def at(self, t: float) -> np.ndarray:
        """The routing matrix (or vector at a source) in force at time ``t``."""
        mat = self.matrices[self.piece_index(t)]
        return mat[0] if self.is_source else mat

    def weight(self, incoming: str | None, outgoing: str) -> StepWeight:
        """Time profile of one entry as a step function."""
        row = 0 if incoming is None else self.incoming.index(incoming)
        col = self.outgoing.index(outgoing)
        return StepWeight(self.breakpoints, self.matrices[:, row, col])


def vertex_roles(vertex_ids: Sequence[str], arcs: Sequence[Arc]) -> dict[str, Role]:
    """Role of each vertex from its in/out degrees."""
    d_in = {v: 0 for v in vertex_ids}
    d_out = {v: 0 for v in vertex_ids}
    for a in arcs:
        for end in (a.tail, a.head):
            if end not in d_in:
                raise StructureError(f"arc {a.id} references unknown vertex {end}")
        d_out[a.tail] += 1
        d_in[a.head] += 1
    roles = {}
    for v in vertex_ids:
        if d_in[v] + d_out[v] == 0:
            raise StructureError(f"vertex {v} is isolated (degree 0)")
        if d_in[v] and d_out[v]:
            roles[v] = Role.INTERNAL
        elif d_out[v]:
            roles[v] = Role.SOURCE
        else:
            roles[v] = Role.WELL
    return roles


def check_connected(vertex_ids: Sequence[str], arcs: Sequence[Arc]) -> None:
    adj: dict[str, set[str]] = {v: set() for v in vertex_ids}
    for a in arcs:
        adj[a.tail].add(a.head)
        adj[a.head].add(a.tail)
    start = vertex_ids[0]
    seen = {start}
    queue = deque([start])
    while queue:
        for w in adj[queue.popleft()]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    missing = [v for v in vertex_ids if v not in seen]
    if missing:
        raise StructureError(f"network is not connected: {', '.join(natural_sorted(missing))} unreachable from {start}")


@dataclass(frozen=True, eq=False)
class Network:
    """Vertices, arcs, routing schedules and the time horizon.

    Vertices with a single outgoing arc need no schedule; they route
    everything (fraction 1) into that arc. Every other source or internal
    vertex must have one.
    """

    vertex_ids: tuple[str, ...]
    arcs: tuple[Arc, ...]
    horizon: float
    schedules: Mapping[str, DistributionSchedule] = field(default_factory=dict)
    roles: Mapping[str, Role] = field(init=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise StructureError(f"horizon must be positive, got {self.horizon!r}")
        vids = tuple(natural_sorted(self.vertex_ids))
        if len(set(vids)) != len(vids):
            raise StructureError("duplicate vertex id")
        arcs = tuple(sorted(self.arcs, key=lambda a: natural_key(a.id)))
        if len(set(a.id for a in arcs)) != len(arcs):
            raise StructureError("duplicate arc id")
        if not vids:
            raise StructureError("network has no vertices")
        roles = vertex_roles(vids, arcs)
        check_connected(vids, arcs)
        object.__setattr__(self, "vertex_ids", vids)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "roles", dict(roles))
        object.__setattr__(self, "schedules", self._complete_schedules(dict(self.schedules)))

    def _complete_schedules(self, given: dict) -> dict:
        out = {}
        for v, sched in given.items():
            if v not in self.roles:
                raise ScheduleError(f"schedule given for unknown vertex {v}")
            if self.roles[v] is Role.WELL:
                raise ScheduleError(f"vertex {v} is a well and takes no schedule")
        for v in self.vertex_ids:
            if self.roles[v] is Role.WELL:
                continue
            ins = tuple(a.id for a in self.incoming(v))
            outs = tuple(a.id for a in self.outgoing(v))
            sched = given.get(v)
            if sched is None:
                if len(outs) != 1:
                    raise ScheduleError(f"vertex {v} has {len(outs)} outgoing arcs and needs a schedule")
                rows = max(1, len(ins))
                sched = DistributionSchedule.constant(v, ins, outs, np.ones((rows, 1)), self.horizon)
            if set(sched.incoming) != set(ins) or len(sched.incoming) != len(ins):
                raise ScheduleError(
                    f"schedule at {v}: incoming arcs {list(sched.incoming)} do not match {list(ins)}"
                )
            if set(sched.outgoing) != set(outs) or len(sched.outgoing) != len(outs):
                raise ScheduleError(
                    f"schedule at {v}: outgoing arcs {list(sched.outgoing)} do not match {list(outs)}"
                )
            if abs(sched.horizon - self.horizon) > _HORIZON_SLACK * max(1.0, self.horizon):
                raise ScheduleError(f"schedule at {v} ends at {sched.horizon!r}, horizon is {self.horizon!r}")
            out[v] = sched
        return out

    @property
    def arc_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.arcs)

    def arc(self, arc_id: str) -> Arc:
        for a in self.arcs:
            if a.id == arc_id:
                return a
        raise KeyError(arc_id)

    def incoming(self, vertex: str) -> list[Arc]:
        return [a for a in self.arcs if a.head == vertex]

    def outgoing(self, vertex: str) -> list[Arc]:
        return [a for a in self.arcs if a.tail == vertex]

    def vertices(self) -> list[Vertex]:
        return [Vertex(v, self.roles[v]) for v in self.vertex_ids]

    def vertices_with(self, role: Role) -> list[str]:
        return [v for v in self.vertex_ids if self.roles[v] is role]

    @property
    def sources(self) -> list[str]:
        return self.vertices_with(Role.SOURCE)

    @property
    def wells(self) -> list[str]:
        return self.vertices_with(Role.WELL)

    def same_structure(self, other: "Network") -> bool:
        if self.vertex_ids != other.vertex_ids or self.horizon != other.horizon:
            return False
        if [(a.id, a.tail, a.head, a.velocity) for a in self.arcs] != [
            (a.id, a.tail, a.head, a.velocity) for a in other.arcs
        ]:
            return False
        for v, s in self.schedules.items():
            o = other.schedules.get(v)
            if o is None or s.incoming != o.incoming or s.outgoing != o.outgoing:
                return False
            if not (np.array_equal(s.breakpoints, o.breakpoints) and np.array_equal(s.matrices, o.matrices)):
                return False
        return True


def classify_vertexes(network: Network) -> dict[str, Role]:
    """Role of every vertex (recomputed from the in/out degrees)."""
    return vertex_roles(network.vertex_ids, network.arcs)


@dataclass(frozen=True)
class Partition:
    """Arc levels by distance from the sources, plus arcs no level reaches."""

    levels: tuple[frozenset, ...]
    unresolved: frozenset

    def level_of(self, arc_id: str) -> int | None:
        for m, level in enumerate(self.levels):
            if arc_id in level:
                return m
        return None


def source_distance_partition(network: Network) -> Partition:
    """Split the arcs into levels that can be solved one after another.

    Level 0 holds the arcs leaving a source. An arc whose tail is internal
    gets level ``1 + max`` over the levels of the arcs entering its tail, so
    all of its inflow is known once the earlier levels are solved. Arcs on a
    directed cycle, or downstream of one, never get a level and are returned
    in ``unresolved``.
    """
    if not network.sources:
        raise NoSourcesError("network has no source vertices; use the time-stepping solver")
    level: dict[str, int] = {}
    pending = {a.id: a for a in network.arcs}
    changed = True
    while changed:
        changed = False
        for aid in natural_sorted(pending):
            a = pending[aid]
            if network.roles[a.tail] is Role.SOURCE:
                level[aid] = 0
            else:
                feeders = [b.id for b in network.incoming(a.tail)]
                if not all(f in level for f in feeders):
                    continue
                level[aid] = 1 + max(level[f] for f in feeders)
            del pending[aid]
            changed = True
    depth = 1 + max(level.values(), default=-1)
    levels = tuple(frozenset(a for a, m in level.items() if m == k) for k in range(depth))
    return Partition(levels, frozenset(pending))


def evaluate_schedule(network: Network, vertex: str, t: float) -> np.ndarray:
    """Routing matrix at an internal vertex, or routing vector at a source."""
    if not (0.0 <= t <= network.horizon):
        raise DomainError(f"t={t!r} outside [0, {network.horizon!r}]")
    if vertex not in network.schedules:
        raise ScheduleError(f"vertex {vertex} has no schedule (role {network.roles.get(vertex)})")
    return network.schedules[vertex].at(t)
