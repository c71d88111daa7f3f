"""Scenario files: a YAML document describing one network and its data.

Layout::

    horizon: 4.0
    vertices: [V1, V2, V3, V4]
    arcs:
      - {id: E1, tail: V1, head: V2, velocity: {constant: 1.0}}
      - {id: E2, tail: V2, head: V3, velocity: {affine: [1.0, 0.5]}}
      - {id: E3, tail: V2, head: V4, velocity: {samples: [[0, 1], [1, 2]]}}
    initial:
      E1: {atoms: [[0.3, 1.0]], density: [[0.0, 0.5, 2.0]]}
    inflows:
      V1: {atoms: [[0.5, 1.0]]}
    schedules:
      V2:
        incoming: [E1]
        outgoing: [E2, E3]
        breakpoints: [0, 4]          # optional, defaults to [0, horizon]
        matrices: [[[0.3, 0.7]]]     # one row-stochastic matrix per piece
    outputs:
      trace_times: [2.0]
      check_balance: true
      distance_pairs: [[omega:V3, omega:V4]]

A source schedule uses ``vectors`` (one row per piece) instead of
``matrices``; ``matrix`` / ``vector`` are shorthands for a single piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..flow import VelocityField
from ..geometry import Arc, DistributionSchedule, Network, Role, check_connected, natural_sorted, vertex_roles
from ..measure import HybridMeasure
from ..network_solver import Scenario

MEASURE_REF_KINDS = ("trace", "terminal", "initial", "inflow", "outflow", "omega", "source")


class ScenarioError(ValueError):
    """Invalid scenario file, with the offending field and line when known."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None, source: str | None = None):
        self.message, self.path, self.line, self.source = message, tuple(path), line, source
        where = source or "<scenario>"
        if line is not None:
            where += f":{line}"
        fld = ".".join(str(p) for p in path)
        super().__init__(f"{where}: {fld + ': ' if fld else ''}{message}")


@dataclass(frozen=True)
class OutputRequest:
    trace_times: tuple[float, ...] = ()
    check_balance: bool = False
    distance_pairs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True, eq=False)
class ScenarioFile:
    scenario: Scenario
    outputs: OutputRequest = field(default_factory=OutputRequest)
    source: str | None = None


def _line_of(root: yaml.Node | None, path: tuple) -> int | None:
    """1-based line of the node at ``path`` in a composed YAML tree (deepest match)."""
    node, line = root, None
    if node is not None:
        line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and 0 <= key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
        if node is None:
            break
    return line


class _Reader:
    def __init__(self, root, source):
        self.root, self.source = root, source

    def fail(self, message, *path):
        raise ScenarioError(message, path, _line_of(self.root, path), self.source)

    def number(self, value, *path, positive=False, nonneg=False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {value!r}", *path)
        x = float(value)
        if not math.isfinite(x):
            self.fail(f"expected a finite number, got {value!r}", *path)
        if positive and not x > 0:
            self.fail(f"must be positive, got {value!r}", *path)
        if nonneg and x < 0:
            self.fail(f"must be non-negative, got {value!r}", *path)
        return x

    def mapping(self, value, *path) -> dict:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail(f"expected a mapping, got {type(value).__name__}", *path)
        return value

    def sequence(self, value, *path) -> list:
        if value is None:
            return []
        if not isinstance(value, list):
            self.fail(f"expected a list, got {type(value).__name__}", *path)
        return value

    def rows(self, value, width, *path) -> list[list[float]]:
        out = []
        for i, row in enumerate(self.sequence(value, *path)):
            row = self.sequence(row, *path, i)
            if len(row) != width:
                self.fail(f"expected {width} numbers, got {len(row)}", *path, i)
            out.append([self.number(x, *path, i, k) for k, x in enumerate(row)])
        return out

    def ident(self, value, *path) -> str:
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            self.fail(f"expected an identifier, got {value!r}", *path)
        return str(value)


def _velocity(r: _Reader, entry, *path) -> VelocityField:
    entry = r.mapping(entry, *path)
    if len(entry) != 1:
        r.fail("velocity needs exactly one of: constant, affine, samples", *path)
    (kind, value), = entry.items()
    try:
        if kind == "constant":
            return VelocityField.constant(r.number(value, *path, kind, positive=True))
        if kind == "affine":
            pair = r.sequence(value, *path, kind)
            if len(pair) != 2:
                r.fail("affine velocity takes [a, b] for v(x) = a + b x", *path, kind)
            return VelocityField.affine(r.number(pair[0], *path, kind, 0), r.number(pair[1], *path, kind, 1))
        if kind == "samples":
            return VelocityField.samples(r.rows(value, 2, *path, kind))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        r.fail(str(exc), *path, kind)
    r.fail(f"unknown velocity kind {kind!r}", *path)


def _measure(r: _Reader, entry, domain, *path) -> HybridMeasure:
    entry = r.mapping(entry, *path)
    unknown = set(entry) - {"atoms", "density"}
    if unknown:
        r.fail(f"unknown key(s) {sorted(unknown)}; expected atoms and/or density", *path)
    atoms = r.rows(entry.get("atoms"), 2, *path, "atoms")
    density = r.rows(entry.get("density"), 3, *path, "density")
    lo, hi = domain
    for i, (x, m) in enumerate(atoms):
        if not lo <= x <= hi:
            r.fail(f"atom position {x!r} outside [{lo!r}, {hi!r}]", *path, "atoms", i)
        if m <= 0:
            r.fail(f"atom mass must be positive, got {m!r}", *path, "atoms", i)
    for i, (a, b, c) in enumerate(density):
        if not (lo <= a < b <= hi):
            r.fail(f"density piece [{a!r}, {b!r}] must satisfy {lo!r} <= lo < hi <= {hi!r}", *path, "density", i)
        if c < 0:
            r.fail(f"density value must be non-negative, got {c!r}", *path, "density", i)
    return HybridMeasure(domain, atoms, density)


def _schedule(r: _Reader, vid, entry, network_arcs, T, is_source, *path) -> DistributionSchedule:
    entry = r.mapping(entry, *path)
    ins = [a.id for a in network_arcs if a.head == vid]
    outs = [a.id for a in network_arcs if a.tail == vid]
    incoming = [r.ident(x, *path, "incoming", i) for i, x in enumerate(r.sequence(entry.get("incoming"), *path, "incoming"))]
    outgoing = [r.ident(x, *path, "outgoing", i) for i, x in enumerate(r.sequence(entry.get("outgoing"), *path, "outgoing"))]
    incoming = incoming or natural_sorted(ins)
    outgoing = outgoing or natural_sorted(outs)
    if is_source and incoming:
        r.fail(f"{vid} is a source and has no incoming arcs", *path, "incoming")
    if sorted(incoming) != sorted(ins):
        r.fail(f"incoming arcs {incoming} do not match the network ({natural_sorted(ins)})", *path, "incoming")
    if sorted(outgoing) != sorted(outs):
        r.fail(f"outgoing arcs {outgoing} do not match the network ({natural_sorted(outs)})", *path, "outgoing")
    bp = entry.get("breakpoints")
    breakpoints = [0.0, T] if bp is None else [r.number(x, *path, "breakpoints", i) for i, x in enumerate(r.sequence(bp, *path, "breakpoints"))]
    if len(breakpoints) < 2:
        r.fail("need at least two breakpoints", *path, "breakpoints")
    if breakpoints[0] != 0.0 or breakpoints[-1] != T:
        r.fail(f"breakpoints must run from 0 to the horizon {T!r}", *path, "breakpoints")
    cols = len(outgoing)
    if is_source:
        keys = ("vectors", "vector")
    else:
        keys = ("matrices", "matrix")
    present = [k for k in keys if k in entry]
    if len(present) != 1:
        r.fail(f"give exactly one of {keys[0]} or {keys[1]}", *path)
    key = present[0]
    if key == keys[1]:
        pieces_raw = [entry[key]]
    else:
        pieces_raw = r.sequence(entry[key], *path, key)
    if len(pieces_raw) != len(breakpoints) - 1:
        r.fail(f"{len(breakpoints) - 1} piece(s) expected, got {len(pieces_raw)}", *path, key)
    pieces = []
    for l, raw in enumerate(pieces_raw):
        sub = (*path, key) if key == keys[1] else (*path, key, l)
        if is_source:
            row = r.sequence(raw, *sub)
            if len(row) != cols:
                r.fail(f"expected {cols} fractions, got {len(row)}", *sub)
            mat = [[r.number(x, *sub, k) for k, x in enumerate(row)]]
        else:
            mat = r.rows(raw, cols, *sub)
            if len(mat) != len(incoming):
                r.fail(f"expected {len(incoming)} row(s), got {len(mat)}", *sub)
        arr = np.array(mat)
        for i, row in enumerate(arr):
            if np.any(row < 0) or np.any(row > 1):
                r.fail(f"row {i + 1} of schedule at {vid} has entries outside [0, 1]", *sub, i)
            if abs(row.sum() - 1.0) > 1e-12:
                r.fail(f"row {i + 1} of schedule at {vid} sums to {row.sum():.15g}", *sub, i)
        pieces.append(arr)
    try:
        return DistributionSchedule(vid, tuple(incoming), tuple(outgoing), np.array(breakpoints), np.array(pieces))
    except ValueError as exc:
        r.fail(str(exc), *path)


def _outputs(r: _Reader, entry, T) -> OutputRequest:
    entry = r.mapping(entry, "outputs")
    unknown = set(entry) - {"trace_times", "check_balance", "distance_pairs"}
    if unknown:
        r.fail(f"unknown key(s) {sorted(unknown)}", "outputs")
    times = []
    for i, t in enumerate(r.sequence(entry.get("trace_times"), "outputs", "trace_times")):
        t = r.number(t, "outputs", "trace_times", i, nonneg=True)
        if t > T:
            r.fail(f"trace time {t!r} beyond the horizon {T!r}", "outputs", "trace_times", i)
        times.append(t)
    check = entry.get("check_balance", False)
    if not isinstance(check, bool):
        r.fail("expected true or false", "outputs", "check_balance")
    pairs = []
    for i, pair in enumerate(r.sequence(entry.get("distance_pairs"), "outputs", "distance_pairs")):
        pair = r.sequence(pair, "outputs", "distance_pairs", i)
        if len(pair) != 2 or not all(isinstance(p, str) for p in pair):
            r.fail("a distance pair is two measure references like trace:E1@2.0", "outputs", "distance_pairs", i)
        for k, ref in enumerate(pair):
            try:
                parse_ref(ref)
            except ValueError as exc:
                r.fail(str(exc), "outputs", "distance_pairs", i, k)
        pairs.append((pair[0], pair[1]))
    return OutputRequest(tuple(times), check, tuple(pairs))


def parse_ref(ref: str) -> tuple[str, str, float | None]:
    """Split ``kind:name[@time]``; only ``trace`` refs carry a time."""
    kind, sep, rest = ref.partition(":")
    if not sep or kind not in MEASURE_REF_KINDS or not rest:
        raise ValueError(f"bad measure reference {ref!r}; use one of {', '.join(k + ':<id>' for k in MEASURE_REF_KINDS)}")
    if kind == "trace":
        name, at, t = rest.partition("@")
        if not at:
            raise ValueError(f"trace reference {ref!r} needs a time, as in trace:E1@2.0")
        try:
            return kind, name, float(t)
        except ValueError:
            raise ValueError(f"bad time in {ref!r}") from None
    return kind, rest, None


def load_scenario(data: Any, root: yaml.Node | None = None, source: str | None = None) -> ScenarioFile:
    """Validate a parsed YAML document and build the scenario."""
    r = _Reader(root, source)
    data = r.mapping(data)
    known = {"horizon", "vertices", "arcs", "initial", "inflows", "schedules", "outputs"}
    unknown = set(data) - known
    if unknown:
        r.fail(f"unknown section(s) {sorted(unknown)}")
    if "horizon" not in data:
        r.fail("missing section 'horizon'")
    T = r.number(data["horizon"], "horizon", positive=True)
    vertices = [r.ident(v, "vertices", i) for i, v in enumerate(r.sequence(data.get("vertices"), "vertices"))]
    if not vertices:
        r.fail("no vertices", "vertices")
    if len(set(vertices)) != len(vertices):
        r.fail("duplicate vertex id", "vertices")
    arcs = []
    for i, entry in enumerate(r.sequence(data.get("arcs"), "arcs")):
        entry = r.mapping(entry, "arcs", i)
        for key in ("id", "tail", "head", "velocity"):
            if key not in entry:
                r.fail(f"arc needs '{key}'", "arcs", i)
        aid = r.ident(entry["id"], "arcs", i, "id")
        tail = r.ident(entry["tail"], "arcs", i, "tail")
        head = r.ident(entry["head"], "arcs", i, "head")
        for end, key in ((tail, "tail"), (head, "head")):
            if end not in vertices:
                r.fail(f"unknown vertex {end}", "arcs", i, key)
        arcs.append(Arc(aid, tail, head, _velocity(r, entry["velocity"], "arcs", i, "velocity")))
    if not arcs:
        r.fail("no arcs", "arcs")
    ids = [a.id for a in arcs]
    if len(set(ids)) != len(ids):
        r.fail("duplicate arc id", "arcs")
    try:
        roles = vertex_roles(vertices, arcs)
        check_connected(vertices, arcs)
    except ValueError as exc:
        r.fail(str(exc), "arcs")
    schedules = {}
    sched_entries = r.mapping(data.get("schedules"), "schedules")
    for vid, entry in sched_entries.items():
        vid = str(vid)
        if vid not in roles:
            r.fail(f"unknown vertex {vid}", "schedules", vid)
        if roles[vid] is Role.WELL:
            r.fail(f"{vid} is a well and takes no schedule", "schedules", vid)
        schedules[vid] = _schedule(r, vid, entry, arcs, T, roles[vid] is Role.SOURCE, "schedules", vid)
    try:
        network = Network(tuple(vertices), tuple(arcs), T, schedules)
    except ValueError as exc:
        r.fail(str(exc), "schedules")
    initial = {}
    for aid, entry in r.mapping(data.get("initial"), "initial").items():
        aid = str(aid)
        if aid not in ids:
            r.fail(f"unknown arc {aid}", "initial", aid)
        initial[aid] = _measure(r, entry, (0.0, 1.0), "initial", aid)
    inflows = {}
    for vid, entry in r.mapping(data.get("inflows"), "inflows").items():
        vid = str(vid)
        if roles.get(vid) is not Role.SOURCE:
            r.fail(f"{vid} is not a source vertex", "inflows", vid)
        inflows[vid] = _measure(r, entry, (0.0, T), "inflows", vid)
    outputs = _outputs(r, data.get("outputs"), T)
    return ScenarioFile(Scenario(network, initial, inflows), outputs, source)


def parse_text(text: str, source: str | None = None) -> ScenarioFile:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"syntax error: {getattr(exc, 'problem', None) or exc}", (), line, source) from None
    return load_scenario(data, root, source)


def parse_scenario(path) -> ScenarioFile:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read file: {exc.strerror}", (), None, str(path)) from None
    return parse_text(text, str(path))


def _measure_doc(mu: HybridMeasure) -> dict:
    doc = {}
    if mu.masses.size:
        doc["atoms"] = [[x, m] for x, m in mu.atoms()]
    pieces = mu.support_pieces()
    if pieces:
        doc["density"] = [list(p) for p in pieces]
    return doc


def scenario_document(sf: ScenarioFile) -> dict:
    """The plain-data form of a scenario, as written by :func:`emit_scenario`."""
    sc = sf.scenario
    net = sc.network
    doc: dict = {"horizon": net.horizon, "vertices": list(net.vertex_ids), "arcs": []}
    for a in net.arcs:
        doc["arcs"].append({"id": a.id, "tail": a.tail, "head": a.head, "velocity": a.velocity.params})
    doc["initial"] = {a: _measure_doc(m) for a, m in sc.initial.items() if not m.is_zero()}
    doc["inflows"] = {v: _measure_doc(m) for v, m in sc.inflows.items() if not m.is_zero()}
    doc["schedules"] = {}
    for v, s in net.schedules.items():
        entry = {"outgoing": list(s.outgoing), "breakpoints": [float(x) for x in s.breakpoints]}
        if s.is_source:
            entry["vectors"] = [[float(x) for x in m[0]] for m in s.matrices]
        else:
            entry["incoming"] = list(s.incoming)
            entry["matrices"] = [[[float(x) for x in row] for row in m] for m in s.matrices]
        doc["schedules"][v] = entry
    out = sf.outputs
    doc["outputs"] = {
        "trace_times": list(out.trace_times),
        "check_balance": out.check_balance,
        "distance_pairs": [list(p) for p in out.distance_pairs],
    }
    return doc


def emit_scenario(sf: ScenarioFile) -> str:
    """Serialise a scenario back to YAML text (floats at full precision)."""
    return yaml.safe_dump(scenario_document(sf), sort_keys=False, default_flow_style=None, width=100)
