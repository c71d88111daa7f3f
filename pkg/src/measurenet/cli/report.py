"""Report assembly: JSON document plus CSV tables of atoms and density pieces."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from ..measure import HybridMeasure, bl_distance
from ..network_solver import NetworkSolution, global_balance, polynomial_family
from .scenario import parse_ref

MASS_TOL = 1e-8
WEAK_TOL = 1e-7


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def measure_entry(mu: HybridMeasure) -> dict:
    return {"atoms": [[x, m] for x, m in mu.atoms()], "density": [list(p) for p in mu.support_pieces()]}


def resolve_ref(solution: NetworkSolution, ref: str) -> HybridMeasure:
    """Look up a measure reference such as ``trace:E1@2.0`` or ``omega:V3``."""
    kind, name, t = parse_ref(ref)
    net = solution.network
    table = {
        "terminal": solution.terminal,
        "initial": solution.scenario.initial,
        "inflow": solution.inflow,
        "outflow": solution.outflow,
        "omega": solution.wells,
        "source": solution.scenario.inflows,
    }
    if kind == "trace":
        if name not in net.arc_ids:
            raise ValueError(f"{ref}: unknown arc {name}")
        if not 0.0 <= t <= net.horizon:
            raise ValueError(f"{ref}: time outside [0, {net.horizon!r}]")
        return solution.trace(name, t)
    if name not in table[kind]:
        raise ValueError(f"{ref}: no {kind} measure for {name}")
    return table[kind][name]


@dataclass
class Report:
    """Machine-readable run summary.

    ``atom_rows`` and ``density_rows`` hold one CSV row per atom and per
    density piece of every reported measure.
    """

    doc: dict = field(default_factory=dict)
    atom_rows: list = field(default_factory=list)
    density_rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.doc.get("checks", {}).get("passed", True))

    def add_measure(self, section: str, owner: str, time, mu: HybridMeasure) -> dict:
        t = "" if time is None else _fmt(time)
        for x, m in mu.atoms():
            self.atom_rows.append([section, owner, t, _fmt(x), _fmt(m)])
        for lo, hi, c in mu.support_pieces():
            self.density_rows.append([section, owner, t, _fmt(lo), _fmt(hi), _fmt(c)])
        return measure_entry(mu)

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2) + "\n"

    def atoms_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "owner", "time", "position", "mass"])
        w.writerows(self.atom_rows)
        return buf.getvalue()

    def density_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "owner", "time", "lo", "hi", "value"])
        w.writerows(self.density_rows)
        return buf.getvalue()


def build_report(
    solution: NetworkSolution,
    *,
    source: str | None,
    trace_times=(),
    check_balance: bool = False,
    distance_pairs=(),
    continuity: dict | None = None,
    lp_cells: int = 2048,
) -> Report:
    rep = Report()
    net = solution.network
    doc = rep.doc
    doc["scenario"] = source
    doc["algorithm"] = solution.algorithm
    doc["horizon"] = net.horizon
    doc["arcs"] = list(net.arc_ids)
    doc["ledger"] = solution.ledger.to_dict()
    doc["wells"] = {w: rep.add_measure("omega", w, None, solution.wells[w]) for w in net.wells}
    doc["terminal"] = {a: rep.add_measure("terminal", a, net.horizon, solution.terminal[a]) for a in net.arc_ids}
    doc["traces"] = []
    for t in sorted(set(float(t) for t in trace_times)):
        doc["traces"].append(
            {"time": t, "arcs": {a: rep.add_measure("trace", a, t, solution.trace(a, t)) for a in net.arc_ids}}
        )
    checks = {}
    if check_balance:
        defect = solution.ledger.defect
        residual = global_balance(solution, polynomial_family(net, degree=3))
        checks["balance"] = {
            "mass_defect": defect,
            "mass_tolerance": MASS_TOL,
            "weak_residual": residual,
            "weak_tolerance": WEAK_TOL,
            "passed": bool(defect <= MASS_TOL and residual <= WEAK_TOL),
        }
    if continuity is not None:
        checks["continuity"] = continuity
    doc["distances"] = []
    for a, b in distance_pairs:
        doc["distances"].append(
            {"a": a, "b": b, "value": bl_distance(resolve_ref(solution, a), resolve_ref(solution, b), lp_cells)}
        )
    checks["passed"] = all(c["passed"] for c in checks.values() if isinstance(c, dict))
    doc["checks"] = checks
    return rep
