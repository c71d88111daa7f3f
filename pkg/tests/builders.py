"""Shared constructors for the junction scenarios and random networks used in the tests."""

from __future__ import annotations

import numpy as np

from measurenet import Arc, DistributionSchedule, HybridMeasure, Network, Scenario, VelocityField

UNIT = VelocityField.constant(1.0)
ARC_DOMAIN = (0.0, 1.0)


def atoms(domain, *pairs) -> HybridMeasure:
    return HybridMeasure(domain, atoms=pairs)


def density(domain, *pieces) -> HybridMeasure:
    return HybridMeasure(domain, density=pieces)


def one_two_network(p: float = 0.3, horizon: float = 4.0, velocity=UNIT, schedule=None) -> Network:
    """V1 -E1-> V2, then V2 -E2-> V3 and V2 -E3-> V4, routing p to E2."""
    arcs = [Arc("E1", "V1", "V2", velocity), Arc("E2", "V2", "V3", velocity), Arc("E3", "V2", "V4", velocity)]
    if schedule is None:
        schedule = DistributionSchedule.constant("V2", ["E1"], ["E2", "E3"], [[p, 1.0 - p]], horizon)
    return Network(["V1", "V2", "V3", "V4"], arcs, horizon, {"V2": schedule})


def two_one_network(horizon: float = 4.0, velocity=UNIT) -> Network:
    """V1 -E1-> V3 and V2 -E2-> V3 merging into V3 -E3-> V4."""
    arcs = [Arc("E1", "V1", "V3", velocity), Arc("E2", "V2", "V3", velocity), Arc("E3", "V3", "V4", velocity)]
    return Network(["V1", "V2", "V3", "V4"], arcs, horizon)


def cycle_network(horizon: float = 3.0) -> Network:
    return Network(["V1", "V2"], [Arc("E1", "V1", "V2", UNIT), Arc("E2", "V2", "V1", UNIT)], horizon)


def atomic_one_two(t0: float = 0.5, p: float = 0.3, mass: float = 1.0, horizon: float = 4.0) -> Scenario:
    net = one_two_network(p, horizon)
    return Scenario(net, inflows={"V1": atoms((0.0, horizon), (t0, mass))})


def density_one_two(rho: float = 1.0, p: float = 0.5, support=(0.0, 1.0), horizon: float = 4.0) -> Scenario:
    net = one_two_network(p, horizon)
    return Scenario(net, inflows={"V1": density((0.0, horizon), (support[0], support[1], rho))})


def atomic_two_one(t1: float = 0.2, t2: float = 0.7, m1: float = 1.0, m2: float = 1.0, horizon: float = 4.0) -> Scenario:
    net = two_one_network(horizon)
    return Scenario(
        net, inflows={"V1": atoms((0.0, horizon), (t1, m1)), "V2": atoms((0.0, horizon), (t2, m2))}
    )


def cycle_scenario() -> Scenario:
    return Scenario(cycle_network(), initial={"E1": atoms(ARC_DOMAIN, (0.5, 1.0))})


GOLDEN = {
    "junction_1_2": atomic_one_two,
    "junction_1_2_density": density_one_two,
    "junction_2_1": atomic_two_one,
}


def _random_stochastic(rng, rows: int, cols: int) -> np.ndarray:
    m = rng.uniform(0.05, 1.0, (rows, cols))
    m /= m.sum(axis=1, keepdims=True)
    # force exact row sums so the 1e-12 validation never trips on rounding
    m[:, -1] = 1.0 - m[:, :-1].sum(axis=1)
    return m


def _random_measure(rng, domain, atomic: bool, n_atoms: int = 2) -> HybridMeasure:
    lo, hi = domain
    pos = rng.uniform(lo, hi, n_atoms)
    mass = rng.uniform(0.1, 1.0, n_atoms)
    pieces = ()
    if not atomic:
        cuts = np.sort(rng.uniform(lo, hi, 4))
        pieces = tuple((cuts[i], cuts[i + 1], rng.uniform(0.1, 1.5)) for i in range(0, 4, 2))
    return HybridMeasure(domain, atoms=tuple(zip(pos, mass)), density=pieces)


def random_dag_scenario(seed: int, atomic: bool = False, max_arcs: int = 6, uniform_speed: bool = False) -> Scenario:
    """A connected DAG with arcs from lower to higher vertex index.

    A chain through all vertices provides connectivity; extra forward arcs
    create branches and merges. Schedules have one or two pieces.
    """
    rng = np.random.default_rng(seed)
    horizon = float(rng.uniform(1.5, 4.0))
    n_vertices = int(rng.integers(2, min(5, max_arcs + 1) + 1))
    pairs = [(i, i + 1) for i in range(n_vertices - 1)]
    candidates = [(i, j) for i in range(n_vertices) for j in range(i + 2, n_vertices)]
    rng.shuffle(candidates)
    for c in candidates[: int(rng.integers(0, max_arcs - len(pairs) + 1))]:
        pairs.append(tuple(c))
    arcs = []
    for k, (i, j) in enumerate(pairs):
        if uniform_speed:
            v = UNIT
        elif rng.uniform() < 0.5:
            v = VelocityField.constant(float(rng.uniform(0.6, 2.0)))
        else:
            v = VelocityField.affine(float(rng.uniform(0.6, 1.5)), float(rng.uniform(-0.3, 0.8)))
        arcs.append(Arc(f"E{k + 1}", f"V{i + 1}", f"V{j + 1}", v))
    vids = [f"V{i + 1}" for i in range(n_vertices)]
    probe = Network(vids, arcs, horizon, _default_multi_schedules(vids, arcs, horizon, rng))
    initial = {a.id: _random_measure(rng, ARC_DOMAIN, atomic) for a in probe.arcs if rng.uniform() < 0.7}
    inflows = {v: _random_measure(rng, (0.0, horizon), atomic) for v in probe.sources}
    return Scenario(probe, initial, inflows)


def _default_multi_schedules(vids, arcs, horizon, rng) -> dict:
    out = {}
    for v in vids:
        ins = [a.id for a in arcs if a.head == v]
        outs = [a.id for a in arcs if a.tail == v]
        if len(outs) < 2:
            continue
        rows = max(1, len(ins))
        if rng.uniform() < 0.5:
            bp = np.array([0.0, horizon])
            mats = _random_stochastic(rng, rows, len(outs))[None]
        else:
            bp = np.array([0.0, float(rng.uniform(0.3, horizon - 0.3)), horizon])
            mats = np.stack([_random_stochastic(rng, rows, len(outs)) for _ in range(2)])
        out[v] = DistributionSchedule(v, tuple(ins), tuple(outs), bp, mats)
    return out
