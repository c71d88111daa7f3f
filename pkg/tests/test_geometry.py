import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import UNIT, cycle_network, one_two_network, random_dag_scenario, two_one_network
from measurenet import Arc, DistributionSchedule, Network, Role, classify_vertexes, evaluate_schedule
from measurenet import source_distance_partition
from measurenet.geometry import DomainError, NoSourcesError, ScheduleError, StructureError, natural_sorted


class TestRoles:
    def test_one_two_junction(self):
        assert classify_vertexes(one_two_network()) == {
            "V1": Role.SOURCE,
            "V2": Role.INTERNAL,
            "V3": Role.WELL,
            "V4": Role.WELL,
        }

    def test_single_arc(self):
        net = Network(["V1", "V2"], [Arc("E1", "V1", "V2", UNIT)], 1.0)
        assert classify_vertexes(net) == {"V1": Role.SOURCE, "V2": Role.WELL}

    def test_two_one_junction(self):
        assert classify_vertexes(two_one_network()) == {
            "V1": Role.SOURCE,
            "V2": Role.SOURCE,
            "V3": Role.INTERNAL,
            "V4": Role.WELL,
        }

    def test_isolated_vertex_named(self):
        with pytest.raises(StructureError, match="V3 is isolated"):
            Network(["V1", "V2", "V3"], [Arc("E1", "V1", "V2", UNIT)], 1.0)

    def test_disconnected(self):
        arcs = [Arc("E1", "V1", "V2", UNIT), Arc("E2", "V3", "V4", UNIT)]
        with pytest.raises(StructureError, match="not connected"):
            Network(["V1", "V2", "V3", "V4"], arcs, 1.0)

    def test_unknown_endpoint(self):
        with pytest.raises(StructureError, match="unknown vertex V9"):
            Network(["V1", "V2"], [Arc("E1", "V1", "V9", UNIT)], 1.0)

    def test_natural_order(self):
        assert natural_sorted(["E10", "E2", "E1"]) == ["E1", "E2", "E10"]


class TestPartition:
    def test_one_two_levels(self):
        part = source_distance_partition(one_two_network())
        assert part.levels == (frozenset({"E1"}), frozenset({"E2", "E3"}))
        assert not part.unresolved

    def test_two_one_levels(self):
        part = source_distance_partition(two_one_network())
        assert part.levels == (frozenset({"E1", "E2"}), frozenset({"E3"}))

    def test_cycle_fed_by_source(self):
        arcs = [
            Arc("E1", "V1", "V2", UNIT),
            Arc("E2", "V2", "V3", UNIT),
            Arc("E3", "V3", "V2", UNIT),
            Arc("E4", "V3", "V4", UNIT),
        ]
        sched = DistributionSchedule.constant("V3", ["E2"], ["E3", "E4"], [[0.5, 0.5]], 2.0)
        part = source_distance_partition(Network(["V1", "V2", "V3", "V4"], arcs, 2.0, {"V3": sched}))
        assert part.levels == (frozenset({"E1"}),)
        assert part.unresolved == {"E2", "E3", "E4"}
        assert part.level_of("E1") == 0 and part.level_of("E3") is None

    def test_no_sources(self):
        with pytest.raises(NoSourcesError):
            source_distance_partition(cycle_network())


class TestSchedules:
    def test_constant_split(self):
        net = one_two_network(p=0.3)
        for t in (0.0, 1.7, 4.0):
            np.testing.assert_array_equal(evaluate_schedule(net, "V2", t), [[0.3, 0.7]])

    def test_right_open_pieces(self):
        arcs = [Arc("E1", "V1", "V2", UNIT), Arc("E2", "V2", "V3", UNIT), Arc("E3", "V2", "V4", UNIT)]
        sched = DistributionSchedule("V2", ("E1",), ("E2", "E3"), [0.0, 1.0, 2.0], [[[1.0, 0.0]], [[0.0, 1.0]]])
        net = Network(["V1", "V2", "V3", "V4"], arcs, 2.0, {"V2": sched})
        assert evaluate_schedule(net, "V2", 1.0)[0, 0] == 0.0
        assert evaluate_schedule(net, "V2", 0.999)[0, 0] == 1.0
        assert evaluate_schedule(net, "V2", 2.0)[0, 0] == 0.0

    def test_merge_has_unit_rows(self):
        net = two_one_network()
        np.testing.assert_array_equal(evaluate_schedule(net, "V3", 1.0), [[1.0], [1.0]])

    def test_row_sum_violation_named(self):
        with pytest.raises(ScheduleError, match="row 1 of schedule at V2 .* sums to 0.9"):
            DistributionSchedule.constant("V2", ["E1"], ["E2", "E3"], [[0.3, 0.6]], 4.0)

    def test_missing_schedule_for_split(self):
        arcs = [Arc("E1", "V1", "V2", UNIT), Arc("E2", "V2", "V3", UNIT), Arc("E3", "V2", "V4", UNIT)]
        with pytest.raises(ScheduleError, match="V2 has 2 outgoing arcs"):
            Network(["V1", "V2", "V3", "V4"], arcs, 4.0)

    def test_outside_horizon(self):
        with pytest.raises(DomainError):
            evaluate_schedule(one_two_network(), "V2", 4.5)

    def test_entries_in_unit_interval(self):
        with pytest.raises(ScheduleError, match=r"\[0, 1\]"):
            DistributionSchedule.constant("V2", ["E1"], ["E2", "E3"], [[1.5, -0.5]], 4.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_random_network_invariants(seed):
    net = random_dag_scenario(seed).network
    roles = classify_vertexes(net)
    assert roles == net.roles
    assert classify_vertexes(Network(net.vertex_ids, net.arcs, net.horizon, net.schedules)) == roles
    part = source_distance_partition(net)
    seen = set()
    for m, level in enumerate(part.levels):
        assert not (seen & level)
        seen |= level
        for aid in level:
            tail = net.arc(aid).tail
            if m == 0:
                assert roles[tail] is Role.SOURCE
            else:
                assert any(net.arc(b).head == tail for b in part.levels[m - 1])
    assert seen == set(net.arc_ids) and not part.unresolved
    for v, sched in net.schedules.items():
        for t in np.linspace(0.0, net.horizon, 9):
            rows = np.atleast_2d(sched.at(t))
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12, rtol=0)
