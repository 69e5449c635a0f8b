import numpy as np
import pytest

from chainflow import (Application, CapacityExceeded, Graph, Linear, LoopDetected,
                       NoFeasibleStrategy, Queue, Scenario, Strategy, compute_flows,
                       detect_loops, init_strategy, max_conservation_residual,
                       validate_strategy)
from chainflow.flows import INIT_MODES

from conftest import make_strategy, random_loopfree_strategy, random_scenario


class TestValidate:
    def test_e1_strategy_a_ok(self, e1, e1_strategy_a):
        assert validate_strategy(e1, e1_strategy_a) == []

    def test_destination_final_row_must_sum_zero(self, e1, e1_strategy_a):
        assert validate_strategy(e1, e1_strategy_a) == []
        bad = e1_strategy_a.copy()
        bad.set_row(2, "a", 1, {1: 1.0})
        errors = validate_strategy(e1, bad)
        assert any("row sums" in v["error"] for v in errors)

    def test_fraction_above_one(self, e1, e1_strategy_a):
        bad = e1_strategy_a.copy()
        bad.rows[("a", 0)][0, 0] = 1.2
        errors = validate_strategy(e1, bad)
        assert any("outside [0, 1]" in v["error"] for v in errors)

    def test_cpu_fraction_at_final_stage(self, e1, e1_strategy_a):
        bad = e1_strategy_a.copy()
        bad.set_row(1, "a", 1, {"cpu": 0.5, 2: 0.5})
        errors = validate_strategy(e1, bad)
        assert any("CPU fraction at final stage" in v["error"] for v in errors)

    def test_fraction_on_absent_link(self, prop1, prop1_kkt_strategy):
        bad = prop1_kkt_strategy.copy()
        bad.set_row(1, "p", 0, {3: 1.0})  # (1,3) is not a link
        errors = validate_strategy(prop1, bad)
        assert any(v["error"] == "fraction on absent link" for v in errors)

    def test_cpu_where_not_performable(self, prop1, prop1_kkt_strategy):
        bad = prop1_kkt_strategy.copy()
        bad.set_row(2, "p", 0, {"cpu": 1.0})  # node 2 has no CPU
        errors = validate_strategy(prop1, bad)
        assert any("not performable" in v["error"] for v in errors)


class TestDetectLoops:
    def test_e1_strategy_a_loop_free(self, e1, e1_strategy_a):
        assert detect_loops(e1_strategy_a) == {}

    def test_two_cycle_detected(self, e1, e1_strategy_a):
        bad = e1_strategy_a.copy()
        bad.set_row(1, "a", 0, {2: 0.5, "cpu": 0.5})
        bad.set_row(2, "a", 0, {1: 0.5, "cpu": 0.5})
        loops = detect_loops(bad)
        assert ("a", 0) in loops
        assert sorted(loops[("a", 0)][0]) == [1, 2]

    def test_cross_stage_concatenation_not_reported(self):
        # destination is the data source: data 1->2, results 2->1; the cycle
        # exists only by concatenating the two stages
        g = Graph.from_undirected_edges([1, 2], [(1, 2)])
        app = Application(id="a", chain_length=1, destination=1, packet_sizes=(1.0, 1.0))
        s = Scenario(graph=g, applications=(app,),
                     link_costs={(1, 2): Linear(1.0), (2, 1): Linear(1.0)},
                     comp_costs={1: None, 2: Linear(1.0)},
                     input_rates={(1, "a"): 1.0})
        phi = make_strategy(s, {
            (1, "a", 0): {2: 1.0},
            (2, "a", 0): {"cpu": 1.0},
            (2, "a", 1): {1: 1.0},
        })
        assert detect_loops(phi) == {}
        st = compute_flows(s, phi)
        assert st.total_cost == pytest.approx(1.0 + 1.0 + 1.0)


class TestComputeFlows:
    def test_e1_strategy_a_values(self, e1, e1_strategy_a):
        st = compute_flows(e1, e1_strategy_a)
        assert st.g(1, "a", 0) == pytest.approx(1.0)
        assert st.F(1, 2) == pytest.approx(1.0)
        assert st.total_cost == pytest.approx(2.0)

    def test_e1_strategy_b_values(self, e1, e1_strategy_b):
        st = compute_flows(e1, e1_strategy_b)
        assert st.F(1, 2) == pytest.approx(2.0)
        assert st.G(2) == pytest.approx(1.0)
        assert st.total_cost == pytest.approx(5.0)

    def test_queue_capacity_exceeded(self):
        g = Graph.from_undirected_edges([1, 2], [(1, 2)])
        app = Application(id="a", chain_length=0, destination=2, packet_sizes=(1.0,))
        s = Scenario(graph=g, applications=(app,),
                     link_costs={(1, 2): Queue(2.0), (2, 1): Queue(2.0)},
                     comp_costs={1: None, 2: None},
                     input_rates={(1, "a"): 2.5})
        phi = make_strategy(s, {(1, "a", 0): {2: 1.0}})
        with pytest.raises(CapacityExceeded):
            compute_flows(s, phi)

    def test_loop_rejected(self, e1, e1_strategy_a):
        bad = e1_strategy_a.copy()
        bad.set_row(1, "a", 0, {2: 1.0})
        bad.set_row(2, "a", 0, {1: 1.0})
        with pytest.raises(LoopDetected):
            compute_flows(e1, bad)

    def test_destination_sink(self, e1, e1_strategy_a):
        st = compute_flows(e1, e1_strategy_a)
        assert st.traffic[("a", 1)][1] == pytest.approx(1.0)  # arrives at node 2
        assert np.all(st.link_flows[("a", 1)][1] == 0)
        assert st.cpu_flows[("a", 1)][1] == 0

    def test_conservation_on_random_scenarios(self):
        for seed in range(6):
            s = random_scenario(seed)
            phi = random_loopfree_strategy(s, seed + 100)
            st = compute_flows(s, phi)
            assert max_conservation_residual(s, phi, st) <= 1e-9

    def test_linear_cost_homogeneity(self):
        s = random_scenario(3, link_kind="linear", comp_kind="linear",
                            link_bound=2.0, comp_bound=2.0)
        phi = random_loopfree_strategy(s, 5)
        base = compute_flows(s, phi).total_cost
        for c in (0.5, 2.0, 3.7):
            scaled = {k: c * v for k, v in s.input_rates.items()}
            got = compute_flows(s, phi, rates=scaled).total_cost
            assert got == pytest.approx(c * base, rel=1e-12)

    def test_extra_injections(self, e1, e1_strategy_a):
        st = compute_flows(e1, e1_strategy_a, extra_injections={(2, ("a", 0)): 0.5})
        # injected data at node 2 is computed there (cost 3 * 0.5)
        assert st.total_cost == pytest.approx(2.0 + 1.5)

    def test_zero_traffic_rows_tolerated(self, prop1, prop1_kkt_strategy):
        st = compute_flows(prop1, prop1_kkt_strategy)
        assert st.total_cost == pytest.approx(1.0)
        assert st.t(2, "p", 0) == 0.0


class TestInitStrategy:
    def test_e1_both_modes_finite(self, e1):
        for mode in INIT_MODES:
            phi = init_strategy(e1, mode=mode)
            assert validate_strategy(e1, phi) == []
            assert detect_loops(phi) == {}
            st = compute_flows(e1, phi)
            assert np.isfinite(st.total_cost)

    def test_random_scenarios_valid(self):
        for seed in range(5):
            s = random_scenario(seed, num_apps=2, K=2)
            for mode in INIT_MODES:
                phi = init_strategy(s, mode=mode)
                assert validate_strategy(s, phi) == []
                assert detect_loops(phi) == {}

    def test_no_feasible_strategy(self):
        # total workload exceeds every CPU capacity however placed
        g = Graph.from_undirected_edges([1, 2], [(1, 2)])
        app = Application(id="a", chain_length=1, destination=2, packet_sizes=(1.0, 1.0))
        s = Scenario(graph=g, applications=(app,),
                     link_costs={(1, 2): Linear(1.0), (2, 1): Linear(1.0)},
                     comp_costs={1: Queue(0.5), 2: Queue(0.5)},
                     input_rates={(1, "a"): 2.0})
        for mode in INIT_MODES:
            with pytest.raises(NoFeasibleStrategy):
                init_strategy(s, mode=mode)

    def test_prop1_routes_and_computes_at_4(self, prop1):
        phi = init_strategy(prop1, mode="shortest_path_comp_at_destination")
        st = compute_flows(prop1, phi)
        assert st.total_cost == pytest.approx(0.3)


class TestStrategySerialization:
    def test_round_trip(self, e1, e1_strategy_a):
        data = e1_strategy_a.to_jsonable()
        back = Strategy.from_jsonable(data)
        for key, mat in e1_strategy_a.rows.items():
            assert np.array_equal(back.rows[key], mat)
