import unittest
from math import comb
from unittest.mock import patch, MagicMock

from core.census import build_census
from core.combinat import VertexSet, rank_of
from core.randsrc import EdgeOracle, EdgeSet, SeededStream, sample_hypergraph
from core.theory import build_constants, critical_p
from explorer.checks import (LazyOracleFactory, PreconditionError, check_component_degree, check_corollary4,
                             check_event_caps, check_jump_pivot_bounds, check_ledger, check_lower_coupling,
                             check_size_at_T_large, check_staybig, check_theorem3, multi_start_stop_frequency,
                             random_start)
from explorer.params import StopMode, StopParams, StopReason
from explorer.process import DegreeLedger, EventKind, explore


def params_for(n: int, j: int, mode: StopMode = StopMode.RUN_TO_T, lam: float = 0.5, **kwargs) -> StopParams:
    return StopParams(lam=lam, delta=0.1, xi=1.0, n=n, j=j, mode=mode, **kwargs)


class TestExplorer(unittest.TestCase):

    def setUp(self):
        self.mock_logger = MagicMock()
        self.explorer_logger_patcher = patch('explorer.process.logger', self.mock_logger)
        self.checks_logger_patcher = patch('explorer.checks.logger', self.mock_logger)
        self.explorer_logger_patcher.start()
        self.checks_logger_patcher.start()

    def tearDown(self):
        self.explorer_logger_patcher.stop()
        self.checks_logger_patcher.stop()

    # 1. Stopping parameters
    def test_stop_params_validation(self):
        with self.assertRaises(ValueError):
            StopParams(lam=0.1, delta=0.2, xi=1.0, n=100, j=1)
        with self.assertRaises(ValueError):
            StopParams(lam=0.001, delta=0.1, xi=1.0, n=100, j=1)
        with self.assertRaises(ValueError):
            StopParams(lam=0.1, delta=0.1, xi=0.0, n=100, j=1)
        with self.assertRaises(ValueError):
            StopParams(lam=0.1, delta=0.1, xi=1.0, n=100, j=1, gamma=1.0)

    def test_stop_thresholds(self):
        params = params_for(10, 2, lam=0.5)
        self.assertAlmostEqual(params.component_threshold, 50.0)
        self.assertAlmostEqual(params.generation_threshold, 25.0)
        self.assertEqual(params.with_mode(StopMode.FULL).mode, StopMode.FULL)

    # 2. Worked examples
    def test_empty_hypergraph_stops_by_s1(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2))
        self.assertEqual(trace.generation_sizes, [1, 0])
        self.assertEqual(trace.stop_reason, StopReason.S1)
        self.assertEqual(trace.stop_time, 2)
        self.assertEqual(trace.component_size, 1)
        self.assertEqual(trace.total_queries, comb(8, 1))
        self.assertFalse(trace.stopped_large)

    def test_single_edge(self):
        edges = EdgeSet(6, 3, [rank_of((0, 1, 2))])
        trace = explore(VertexSet([0, 1], 6), EdgeOracle.presampled(edges), params_for(6, 2))
        self.assertEqual(trace.generation_sizes, [1, 2, 0])
        self.assertEqual(trace.stop_reason, StopReason.S1)
        self.assertEqual(trace.stop_time, 3)
        self.assertEqual(trace.component(), {rank_of((0, 1)), rank_of((0, 2)), rank_of((1, 2))})
        self.assertEqual(trace.edges_per_round, [1, 0])
        # Round 2 skips the already queried {0, 1, 2} from both j-sets
        self.assertEqual(trace.queries_per_round, [4, 6])

    def test_s2_fires_before_s3(self):
        oracle = EdgeOracle.lazy(8, 3, 1.0, SeededStream(0))
        params = StopParams(lam=0.2, delta=0.1, xi=1.0, n=8, j=2)
        trace = explore([0, 1], oracle, params)
        # G_2 holds the 12 pairs {0, v} and {1, v}; |C(2)| = 13 crosses both thresholds
        self.assertEqual(trace.generation_sizes, [1, 12])
        self.assertEqual(trace.stop_reason, StopReason.S2)
        self.assertEqual(trace.large_time, 2)

    def test_invalid_start_raises(self):
        oracle = EdgeOracle.lazy(6, 3, 0.1, SeededStream(0))
        with self.assertRaises(ValueError):
            explore(comb(6, 2), oracle, params_for(6, 2))
        with self.assertRaises(ValueError):
            explore(VertexSet([0, 1, 2], 6), oracle, params_for(6, 2))
        with self.assertRaises(ValueError):
            explore([0, 1], oracle, params_for(7, 2))
        with self.assertRaises(ValueError):
            explore([0, 1, 2], oracle, params_for(6, 3))

    # 3. Agreement with the census
    def test_full_exploration_equals_census_component(self):
        n = 8
        for k, j, p in ((3, 1, 0.03), (3, 2, 0.12), (4, 1, 0.01), (4, 2, 0.05), (4, 3, 0.12)):
            params = params_for(n, j, StopMode.FULL, lam=1.0)
            for trial in range(100):
                edges = sample_hypergraph(n, k, p, SeededStream(5, trial))
                census = build_census(edges, j)
                start = random_start(n, j, 5, trial)
                oracle = EdgeOracle.presampled(edges)
                trace = explore(start, oracle, params)
                label = census.component_of(start)
                expected = {start} if label is None else census.members(label)
                self.assertEqual(trace.component(), expected)
                self.assertEqual(trace.stop_reason, StopReason.S1)
                self.assertEqual(trace.total_queries, oracle.query_count)
                self.assertEqual(check_ledger(trace), [])
                self.assertEqual(check_event_caps(trace), [])

    def test_lazy_exploration_is_reproducible(self):
        n, k, j = 40, 3, 2
        p = 1.2 * critical_p(n, k, j)
        params = params_for(n, j, StopMode.FULL, lam=0.2)
        first = explore([3, 9], EdgeOracle.lazy(n, k, p, SeededStream(13, 1)), params)
        second = explore([3, 9], EdgeOracle.lazy(n, k, p, SeededStream(13, 1)), params)
        self.assertEqual([g.members for g in first.generations], [g.members for g in second.generations])
        self.assertEqual(first.queries_per_round, second.queries_per_round)

    def test_no_k_set_queried_twice(self):
        n, k, j = 30, 4, 2
        oracle = EdgeOracle.lazy(n, k, 1.5 * critical_p(n, k, j), SeededStream(2))
        trace = explore([0, 1], oracle, params_for(n, j, StopMode.FULL, lam=0.2))
        self.assertEqual(trace.total_queries, oracle.query_count)

    def test_matrix_and_tuple_enumeration_agree(self):
        n, k, j = 25, 4, 2
        p = 1.3 * critical_p(n, k, j)
        params = params_for(n, j, StopMode.FULL, lam=0.2)
        by_matrix = explore([1, 2], EdgeOracle.lazy(n, k, p, SeededStream(6)), params)
        with patch('explorer.process.SUPERSET_MATRIX_LIMIT', 0):
            by_tuples = explore([1, 2], EdgeOracle.lazy(n, k, p, SeededStream(6)), params)
        self.assertEqual(by_matrix.generation_sizes, by_tuples.generation_sizes)
        self.assertEqual(by_matrix.component(), by_tuples.component())

    # 4. Degree ledger
    def test_ledger_records_by_kind(self):
        ledger = DegreeLedger()
        ledger.record(EventKind.JUMP, 2, 1, 5, 2)
        ledger.record(EventKind.PIVOT, 2, 1, 5, 1)
        ledger.record(EventKind.PIVOT, 2, 1, 6, 0)
        self.assertEqual(ledger.jump_contrib(2, 1, 5), 2)
        self.assertEqual(ledger.pivot_contrib(2, 1, 5), 1)
        self.assertEqual(ledger.max_event(EventKind.JUMP, 1), 2)
        self.assertEqual([entry.l_rank for entry in ledger.entries()], [5, 6])

    def test_ledger_single_edge_split(self):
        edges = EdgeSet(6, 3, [rank_of((0, 1, 2))])
        trace = explore([0, 1], EdgeOracle.presampled(edges), params_for(6, 2))
        ledger = trace.ledger
        # {0, 2} and {1, 2} are new: vertex 2 is a jump receiving both, 0 and 1 are pivots receiving one each
        self.assertEqual(ledger.jump_contrib(2, 1, 2), 2)
        self.assertEqual(ledger.pivot_contrib(2, 1, 0), 1)
        self.assertEqual(ledger.pivot_contrib(2, 1, 1), 1)
        self.assertEqual(trace.generation(2).degree(1, 2), 2)
        self.assertEqual(check_ledger(trace), [])

    def test_ledger_identity_supercritical(self):
        n, k, j = 60, 4, 3
        p = 1.3 * critical_p(n, k, j)
        for trial in range(5):
            oracle = EdgeOracle.lazy(n, k, p, SeededStream(31, trial))
            trace = explore(random_start(n, j, 31, trial), oracle, params_for(n, j, StopMode.RUN_TO_T_LARGE, lam=0.01))
            self.assertEqual(check_ledger(trace), [])
            self.assertEqual(check_event_caps(trace), [])

    def test_ledger_is_empty_for_j_1(self):
        edges = EdgeSet(6, 3, [rank_of((0, 1, 2))])
        trace = explore([0], EdgeOracle.presampled(edges), params_for(6, 1, lam=0.9))
        self.assertTrue(trace.ledger.is_empty())
        self.assertEqual(trace.max_degrees(1), {0: 1})

    # 5. Theorem-style checks
    def test_degree_bound_holds_when_bound_exceeds_n(self):
        n, k, j, eps = 60, 3, 2, 0.2
        constants = build_constants(k, j, eps)
        p = (1.0 + eps) * critical_p(n, k, j)
        for trial in range(10):
            oracle = EdgeOracle.lazy(n, k, p, SeededStream(41, trial))
            trace = explore(random_start(n, j, 41, trial), oracle, params_for(n, j, lam=0.05))
            # C_1 * n^delta exceeds n - 1, the largest possible vertex degree among 2-sets
            self.assertEqual(check_theorem3(trace, constants, 0.1), [])
            self.assertEqual(check_jump_pivot_bounds(trace, constants, 0.1), [])

    def test_theorem3_needs_degree_index(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2), degree_index=False)
        with self.assertRaises(PreconditionError):
            check_theorem3(trace, build_constants(3, 2, 0.2), 0.1)
        self.assertIsNone(trace.to_rows()[0]["delta_1"])

    def test_theorem3_constants_must_match(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2))
        with self.assertRaises(ValueError):
            check_theorem3(trace, build_constants(4, 2, 0.2), 0.1)

    def test_corollary4_requires_large_stop(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2))
        with self.assertRaises(PreconditionError):
            check_corollary4(trace, 1.0, kappas=[1.0])

    def test_corollary4_on_s2_stop(self):
        oracle = EdgeOracle.lazy(8, 3, 1.0, SeededStream(0))
        trace = explore([0, 1], oracle, StopParams(lam=0.2, delta=0.1, xi=1.0, n=8, j=2))
        # vertices 0 and 1 lie in six members of G_2 each, every other vertex in two
        self.assertEqual(trace.generation(2).max_degree(1), 6)
        # bound kappa * (12 / 8 + 1)
        self.assertTrue(check_corollary4(trace, 1.0, kappas=[3.0]))
        self.assertFalse(check_corollary4(trace, 1.0, kappas=[2.0]))
        with self.assertRaises(ValueError):
            check_corollary4(trace, 1.0, kappas=[1.0, 2.0])

    def test_staybig_is_vacuous_on_small_generations(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2))
        self.assertEqual(check_staybig(trace), [])
        self.assertEqual(check_staybig(trace, n=1), [1])

    def test_size_at_T_large(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2, StopMode.RUN_TO_T_LARGE))
        self.assertEqual(trace.large_time, 2)
        self.assertTrue(check_size_at_T_large(trace))
        short = explore([0, 1], EdgeOracle.lazy(10, 3, 0.0, SeededStream(0)), params_for(10, 2))
        with self.assertRaises(PreconditionError):
            check_size_at_T_large(short)

    def test_component_degree_bound(self):
        oracle = EdgeOracle.lazy(8, 3, 1.0, SeededStream(0))
        trace = explore([0, 1], oracle, StopParams(lam=0.05, delta=0.1, xi=1.0, n=8, j=2, mode=StopMode.FULL))
        self.assertEqual(trace.component_max_degree[-1][1], 7)
        self.assertEqual(check_component_degree(trace), [])
        violations = check_component_degree(trace, scale=1.0)
        self.assertTrue(violations)
        self.assertEqual(violations[0].kind, "component")

    # 6. Lower coupling
    def test_lower_coupling_tracking(self):
        oracle = EdgeOracle.lazy(10, 3, 0.0, SeededStream(0))
        trace = explore([0, 1], oracle, params_for(10, 2), track_lower_coupling=True)
        # the start j-set makes C(8, 1) = 8 full queries out of C(10, 1) = 10
        self.assertEqual(trace.full_queries, {1: [8]})
        self.assertAlmostEqual(trace.lower_coupling_deficit_max, 0.2)
        self.assertEqual(check_lower_coupling(trace, 0.3), [])
        self.assertEqual(check_lower_coupling(trace, 0.1), [(1, 1)])

    def test_lower_coupling_requires_tracking(self):
        trace = explore([0, 1], EdgeOracle.lazy(10, 3, 0.0, SeededStream(0)), params_for(10, 2))
        self.assertIsNone(trace.lower_coupling_deficit_max)
        with self.assertRaises(PreconditionError):
            check_lower_coupling(trace, 0.3)

    # 7. Multi-start frequency
    def test_stop_frequency_without_edges(self):
        factory = LazyOracleFactory(20, 3, 0.0, seed=1)
        result = multi_start_stop_frequency(factory, params_for(20, 2), trials=25, seed=1)
        self.assertEqual(result.successes, 0)
        self.assertEqual(result.trials, 25)
        with self.assertRaises(ValueError):
            multi_start_stop_frequency(factory, params_for(20, 2), trials=0)

    def test_random_start_in_range(self):
        starts = {random_start(20, 2, 3, trial) for trial in range(200)}
        self.assertTrue(all(0 <= start < comb(20, 2) for start in starts))
        self.assertGreater(len(starts), 100)

    # 8. Trace export
    def test_trace_rows_and_summary(self):
        edges = EdgeSet(6, 3, [rank_of((0, 1, 2))])
        trace = explore([0, 1], EdgeOracle.presampled(edges), params_for(6, 2))
        rows = trace.to_rows()
        self.assertEqual([row["generation_size"] for row in rows], [1, 2, 0])
        self.assertEqual([row["component_size"] for row in rows], [1, 3, 3])
        self.assertEqual(rows[1]["delta_1"], 2)
        self.assertEqual(rows[2]["queries"], 0)
        summary = trace.summary()
        self.assertEqual(summary["stop_reason"], "S1")
        self.assertEqual(summary["T"], 3)


if __name__ == "__main__":
    unittest.main()
