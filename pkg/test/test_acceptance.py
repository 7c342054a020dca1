import os
import unittest
from pathlib import Path
from unittest.mock import patch, MagicMock

from dotenv import dotenv_values

from branching.galton_watson import mean_progeny_mc
from branching.law_types import LawKind
from branching.law_utils import make_law
from core.census import build_census
from core.randsrc import EdgeOracle, SeededStream, sample_hypergraph
from explorer.checks import random_start
from explorer.params import StopMode, StopParams
from explorer.process import explore
from services.harness import (ExperimentConfig, run_branching_suite, run_census_sweep, run_exploration_sweep)
from test.test_census import brute_force_partition

PRESETS = Path(__file__).resolve().parent.parent / "presets"
RUN_SLOW = os.getenv("RUN_SLOW") == "1"


def preset(name: str, **overrides) -> ExperimentConfig:
    values = dotenv_values(PRESETS / f"{name}.env")
    return ExperimentConfig.from_mapping(values).with_overrides(**overrides)


@unittest.skipUnless(RUN_SLOW, "full-scale statistical runs; set RUN_SLOW=1")
class TestAcceptance(unittest.TestCase):

    def setUp(self):
        self.mock_logger = MagicMock()
        self.patchers = [
            patch('services.harness.logger', self.mock_logger),
            patch('core.theory.logger', self.mock_logger),
        ]
        for patcher in self.patchers:
            patcher.start()

    def tearDown(self):
        for patcher in self.patchers:
            patcher.stop()

    def assertChecksPass(self, report, names):
        checks = {check.name: check for check in report.checks}
        for name in names:
            self.assertIn(name, checks)
            self.assertTrue(checks[name].passed, f"{name}: observed {checks[name].observed}, "
                                                 f"target {checks[name].target} {checks[name].detail}")

    # 1. Giant components
    def test_graph_case_giant(self):
        report = run_census_sweep(preset("graph_giant"))
        self.assertChecksPass(report, ["giant_size", "second_largest_small"])
        self.assertAlmostEqual(report.aggregate["solver_survival"], 0.17615, delta=2e-4)

    def test_hypergraph_giant(self):
        self.assertChecksPass(run_census_sweep(preset("hypergraph_giant")), ["giant_size", "second_largest_small"])

    def test_subcritical_smallness(self):
        self.assertChecksPass(run_census_sweep(preset("subcritical")), ["subcritical_bound"])

    # 2. Exploration
    def test_degree_bounds(self):
        report = run_exploration_sweep(preset("degree_bounds"))
        self.assertChecksPass(report, ["theorem3", "ledger_identity", "event_caps"])

    def test_size_at_T_large_and_staybig(self):
        report = run_exploration_sweep(preset("size_bound"))
        self.assertChecksPass(report, ["size_at_T_large", "staybig", "ledger_identity", "event_caps"])

    def test_stop_frequency(self):
        config = preset("stop_frequency")
        exploration = run_exploration_sweep(config)
        self.assertChecksPass(exploration, ["stop_frequency", "stop_bracket"])
        branching = run_branching_suite(config)
        frequency = exploration.aggregate["stop_frequency"]
        stderr = exploration.aggregate["stop_frequency_stderr"]
        upper = branching.aggregate["upper_survival"]
        lower = branching.aggregate["lower_survival"]
        self.assertLessEqual(lower - 3.0 * stderr, frequency)
        self.assertLessEqual(frequency, upper + 3.0 * stderr)

    # 3. Branching processes
    def test_dual_mean_progeny(self):
        config = preset("dual")
        law = make_law(LawKind.DUAL, config.n, config.k, config.j, eps=config.eps)
        result = mean_progeny_mc(law, config.trials, SeededStream(config.seed))
        self.assertAlmostEqual(result.mean, 20.0, delta=2.0)

    def test_coupling_domination(self):
        self.assertChecksPass(run_branching_suite(preset("coupling")), ["coupling_domination"])

    # 4. Oracle equivalence
    def test_census_and_exploration_match_brute_force(self):
        k = 3
        for n in (5, 6, 7, 8):
            for j in (1, 2):
                params = StopParams(lam=1.0, delta=0.1, xi=1.0, n=n, j=j, mode=StopMode.FULL)
                for trial in range(200):
                    p = (0.5 + trial % 5 * 0.3) / n ** (k - j)
                    edges = sample_hypergraph(n, k, min(p, 1.0), SeededStream(97, trial))
                    census = build_census(edges, j)
                    self.assertEqual(set(census.partition()), brute_force_partition(edges, j))
                    start = random_start(n, j, 97, trial)
                    trace = explore(start, EdgeOracle.presampled(edges), params)
                    label = census.component_of(start)
                    self.assertEqual(trace.component(), {start} if label is None else census.members(label))


if __name__ == "__main__":
    unittest.main()
