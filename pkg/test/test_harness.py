import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from math import sqrt
from pathlib import Path
from unittest.mock import patch, MagicMock

from core.randsrc import EdgeSet
from core.theory import critical_p, graph_subcritical_bound
from explorer.params import StopMode
from main import EXIT_OK, EXIT_USAGE, build_parser, cli, merged_values
from services.harness import (ExperimentConfig, Regime, calibrate_c_sub, run_branching_suite, run_census_sweep,
                              run_exploration_sweep)
from services.reports import ReportFormat, csv_text


def run_cli(argv: list[str]) -> tuple[int, str]:
    out = io.StringIO()
    with redirect_stdout(out), redirect_stderr(io.StringIO()):
        code = cli(argv)
    return code, out.getvalue()


class TestHarness(unittest.TestCase):

    def setUp(self):
        self.mock_logger = MagicMock()
        self.patchers = [
            patch('services.harness.logger', self.mock_logger),
            patch('services.reports.logger', self.mock_logger),
            patch('core.theory.logger', self.mock_logger),
            patch('main.logger', self.mock_logger),
            patch('main.configure_logging'),
        ]
        for patcher in self.patchers:
            patcher.start()

    def tearDown(self):
        for patcher in self.patchers:
            patcher.stop()

    # 1. Experiment configuration
    def test_config_from_mapping(self):
        config = ExperimentConfig.from_mapping({
            "N": "700", "K": "3", "J": "2", "EPS": "0.15", "REGIME": "sub", "LAMBDA": "0.01",
            "TRACK_LOWER_COUPLING": "true", "OUT": "",
        })
        self.assertEqual((config.n, config.k, config.j), (700, 3, 2))
        self.assertEqual(config.eps, 0.15)
        self.assertIs(config.regime, Regime.SUB)
        self.assertEqual(config.lam, 0.01)
        self.assertTrue(config.track_lower_coupling)
        self.assertIsNone(config.out)
        self.assertEqual(config.trials, 10)
        self.assertIs(config.format, ReportFormat.CSV)

    def test_config_from_mapping_errors(self):
        with self.assertRaises(ValueError):
            ExperimentConfig.from_mapping({"n": "10", "k": "3", "j": "2", "eps": "0.1", "colour": "red"})
        with self.assertRaises(ValueError):
            ExperimentConfig.from_mapping({"n": "10", "k": "3", "j": "2"})
        with self.assertRaises(ValueError):
            ExperimentConfig.from_mapping({"n": "ten", "k": "3", "j": "2", "eps": "0.1"})
        with self.assertRaises(ValueError):
            ExperimentConfig.from_mapping({"n": "10", "k": "3", "j": "2", "eps": "0.1", "regime": "critical"})

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            ExperimentConfig(n=10, k=3, j=3, eps=0.1)
        with self.assertRaises(ValueError):
            ExperimentConfig(n=10, k=3, j=2, eps=1.0)
        with self.assertRaises(ValueError):
            ExperimentConfig(n=10, k=3, j=2, eps=0.1, trials=0)
        with self.assertRaises(ValueError):
            ExperimentConfig(n=10, k=3, j=2, eps=0.1, p=2.0)

    def test_edge_probability(self):
        config = ExperimentConfig(n=100, k=3, j=2, eps=0.2)
        self.assertAlmostEqual(config.edge_probability, 1.2 * critical_p(100, 3, 2))
        sub = config.with_overrides(regime=Regime.SUB)
        self.assertAlmostEqual(sub.edge_probability, 0.8 * critical_p(100, 3, 2))
        self.assertEqual(config.with_overrides(p=0.5).edge_probability, 0.5)
        self.assertFalse(config.overridden_p)
        self.assertEqual(config.with_overrides(p=None), config)

    def test_stop_params_overrides(self):
        config = ExperimentConfig(n=500, k=3, j=2, eps=0.2, lam=0.01, xi=3.0)
        params = config.stop_params(StopMode.RUN_TO_T_LARGE)
        self.assertEqual(params.lam, 0.01)
        self.assertEqual(params.xi, 3.0)
        self.assertAlmostEqual(params.gamma, sqrt(0.01 * 0.2))
        self.assertIs(params.mode, StopMode.RUN_TO_T_LARGE)
        self.assertEqual(config.to_dict()["regime"], "super")

    # 2. Census sweeps
    def test_census_sweep_without_edges(self):
        report = run_census_sweep(ExperimentConfig(n=20, k=3, j=2, eps=0.1, p=0.0, trials=3))
        self.assertEqual([record["largest"] for record in report.records], [0, 0, 0])
        self.assertEqual([record["trial"] for record in report.records], [0, 1, 2])
        self.assertEqual(report.checks, [])
        self.assertTrue(report.passed)

    def test_census_sweep_is_deterministic(self):
        config = ExperimentConfig(n=40, k=3, j=2, eps=0.2, trials=4, seed=3)
        first = csv_text(run_census_sweep(config).records, "census")
        second = csv_text(run_census_sweep(config).records, "census")
        self.assertEqual(first, second)

    def test_census_sweep_worker_pool_keeps_trial_order(self):
        config = ExperimentConfig(n=30, k=3, j=2, eps=0.2, trials=4, seed=5)
        serial = run_census_sweep(config).records
        pooled = run_census_sweep(config.with_overrides(workers=2)).records
        self.assertEqual(serial, pooled)

    def test_census_sweep_checks(self):
        report = run_census_sweep(ExperimentConfig(n=40, k=3, j=2, eps=0.2, trials=3))
        self.assertEqual([check.name for check in report.checks], ["giant_size", "second_largest_small"])
        self.assertIn("solver_size", report.aggregate)
        sub = run_census_sweep(ExperimentConfig(n=40, k=3, j=2, eps=0.2, trials=3, regime=Regime.SUB))
        self.assertEqual([check.name for check in sub.checks], ["subcritical_bound"])

    def test_census_sweep_writes_reports_and_edges(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = ExperimentConfig(n=30, k=3, j=2, eps=0.2, trials=2, seed=4, out=tmp, save_edges=True)
            report = run_census_sweep(config)
            for trial, record in enumerate(report.records):
                document = json.loads(Path(tmp, f"census_{trial}.json").read_text())
                self.assertEqual(document["size_histogram"], record["size_histogram"])
                self.assertEqual(document["largest"], record["largest"])
                edges = EdgeSet.read(Path(tmp, f"census_edges_{trial}.txt"))
                self.assertEqual(len(edges), record["edges"])
            replay = run_census_sweep(ExperimentConfig(n=30, k=3, j=2, eps=0.2, trials=1,
                                                       edges_file=str(Path(tmp, "census_edges_1.txt"))))
        self.assertEqual(replay.records[0]["largest"], report.records[1]["largest"])
        self.assertEqual(replay.checks, [])

    def test_edges_file_must_match_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "edges.txt")
            EdgeSet(8, 3).write(path)
            with self.assertRaises(ValueError):
                run_census_sweep(ExperimentConfig(n=9, k=3, j=2, eps=0.2, trials=1, edges_file=str(path)))

    def test_graph_case_reports_graph_shape(self):
        config = ExperimentConfig(n=2000, k=2, j=1, eps=0.3, trials=3, regime=Regime.SUB)
        report = run_census_sweep(config)
        shape = graph_subcritical_bound(2000, 0.3, 1.0)
        self.assertAlmostEqual(report.aggregate["graph_subcritical_shape"], shape)
        self.assertAlmostEqual(report.aggregate["max_largest_over_graph_shape"],
                               report.aggregate["max_largest"] / shape)
        self.assertEqual([check.name for check in report.checks], ["subcritical_bound"])

    def test_calibrate_c_sub(self):
        value = calibrate_c_sub(ExperimentConfig(n=30, k=3, j=2, eps=0.3, trials=5))
        self.assertGreaterEqual(value, 0.0)

    # 3. Exploration and branching
    def test_exploration_sweep_bookkeeping(self):
        report = run_exploration_sweep(ExperimentConfig(n=40, k=3, j=2, eps=0.2, trials=5,
                                                        track_lower_coupling=True))
        self.assertEqual(len(report.records), 5)
        checks = {check.name: check for check in report.checks}
        self.assertTrue(checks["ledger_identity"].passed)
        self.assertTrue(checks["event_caps"].passed)
        self.assertIn("lower_coupling_failures", report.records[0])
        for record in report.records:
            self.assertIn(record["stop_reason"], ("S1", "S2", "S3"))
            self.assertGreaterEqual(record["T_large"], record["T"])
            self.assertEqual(record["ledger_mismatches"], 0)

    def test_exploration_sweep_writes_traces(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_exploration_sweep(ExperimentConfig(n=30, k=3, j=2, eps=0.2, trials=2, out=tmp))
            lines = Path(tmp, "explore_trace_1.csv").read_text().splitlines()
            self.assertEqual(lines[0], "# hypergiant trace v1")
            self.assertTrue(lines[1].startswith("i,generation_size,component_size,queries,edges"))
            run_exploration_sweep(ExperimentConfig(n=30, k=3, j=2, eps=0.2, trials=1, out=tmp,
                                                   format=ReportFormat.JSON))
            document = json.loads(Path(tmp, "explore_trace_0.json").read_text())
        self.assertIn(document["summary"]["stop_reason"], ("S1", "S2", "S3"))
        self.assertGreaterEqual(len(document["rounds"]), 2)

    def test_branching_suite(self):
        report = run_branching_suite(ExperimentConfig(n=50, k=3, j=2, eps=0.2, trials=200))
        self.assertEqual([record["law"] for record in report.records], ["upper", "lower", "dual", "pivot_1"])
        checks = {check.name: check for check in report.checks}
        self.assertTrue(checks["coupling_domination"].passed)
        self.assertTrue(checks["pivot_1_subcritical"].passed)
        self.assertIn("stop_bracket_mc", checks)
        self.assertGreaterEqual(report.aggregate["stop_frequency"], 0.0)
        self.assertLessEqual(report.aggregate["stop_frequency"], 1.0)
        self.assertEqual(report.aggregate["coupled_runs"], 100)

    def test_branching_suite_needs_enough_trials(self):
        with self.assertRaises(ValueError):
            run_branching_suite(ExperimentConfig(n=50, k=3, j=2, eps=0.2, trials=20))

    # 4. Command line
    def test_cli_predict(self):
        code, out = run_cli(["predict", "--n", "700", "--k", "3", "--j", "2", "--eps", "0.15"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("critical_p: ", out)
        self.assertIn("giant_solver_size: ", out)

    def test_cli_constants(self):
        code, out = run_cli(["constants", "--k", "3", "--j", "2", "--eps", "0.01", "--alpha", "0.1"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("alpha: 0.1\n", out)
        self.assertIn("# hypergiant constants v1", out)

    def test_cli_usage_errors(self):
        self.assertEqual(run_cli(["census", "--bogus"])[0], EXIT_USAGE)
        self.assertEqual(run_cli([])[0], EXIT_USAGE)
        self.assertEqual(run_cli(["census", "--n", "20", "--k", "3", "--j", "3", "--eps", "0.1"])[0], EXIT_USAGE)
        self.assertEqual(run_cli(["constants", "--j", "2", "--eps", "0.1"])[0], EXIT_USAGE)

    def test_cli_census_to_stdout(self):
        code, out = run_cli(["census", "--n", "20", "--k", "3", "--j", "2", "--eps", "0.1", "--p", "0",
                             "--trials", "2"])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(out.startswith("# hypergiant census v1\ntrial,"))
        self.assertEqual(len(out.splitlines()), 4)

    def test_cli_census_files_are_byte_identical(self):
        argv = ["census", "--n", "30", "--k", "3", "--j", "2", "--eps", "0.2", "--trials", "3", "--seed", "9"]
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            run_cli(argv + ["--out", first])
            run_cli(argv + ["--out", second])
            for name in ("census_trials.csv", "census_2.json"):
                with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
                    self.assertEqual(a.read(), b.read())

    def test_cli_explore_writes_traces(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_cli(["explore", "--n", "30", "--k", "3", "--j", "2", "--eps", "0.2", "--trials", "2",
                     "--out", tmp])
            self.assertTrue(Path(tmp, "explore_trials.csv").exists())
            self.assertTrue(Path(tmp, "explore_trace_0.csv").exists())
            self.assertTrue(Path(tmp, "explore_trace_1.csv").exists())

    def test_cli_census_from_edges_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "edges.txt")
            EdgeSet.from_text("6 3 2\n0 1 2\n1 2 3\n").write(path)
            code, out = run_cli(["census", "--n", "6", "--k", "3", "--j", "2", "--eps", "0.1", "--edges", path,
                                 "--trials", "1", "--format", "json"])
        self.assertEqual(code, EXIT_OK)
        document = json.loads(out)
        self.assertEqual(document["trials"][0]["largest"], 5)
        self.assertEqual(document["trials"][0]["size_histogram"], {"5": 1})

    def test_config_file_with_flag_override(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "experiment.env")
            with open(path, "w") as file:
                file.write("N=700\nK=3\nJ=2\nEPS=0.15\nTRIALS=10\n")
            args = build_parser().parse_args(["census", "--config", path, "--trials", "3"])
            values = merged_values(args)
        self.assertEqual(values["n"], "700")
        self.assertEqual(values["trials"], 3)
        self.assertEqual(ExperimentConfig.from_mapping(values).trials, 3)


if __name__ == "__main__":
    unittest.main()
