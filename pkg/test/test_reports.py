import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch, MagicMock

from core.census import build_census
from core.combinat import rank_of
from core.randsrc import EdgeOracle, EdgeSet
from explorer.params import StopParams
from explorer.process import explore
from services.harness import Regime
from services.reports import (ReportFormat, SCHEMA_VERSION, csv_text, format_value, json_text, write_census,
                              write_records, write_trace)


def single_edge_trace():
    edges = EdgeSet(6, 3, [rank_of((0, 1, 2))])
    params = StopParams(lam=0.5, delta=0.1, xi=1.0, n=6, j=2)
    return explore([0, 1], EdgeOracle.presampled(edges), params)


class TestReports(unittest.TestCase):

    def setUp(self):
        self.mock_logger = MagicMock()
        self.logger_patcher = patch('services.reports.logger', self.mock_logger)
        self.logger_patcher.start()

    def tearDown(self):
        self.logger_patcher.stop()

    # 1. Cell formatting
    def test_format_value(self):
        self.assertEqual(format_value(None), "")
        self.assertEqual(format_value(True), "true")
        self.assertEqual(format_value(False), "false")
        self.assertEqual(format_value(3), "3")
        self.assertEqual(format_value(0.1), "0.10000000000000001")
        self.assertEqual(format_value(Regime.SUPER), "super")
        self.assertEqual(format_value({"b": 1, "a": 2}), '{"a":2,"b":1}')

    # 2. CSV and JSON text
    def test_csv_text(self):
        rows = [{"trial": 0, "largest": 12, "extra": "x"}, {"trial": 1, "largest": 7}]
        text = csv_text(rows, "census", columns=["trial", "largest", "second_largest"])
        self.assertEqual(
            text,
            f"# hypergiant census v{SCHEMA_VERSION}\ntrial,largest,second_largest\n0,12,\n1,7,\n",
        )

    def test_csv_columns_default_to_first_row(self):
        text = csv_text([{"b": 1, "a": 2}], "trace")
        self.assertEqual(text.splitlines()[1], "b,a")

    def test_json_text_is_sorted(self):
        text = json_text({"z": Regime.SUB, "a": (1, 2), "m": Path("out")})
        self.assertEqual(json.loads(text), {"a": [1, 2], "m": "out", "z": "sub"})
        self.assertLess(text.index('"a"'), text.index('"z"'))
        self.assertTrue(text.endswith("\n"))

    # 3. Files
    def test_write_records_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_records([{"trial": 0, "largest": 3}], {"kind": "census"}, tmp, "census")
            self.assertEqual([path.name for path in paths], ["census_trials.csv", "census_summary.json"])
            summary = json.loads(paths[1].read_text())
            self.assertEqual(summary["schema"], SCHEMA_VERSION)
            self.assertTrue(paths[0].read_text().startswith("# hypergiant census v"))

    def test_write_records_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_records([{"trial": 0}], {"passed": True}, Path(tmp) / "nested", "explore",
                                  ReportFormat.JSON)
            self.assertEqual(len(paths), 1)
            document = json.loads(paths[0].read_text())
            self.assertEqual(document["trials"], [{"trial": 0}])
            self.assertTrue(document["passed"])

    def test_write_trace(self):
        trace = single_edge_trace()
        with tempfile.TemporaryDirectory() as tmp:
            csv_path = write_trace(trace, Path(tmp) / "trace.csv")
            lines = csv_path.read_text().splitlines()
            self.assertEqual(lines[1], "i,generation_size,component_size,queries,edges,delta_0,delta_1")
            self.assertEqual(lines[3], "2,2,3,6,0,2,2")
            json_path = write_trace(trace, Path(tmp) / "trace.json", "json")
            document = json.loads(json_path.read_text())
            self.assertEqual(document["summary"]["stop_reason"], "S1")
            self.assertEqual(len(document["rounds"]), 3)

    def test_write_census(self):
        census = build_census(EdgeSet(6, 3, [rank_of((0, 1, 2)), rank_of((1, 2, 3))]), 2)
        with tempfile.TemporaryDirectory() as tmp:
            document = json.loads(write_census(census, Path(tmp) / "census.json").read_text())
        self.assertEqual(document["schema"], SCHEMA_VERSION)
        self.assertEqual(document["largest"], 5)
        self.assertEqual(document["total_nullity"], 0)


if __name__ == "__main__":
    unittest.main()
