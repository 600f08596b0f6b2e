import json
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src.runner.output_formatter import ExperimentOutcome, OutputFormatter, to_jsonable
from src.shared.reports import failed_report, make_report, reports_frame


class TestReports(unittest.TestCase):
    def test_pass_is_residual_below_tolerance(self):
        self.assertTrue(make_report("mass", 1e-3, 2e-2).passed)
        self.assertFalse(make_report("mass", 3e-2, 2e-2).passed)
        self.assertTrue(make_report("mass", 2e-2, 2e-2).passed)

    def test_nan_residual_fails(self):
        self.assertFalse(make_report("mass", float("nan"), 1.0).passed)

    def test_failed_report(self):
        r = failed_report("sweep", 1e-9, "solver gave up", label="sweep")
        self.assertFalse(r.passed)
        self.assertEqual(r.to_dict()["worst_residual"], "inf")
        self.assertEqual(r.notes, ["solver gave up"])

    def test_reports_frame_columns(self):
        frame = reports_frame([make_report("a", 0.0, 1.0), make_report("b", 2.0, 1.0, label="x")])
        self.assertEqual(list(frame.columns), ["theorem_id", "label", "pass", "worst_residual", "tolerance"])
        self.assertEqual(frame["pass"].tolist(), [True, False])


class TestOutputFormatter(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.fmt = OutputFormatter(Path(self._tmp.name) / "out")

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def test_to_jsonable(self):
        value = {"a": np.float64(1.5), "b": np.array([1, 2]), "c": math.inf, "d": np.bool_(True), 3: (np.int64(4),)}
        self.assertEqual(to_jsonable(value), {"a": 1.5, "b": [1, 2], "c": "inf", "d": True, "3": [4]})

    def test_format_results(self):
        outcome = ExperimentOutcome(name="mass", kind="mass", reports=[make_report("mass", 1e-3, 2e-2)])
        broken = ExperimentOutcome(name="sweep", kind="sweep", failure="NonConvergenceError: stuck")
        results = self.fmt.format_results("demo", "abc", {"alpha": 2.0}, 0.1, [outcome, broken])
        self.assertEqual(results["experiments"][0], {"name": "mass", "kind": "mass", "pass": True, "failure": None})
        self.assertFalse(results["experiments"][1]["pass"])
        self.assertEqual(len(results["reports"]), 1)

    def test_write_results_hash(self):
        sha = self.fmt.write_results({"b": 1, "a": [1.0, 2.0]})
        text = (self.fmt.output_dir / "results.json").read_text(encoding="utf-8")
        self.assertEqual(len(sha), 64)
        self.assertLess(text.index('"a"'), text.index('"b"'))

    def test_write_table_keeps_full_precision(self):
        rel = self.fmt.write_table("w", pd.DataFrame({"weight": [1.0 / 3.0]}))
        self.assertEqual(rel, str(Path("tables") / "w.csv"))
        back = pd.read_csv(self.fmt.output_dir / rel)
        self.assertEqual(float(back["weight"].iloc[0]), 1.0 / 3.0)

    def test_manifest(self):
        path = self.fmt.write_manifest("demo", "abc", "f" * 64, 0.05, 0.1, ["b.csv", "a.csv"], 1, extra={"threads": 2})
        manifest = json.loads(path.read_text(encoding="utf-8"))
        self.assertEqual(manifest["tables"], ["a.csv", "b.csv"])
        self.assertEqual(manifest["exit_code"], 1)
        self.assertEqual(manifest["threads"], 2)
        self.assertIn("timestamp_utc", manifest)
        self.assertFalse(path.with_suffix(".tmp").exists())


if __name__ == "__main__":
    unittest.main()
