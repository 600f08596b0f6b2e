import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from src.shared.run_logger import RunEvent, RunLogger
from src.shared.settings import Settings


class TestRunLogger(unittest.TestCase):
    def test_appends_jsonl(self):
        with tempfile.TemporaryDirectory() as tmp:
            logger = RunLogger(Path(tmp) / "run")
            logger.log(RunEvent(scenario="demo", event="start", experiment="sweep"))
            logger.log(RunEvent(scenario="demo", event="finish", experiment="sweep", status="pass"))
            lines = logger.path.read_text(encoding="utf-8").splitlines()
            self.assertEqual(len(lines), 2)
            first = json.loads(lines[0])
            self.assertEqual(first["event"], "start")
            self.assertTrue(first["timestamp_utc"])
            self.assertEqual(json.loads(lines[1])["status"], "pass")


class TestSettings(unittest.TestCase):
    def test_environment(self):
        env = {"POTENTIA_THREADS": "4", "POTENTIA_OUTPUT_ROOT": "/tmp/potentia-out"}
        with mock.patch.dict(os.environ, env):
            s = Settings()
        self.assertEqual(s.threads, 4)
        self.assertEqual(s.output_root, Path("/tmp/potentia-out"))

    def test_bad_thread_count_falls_back(self):
        with mock.patch.dict(os.environ, {"POTENTIA_THREADS": "many"}):
            self.assertEqual(Settings().threads, 1)

    def test_overrides(self):
        s = Settings(threads=1).with_overrides(threads=0, tol_scale=2.0, output_root="/tmp/x")
        self.assertEqual(s.threads, 1)
        self.assertEqual(s.tol_scale, 2.0)
        self.assertEqual(s.output_root, Path("/tmp/x"))
        with self.assertRaises(ValueError):
            s.with_overrides(tol_scale=-1.0)


if __name__ == "__main__":
    unittest.main()
