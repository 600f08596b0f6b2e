import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

import pandas as pd

from src.balayage.theorem_checks import check_domination, domination_budget
from src.runner.cli import main
from src.runner.refine_study import check_refinement, refine_study
from src.runner.run_scenario import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_REPORT_FAILED,
    execute_scenario,
    run_scenario,
)
from src.runner.scenario_builder import build_scenario
from src.runner.scenario_loader import ScenarioLoader, parse_scenario_text
from src.shared.energy import potential
from src.shared.errors import ConfigError, ValidationError
from src.shared.settings import Settings

FIXED_POINT = {
    "name": "tiny-fixed-point",
    "region": {"kind": "sphere-grid", "count": 60},
    "source": {"kind": "on-region", "mass": 1.0, "fraction": 0.2},
    "probes": {"exterior": {"count": 16, "r_min": 1.5, "r_max": 3.0}},
    "experiments": [{"kind": "sweep"}, {"kind": "idempotence"}, {"kind": "uniqueness"}, {"kind": "domination"}],
    "seed": 3,
}

STRESS = {
    "name": "tiny-stress",
    "kernel": {"alpha": 2.0, "dim": 3, "epsilon": 2.0},
    "region": {"kind": "explicit", "points": [[1, 0, 0], [-1, 0, 0]]},
    "source": {"kind": "atoms", "points": [[0, 0, 0]], "weights": [1.0]},
    "experiments": [{"kind": "sweep"}, {"kind": "truncated"}],
}

CHAINS = {
    "name": "tiny-chains",
    "region": {"kind": "sphere-grid", "count": 60},
    "source": {"kind": "shell", "radius": 2.0, "count": 30},
    "probes": {"include_region": False, "exterior": {"count": 12, "r_min": 1.5, "r_max": 3.0}},
    "experiments": [
        {"kind": "increasing-union", "chain_sizes": [10, 30, 60], "chains": 3},
        {"kind": "decreasing", "extra_shells": [1.3, 1.2], "count": 60, "chains": 2},
        {"kind": "equilibrium-exhaustion", "chain_sizes": [15, 30], "chains": 2},
    ],
    "seed": 2,
}

FAR_SOURCE = {
    "name": "tiny-far",
    "region": {"kind": "sphere-grid", "count": 40},
    "source": {"kind": "atoms", "points": [[4, 0, 0]], "weights": [1.0]},
    "experiments": [{"kind": "sweep"}],
}


def _config(doc):
    return parse_scenario_text(json.dumps(doc))


class _TempOutput(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.settings = Settings(threads=1, output_root=self.root / "outputs", scenario_dir=self.root / "scenarios")
        self._quiet = contextlib.ExitStack()
        self._quiet.enter_context(contextlib.redirect_stdout(io.StringIO()))
        self._quiet.enter_context(contextlib.redirect_stderr(io.StringIO()))

    def tearDown(self) -> None:
        self._quiet.close()
        self._tmp.cleanup()


class TestBuildScenario(unittest.TestCase):
    def test_default_epsilon_follows_grid(self):
        sc = build_scenario(_config(FAR_SOURCE))
        self.assertAlmostEqual(sc.kernel.epsilon, 0.5 * sc.grid_spacing)
        self.assertTrue(sc.has_classical_reference())

    def test_count_override(self):
        sc = build_scenario(_config(FAR_SOURCE), count=25)
        self.assertEqual(sc.region.size, 25)

    def test_single_point_region_needs_epsilon(self):
        doc = dict(FAR_SOURCE, region={"kind": "explicit", "points": [[0, 0, 0]]})
        with self.assertRaises(ConfigError):
            build_scenario(_config(doc))

    def test_dimension_mismatch(self):
        doc = dict(FAR_SOURCE, kernel={"dim": 4})
        with self.assertRaises(ConfigError):
            build_scenario(_config(doc))


class TestRunScenario(_TempOutput):
    def test_fixed_point_passes_and_writes_artifacts(self):
        run = execute_scenario(_config(FIXED_POINT), self.settings)
        self.assertEqual(run.exit_code, EXIT_OK)
        out = self.root / "outputs" / "tiny-fixed-point"
        for name in ("results.json", "reports.csv", "manifest.json", "events.jsonl"):
            self.assertTrue((out / name).exists(), name)
        self.assertTrue((out / "tables" / "sweep-weights.csv").exists())

        results = json.loads((out / "results.json").read_text(encoding="utf-8"))
        self.assertEqual(results["scenario"], "tiny-fixed-point")
        self.assertEqual([e["name"] for e in results["experiments"]], ["sweep", "idempotence", "uniqueness", "domination"])
        self.assertTrue(all(r["pass"] for r in results["reports"]))

        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["exit_code"], EXIT_OK)
        self.assertEqual(manifest["config_hash"], _config(FIXED_POINT).config_hash())
        self.assertIn("reports.csv", manifest["tables"])

    def test_results_are_reproducible(self):
        first = execute_scenario(_config(FIXED_POINT), self.settings)
        text_a = (first.output_dir / "results.json").read_text(encoding="utf-8")
        second = execute_scenario(_config(FIXED_POINT), self.settings)
        text_b = (second.output_dir / "results.json").read_text(encoding="utf-8")
        self.assertEqual(text_a, text_b)

    def test_failing_report_gives_exit_one(self):
        run = execute_scenario(_config(STRESS), self.settings)
        self.assertEqual(run.exit_code, EXIT_REPORT_FAILED)
        failed = [r.theorem_id for r in run.reports if not r.passed]
        self.assertEqual(failed, ["truncated"])

    def test_malformed_file_gives_exit_two(self):
        bad = self.root / "bad.json"
        bad.write_text('{"name": "bad",,}', encoding="utf-8")
        run = run_scenario(bad, self.settings)
        self.assertEqual(run.exit_code, EXIT_CONFIG)
        self.assertIn("invalid JSON", run.message)

    def test_output_dir_override(self):
        run = execute_scenario(_config(dict(FAR_SOURCE, output_dir="custom")), self.settings)
        self.assertEqual(run.output_dir, self.root / "outputs" / "custom")

    def test_chain_experiments_run_seeded_chains(self):
        run = execute_scenario(_config(CHAINS), self.settings)
        by_name = {o.name: o for o in run.outcomes}
        self.assertTrue(all(o.failure is None for o in run.outcomes))

        union = by_name["increasing-union"].reports
        self.assertEqual([r.label for r in union], ["chain-0", "chain-1", "chain-2"])
        self.assertEqual(sum(1 for r in union if "worst of 3 chains" in r.notes), 1)
        self.assertTrue(all("budget 1.000e-07" in r.notes[1] for r in union))

        shrinking = by_name["decreasing"].reports
        self.assertEqual([r.label for r in shrinking], ["chain-0", "chain-1"])
        # every chain turns its shells differently
        self.assertNotEqual(shrinking[0].details[0]["probe_0"], shrinking[1].details[0]["probe_0"])

        gamma = by_name["equilibrium-exhaustion"].reports
        self.assertEqual(len(gamma), 2)
        self.assertTrue(all(r.tolerance == 1e-7 for r in gamma))


class TestRefineStudy(_TempOutput):
    def test_empty_levels_rejected(self):
        with self.assertRaises(ValidationError):
            refine_study(_config(FAR_SOURCE), [], self.settings)

    def test_single_level_passes(self):
        study = refine_study(_config(FAR_SOURCE), [30], self.settings)
        self.assertEqual(study.exit_code, EXIT_OK)
        self.assertEqual(len(study.table), 1)
        self.assertTrue((study.output_dir / "refine.csv").exists())
        self.assertEqual(int(study.table["points"].iloc[0]), 30)

    def test_check_refinement(self):
        table = pd.DataFrame(
            {
                "capacity_error": [0.10, 0.05, 0.052],
                "domination_residual": [1e-3, 5e-4, 1e-7],
                "mass_residual": [float("nan")] * 3,
                "classical_mass_error": [0.2, 0.1, 0.05],
            }
        )
        report = check_refinement(table, slack=0.1)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.worst_residual, 0.04)

        table.loc[2, "classical_mass_error"] = 0.2
        self.assertFalse(check_refinement(table, slack=0.1).passed)


class TestCli(_TempOutput):
    def test_list_builtin(self):
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            code = main(["--output-root", str(self.root / "outputs"), "list"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("fixed-point", out.getvalue().split())

    def test_run_by_path(self):
        path = self.root / "tiny-far.json"
        path.write_text(json.dumps(FAR_SOURCE), encoding="utf-8")
        code = main(["--output-root", str(self.root / "outputs"), "run", str(path)])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue((self.root / "outputs" / "tiny-far" / "manifest.json").exists())

    def test_bad_tol_scale(self):
        self.assertEqual(main(["--tol-scale", "0", "list"]), EXIT_CONFIG)

    def test_refine_without_levels(self):
        path = self.root / "tiny-far.json"
        path.write_text(json.dumps(FAR_SOURCE), encoding="utf-8")
        self.assertEqual(main(["--output-root", str(self.root / "outputs"), "refine", str(path)]), EXIT_CONFIG)


class TestShellOntoSphereScenario(unittest.TestCase):
    """The built-in Newtonian scenario at its full grid size."""

    @classmethod
    def setUpClass(cls) -> None:
        cls.scenario = build_scenario(ScenarioLoader().load("shell-onto-sphere"))
        cls.result = cls.scenario.base_sweep()

    def test_rays_stay_out_of_check_points(self):
        self.assertEqual(self.scenario.region.size, 1500)
        # 400 source atoms and 200 exterior points
        self.assertEqual(self.scenario.probes.shape, (600, 3))
        self.assertEqual(self.scenario.ray_points.shape, (24, 3))

    def test_domination_within_budget(self):
        sc = self.scenario
        budget = domination_budget(potential(sc.ctx, sc.source, sc.probes))
        report = check_domination(self.result, sc.probes, tol=budget, ctx=sc.ctx)
        self.assertTrue(report.passed, report.details[:3])

    def test_swept_mass_near_classical(self):
        self.assertAlmostEqual(self.result.swept_mass, 0.5, delta=0.02 * 0.5)


if __name__ == "__main__":
    unittest.main()
