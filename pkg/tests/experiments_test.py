import unittest

import numpy as np

from src.shared.core_types import make_measure, make_region, region_subset, region_union
from src.shared.energy import EnergyContext
from src.shared.errors import ValidationError
from src.shared.grids import fibonacci_sphere, shell_measure, sphere_region
from src.shared.kernels import KernelSpec, kernel_from_grid
from src.balayage.experiments import (
    classical_swept_mass,
    decreasing_experiment,
    exhaustion_experiment,
    increasing_union_experiment,
    potential_profile,
    random_nested_chain,
)
from src.balayage.sweep import sweep


class TestChains(unittest.TestCase):
    def setUp(self) -> None:
        self.region = sphere_region(60, label="q")

    def test_random_nested_chain(self):
        chain = random_nested_chain(self.region, [5, 10, 30], np.random.default_rng(0))
        self.assertEqual([r.size for r in chain], [5, 10, 30])
        self.assertTrue(region_subset(chain[0], chain[1]))
        self.assertTrue(region_subset(chain[1], chain[2]))
        self.assertTrue(region_subset(chain[2], self.region))
        self.assertEqual(chain[0].label, "q-k5")

    def test_chain_is_seeded(self):
        a = random_nested_chain(self.region, [7], np.random.default_rng(9))
        b = random_nested_chain(self.region, [7], np.random.default_rng(9))
        self.assertEqual(a[0], b[0])

    def test_chain_size_validation(self):
        with self.assertRaises(ValidationError):
            random_nested_chain(self.region, [0, 5], np.random.default_rng(0))
        with self.assertRaises(ValidationError):
            random_nested_chain(self.region, [10, 5], np.random.default_rng(0))
        with self.assertRaises(ValidationError):
            random_nested_chain(self.region, [61], np.random.default_rng(0))


class TestExhaustion(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.region = sphere_region(150, label="q")
        cls.kernel = kernel_from_grid(2.0, 3, cls.region.points)
        cls.ctx = EnergyContext(cls.kernel)
        cls.mu = shell_measure(40, radius=2.0)
        cls.probes = fibonacci_sphere(12, radius=1.5)

    def test_exhaustion_passes(self):
        chain = random_nested_chain(self.region, [20, 60, 110], np.random.default_rng(1))
        report = exhaustion_experiment(self.mu, self.region, chain, self.kernel, self.probes, ctx=self.ctx)
        self.assertTrue(report.passed, report.notes)
        self.assertEqual(report.theorem_id, "exhaustion")
        self.assertIn("budget 1.000e-07", report.notes[1])
        self.assertEqual(len(report.details), 4)
        self.assertAlmostEqual(report.details[-1]["distance_to_final"], 0.0, places=7)
        gaps = [row["distance_to_source"] for row in report.details]
        self.assertTrue(all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:])))

    def test_exhaustion_rejects_non_nested_chain(self):
        a = random_nested_chain(self.region, [20], np.random.default_rng(1))[0]
        b = random_nested_chain(self.region, [30], np.random.default_rng(2))[0]
        with self.assertRaises(ValidationError):
            exhaustion_experiment(self.mu, self.region, [b, a], self.kernel, self.probes, ctx=self.ctx)

    def test_increasing_union(self):
        parts = random_nested_chain(self.region, [15, 45, 90], np.random.default_rng(5))
        report = increasing_union_experiment(self.mu, parts, self.kernel, self.probes, ctx=self.ctx)
        self.assertTrue(report.passed, report.notes)
        self.assertEqual(report.theorem_id, "increasing-union")
        self.assertEqual(report.details[-1]["points"], 90)

    def test_decreasing_chain(self):
        shells = [sphere_region(150, radius=r, label=f"s{r}") for r in (1.3, 1.2)]
        chain = [
            region_union([self.region] + shells, label="t0"),
            region_union([self.region, shells[1]], label="t1"),
            self.region,
        ]
        probes = fibonacci_sphere(12, radius=3.0)
        report = decreasing_experiment(self.mu, chain, self.region, self.kernel, probes, ctx=self.ctx)
        self.assertTrue(report.passed, report.notes)
        self.assertEqual([row["label"] for row in report.details], ["t0", "t1", "q"])

    def test_decreasing_rejects_wrong_target(self):
        chain = [self.region]
        other = make_region(self.region.points[:10], label="part")
        with self.assertRaises(ValidationError):
            decreasing_experiment(self.mu, chain, other, self.kernel, self.probes, ctx=self.ctx)


class TestClassicalReferences(unittest.TestCase):
    def test_classical_swept_mass(self):
        mu = make_measure([(3, 0, 0), (0, 0.5, 0)], [1.0, 2.0])
        self.assertAlmostEqual(classical_swept_mass(mu, (0, 0, 0), 1.0), 1.0 / 3.0 + 2.0)
        self.assertEqual(classical_swept_mass(make_measure([(0, 0, 0)], [1.0]), (0, 0, 0), 1.0), 1.0)
        with self.assertRaises(ValidationError):
            classical_swept_mass(mu, (0, 0, 0), 0.0)

    def test_potential_profile_columns(self):
        region = sphere_region(40, label="q")
        kernel = KernelSpec(alpha=2.0, dim=3, epsilon=0.2)
        res = sweep(make_measure([(2, 0, 0)], [1.0]), region, kernel)
        frame = potential_profile(res, [(1, 0, 0), (0, 0, 1)], [1.5, 2.0, 3.0])
        self.assertEqual(
            list(frame.columns),
            ["ray", "radius", "x", "y", "z", "source_potential", "swept_potential", "difference"],
        )
        self.assertEqual(len(frame), 6)
        self.assertEqual(frame["ray"].tolist(), [0, 0, 0, 1, 1, 1])
        self.assertAlmostEqual(float(frame["x"].iloc[2]), 3.0)


if __name__ == "__main__":
    unittest.main()
