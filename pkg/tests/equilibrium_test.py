import unittest

import numpy as np

from src.shared.core_types import empty_region, make_region, region_select
from src.shared.errors import ValidationError
from src.shared.grids import fibonacci_sphere, sphere_region
from src.shared.kernels import KernelSpec, kernel_from_grid
from src.solvers.equilibrium import (
    EquilibriumExhaustion,
    capacity_via_unit_mass,
    check_capacity_routes,
    check_equilibrium_exhaustion,
    check_equilibrium_identities,
    check_frostman,
    check_nested,
    classical_capacity,
    equilibrium_exhaustion,
    equilibrium_measure,
)

KERNEL = KernelSpec(alpha=2.0, dim=3, epsilon=0.5)
OFF_DIAGONAL = 1.25 ** -0.5


class TestSmallRegions(unittest.TestCase):
    def test_single_point(self):
        res = equilibrium_measure(make_region([(0, 0, 0)]), KERNEL)
        self.assertAlmostEqual(res.capacity, 0.5)
        self.assertAlmostEqual(res.mass, 0.5)
        self.assertAlmostEqual(res.min_potential_on_region, 1.0)

    def test_pair(self):
        region = make_region([(0, 0, 0), (1, 0, 0)])
        res = equilibrium_measure(region, KERNEL)
        expected = 2.0 / (2.0 + OFF_DIAGONAL)
        self.assertAlmostEqual(res.capacity, expected)
        self.assertTrue(np.allclose(res.gamma.weights, [expected / 2.0] * 2))
        self.assertAlmostEqual(res.energy, expected)

    def test_inequality_route_matches(self):
        region = make_region([(0, 0, 0), (1, 0, 0)])
        res = equilibrium_measure(region, KERNEL, method="inequality")
        self.assertAlmostEqual(res.capacity, 2.0 / (2.0 + OFF_DIAGONAL))
        self.assertAlmostEqual(capacity_via_unit_mass(region, KERNEL), res.capacity)

    def test_empty_region(self):
        res = equilibrium_measure(empty_region(3), KERNEL)
        self.assertEqual(res.capacity, 0.0)
        self.assertTrue(res.gamma.is_zero())
        self.assertTrue(check_equilibrium_identities(res).passed)

    def test_unknown_method(self):
        with self.assertRaises(ValidationError):
            equilibrium_measure(make_region([(0, 0, 0)]), KERNEL, method="newton")

    def test_dimension_mismatch(self):
        with self.assertRaises(ValidationError):
            equilibrium_measure(make_region([(0, 0, 0, 0)]), KERNEL)


class TestSphere(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.region = sphere_region(300, label="sphere")
        cls.kernel = kernel_from_grid(2.0, 3, cls.region.points)
        cls.result = equilibrium_measure(cls.region, cls.kernel)

    def test_identities(self):
        report = check_equilibrium_identities(self.result)
        self.assertTrue(report.passed, report.to_dict())
        self.assertEqual(len(report.details), 4)

    def test_capacity_near_radius(self):
        self.assertAlmostEqual(self.result.capacity, classical_capacity(1.0, self.kernel), delta=0.15)

    def test_routes_agree(self):
        report = check_capacity_routes(self.region, self.kernel)
        self.assertTrue(report.passed, report.to_dict())

    def test_frostman_outside(self):
        probes = fibonacci_sphere(50, radius=2.0)
        report = check_frostman(self.result, self.kernel, probes)
        self.assertTrue(report.passed)
        self.assertEqual(report.theorem_id, "frostman")

    def test_exhaustion_capacities_grow(self):
        rng = np.random.default_rng(4)
        order = rng.permutation(self.region.size)
        chain = [region_select(self.region, order[:n], label=f"n{n}") for n in (30, 90, 200)]
        probes = fibonacci_sphere(8, radius=1.5)
        table = equilibrium_exhaustion(self.region, chain, self.kernel, probes)
        self.assertEqual(table.sizes, [30, 90, 200, 300])
        self.assertEqual(table.potentials.shape, (4, 8))
        self.assertTrue(all(a <= b + 1e-9 for a, b in zip(table.capacities, table.capacities[1:])))
        self.assertEqual(len(table.rows()), 4)
        self.assertIn("probe_7", table.rows()[0])


class TestChecks(unittest.TestCase):
    def test_classical_capacity(self):
        self.assertEqual(classical_capacity(2.5, KernelSpec(alpha=2.0, dim=3)), 2.5)
        with self.assertRaises(ValidationError):
            classical_capacity(1.0, KernelSpec(alpha=1.0, dim=3))
        with self.assertRaises(ValidationError):
            classical_capacity(0.0, KernelSpec(alpha=2.0, dim=3))

    def test_check_nested_rejects_broken_chain(self):
        region = make_region([(0, 0, 0), (1, 0, 0)])
        with self.assertRaises(ValidationError):
            check_nested([make_region([(5, 0, 0)])], region)

    def test_exhaustion_report_flags_drop(self):
        table = EquilibriumExhaustion(
            sizes=[1, 2],
            capacities=[0.5, 0.6],
            potentials=np.array([[0.4, 0.3], [0.35, 0.5]]),
        )
        report = check_equilibrium_exhaustion(table, tol=1e-3)
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.worst_residual, 0.05)

    def test_exhaustion_report_passes_monotone_table(self):
        table = EquilibriumExhaustion(
            sizes=[1, 2],
            capacities=[0.5, 0.6],
            potentials=np.array([[0.4, 0.3], [0.45, 0.5]]),
        )
        self.assertTrue(check_equilibrium_exhaustion(table).passed)


if __name__ == "__main__":
    unittest.main()
