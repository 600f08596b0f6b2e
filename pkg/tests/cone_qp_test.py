import unittest

import numpy as np

from src.shared.core_types import make_measure, make_region, restrict_to_region, zero_measure
from src.shared.errors import ValidationError
from src.shared.grids import fibonacci_sphere, sphere_region
from src.shared.kernels import KernelSpec, assemble_gram, kernel_from_grid
from src.solvers.active_set_oracle import enumerate_active_sets
from src.solvers.cone_qp import (
    ProjectionProblem,
    kkt_certificate,
    objective,
    project,
    project_detailed,
    solve_nnls_core,
)


def _spd(rng: np.random.Generator, m: int) -> np.ndarray:
    a = rng.normal(size=(m, m))
    k = a @ a.T + 0.1 * np.eye(m)
    return 0.5 * (k + k.T)


class TestSolveNnlsCore(unittest.TestCase):
    def test_single_coordinate(self):
        w, lam, _ = solve_nnls_core([[2.0]], [1.0])
        self.assertAlmostEqual(float(w[0]), 0.5)
        self.assertEqual(lam, 0.0)
        w, _, _ = solve_nnls_core([[2.0]], [-1.0])
        self.assertEqual(float(w[0]), 0.0)

    def test_cap_binds(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        w, lam, stats = solve_nnls_core(K, [1.0, 1.0], mass_cap=0.2)
        self.assertTrue(np.allclose(w, [0.1, 0.1], atol=1e-12))
        self.assertAlmostEqual(lam, 0.7)
        self.assertTrue(stats.cap_active)

    def test_slack_cap_has_zero_multiplier(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        w, lam, stats = solve_nnls_core(K, [1.0, 1.0], mass_cap=5.0)
        self.assertTrue(np.allclose(w, [1.0 / 3.0, 1.0 / 3.0], atol=1e-12))
        self.assertEqual(lam, 0.0)
        self.assertFalse(stats.cap_active)

    def test_zero_cap(self):
        w, lam, stats = solve_nnls_core([[1.0, 0.0], [0.0, 1.0]], [0.5, -1.0], mass_cap=0.0)
        self.assertEqual(w.tolist(), [0.0, 0.0])
        self.assertAlmostEqual(lam, 0.5)
        self.assertTrue(stats.cap_active)

    def test_equality_mode(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        w, lam, _ = solve_nnls_core(K, [0.0, 0.0], mass_cap=1.0, mass_equality=True)
        self.assertTrue(np.allclose(w, [0.5, 0.5], atol=1e-12))
        # K w = 1.5 on both coordinates, so the shifted gradient vanishes at lam = -1.5
        self.assertAlmostEqual(lam, -1.5)

    def test_equality_needs_cap(self):
        with self.assertRaises(ValidationError):
            solve_nnls_core([[1.0]], [1.0], mass_equality=True)

    def test_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            solve_nnls_core(np.eye(2), [1.0, 1.0, 1.0])

    def test_empty_problem(self):
        w, lam, _ = solve_nnls_core(np.zeros((0, 0)), [])
        self.assertEqual(w.shape, (0,))
        self.assertEqual(lam, 0.0)


class TestAgainstEnumeration(unittest.TestCase):
    def _compare(self, K, b, cap=None):
        w, lam, stats = solve_nnls_core(K, b, mass_cap=cap)
        ref = enumerate_active_sets(K, b, mass_cap=cap)
        scale = 1.0 + float(np.max(np.abs(b)))
        self.assertLessEqual(float(np.max(np.abs(w - ref.weights))), 1e-8 * scale)
        self.assertLessEqual(abs(objective(K, b, w) - ref.objective), 1e-8 * scale)
        cert = kkt_certificate(K, b, w, lam, 1e-9 * scale, cap, stats.cap_active)
        self.assertTrue(cert.ok, cert.to_dict())

    def test_random_uncapped(self):
        rng = np.random.default_rng(20240601)
        for _ in range(120):
            m = int(rng.integers(1, 9))
            self._compare(_spd(rng, m), rng.normal(size=m))

    def test_random_capped(self):
        rng = np.random.default_rng(7)
        for _ in range(80):
            m = int(rng.integers(1, 9))
            K = _spd(rng, m)
            b = rng.normal(size=m)
            self._compare(K, b, cap=float(rng.uniform(0.05, 2.0)))

    def test_kernel_tables_of_size_twelve(self):
        rng = np.random.default_rng(3)
        for _ in range(4):
            pts = fibonacci_sphere(12)
            k = kernel_from_grid(2.0, 3, pts)
            K = assemble_gram(k, pts)
            src = rng.normal(size=(3, 3)) * 0.3 + np.array([2.0, 0.0, 0.0])
            b = assemble_gram(k, pts, src) @ rng.random(3)
            self._compare(K, b)

    def test_ill_conditioned_capped(self):
        rng = np.random.default_rng(99)
        for _ in range(40):
            m = int(rng.integers(2, 6))
            q, _ = np.linalg.qr(rng.normal(size=(m, m)))
            K = q @ np.diag(np.logspace(0.0, -4.0, m)) @ q.T
            K = 0.5 * (K + K.T)
            b = rng.normal(size=m)
            cap = float(rng.uniform(0.05, 2.0))
            w, _, _ = solve_nnls_core(K, b, mass_cap=cap)
            ref = enumerate_active_sets(K, b, mass_cap=cap)
            scale = 1.0 + float(np.max(np.abs(b)))
            self.assertLessEqual(float(np.sum(ref.weights)), cap * (1.0 + 1e-12))
            self.assertTrue(np.all(ref.weights >= 0.0))
            self.assertLessEqual(abs(objective(K, b, w) - ref.objective), 1e-8 * scale)


class TestEnumerationOracle(unittest.TestCase):
    def test_tight_cap_on_near_singular_table(self):
        # curvature 2e-8 along (1, -1); the capped optimum is interior at (0.75, 0.25)
        c = 1.0 - 1e-8
        K = np.array([[1.0, c], [c, 1.0]])
        b = np.array([2.0, 2.0 - 5e-9])
        ref = enumerate_active_sets(K, b, mass_cap=1.0)
        self.assertEqual(ref.support, (0, 1))
        self.assertTrue(ref.cap_active)
        self.assertAlmostEqual(float(np.sum(ref.weights)), 1.0, places=14)
        self.assertTrue(np.allclose(ref.weights, [0.75, 0.25], atol=1e-6))

    def test_candidates_are_feasible(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            m = int(rng.integers(1, 6))
            K = _spd(rng, m)
            b = rng.normal(size=m)
            cap = float(rng.uniform(0.05, 2.0))
            ref = enumerate_active_sets(K, b, mass_cap=cap, mass_equality=True)
            self.assertAlmostEqual(float(np.sum(ref.weights)), cap, places=12)
            self.assertTrue(np.all(ref.weights >= 0.0))

    def test_size_limit(self):
        with self.assertRaises(ValidationError):
            enumerate_active_sets(np.eye(13), np.ones(13))


class TestProjectAgainstEnumeration(unittest.TestCase):
    """project on twelve-point sphere regions, with and without a binding cap."""

    def setUp(self) -> None:
        self.region = sphere_region(12, label="sphere-12")
        self.kernel = kernel_from_grid(2.0, 3, self.region.points)
        self.K = assemble_gram(self.kernel, self.region.points)

    def _source(self, rng: np.random.Generator):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        pts = rng.normal(size=(3, 3)) * 0.3 + 2.0 * direction
        return make_measure(pts, rng.random(3) + 0.1)

    def _check(self, mu, cap=None):
        outcome = project_detailed(ProjectionProblem(mu, self.region, self.kernel, mass_cap=cap))
        ref = enumerate_active_sets(self.K, outcome.b, mass_cap=cap)
        diff = outcome.weights - ref.weights
        scale = 1.0 + float(np.max(np.abs(outcome.b)))
        self.assertLessEqual(float(np.sqrt(max(diff @ self.K @ diff, 0.0))), 1e-8 * scale)
        self.assertTrue(outcome.certificate.ok)
        return outcome

    def test_uncapped(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            self._check(self._source(rng))

    def test_capped(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            mu = self._source(rng)
            free = project_detailed(ProjectionProblem(mu, self.region, self.kernel))
            outcome = self._check(mu, cap=0.5 * float(np.sum(free.weights)))
            self.assertTrue(outcome.stats.cap_active)


class TestProjectionInequalities(unittest.TestCase):
    def setUp(self) -> None:
        self.region = sphere_region(40, label="sphere-40")
        self.kernel = kernel_from_grid(2.0, 3, self.region.points)
        self.K = assemble_gram(self.kernel, self.region.points)
        mu = make_measure([(1.8, 0.3, 0.0), (0.0, -2.2, 0.5)], [0.7, 0.4])
        self.outcome = project_detailed(ProjectionProblem(mu, self.region, self.kernel))
        self.w = self.outcome.weights
        self.b = self.outcome.b
        self.scale = 1.0 + float(np.max(np.abs(self.b)))

    def test_minimal_norm(self):
        # ||nu - mu^A||^2 <= ||mu - nu||^2 - ||mu - mu^A||^2 and the right side is 2 (f(nu) - f(mu^A))
        rng = np.random.default_rng(5)
        base = objective(self.K, self.b, self.w)
        for _ in range(50):
            v = rng.random(self.region.size) * (rng.random(self.region.size) < 0.4)
            d = v - self.w
            lhs = float(d @ self.K @ d)
            rhs = 2.0 * (objective(self.K, self.b, v) - base)
            self.assertLessEqual(lhs, rhs + 1e-8 * self.scale * (1.0 + float(np.sum(v))))

    def test_feasible_perturbations_do_not_improve(self):
        rng = np.random.default_rng(6)
        base = objective(self.K, self.b, self.w)
        for step in (1e-1, 1e-3, 1e-5):
            for _ in range(30):
                v = np.maximum(0.0, self.w + step * rng.normal(size=self.region.size))
                slack = 1e-8 * self.scale * (1.0 + float(np.sum(v)))
                self.assertGreaterEqual(objective(self.K, self.b, v), base - slack)


class TestCertificate(unittest.TestCase):
    def test_fields(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, 1.0])
        cert = kkt_certificate(K, b, np.array([0.1, 0.1]), 0.7, 1e-9, mass_cap=0.2, cap_active=True)
        self.assertTrue(cert.ok)
        self.assertAlmostEqual(cert.multiplier, 0.7)
        self.assertAlmostEqual(cert.mass, 0.2)
        self.assertEqual(set(cert.to_dict()), {
            "stationarity_residual",
            "dual_feasibility",
            "complementarity",
            "multiplier",
            "tolerance",
            "cap_active",
            "mass",
        })

    def test_multiplier_on_slack_cap_is_flagged(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, 1.0])
        w = np.array([1.0 / 3.0, 1.0 / 3.0])
        cert = kkt_certificate(K, b, w, 0.5, 1e-9, mass_cap=5.0)
        self.assertFalse(cert.ok)

    def test_complementarity_not_scaled_by_mass(self):
        # stationarity 6e-7 per atom passes, but the weighted sum 6e-6 over mass 10 does not
        w = np.array([5.0, 5.0])
        b = w - 6e-7
        cert = kkt_certificate(np.eye(2), b, w, 0.0, 1e-6)
        self.assertLessEqual(cert.stationarity_residual, 1e-6)
        self.assertAlmostEqual(cert.complementarity, 6e-6, places=12)
        self.assertFalse(cert.ok)

    def test_dual_violation(self):
        cert = kkt_certificate(np.eye(2), np.array([1.0, 0.0]), np.zeros(2), 0.0, 1e-9)
        self.assertAlmostEqual(cert.dual_feasibility, 1.0)
        self.assertFalse(cert.ok)


class TestProject(unittest.TestCase):
    def setUp(self) -> None:
        self.region = sphere_region(80, label="sphere")
        self.kernel = kernel_from_grid(2.0, 3, self.region.points)

    def test_fixed_point_on_region(self):
        idx = [0, 7, 33, 60]
        mu = make_measure(self.region.points[idx], [0.5, 1.0, 0.25, 2.0])
        w, cert = project(ProjectionProblem(mu, self.region, self.kernel))
        expected = restrict_to_region(mu, self.region).weights
        self.assertLessEqual(float(np.max(np.abs(w - expected))), 1e-8 * mu.total_mass)
        self.assertTrue(cert.ok)

    def test_single_point_region(self):
        k = KernelSpec(alpha=2.0, dim=3, epsilon=0.5)
        region = make_region([(0, 0, 0)])
        mu = make_measure([(1, 0, 0)], [1.0])
        w, _ = project(ProjectionProblem(mu, region, k))
        self.assertAlmostEqual(float(w[0]), 1.25 ** -0.5 / 2.0)

    def test_zero_source(self):
        outcome = project_detailed(ProjectionProblem(zero_measure(3), self.region, self.kernel))
        self.assertEqual(float(np.sum(outcome.weights)), 0.0)
        self.assertTrue(outcome.certificate.ok)

    def test_far_source_certificate(self):
        mu = make_measure([(4, 0, 0)], [1.0])
        outcome = project_detailed(ProjectionProblem(mu, self.region, self.kernel))
        self.assertTrue(outcome.certificate.ok)
        self.assertTrue(np.all(outcome.weights >= 0.0))
        self.assertEqual(outcome.b.shape, (80,))

    def test_cap_limits_mass(self):
        mu = make_measure([(1.5, 0, 0)], [1.0])
        outcome = project_detailed(ProjectionProblem(mu, self.region, self.kernel, mass_cap=0.1))
        self.assertLessEqual(float(np.sum(outcome.weights)), 0.1 + 1e-9)
        self.assertTrue(outcome.stats.cap_active)
        self.assertGreater(outcome.certificate.multiplier, 0.0)

    def test_problem_validation(self):
        mu = make_measure([(4, 0, 0)], [1.0])
        with self.assertRaises(ValidationError):
            ProjectionProblem(mu, self.region, self.kernel, tolerance=0.0)
        with self.assertRaises(ValidationError):
            ProjectionProblem(mu, self.region, self.kernel, mass_cap=-1.0)
        with self.assertRaises(ValidationError):
            ProjectionProblem(mu, self.region, KernelSpec(alpha=2.0, dim=4, epsilon=0.1))


if __name__ == "__main__":
    unittest.main()
