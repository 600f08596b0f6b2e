import unittest

import numpy as np

from src.shared.errors import ValidationError
from src.shared.grids import (
    ball_grid,
    fibonacci_sphere,
    lattice_box,
    on_region_measure,
    ray_points,
    shell_cloud,
    shell_measure,
    sphere_region,
    uniform_box,
)


class TestPointClouds(unittest.TestCase):
    def test_fibonacci_points_lie_on_sphere(self):
        pts = fibonacci_sphere(500, radius=2.0, center=(1.0, 0.0, -1.0))
        self.assertEqual(pts.shape, (500, 3))
        r = np.linalg.norm(pts - np.array([1.0, 0.0, -1.0]), axis=1)
        self.assertTrue(np.allclose(r, 2.0))

    def test_fibonacci_is_deterministic_and_balanced(self):
        a = fibonacci_sphere(301)
        self.assertTrue(np.array_equal(a, fibonacci_sphere(301)))
        self.assertLess(abs(float(np.mean(a[:, 2]))), 1e-12)
        self.assertEqual(len({tuple(p) for p in a}), 301)

    def test_fibonacci_rejects_bad_input(self):
        with self.assertRaises(ValidationError):
            fibonacci_sphere(0)
        with self.assertRaises(ValidationError):
            fibonacci_sphere(10, radius=-1.0)

    def test_lattice_box(self):
        pts = lattice_box((0, 0, 0), (1, 1, 1), 0.5)
        self.assertEqual(pts.shape, (27, 3))
        self.assertTrue(np.all(pts >= 0.0) and np.all(pts <= 1.0))

    def test_ball_grid_inside_ball(self):
        pts = ball_grid(1.0, 0.5)
        self.assertTrue(np.all(np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12))
        # lattice shells at squared radius 0, 1, 4, 2, 3 (units of the spacing)
        self.assertEqual(pts.shape[0], 1 + 6 + 6 + 12 + 8)

    def test_uniform_box_is_seeded(self):
        a = uniform_box((0, 0, 0), (1, 2, 3), 20, np.random.default_rng(5))
        b = uniform_box((0, 0, 0), (1, 2, 3), 20, np.random.default_rng(5))
        self.assertTrue(np.array_equal(a, b))
        self.assertTrue(np.all(a[:, 1] <= 2.0))

    def test_shell_cloud_radii(self):
        pts = shell_cloud(200, 1.5, 3.0, np.random.default_rng(0))
        r = np.linalg.norm(pts, axis=1)
        self.assertTrue(np.all(r >= 1.5 - 1e-12) and np.all(r <= 3.0 + 1e-12))
        with self.assertRaises(ValidationError):
            shell_cloud(10, 2.0, 1.0, np.random.default_rng(0))

    def test_ray_points_direction_major(self):
        pts = ray_points([(0, 0, 2), (1, 0, 0)], [0.0, 1.0, 3.0])
        self.assertEqual(pts.shape, (6, 3))
        self.assertEqual(pts[2].tolist(), [0.0, 0.0, 3.0])
        self.assertEqual(pts[4].tolist(), [1.0, 0.0, 0.0])
        with self.assertRaises(ValidationError):
            ray_points([(0, 0, 0)], [1.0])


class TestMeasureGenerators(unittest.TestCase):
    def test_shell_measure(self):
        mu = shell_measure(100, radius=2.0, mass=3.0)
        self.assertEqual(mu.size, 100)
        self.assertAlmostEqual(mu.total_mass, 3.0)
        self.assertTrue(np.allclose(np.linalg.norm(mu.points, axis=1), 2.0))

    def test_on_region_measure(self):
        region = sphere_region(40)
        mu = on_region_measure(region, 2.0, 0.25, np.random.default_rng(1))
        self.assertEqual(mu.size, 10)
        self.assertAlmostEqual(mu.total_mass, 2.0)
        self.assertTrue(all(region.contains(p) for p in mu.points))

    def test_on_region_measure_takes_at_least_one_point(self):
        mu = on_region_measure(sphere_region(5), 1.0, 0.01, np.random.default_rng(2))
        self.assertEqual(mu.size, 1)


if __name__ == "__main__":
    unittest.main()
