import unittest

import numpy as np

from sparseldatoolkit.theory import oracles
from sparseldatoolkit.utils.errors import ValidationError


class TestOracles(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        pass

    @classmethod
    def tearDownClass(cls) -> None:
        pass

    def test_orthant_directions(self):
        """ Tests the grid size, unit norms and non-negativity of the angle grid."""
        D = oracles.orthant_directions(3, 11)
        self.assertTupleEqual(D.shape, (121, 3))
        np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0, atol=1e-12)
        self.assertGreaterEqual(D.min(), -1e-15)
        np.testing.assert_array_equal(oracles.orthant_directions(1, 5), [[1.0]])

    def test_restricted_maximum_single_coordinate(self):
        """ Tests that with one coordinate F_1 = max(0, gamma l_1^2 - lam)."""
        l = np.array([0.8, 0.6])
        self.assertAlmostEqual(oracles.restricted_maximum(2.0, l, 0.3, 1), 2.0 * 0.64 - 0.3,
                               places=12)
        self.assertEqual(oracles.restricted_maximum(1.0, l, 5.0, 1), 0.0)

    def test_restricted_maximum_without_penalty(self):
        """ Tests that without penalty the full-support maximum is gamma."""
        l = np.array([0.6, 0.48, 0.64])
        self.assertAlmostEqual(oracles.restricted_maximum(1.5, l, 0.0, 3), 1.5, places=10)

    def test_constrained_maximum_axis(self):
        """ Tests max v'Bv for B = e_1 e_1' under a loose and a tight L1 budget."""
        B = np.diag([1.0, 0.0, 0.0])
        W = np.eye(3)
        self.assertAlmostEqual(oracles.constrained_maximum(B, W, 10.0), 1.0, places=10)
        self.assertAlmostEqual(oracles.constrained_maximum(B, W, 0.5), 0.25, places=10)
        self.assertEqual(oracles.constrained_maximum(B, W, 0.0), 0.0)

    def test_constrained_maximum_weighted(self):
        """ Tests that a weight of 2 on the first coordinate halves its admissible length."""
        B = np.diag([1.0, 0.0, 0.0])
        W = np.eye(3)
        weights = np.array([2.0, 1.0, 1.0])
        self.assertAlmostEqual(oracles.constrained_maximum(B, W, 0.5, weights=weights), 0.0625,
                               places=10)
        self.assertAlmostEqual(oracles.constrained_maximum(B, W, 10.0, weights=weights), 1.0,
                               places=10)
        with self.assertRaises(ValidationError):
            oracles.constrained_maximum(B, W, 0.5, weights=np.array([1.0, -1.0, 1.0]))

    def test_constrained_maximum_never_exceeds_eigenvalue(self):
        """ Tests that the search stays below the unconstrained generalized eigenvalue."""
        rng = np.random.default_rng(0)
        h = rng.standard_normal(4)
        B = np.outer(h, h)
        value = oracles.constrained_maximum(B, np.eye(4), 1.5, n_starts=2000)
        self.assertLessEqual(value, float(h @ h) + 1e-10)
        self.assertGreater(value, 0.0)


if __name__ == '__main__':
    unittest.main()
