import unittest

import numpy as np

import sparseldatoolkit.normalizing.normalizer as normalizer


class TestNormalizer(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        rng = np.random.default_rng(0)
        cls.X = rng.normal(loc=3.0, scale=2.0, size=(25, 6))
        cls.X[:, 4] = 7.0  # a constant column

    @classmethod
    def tearDownClass(cls) -> None:
        pass

    def test_center_X1(self):
        """ Tests that centering gives zero column means and keeps the shape."""
        Xc = normalizer.center(self.X)
        self.assertTupleEqual(Xc.shape, self.X.shape)
        np.testing.assert_array_almost_equal(Xc.mean(axis=0), np.zeros(6), decimal=12)

    def test_center_X2(self):
        """ Tests the centering against a quick centering of one single column."""
        Xc = normalizer.center(self.X)
        expected = self.X[:, 2] - self.X[:, 2].mean()
        np.testing.assert_array_almost_equal(Xc[:, 2], expected, decimal=12)

    def test_fit_scaling_centers_only_by_default(self):
        """ Tests that the default scaling divides by one."""
        scaling = normalizer.fit_scaling(self.X)
        np.testing.assert_array_equal(scaling.scale, np.ones(6))
        np.testing.assert_array_almost_equal(scaling.mean, self.X.mean(axis=0), decimal=12)

    def test_standardize(self):
        """ Tests that with_std gives unit (population) SDs and leaves a constant column
        finite."""
        scaling = normalizer.fit_scaling(self.X, with_std=True)
        Xs = scaling.transform(self.X)
        self.assertTrue(np.all(np.isfinite(Xs)))
        sd = Xs.std(axis=0)
        np.testing.assert_array_almost_equal(np.delete(sd, 4), np.ones(5), decimal=10)
        self.assertEqual(sd[4], 0.0)

    def test_transform_replays_training_statistics(self):
        """ Tests that new rows are shifted by the training means, not their own."""
        scaling = normalizer.fit_scaling(self.X)
        new = np.ones((3, 6))
        np.testing.assert_array_almost_equal(scaling.transform(new), new - self.X.mean(axis=0),
                                             decimal=12)

    def test_transform_column_mismatch(self):
        """ Tests that transforming a matrix of another width is rejected."""
        scaling = normalizer.fit_scaling(self.X)
        with self.assertRaises(ValueError):
            scaling.transform(np.ones((2, 5)))

    def test_scaling_dict_round_trip(self):
        """ Tests that the stored dictionary rebuilds the same transform."""
        scaling = normalizer.fit_scaling(self.X, with_std=True)
        rebuilt = normalizer.Scaling.from_dict(scaling.to_dict())
        np.testing.assert_array_equal(rebuilt.transform(self.X), scaling.transform(self.X))


if __name__ == '__main__':
    unittest.main()
