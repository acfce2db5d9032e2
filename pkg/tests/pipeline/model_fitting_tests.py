import unittest

import numpy as np

from sparseldatoolkit.clustering.feature_clustering import expand_support
from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.pipeline.model_fitting import FitConfig, fit, fit_path, predict, \
    evaluate, align_labels, resolve_n_vectors
from sparseldatoolkit.scatter.scatter import compute_scatter
from sparseldatoolkit.shrinkage.shrinkage import shrunken_within
from sparseldatoolkit.solver.solver import SolverConfig, solve_discriminant, initial_vector, \
    lambda_max
from sparseldatoolkit.utils.errors import ValidationError


def _grouped_data(seed: int, g: int = 2, n: int = 15, p: int = 8, shift: float = 5.0) -> Dataset:
    """ Group i is shifted by `shift` along feature i - 1 (group 0 is not shifted)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((g * n, p))
    for i in range(1, g):
        X[i * n:(i + 1) * n, i - 1] += shift
    return Dataset.from_arrays(X, np.repeat(['g{}'.format(i) for i in range(g)], n))


class TestModelFitting(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        cls.two = _grouped_data(0, p=10, shift=2.0)
        cls.three = _grouped_data(1, g=3, p=8, shift=4.0)
        cls.four = _grouped_data(2, g=4, p=6, shift=8.0)

    @classmethod
    def tearDownClass(cls) -> None:
        pass

    def _lambda_max(self, data: Dataset) -> float:
        scatter = compute_scatter(data)
        return lambda_max(scatter, initial_vector(scatter, shrunken_within(scatter)))

    def test_resolve_n_vectors(self):
        """ Tests the default vector counts and the g - 1 cap."""
        self.assertEqual(resolve_n_vectors(self.four, 'all-groups-sequential'), 1)
        self.assertEqual(resolve_n_vectors(self.four, 'merge-sequential'), 3)
        with self.assertRaises(ValidationError):
            resolve_n_vectors(self.two, 'all-groups-sequential', 2)

    def test_unknown_strategy(self):
        """ Tests that an unknown schedule is rejected."""
        with self.assertRaises(ValidationError):
            FitConfig(strategy='one-versus-rest')

    def test_single_vector_matches_solver(self):
        """ Tests that a two-group model holds exactly the solver's vector."""
        lam = 0.3 * self._lambda_max(self.two)
        config = FitConfig(solver=SolverConfig(lam=lam))
        model = fit(self.two, config)
        scatter = compute_scatter(self.two)
        v, _ = solve_discriminant(scatter, shrunken_within(scatter), config.solver)
        self.assertEqual(model.d, 1)
        np.testing.assert_allclose(model.vectors[0], v, atol=1e-8)
        np.testing.assert_array_equal(model.supports[0], np.flatnonzero(v))
        self.assertListEqual(list(model.lambdas), [lam])

    def test_supports_disjoint(self):
        """ Tests that with elimination two vectors on three groups share no feature."""
        config = FitConfig(solver=SolverConfig(lam=0.2 * self._lambda_max(self.three)))
        model = fit(self.three, config, n_vectors=2)
        self.assertGreaterEqual(model.d, 1)
        if model.d == 2:
            self.assertFalse(set(model.supports[0]) & set(model.supports[1]))

    def test_truncated_when_features_run_out(self):
        """ Tests that a dense first vector leaves nothing for the second one."""
        config = FitConfig(solver=SolverConfig(lam=0.0))
        with self.assertLogs('sparseldatoolkit.pipeline.model_fitting', level='WARNING'):
            model = fit(self.three, config, n_vectors=2)
        self.assertEqual(model.d, 1)
        self.assertEqual(model.selected_features.size, self.three.p)

    def test_merge_sequential_without_elimination(self):
        """ Tests that merging four groups at lambda = 0 gives three vectors and no training
        errors."""
        config = FitConfig(solver=SolverConfig(lam=0.0), strategy='merge-sequential',
                           eliminate=False)
        model = fit(self.four, config)
        self.assertEqual(model.d, 3)
        self.assertEqual(evaluate(model, self.four)['errors'], 0)

    def test_merge_sequential_with_elimination(self):
        """ Tests that merging with elimination keeps the supports disjoint."""
        config = FitConfig(solver=SolverConfig(lam=0.1 * self._lambda_max(self.four)),
                           strategy='merge-sequential')
        model = fit(self.four, config)
        seen = set()
        for support in model.supports:
            self.assertFalse(seen & set(support))
            seen.update(support)

    def test_centroid_point_is_assigned_its_group(self):
        """ Tests that the mean of each training group is predicted as that group."""
        config = FitConfig(solver=SolverConfig(lam=0.1 * self._lambda_max(self.three)))
        model = fit(self.three, config, n_vectors=2)
        means = np.vstack([self.three.group_rows(i).mean(axis=0) for i in range(3)])
        labels, scores = predict(model, means)
        np.testing.assert_array_equal(labels, [0, 1, 2])
        np.testing.assert_array_almost_equal(scores, model.centroids, decimal=10)

    def test_zero_model_predicts_majority(self):
        """ Tests that a penalty far above lambda_max predicts one class (50% on a balanced
        set)."""
        config = FitConfig(solver=SolverConfig(lam=1e9))
        with self.assertLogs('sparseldatoolkit.pipeline.model_fitting', level='WARNING'):
            model = fit(self.two, config)
        self.assertTrue(model.is_zero)
        labels, _ = predict(model, self.two.X)
        self.assertEqual(np.unique(labels).size, 1)
        metrics = evaluate(model, self.two)
        self.assertEqual(metrics['error_rate'], 0.5)
        self.assertEqual(metrics['features'], 0)

    def test_evaluate_feature_counts(self):
        """ Tests the selected and correctly selected feature counts."""
        config = FitConfig(solver=SolverConfig(lam=0.2 * self._lambda_max(self.two)))
        model = fit(self.two, config)
        selected = model.selected_features
        metrics = evaluate(model, self.two, truth_support=selected)
        self.assertEqual(metrics['correct_features'], selected.size)
        self.assertEqual(metrics['features'], selected.size)
        outside = np.setdiff1d(np.arange(self.two.p), selected)
        self.assertEqual(evaluate(model, self.two, truth_support=outside)['correct_features'], 0)
        self.assertIsNone(evaluate(model, self.two)['correct_features'])
        self.assertSetEqual(set(metrics['per_group_error']), {'g0', 'g1'})

    def test_unused_columns_do_not_matter(self):
        """ Tests that changing features outside the support leaves predictions unchanged."""
        config = FitConfig(solver=SolverConfig(lam=0.4 * self._lambda_max(self.two)))
        model = fit(self.two, config)
        unused = np.setdiff1d(np.arange(self.two.p), model.selected_features)
        self.assertGreater(unused.size, 0)
        X = np.array(self.two.X)
        X[:, unused] = np.random.default_rng(3).standard_normal((X.shape[0], unused.size)) * 100
        before, scores_before = predict(model, self.two.X)
        after, scores_after = predict(model, X)
        np.testing.assert_array_equal(before, after)
        np.testing.assert_array_almost_equal(scores_before, scores_after, decimal=9)

    def test_column_mismatch(self):
        """ Tests that a matrix with a different number of columns is rejected."""
        model = fit(self.two, FitConfig(solver=SolverConfig(lam=0.0)))
        with self.assertRaises(ValidationError):
            predict(model, self.two.X[:, :-1])

    def test_unknown_test_labels(self):
        """ Tests that test labels unseen in training are rejected and known ones re-encoded."""
        model = fit(self.two, FitConfig(solver=SolverConfig(lam=0.0)))
        reordered = Dataset.from_arrays(self.two.X[::-1], np.repeat(['g1', 'g0'], 15))
        np.testing.assert_array_equal(align_labels(model, reordered),
                                      np.repeat([1, 0], 15))
        other = Dataset.from_arrays(self.two.X, np.repeat(['g0', 'g9'], 15))
        with self.assertRaises(ValidationError):
            align_labels(model, other)

    def test_standardized_fit(self):
        """ Tests that standardizing leaves a model over the original features."""
        model = fit(self.two, FitConfig(solver=SolverConfig(lam=0.0), standardize=True))
        self.assertEqual(model.p, self.two.p)
        self.assertLess(evaluate(model, self.two)['error_rate'], 0.5)

    def test_clustered_fit(self):
        """ Tests that a model fit on cluster averages is expressed over the original
        features and selects whole clusters."""
        config = FitConfig(solver=SolverConfig(lam=0.0), n_clusters=3, cluster_restarts=5)
        model = fit(self.two, config, use_clustering=True)
        self.assertEqual(model.vectors.shape[1], self.two.p)
        self.assertEqual(model.cluster_map.k, 3)
        chosen = np.unique(model.cluster_map.assignment[model.selected_features])
        expected = np.flatnonzero(np.isin(model.cluster_map.assignment, chosen))
        np.testing.assert_array_equal(model.selected_features, expected)

    def test_clustered_fit_cluster_supports(self):
        """ Tests that each support of a clustered fit is the expansion of its clusters."""
        config = FitConfig(solver=SolverConfig(lam=0.0), n_clusters=3, cluster_restarts=5)
        model = fit(self.three, config, n_vectors=2, use_clustering=True)
        self.assertEqual(len(model.cluster_supports), model.d)
        for clusters, support in zip(model.cluster_supports, model.supports):
            np.testing.assert_array_equal(expand_support(clusters, model.cluster_map), support)
        unclustered = fit(self.three, config, n_vectors=2)
        self.assertTupleEqual(unclustered.cluster_supports, ())

    def test_fit_path_order(self):
        """ Tests that a path returns one model per penalty, in the given order."""
        lam_max = self._lambda_max(self.two)
        lambdas = [0.8 * lam_max, 0.4 * lam_max, 0.0]
        models = fit_path(self.two, FitConfig(), lambdas)
        self.assertEqual(len(models), 3)
        self.assertListEqual([m.lambdas[0] for m in models], lambdas)
        self.assertEqual(models[-1].selected_features.size, self.two.p)


if __name__ == '__main__':
    unittest.main()
