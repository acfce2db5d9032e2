import unittest
from dataclasses import replace

import numpy as np
import scipy.linalg

from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.scatter.scatter import ScatterSet, compute_scatter
from sparseldatoolkit.shrinkage.shrinkage import ShrunkenWithin, shrunken_within
from sparseldatoolkit.solver.solver import SolverConfig, SolverState, soft_threshold, \
    initial_vector, lambda_max, coordinate_pass, update_coordinate, step_objective, \
    penalized_objective, solve_discriminant
from sparseldatoolkit.theory import oracles
from sparseldatoolkit.theory.theory import reduced_problem, sort_by_magnitude
from sparseldatoolkit.utils.errors import NoSignalError, ValidationError


def _two_group_data(seed: int, p: int = 10, n: int = 20, informative: int = 2,
                    shift: float = 3.0, correlated: bool = False) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((2 * n, p))
    if correlated:
        X = X @ (np.eye(p) + 0.4 * rng.standard_normal((p, p)))
    X[n:, :informative] += shift
    return Dataset.from_arrays(X, np.repeat(['a', 'b'], n))


class TestSolver(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        cls.data = _two_group_data(0, correlated=True)
        cls.scatter = compute_scatter(cls.data)
        cls.within = shrunken_within(cls.scatter)

    @classmethod
    def tearDownClass(cls) -> None:
        pass

    def _assert_certificates(self, v, diagnostics, within):
        """ Normalization always; non-decreasing f within every inner solve; KKT residual
        within tolerance on converged runs."""
        self.assertEqual(sum(diagnostics.step_sweeps), len(diagnostics.objective_trace))
        start = 0
        for count in diagnostics.step_sweeps:
            trace = np.asarray(diagnostics.objective_trace[start:start + count])
            self.assertTrue(np.all(np.diff(trace) >= -1e-10 * np.abs(trace[1:]) - 1e-15))
            start += count
        if np.any(v):
            self.assertAlmostEqual(within.quad(v), 1.0, delta=1e-8)
        if diagnostics.converged and not diagnostics.zero_dominated:
            self.assertLessEqual(diagnostics.kkt_residual, 1e-4 * diagnostics.kkt_scale + 1e-12)

    def test_soft_threshold(self):
        """ Tests the soft-thresholding operator on the three regimes."""
        self.assertEqual(soft_threshold(3.0, 1.0), 2.0)
        self.assertEqual(soft_threshold(-0.5, 1.0), 0.0)
        self.assertEqual(soft_threshold(-3.0, 1.0), -2.0)
        np.testing.assert_array_equal(soft_threshold(np.array([3.0, -0.5, -3.0]), 1.0),
                                      [2.0, 0.0, -2.0])
        with self.assertRaises(ValueError):
            soft_threshold(1.0, -1.0)

    def test_initial_vector_identity_within(self):
        """ Tests that with W~ = I and B = gamma l l' the initial vector is l."""
        l = np.array([0.6, -0.3, 0.7, 0.1])
        l = l / np.linalg.norm(l)
        scatter, within = reduced_problem(2.0, l)
        np.testing.assert_allclose(initial_vector(scatter, within), l, atol=1e-12)

    def test_initial_vector_dense_oracle(self):
        """ Tests the initial vector against a dense generalized eigensolver (p = 10)."""
        rng = np.random.default_rng(9)
        X = rng.standard_normal((30, 10)) @ (np.eye(10) + 0.3 * rng.standard_normal((10, 10)))
        X[10:20, 0] += 2.0
        X[20:, 1] += 2.0
        data = Dataset.from_arrays(X, np.repeat(['a', 'b', 'c'], 10))
        scatter = compute_scatter(data)
        within = shrunken_within(scatter)
        v0 = initial_vector(scatter, within)
        W = within.dense()
        mu, vectors = scipy.linalg.eigh(scatter.between_dense(), W)
        oracle = vectors[:, np.argmax(mu)]
        oracle = oracle / np.sqrt(oracle @ W @ oracle)
        oracle = oracle if oracle[np.argmax(np.abs(oracle))] > 0 else -oracle
        np.testing.assert_allclose(v0, oracle, atol=1e-8)
        self.assertAlmostEqual(float(v0 @ W @ v0), 1.0, delta=1e-10)

    def test_initial_vector_no_signal(self):
        """ Tests that B = 0 raises the no-signal error."""
        scatter = ScatterSet.from_between_factor(np.zeros((1, 3)))
        with self.assertRaises(NoSignalError):
            initial_vector(scatter, ShrunkenWithin.diagonal(np.ones(3)))

    def test_lambda_max_hand_instance(self):
        """ Tests lambda_max for B = l l' with l = e_1 and unit weights."""
        scatter = ScatterSet.from_between_factor(np.array([[1.0, 0.0, 0.0]]))
        self.assertEqual(lambda_max(scatter, np.array([1.0, 0.0, 0.0])), 2.0)
        self.assertEqual(lambda_max(scatter, np.array([0.0, 1.0, 0.0])), 0.0)

    def test_first_pass_above_lambda_max(self):
        """ Tests that above lambda_max one pass from v0 zeroes q, with D = ||v0||_1."""
        within = self.within.diagonal_part()
        v0 = initial_vector(self.scatter, within)
        lam = 1.0001 * lambda_max(self.scatter, v0)
        state = SolverState.start(v0, within)
        d = coordinate_pass(state, self.scatter, within, SolverConfig(lam=lam),
                            np.random.default_rng(0))
        np.testing.assert_array_equal(state.q, np.zeros(self.scatter.p))
        self.assertAlmostEqual(d, float(np.abs(v0).sum()), places=12)

    def test_diagonal_pass_closed_form(self):
        """ Tests that with a diagonal W~ one pass gives S((Bv)_j, lambda s_j / 2) / w_jj."""
        rng = np.random.default_rng(10)
        w = rng.uniform(0.5, 2.0, 5)
        s = rng.uniform(0.5, 1.5, 5)
        scatter = ScatterSet.from_between_factor(rng.standard_normal((1, 5)), w_diag=w, s=s)
        within = ShrunkenWithin.diagonal(w)
        v = rng.standard_normal(5)
        lam = 0.4
        bv = scatter.between_dot(v)
        state = SolverState.start(v, within)
        coordinate_pass(state, scatter, within, SolverConfig(lam=lam), rng, bv=bv)
        expected = np.sign(bv) * np.maximum(np.abs(bv) - lam * s / 2, 0) / w
        np.testing.assert_allclose(state.q, expected, atol=1e-14)

    def test_coordinate_updates_never_decrease_objective(self):
        """ Tests that every single coordinate update keeps or raises f(q) (p = 6)."""
        data = _two_group_data(11, p=6, n=8, correlated=True)
        scatter = compute_scatter(data)
        within = shrunken_within(scatter, tau_override=0.2)
        v0 = initial_vector(scatter, within)
        lam = 0.3 * lambda_max(scatter, v0)
        rng = np.random.default_rng(12)
        state = SolverState.start(rng.standard_normal(6), within)
        bv = scatter.between_dot(v0)
        f = step_objective(state.q, bv, within, lam, scatter.s)
        for _ in range(5):
            for j in rng.permutation(6):
                update_coordinate(state, int(j), bv, within, lam, scatter.s)
                f_new = step_objective(state.q, bv, within, lam, scatter.s)
                self.assertGreaterEqual(f_new, f - 1e-10 * abs(f))
                f = f_new
        np.testing.assert_allclose(state.wq(within), within.matvec(state.q), atol=1e-10)

    def test_zero_lambda_gives_fisher_direction(self):
        """ Tests that without penalty the solver returns the initial vector."""
        data = _two_group_data(13, p=8, n=15)
        scatter = compute_scatter(data)
        within = shrunken_within(scatter)
        config = SolverConfig(lam=0.0, eps=1e-10, max_inner=500)
        v, diagnostics = solve_discriminant(scatter, within, config)
        np.testing.assert_allclose(v, initial_vector(scatter, within), atol=1e-6)
        self.assertTrue(diagnostics.converged)
        self._assert_certificates(v, diagnostics, within)

    def test_above_lambda_max_gives_zero(self):
        """ Tests that 1.001 * lambda_max gives v = 0 and 0.25 * lambda_max does not, over 20
        seeds and both the shrunken and the diagonal matrix."""
        for seed in range(20):
            scatter = compute_scatter(_two_group_data(100 + seed))
            within = shrunken_within(scatter)
            for diagonal in (False, True):
                base = within.diagonal_part() if diagonal else within
                lam_max = lambda_max(scatter, initial_vector(scatter, base))
                config = SolverConfig(diagonal_mode=diagonal, seed=seed)
                v, _ = solve_discriminant(scatter, within, config.with_lambda(1.001 * lam_max))
                self.assertFalse(np.any(v))
                v, diagnostics = solve_discriminant(scatter, within,
                                                    config.with_lambda(0.25 * lam_max))
                self.assertTrue(np.any(v))
                self._assert_certificates(v, diagnostics, base)

    def test_rank_one_matches_brute_force(self):
        """ Tests the solver's objective on W~ = I, rank-one B (p = 4) against a grid
        search over the unit ball."""
        rng = np.random.default_rng(14)
        for _ in range(5):
            l = rng.standard_normal(4)
            l = l / np.linalg.norm(l)
            gamma, lam = 1.0, 0.2
            scatter, within = reduced_problem(gamma, l)
            v, diagnostics = solve_discriminant(scatter, within, SolverConfig(lam=lam))
            value = penalized_objective(v, scatter, lam)
            best = oracles.restricted_maximum(gamma, sort_by_magnitude(l)[0], lam, 4)
            self.assertAlmostEqual(value, best, delta=1e-3)
            self._assert_certificates(v, diagnostics, within)

    def test_diagonal_mode_equals_full_shrinkage(self):
        """ Tests that diagonal mode reproduces the solve with tau = 1 exactly."""
        config = SolverConfig(lam=0.2 * lambda_max(self.scatter,
                                                   initial_vector(self.scatter, self.within)))
        v_diag, _ = solve_discriminant(self.scatter, self.within,
                                       replace(config, diagonal_mode=True))
        v_tau, _ = solve_discriminant(self.scatter, shrunken_within(self.scatter, 1.0), config)
        np.testing.assert_allclose(v_diag, v_tau, atol=1e-12)

    def test_seeded_determinism(self):
        """ Tests that the same seed gives the same vector."""
        config = SolverConfig(lam=0.1 * lambda_max(self.scatter,
                                                   initial_vector(self.scatter, self.within)),
                              seed=5)
        v1, d1 = solve_discriminant(self.scatter, self.within, config)
        v2, d2 = solve_discriminant(self.scatter, self.within, config)
        np.testing.assert_array_equal(v1, v2)
        self.assertEqual(d1.sweeps, d2.sweeps)

    def test_non_convergence_is_flagged(self):
        """ Tests that hitting the caps returns the last iterate flagged as not converged."""
        config = SolverConfig(lam=0.05, eps=1e-15, max_outer=1, max_inner=1, kkt_tol=1e-15)
        with self.assertLogs('sparseldatoolkit.solver.solver', level='WARNING'):
            v, diagnostics = solve_discriminant(self.scatter, self.within, config)
        self.assertFalse(diagnostics.converged)
        self.assertTrue(diagnostics.non_converged)
        self.assertEqual(diagnostics.outer_iterations, 1)

    def test_zero_variance_feature_stays_zero(self):
        """ Tests that a feature without within-group variation never enters the vector."""
        X = np.array(self.data.X)
        X[:, 3] = np.where(self.data.labels == 0, 1.0, 2.0)
        data = self.data.with_features(X)
        scatter = compute_scatter(data)
        within = shrunken_within(scatter)
        v, _ = solve_discriminant(scatter, within, SolverConfig(lam=0.0))
        self.assertEqual(v[3], 0.0)

    def test_config_validation(self):
        """ Tests that a negative lambda and zero caps are rejected."""
        with self.assertRaises(ValidationError):
            SolverConfig(lam=-1.0)
        with self.assertRaises(ValidationError):
            SolverConfig(max_outer=0)
        with self.assertRaises(ValidationError):
            SolverConfig(eps=0.0)
        self.assertIn('lambda', SolverConfig(lam=0.3).to_dict())


if __name__ == '__main__':
    unittest.main()
