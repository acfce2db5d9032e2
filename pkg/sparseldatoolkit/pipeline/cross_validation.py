import math
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from sparseldatoolkit.clustering.feature_clustering import cluster_features, build_meta_features
from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.normalizing.normalizer import fit_scaling
from sparseldatoolkit.pipeline.model_fitting import FitConfig, fit_path, predict, \
    resolve_n_vectors
from sparseldatoolkit.scatter.scatter import compute_scatter
from sparseldatoolkit.shrinkage.shrinkage import shrunken_within
from sparseldatoolkit.solver.solver import initial_vector, lambda_max
from sparseldatoolkit.utils.errors import ValidationError
from sparseldatoolkit.utils.parallel_utils import resolve_threads

logger = logging.getLogger(__name__)

CV_RULES = ('1se', 'min')


@dataclass
class CVResult:
    """
    :param grid: The penalties, in increasing order.
    :param fold_errors: A (folds x grid) matrix of held-out misclassification rates.
    :param mean_error: Mean of `fold_errors` over the folds.
    :param se: Standard error of that mean (sample SD over folds / sqrt(folds)).
    :param chosen_lambda: The selected penalty.
    :param rule: '1se' or 'min'.
    :param lambda_max: The upper end of the default grid, from the full data.
    :param non_converged: Number of fold fits whose solves did not converge.
    """
    grid: np.ndarray
    fold_errors: np.ndarray
    mean_error: np.ndarray
    se: np.ndarray
    chosen_lambda: float
    rule: str
    lambda_max: float
    folds: int
    seed: int
    non_converged: int = 0

    @property
    def chosen_index(self) -> int:
        return int(np.flatnonzero(self.grid == self.chosen_lambda)[0])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({'lambda': self.grid, 'mean_error': self.mean_error, 'se': self.se})
        for k in range(self.folds):
            df['fold_{}'.format(k + 1)] = self.fold_errors[k]
        return df

    def to_dict(self) -> dict:
        return {'grid': self.grid.tolist(), 'fold_errors': self.fold_errors.tolist(),
                'mean_error': self.mean_error.tolist(), 'se': self.se.tolist(),
                'chosen_lambda': self.chosen_lambda, 'rule': self.rule,
                'lambda_max': self.lambda_max, 'folds': self.folds, 'seed': self.seed,
                'non_converged': self.non_converged}


def _feasible(counts: np.ndarray, folds: int) -> bool:
    held_out = np.ceil(counts / folds)
    return bool(np.all(counts >= folds) and np.all(counts - held_out >= 2))


def check_stratification(data: Dataset, folds: int):
    """
    Makes sure stratified `folds`-fold splitting leaves at least two samples of every group in
    every training part. A group of n_i samples loses at most ceil(n_i / folds) to a test fold.
    """
    if folds < 2:
        raise ValidationError(
            '''
            Cross-validation needs at least 2 folds. Given: {}
            '''.format(folds))
    counts = data.group_counts
    if _feasible(counts, folds):
        return
    usable = [f for f in range(folds - 1, 1, -1) if _feasible(counts, f)]
    hint = 'Try --folds {} or fewer.'.format(usable[0]) if usable else \
        'No number of folds works; some group has fewer than 4 samples.'
    raise ValidationError(
        '''
        Stratified {}-fold splitting would leave fewer than 2 samples of some group in a
        training part. Group sizes: {}
        {}
        '''.format(folds, dict(zip(data.label_names, counts.tolist())), hint))


def full_data_lambda_max(data: Dataset, config: FitConfig, use_clustering: bool = False) -> float:
    """ The largest useful penalty, computed from the Fisher direction on all of `data`."""
    scaling = fit_scaling(data.X, with_std=config.standardize)
    working = data.with_features(scaling.transform(data.X))
    if use_clustering and config.strategy == 'all-groups-sequential':
        cluster_map = cluster_features(working, config.n_clusters, config.cluster_restarts,
                                       config.cluster_seed)
        working = build_meta_features(working, cluster_map)
    scatter = compute_scatter(working)
    within = shrunken_within(scatter, config.tau_override, config.p_dense)
    if config.solver.diagonal_mode:
        within = within.diagonal_part()
    return lambda_max(scatter, initial_vector(scatter, within))


def default_grid(lam_max: float, grid_size: int = 30) -> np.ndarray:
    """ :return: `grid_size` equispaced penalties from 0 to `lam_max`."""
    if grid_size < 1:
        raise ValidationError(
            '''
            The grid needs at least one point. Given: {}
            '''.format(grid_size))
    if grid_size == 1:
        return np.array([lam_max])
    return np.linspace(0.0, lam_max, grid_size)


def choose_lambda(grid: np.ndarray, mean_error: np.ndarray, se: np.ndarray,
                  rule: str = '1se') -> float:
    """
    :return: With '1se', the largest penalty whose mean error is within one standard error of
             the minimum; with 'min', the largest penalty attaining the minimum.
    """
    if rule not in CV_RULES:
        raise ValidationError(
            '''
            Unknown selection rule '{}'. Valid rules: {}
            '''.format(rule, CV_RULES))
    best = int(np.argmin(mean_error))
    threshold = mean_error[best] + (se[best] if rule == '1se' else 0.0)
    candidates = np.flatnonzero(mean_error <= threshold)
    return float(grid[candidates].max())


def _run_fold(data: Dataset, train_rows: np.ndarray, test_rows: np.ndarray, config: FitConfig,
              grid: np.ndarray, n_vectors: int, use_clustering: bool):
    """ :return: `(errors, non_converged)` with one error rate per grid point (grid order)."""
    train = data.subset_rows(train_rows)
    test = data.subset_rows(test_rows)
    descending = np.argsort(grid)[::-1]
    models = fit_path(train, config, grid[descending], n_vectors, use_clustering)
    errors = np.empty(grid.size)
    non_converged = 0
    for position, model in zip(descending, models):
        predicted, _ = predict(model, test.X)
        errors[position] = float(np.mean(predicted != test.labels))
        non_converged += int(not model.all_converged)
    return errors, non_converged


def _run_fold_task(args):
    return _run_fold(*args)


def cross_validate(data: Dataset, config: FitConfig, folds: int = 5, grid_size: int = 30,
                   seed: int = 0, rule: str = '1se', grid=None, n_vectors: int = None,
                   use_clustering: bool = False, threads: int = None) -> CVResult:
    """
    Chooses the penalty by stratified k-fold cross-validation.

    Each fold fits the whole grid in decreasing order of lambda, every fit warm-started from
    the previous one, and records the misclassification rate of the held-out rows. Folds run
    in a pool of `threads` processes; results are gathered in fold order, so the outcome does
    not depend on scheduling.

    :param data: The training data.
    :param config: Fitting settings; its own lambda is ignored.
    :param folds: Number of folds.
    :param grid_size: Size of the default grid, equispaced on [0, lambda_max].
    :param seed: Seed of the fold assignment.
    :param rule: '1se' (default) or 'min'.
    :param grid: Explicit non-negative penalties to use instead of the default grid.
    :param n_vectors: Vectors per model, see `fit`.
    :param use_clustering: Cluster features inside every fold.
    :param threads: Cap on worker processes.

    :return: A `CVResult`.
    """
    from sklearn.model_selection import StratifiedKFold

    check_stratification(data, folds)
    if rule not in CV_RULES:
        raise ValidationError(
            '''
            Unknown selection rule '{}'. Valid rules: {}
            '''.format(rule, CV_RULES))
    n_vectors = resolve_n_vectors(data, config.strategy, n_vectors)
    lam_max = full_data_lambda_max(data, config, use_clustering)
    if grid is None:
        grid = default_grid(lam_max, grid_size)
    else:
        grid = np.unique(np.asarray(grid, dtype=float))
        if grid.size == 0 or grid.min() < 0 or not np.all(np.isfinite(grid)):
            raise ValidationError(
                '''
                The lambda grid must be a non-empty set of finite non-negative values.
                ''')

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    tasks = [(data, train, test, config, grid, n_vectors, use_clustering)
             for train, test in splitter.split(data.X, data.labels)]
    n_jobs = min(resolve_threads(threads), folds)
    if n_jobs > 1:
        import multiprocessing as mp
        with mp.Pool(processes=n_jobs) as pool:
            results = pool.map(_run_fold_task, tasks)
    else:
        results = [_run_fold_task(task) for task in tasks]

    fold_errors = np.vstack([errors for errors, _ in results])
    non_converged = sum(count for _, count in results)
    mean_error = fold_errors.mean(axis=0)
    se = fold_errors.std(axis=0, ddof=1) / math.sqrt(folds)
    chosen = choose_lambda(grid, mean_error, se, rule)
    if non_converged:
        logger.warning('%d fold fit(s) did not converge', non_converged)
    logger.info('cross-validation chose lambda=%.6g (rule %s, mean error %.4f)', chosen, rule,
                mean_error[int(np.flatnonzero(grid == chosen)[0])])
    return CVResult(grid=grid, fold_errors=fold_errors, mean_error=mean_error, se=se,
                    chosen_lambda=chosen, rule=rule, lambda_max=lam_max, folds=folds, seed=seed,
                    non_converged=non_converged)
