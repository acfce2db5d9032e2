import os
import logging
from dataclasses import replace

import numpy as np
import pandas as pd
import tqdm

from sparseldatoolkit.pipeline.cross_validation import cross_validate
from sparseldatoolkit.pipeline.model_fitting import FitConfig, fit, evaluate
from sparseldatoolkit.simulate.simulator import ScenarioSpec, sample_scenario, scenario_covariance
from sparseldatoolkit.utils import parallel_utils

logger = logging.getLogger(__name__)

METHODS = {'FLDA': False, 'FLDAdiag': True}

_summary_columns = ['method', 'scenario', 'error_mean', 'error_sd', 'features_mean',
                    'features_sd', 'correct_features_mean', 'correct_features_sd',
                    'non_converged', 'replicates']


def _run_replicates(spec: ScenarioSpec, cov, indices: list, config: FitConfig, folds: int,
                    grid_size: int, cv_seed: int, rule: str, verbose: bool = False) -> list:
    """ Runs CV, refit and evaluation for both methods on the given replicates."""
    rows = []
    for replicate in tqdm.tqdm(indices, desc='Replicates', disable=not verbose):
        train, test, truth = sample_scenario(spec, replicate, cov=cov)
        for method, diagonal in METHODS.items():
            method_config = replace(config, solver=replace(config.solver,
                                                           diagonal_mode=diagonal))
            cv = cross_validate(train, method_config, folds=folds, grid_size=grid_size,
                                seed=cv_seed, rule=rule, threads=1)
            model = fit(train, method_config.with_lambda(cv.chosen_lambda))
            metrics = evaluate(model, test, truth)
            rows.append({'replicate': replicate, 'method': method,
                         'scenario': spec.structure,
                         'error': metrics['error_percent'],
                         'features': metrics['features'],
                         'correct_features': metrics['correct_features'],
                         'lambda': cv.chosen_lambda,
                         'converged': model.all_converged,
                         'cv_non_converged': cv.non_converged})
    return rows


def _run_partition(args):
    return _run_replicates(*args)


class ReplicateStudy:
    """
    A simulation study in the shape of a benchmark table: for every replicate of a scenario,
    both the shrunken-covariance method (FLDA) and its diagonal baseline (FLDAdiag) choose
    lambda by cross-validation on the training split, are refit at that lambda on the whole
    training split, and are evaluated on the test split. The per-replicate results are then
    summarized per method as

        * the mean and SD of the test error (in percent),
        * the mean and SD of the number of selected features,
        * the mean and SD of the number of selected features that are truly shifted,
        * the number of refits that did not converge.
    """

    def __init__(self, spec: ScenarioSpec, replicates: int = 25, config: FitConfig = None,
                 folds: int = 5, grid_size: int = 30, cv_seed: int = 0, rule: str = '1se'):
        """
        :param spec: The scenario to replicate.
        :param replicates: Number of replicates; replicate i samples with seed `spec.seed ^ i`.
        :param config: Fitting settings shared by both methods.
        :param folds: Folds of the cross-validation.
        :param grid_size: Penalties on the cross-validation grid.
        :param cv_seed: Seed of the fold assignment.
        :param rule: Selection rule of the cross-validation.
        """
        if replicates < 1:
            raise ValueError(
                '''
                At least one replicate is needed. Given: {}
                '''.format(replicates))
        self.spec = spec
        self.replicates = replicates
        self.config = FitConfig() if config is None else config
        self.folds = folds
        self.grid_size = grid_size
        self.cv_seed = cv_seed
        self.rule = rule
        self.results = pd.DataFrame()
        self.summary = pd.DataFrame(columns=_summary_columns)

    def run(self, n_jobs: int = None, verbose: bool = False):
        """
        Runs all replicates, `n_jobs` processes at a time, and fills `results` and `summary`.
        The replicates are partitioned into contiguous chunks, one per process; results are
        ordered by replicate whatever the completion order.
        """
        n_jobs = min(parallel_utils.resolve_threads(n_jobs), self.replicates)
        cov = scenario_covariance(self.spec)
        indices = list(range(self.replicates))
        if n_jobs > 1:
            import multiprocessing as mp
            partitions = parallel_utils.split(indices, n_jobs)
            tasks = [(self.spec, cov, part, self.config, self.folds, self.grid_size,
                      self.cv_seed, self.rule) for part in partitions]
            with mp.Pool(processes=n_jobs) as pool:
                chunks = list(tqdm.tqdm(pool.imap(_run_partition, tasks), total=len(tasks),
                                        desc='Partitions', disable=not verbose))
            rows = [row for chunk in chunks for row in chunk]
        else:
            rows = _run_replicates(self.spec, cov, indices, self.config, self.folds,
                                   self.grid_size, self.cv_seed, self.rule, verbose)
        self.results = pd.DataFrame(rows).sort_values(['replicate', 'method'],
                                                      kind='mergesort').reset_index(drop=True)
        self.compute_summary()

    def compute_summary(self):
        """ Aggregates `results` into one row per method and scenario."""
        if self.results.empty:
            raise ValueError(
                '''
                The results are empty. Execute `run` before summarizing.
                ''')
        rows = []
        for (method, scenario), df in self.results.groupby(['method', 'scenario'], sort=False):
            rows.append({'method': method, 'scenario': scenario,
                         'error_mean': df['error'].mean(), 'error_sd': df['error'].std(ddof=1),
                         'features_mean': df['features'].mean(),
                         'features_sd': df['features'].std(ddof=1),
                         'correct_features_mean': df['correct_features'].mean(),
                         'correct_features_sd': df['correct_features'].std(ddof=1),
                         'non_converged': int((~df['converged'].astype(bool)).sum()),
                         'replicates': int(df.shape[0])})
        self.summary = pd.DataFrame(rows, columns=_summary_columns)
        not_converged = int(self.summary['non_converged'].sum())
        if not_converged:
            logger.warning('%d refit(s) in the study did not converge', not_converged)

    def mean_error(self, method: str) -> float:
        return float(self.summary.loc[self.summary['method'] == method, 'error_mean'].iloc[0])

    def print_summary(self):
        if self.summary.empty:
            print(
                '''
                The summary is empty. The method `run` needs to be executed before printing the
                results.
                '''
            )
        else:
            print(self.summary.to_string(index=False))

    def summary_to_csv(self, output_path: str, file_name: str):
        """
        Stores the summary table.

        :param output_path: Directory where the summary should be stored.
        :param file_name: Name of the csv file. If the extension is not given, `.csv` will be
                          appended to the given name.

        :return: The path of the written file.
        """
        if self.summary.empty:
            raise ValueError(
                '''
                Execute `run` before storing the results.
                '''
            )
        if not os.path.exists(output_path):
            os.makedirs(output_path)
        if not file_name.endswith('.csv'):
            file_name = '{}.csv'.format(file_name)
        out_file = os.path.join(output_path, file_name)
        self.summary.to_csv(out_file, index=False, float_format='%.6g')
        logger.info('replicate summary stored at %s', out_file)
        return out_file


def run_replicate_study(spec: ScenarioSpec, replicates: int = 25, config: FitConfig = None,
                        folds: int = 5, grid_size: int = 30, cv_seed: int = 0,
                        rule: str = '1se', n_jobs: int = None,
                        verbose: bool = False) -> ReplicateStudy:
    """ Builds and runs a `ReplicateStudy`; see the class for the parameters."""
    study = ReplicateStudy(spec, replicates, config, folds, grid_size, cv_seed, rule)
    study.run(n_jobs=n_jobs, verbose=verbose)
    return study
