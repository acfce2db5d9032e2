import logging
from dataclasses import dataclass, field, replace, asdict
from typing import Optional

import numpy as np

from sparseldatoolkit.clustering.feature_clustering import ClusterMap, cluster_features, \
    build_meta_features, expand_support, expand_vector, default_k
from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.data.discriminant_model import DiscriminantModel, STRATEGIES
from sparseldatoolkit.normalizing.normalizer import Scaling, fit_scaling
from sparseldatoolkit.scatter.scatter import compute_scatter
from sparseldatoolkit.shrinkage.shrinkage import shrunken_within, DEFAULT_P_DENSE
from sparseldatoolkit.solver.solver import SolverConfig, solve_discriminant
from sparseldatoolkit.utils.errors import ValidationError, NoSignalError

logger = logging.getLogger(__name__)

'''
    Fitting, prediction and evaluation of multi-vector sparse discriminant models.

    Two schedules produce the vectors:

     - 'all-groups-sequential': every vector separates all groups. After a vector is found, the
       features in its support are removed and the next vector is fit on the rest.
     - 'merge-sequential': step k separates group k from the union of groups 0..k-1, using only
       the samples of groups 0..k. Features selected at a step are removed before the next one,
       and with clustering the remaining features are re-clustered at every step.

    Classification is by the nearest group centroid in the space of discriminant scores.
'''


@dataclass
class FitConfig:
    """
    :param solver: Settings of every solve; its `lam` is the penalty of every vector.
    :param tau_override: A fixed shrinkage intensity for all groups, or None to estimate.
    :param p_dense: Largest p for which a dense within-group matrix may be formed.
    :param strategy: 'all-groups-sequential' or 'merge-sequential'.
    :param eliminate: Remove the features of each vector before fitting the next one.
    :param n_clusters: Number of feature clusters; about p/100 when None.
    :param cluster_restarts: k-means initializations.
    :param cluster_seed: Seed of the k-means initializations.
    :param standardize: Divide features by their SD in addition to centering.
    """
    solver: SolverConfig = field(default_factory=SolverConfig)
    tau_override: Optional[float] = None
    p_dense: int = DEFAULT_P_DENSE
    strategy: str = 'all-groups-sequential'
    eliminate: bool = True
    n_clusters: Optional[int] = None
    cluster_restarts: int = 100
    cluster_seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                '''
                Unknown fitting strategy '{}'. Valid strategies:
                \t{}
                '''.format(self.strategy, STRATEGIES))

    @classmethod
    def from_configs(cls, configs: dict) -> 'FitConfig':
        """ Builds the settings from a dictionary returned by `ConfigReader.read()`."""
        solver = configs['SOLVER']
        tau = configs['SHRINKAGE']['tau_override']
        clustering = configs['CLUSTERING']
        return cls(solver=SolverConfig(lam=float(solver['lambda']), eps=float(solver['eps']),
                                       max_outer=int(solver['max_outer']),
                                       max_inner=int(solver['max_inner']),
                                       seed=int(solver['seed']),
                                       diagonal_mode=bool(solver['diagonal_mode']),
                                       kkt_tol=float(solver['kkt_tol']),
                                       compare_zero=bool(solver['compare_zero'])),
                   tau_override=None if tau in (None, 'auto') else float(tau),
                   p_dense=int(configs['SHRINKAGE']['p_dense']),
                   strategy=configs['FIT']['strategy'],
                   eliminate=bool(configs['FIT']['eliminate']),
                   n_clusters=None if clustering['k'] is None else int(clustering['k']),
                   cluster_restarts=int(clustering['restarts']),
                   cluster_seed=int(clustering['seed']),
                   standardize=bool(configs['FIT']['standardize']))

    def with_lambda(self, lam: float) -> 'FitConfig':
        return replace(self, solver=self.solver.with_lambda(lam))

    def to_dict(self) -> dict:
        values = asdict(self)
        values['solver'] = self.solver.to_dict()
        return values


@dataclass
class _Problem:
    """ The scatter and shrunken within-group matrix of one working feature set."""
    scatter: object
    within: object

    @classmethod
    def of(cls, data: Dataset, config: FitConfig) -> '_Problem':
        scatter = compute_scatter(data)
        return cls(scatter=scatter,
                   within=shrunken_within(scatter, config.tau_override, config.p_dense))

    def solve(self, config: FitConfig, v_init: np.ndarray = None):
        return solve_discriminant(self.scatter, self.within, config.solver, v_init=v_init)


@dataclass
class _Extraction:
    vectors: list = field(default_factory=list)
    supports: list = field(default_factory=list)
    cluster_supports: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    tau: tuple = ()
    first_working: Optional[np.ndarray] = None


def resolve_n_vectors(data: Dataset, strategy: str, n_vectors: int = None) -> int:
    """ :return: The number of vectors to extract; one by default, g - 1 for merging."""
    if n_vectors is None:
        n_vectors = data.g - 1 if strategy == 'merge-sequential' else 1
    if not 1 <= n_vectors <= data.g - 1:
        raise ValidationError(
            '''
            With {} groups at most {} discriminant vectors exist. Requested: {}
            '''.format(data.g, data.g - 1, n_vectors))
    return int(n_vectors)


def _truncate(found: int, wanted: int, reason: str):
    logger.warning('model truncated to %d of %d vectors: %s', found, wanted, reason)


def _extract_all_groups(working: Dataset, cluster_map: Optional[ClusterMap], config: FitConfig,
                        n_vectors: int, first: _Problem,
                        warm: np.ndarray = None) -> _Extraction:
    out = _Extraction()
    remaining = np.arange(working.p)
    for t in range(n_vectors):
        if remaining.size == 0:
            _truncate(t, n_vectors, 'no features left')
            break
        if t == 0:
            problem = first
        else:
            problem = _Problem.of(working.subset_columns(remaining), config)
        try:
            v_sub, diagnostics = problem.solve(config, v_init=warm if t == 0 else None)
        except NoSignalError:
            if t == 0:
                raise
            _truncate(t, n_vectors, 'no between-group signal in the remaining features')
            break
        v_work = np.zeros(working.p)
        v_work[remaining] = v_sub
        if t == 0:
            out.first_working = v_work
            out.tau = tuple(problem.within.tau)
        elif not np.any(v_work):
            _truncate(t, n_vectors, 'the next vector is zero at this lambda')
            break
        if cluster_map is None:
            out.vectors.append(v_work)
            out.supports.append(np.flatnonzero(v_work))
        else:
            clusters = np.flatnonzero(v_work)
            out.vectors.append(expand_vector(v_work, cluster_map))
            out.supports.append(expand_support(clusters, cluster_map))
            out.cluster_supports.append(clusters)
        out.converged.append(diagnostics.converged)
        if not np.any(v_work):
            break
        if config.eliminate:
            remaining = remaining[v_sub == 0]
    return out


def _merged_pair(scaled: Dataset, k: int, columns: np.ndarray) -> Dataset:
    """ The samples of groups 0..k over `columns`, relabelled as {0..k-1} versus k."""
    rows = np.flatnonzero(scaled.labels <= k)
    labels = (scaled.labels[rows] == k).astype(int)
    merged_name = '+'.join(scaled.label_names[:k])
    return Dataset(X=scaled.X[np.ix_(rows, columns)], labels=labels,
                   feature_names=tuple(scaled.feature_names[j] for j in columns),
                   label_names=(merged_name, scaled.label_names[k]))


def _extract_merge_sequential(scaled: Dataset, config: FitConfig, n_vectors: int,
                              use_clustering: bool):
    out = _Extraction()
    first_map = None
    remaining = np.arange(scaled.p)
    for k in range(1, n_vectors + 1):
        if remaining.size == 0:
            _truncate(k - 1, n_vectors, 'no features left')
            break
        pair = _merged_pair(scaled, k, remaining)
        cluster_map = None
        working = pair
        if use_clustering and remaining.size >= 2:
            n_clusters = default_k(remaining.size) if config.n_clusters is None \
                else min(config.n_clusters, remaining.size)
            cluster_map = cluster_features(pair, n_clusters, config.cluster_restarts,
                                           config.cluster_seed)
            working = build_meta_features(pair, cluster_map)
            if first_map is None:
                first_map = cluster_map
        try:
            problem = _Problem.of(working, config)
            v_work, diagnostics = problem.solve(config)
        except NoSignalError:
            if k == 1:
                raise
            _truncate(k - 1, n_vectors, 'no signal between group {} and the merged groups'
                      .format(scaled.label_names[k]))
            break
        v_sub = v_work if cluster_map is None else expand_vector(v_work, cluster_map)
        v = np.zeros(scaled.p)
        v[remaining] = v_sub
        if k == 1:
            out.tau = tuple(problem.within.tau)
        elif not np.any(v):
            _truncate(k - 1, n_vectors, 'the next vector is zero at this lambda')
            break
        out.vectors.append(v)
        if cluster_map is None:
            out.supports.append(np.flatnonzero(v))
        else:
            out.supports.append(remaining[expand_support(np.flatnonzero(v_work), cluster_map)])
        if use_clustering:
            # without a map (one feature left) that feature is its own cluster
            out.cluster_supports.append(np.flatnonzero(v_work))
        out.converged.append(diagnostics.converged)
        if not np.any(v):
            break
        if config.eliminate:
            remaining = remaining[v_sub == 0]
    return out, first_map


def _assemble(scaled: Dataset, scaling: Scaling, extraction: _Extraction,
              cluster_map: Optional[ClusterMap], config: FitConfig) -> DiscriminantModel:
    V = np.vstack(extraction.vectors)
    scores = scaled.X @ V.T
    centroids = np.vstack([scores[scaled.labels == i].mean(axis=0) for i in range(scaled.g)])
    model = DiscriminantModel(vectors=V,
                              supports=extraction.supports,
                              cluster_supports=extraction.cluster_supports,
                              centroids=centroids,
                              lambdas=[config.solver.lam] * V.shape[0],
                              scaling=scaling,
                              cluster_map=cluster_map,
                              feature_names=scaled.feature_names,
                              label_names=scaled.label_names,
                              majority_class=int(np.argmax(scaled.group_counts)),
                              strategy=config.strategy,
                              converged=extraction.converged,
                              tau=extraction.tau,
                              disjoint=config.eliminate)
    if model.is_zero:
        logger.warning('all discriminant vectors are zero at lambda=%.6g; predictions fall '
                       'back to the majority class', config.solver.lam)
    return model


def fit_path(data: Dataset, config: FitConfig, lambdas, n_vectors: int = None,
             use_clustering: bool = False) -> list:
    """
    Fits one model per penalty. Scaling and clustering are computed once; with the
    all-groups schedule the first vector at each penalty starts from the first vector of the
    previous one, so passing the penalties in decreasing order gives warm starts.

    :return: The models, in the order of `lambdas`.
    """
    n_vectors = resolve_n_vectors(data, config.strategy, n_vectors)
    scaling = fit_scaling(data.X, with_std=config.standardize)
    scaled = data.with_features(scaling.transform(data.X))

    models = []
    if config.strategy == 'merge-sequential':
        for lam in lambdas:
            lam_config = config.with_lambda(lam)
            extraction, first_map = _extract_merge_sequential(scaled, lam_config, n_vectors,
                                                              use_clustering)
            models.append(_assemble(scaled, scaling, extraction, first_map, lam_config))
        return models

    cluster_map = None
    working = scaled
    if use_clustering:
        cluster_map = cluster_features(scaled, config.n_clusters, config.cluster_restarts,
                                       config.cluster_seed)
        working = build_meta_features(scaled, cluster_map)
    first = _Problem.of(working, config)
    warm = None
    for lam in lambdas:
        lam_config = config.with_lambda(lam)
        extraction = _extract_all_groups(working, cluster_map, lam_config, n_vectors, first,
                                         warm)
        warm = extraction.first_working
        models.append(_assemble(scaled, scaling, extraction, cluster_map, lam_config))
    return models


def fit(data: Dataset, config: FitConfig, n_vectors: int = None,
        use_clustering: bool = False) -> DiscriminantModel:
    """
    Fits a sparse discriminant model at the penalty `config.solver.lam`.

    :param data: The training data.
    :param config: The fitting settings.
    :param n_vectors: How many vectors to extract, at most g - 1. Defaults to 1, or to g - 1
                      for the merging schedule.
    :param use_clustering: Fit on cluster averages of the features instead of the features.

    :return: The fitted model. It has fewer vectors than requested when the features or the
             signal run out first, which is logged.
    """
    return fit_path(data, config, [config.solver.lam], n_vectors, use_clustering)[0]


def predict(model: DiscriminantModel, X: np.ndarray):
    """
    Assigns every row of `X` to the group whose centroid is nearest in score space. Ties go to
    the lowest group index, and an all-zero model assigns the majority class.

    :param model: A fitted model.
    :param X: An (n x p) matrix over the model's original features.

    :return: A tuple `(labels, scores)`: encoded group indices and the (n x d) scores.
    """
    scores = model.scores(X)
    if model.is_zero:
        return np.full(scores.shape[0], model.majority_class, dtype=int), scores
    distances = ((scores[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(distances, axis=1), scores


def align_labels(model: DiscriminantModel, data: Dataset) -> np.ndarray:
    """ :return: The labels of `data` re-encoded to the model's group indices by name."""
    index = {name: i for i, name in enumerate(model.label_names)}
    unknown = [name for name in data.label_names if name not in index]
    if unknown:
        raise ValidationError(
            '''
            The test data has labels the model was not trained on:
            \t{}
            Known labels: {}
            '''.format(unknown, list(model.label_names)))
    mapping = np.array([index[name] for name in data.label_names], dtype=int)
    return mapping[data.labels]


def evaluate(model: DiscriminantModel, test: Dataset, truth_support=None) -> dict:
    """
    :param model: A fitted model.
    :param test: Labelled test data over the model's features.
    :param truth_support: Optionally, the indices of the truly informative features.

    :return: A dictionary with the misclassification count, rate and percentage, the
             per-group error rates, the number of selected features and, when
             `truth_support` is given, how many of them are truly informative.
    """
    truth = align_labels(model, test)
    predicted, _ = predict(model, test.X)
    wrong = predicted != truth
    selected = model.selected_features
    per_group = {model.label_names[i]: float(wrong[truth == i].mean())
                 for i in np.unique(truth)}
    metrics = {
        'n_test': int(test.n),
        'errors': int(wrong.sum()),
        'error_rate': float(wrong.mean()),
        'error_percent': 100.0 * float(wrong.mean()),
        'per_group_error': per_group,
        'features': int(selected.size),
        'correct_features': None,
        'n_vectors': model.d,
    }
    if truth_support is not None:
        truth_support = np.asarray(list(truth_support), dtype=int)
        metrics['correct_features'] = int(np.isin(selected, truth_support).sum())
    return metrics
