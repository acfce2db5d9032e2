import os
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sparseldatoolkit.clustering.feature_clustering import ClusterMap, expand_support
from sparseldatoolkit.normalizing.normalizer import Scaling
from sparseldatoolkit.utils.errors import SchemaVersionError, ValidationError

logger = logging.getLogger(__name__)

'''
    The fitted model and its versioned JSON document. All discriminant vectors are stored over
    the original features, so that scoring a new sample needs nothing but the stored scaling and
    a matrix product; a vector fit on cluster averages is saved already spread over the cluster
    members.
'''

SCHEMA_VERSION = 1

STRATEGIES = ('all-groups-sequential', 'merge-sequential')

# divisor of W_jj in the penalty weights s_j
PENALTY_SD_DIVISOR = 'n - g'

_REQUIRED_KEYS = {
    'model': ('p', 'vectors', 'supports', 'centroids', 'lambda', 'scaling'),
    'scaling': ('mean', 'scale'),
    'cluster_map': ('assignment', 'centers'),
}


def _check_keys(document, part: str):
    if not isinstance(document, dict):
        raise ValidationError(
            '''
            The '{}' part of the model document must be a JSON object. Given: {}
            '''.format(part, type(document).__name__))
    missing = [key for key in _REQUIRED_KEYS[part] if key not in document]
    if missing:
        raise ValidationError(
            '''
            The '{}' part of the model document lacks the keys:
            \t{}
            '''.format(part, missing))


@dataclass(frozen=True)
class DiscriminantModel:
    """
    :param vectors: A (d x p) matrix whose rows are the discriminant vectors, in fit order.
    :param supports: For every vector, the sorted indices of its non-zero entries.
    :param centroids: A (g x d) matrix of group means of the training scores.
    :param lambdas: The penalty used for every vector.
    :param scaling: The column transform applied before scoring.
    :param cluster_map: The feature clustering of the first fit, if clustering was used.
    :param feature_names: Names of the p original features.
    :param label_names: Name of every group, in encoding order.
    :param majority_class: The most frequent training group (lowest index on ties).
    :param strategy: 'all-groups-sequential' or 'merge-sequential'.
    :param converged: Whether the solve behind each vector met its convergence criteria.
    :param tau: Shrinkage intensities used for the first vector, one per group.
    :param disjoint: Whether features were removed between vectors, so that supports must not
                     overlap.
    :param cluster_supports: For a clustered fit, the clusters selected by each vector. They
                             index `cluster_map` for an all-groups fit; a merge-sequential fit
                             re-clusters the remaining features per vector and keeps only the
                             first map.
    """
    vectors: np.ndarray
    supports: tuple
    centroids: np.ndarray
    lambdas: tuple
    scaling: Scaling
    cluster_map: Optional[ClusterMap] = None
    feature_names: tuple = field(default=())
    label_names: tuple = field(default=())
    majority_class: int = 0
    strategy: str = 'all-groups-sequential'
    converged: tuple = field(default=())
    tau: tuple = field(default=())
    disjoint: bool = True
    cluster_supports: tuple = field(default=())

    def __post_init__(self):
        vectors = np.atleast_2d(np.array(self.vectors, dtype=float))
        centroids = np.array(self.centroids, dtype=float).reshape(-1, vectors.shape[0])
        supports = tuple(tuple(int(j) for j in s) for s in self.supports)
        lambdas = tuple(float(x) for x in self.lambdas)
        converged = tuple(bool(c) for c in self.converged) if len(self.converged) \
            else (True,) * vectors.shape[0]
        cluster_supports = tuple(tuple(int(c) for c in s) for s in self.cluster_supports)
        d, p = vectors.shape

        if self.strategy not in STRATEGIES:
            raise ValidationError(
                '''
                Unknown fitting strategy '{}'. Valid strategies:
                \t{}
                '''.format(self.strategy, STRATEGIES))
        if len(supports) != d or len(lambdas) != d or len(converged) != d:
            raise ValidationError(
                '''
                The model has {} vectors but {} supports, {} lambdas and {} convergence flags.
                '''.format(d, len(supports), len(lambdas), len(converged)))
        for i, (v, s) in enumerate(zip(vectors, supports)):
            if tuple(np.flatnonzero(v).tolist()) != s:
                raise ValidationError(
                    '''
                    The support of vector {} does not match its non-zero entries.
                    Stored: {}
                    Derived: {}
                    '''.format(i, list(s)[:10], np.flatnonzero(v)[:10].tolist()))
        seen = set()
        for i, s in enumerate(supports):
            if self.disjoint and seen.intersection(s):
                raise ValidationError(
                    '''
                    Vector {} reuses features of earlier vectors; supports must be disjoint:
                    \t{}
                    '''.format(i, sorted(seen.intersection(s))[:10]))
            seen.update(s)
        if self.scaling.mean.size != p:
            raise ValidationError(
                '''
                The scaling covers {} features but the vectors have {}.
                '''.format(self.scaling.mean.size, p))
        self._check_cluster_supports(cluster_supports, supports, d)
        g = len(self.label_names) if len(self.label_names) else centroids.shape[0]
        if centroids.shape != (g, d):
            raise ValidationError(
                '''
                The centroid matrix must be {} x {} (groups x vectors). Given: {}
                '''.format(g, d, centroids.shape))
        if not 0 <= self.majority_class < g:
            raise ValidationError(
                '''
                The majority class must lie in 0..{}. Given: {}
                '''.format(g - 1, self.majority_class))

        vectors.setflags(write=False)
        centroids.setflags(write=False)
        object.__setattr__(self, 'vectors', vectors)
        object.__setattr__(self, 'centroids', centroids)
        object.__setattr__(self, 'supports', supports)
        object.__setattr__(self, 'lambdas', lambdas)
        object.__setattr__(self, 'converged', converged)
        object.__setattr__(self, 'cluster_supports', cluster_supports)
        object.__setattr__(self, 'tau', tuple(float(t) for t in self.tau))
        object.__setattr__(self, 'feature_names', tuple(self.feature_names) or
                           tuple('f{}'.format(j) for j in range(p)))
        object.__setattr__(self, 'label_names', tuple(str(x) for x in self.label_names) or
                           tuple(str(i) for i in range(g)))

    def _check_cluster_supports(self, cluster_supports: tuple, supports: tuple, d: int):
        if not cluster_supports:
            return
        if len(cluster_supports) != d:
            raise ValidationError(
                '''
                The model has {} vectors but {} cluster supports.
                '''.format(d, len(cluster_supports)))
        if self.cluster_map is None or self.strategy != 'all-groups-sequential':
            return
        for i, (clusters, s) in enumerate(zip(cluster_supports, supports)):
            if any(not 0 <= c < self.cluster_map.k for c in clusters):
                raise ValidationError(
                    '''
                    Vector {} selects clusters outside 0..{}: {}
                    '''.format(i, self.cluster_map.k - 1, list(clusters)[:10]))
            expanded = tuple(expand_support(clusters, self.cluster_map).tolist())
            if expanded != s:
                raise ValidationError(
                    '''
                    The clusters of vector {} cover other features than its support.
                    Clusters: {}
                    Support: {}
                    '''.format(i, list(clusters)[:10], list(s)[:10]))

    @property
    def p(self) -> int:
        return self.vectors.shape[1]

    @property
    def d(self) -> int:
        return self.vectors.shape[0]

    @property
    def g(self) -> int:
        return self.centroids.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.vectors)

    @property
    def selected_features(self) -> np.ndarray:
        """ :return: The sorted union of all supports."""
        return np.array(sorted(set().union(*self.supports)), dtype=int)

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    def scores(self, X: np.ndarray) -> np.ndarray:
        """ :return: The (n x d) discriminant scores of the rows of `X`."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ValidationError(
                '''
                The model was fit on {} features but the given matrix has shape {}.
                '''.format(self.p, X.shape))
        return self.scaling.transform(X) @ self.vectors.T

    def to_dict(self) -> dict:
        return {
            'version': SCHEMA_VERSION,
            'p': self.p,
            'vectors': self.vectors.tolist(),
            'supports': [list(s) for s in self.supports],
            'lambda': list(self.lambdas),
            'centroids': self.centroids.tolist(),
            'scaling': self.scaling.to_dict(),
            'cluster_map': None if self.cluster_map is None else self.cluster_map.to_dict(),
            'feature_names': list(self.feature_names),
            'label_names': list(self.label_names),
            'majority_class': int(self.majority_class),
            'strategy': self.strategy,
            'converged': list(self.converged),
            'tau': list(self.tau),
            'disjoint_supports': bool(self.disjoint),
            'penalty_sd_divisor': PENALTY_SD_DIVISOR,
            'cluster_supports': [list(c) for c in self.cluster_supports],
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'DiscriminantModel':
        version = d.get('version') if isinstance(d, dict) else None
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                '''
                The model document has schema version {} but this package reads version {}.
                '''.format(version, SCHEMA_VERSION))
        _check_keys(d, 'model')
        _check_keys(d['scaling'], 'scaling')
        if d.get('cluster_map') is not None:
            _check_keys(d['cluster_map'], 'cluster_map')
        vectors = np.array(d['vectors'], dtype=float).reshape(-1, int(d['p']))
        return cls(vectors=vectors,
                   supports=d['supports'],
                   centroids=np.array(d['centroids'], dtype=float),
                   lambdas=d['lambda'],
                   scaling=Scaling.from_dict(d['scaling']),
                   cluster_map=None if d.get('cluster_map') is None
                   else ClusterMap.from_dict(d['cluster_map']),
                   feature_names=tuple(d.get('feature_names', ())),
                   label_names=tuple(d.get('label_names', ())),
                   majority_class=int(d.get('majority_class', 0)),
                   strategy=d.get('strategy', 'all-groups-sequential'),
                   converged=tuple(d.get('converged', ())),
                   tau=tuple(d.get('tau', ())),
                   disjoint=bool(d.get('disjoint_supports', True)),
                   cluster_supports=tuple(d.get('cluster_supports', ())))


def save_model(model: DiscriminantModel, path: str):
    """
    Writes the model as a JSON document. Floats are written with their shortest exact
    representation, so loading the file gives back bit-identical arrays.
    """
    dir_name = os.path.dirname(path)
    if dir_name:
        os.makedirs(dir_name, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as file:
        json.dump(model.to_dict(), file, indent=1)
    logger.info('model with %d vector(s) stored at %s', model.d, path)


def load_model(path: str) -> DiscriminantModel:
    """
    Reads a model written by `save_model`. Supports are re-derived from the vectors and checked
    against the stored lists.

    :raises json.JSONDecodeError: If the file is not valid JSON.
    :raises SchemaVersionError: If the document's version is not the supported one.
    :raises ValidationError: If the document lacks a required key.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(
            '''
            The given model file does NOT exist:
            \t{}
            '''.format(path))
    with open(path, encoding='utf-8') as file:
        document = json.load(file)
    return DiscriminantModel.from_dict(document)
