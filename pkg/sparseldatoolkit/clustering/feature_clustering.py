import logging
import math
from dataclasses import dataclass

import numpy as np

from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.utils.errors import ValidationError

logger = logging.getLogger(__name__)

'''
    Pre-clustering of features. Features whose group means differ in the same way are averaged
    into one meta-feature, so that a group of near-duplicate discriminative features can enter
    or leave a discriminant vector as a single coordinate.
'''


@dataclass(frozen=True)
class ClusterMap:
    """
    :param assignment: The cluster id of every original feature.
    :param centers: The (k x m) cluster centers in profile space.
    :param inertia: Sum of squared distances of the profiles to their centers.
    """
    assignment: np.ndarray
    centers: np.ndarray
    inertia: float = 0.0

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def p(self) -> int:
        return self.assignment.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)

    def averaging_matrix(self, clusters=None) -> np.ndarray:
        """ :return: The (p x c) matrix A with A[j, c] = 1/|c| for j in cluster c, so that the
        meta-features of a data matrix X are X @ A. Columns follow `clusters` (all by default)."""
        clusters = np.arange(self.k) if clusters is None else np.asarray(clusters, dtype=int)
        A = np.zeros((self.p, clusters.size))
        sizes = self.sizes
        for col, c in enumerate(clusters):
            A[self.assignment == c, col] = 1.0 / sizes[c]
        return A

    def to_dict(self) -> dict:
        return {'k': self.k, 'assignment': self.assignment.tolist(),
                'centers': self.centers.tolist(), 'sizes': self.sizes.tolist(),
                'inertia': self.inertia}

    @classmethod
    def from_dict(cls, d: dict) -> 'ClusterMap':
        return cls(assignment=np.asarray(d['assignment'], dtype=int),
                   centers=np.asarray(d['centers'], dtype=float),
                   inertia=float(d.get('inertia', 0.0)))


def default_k(p: int) -> int:
    """ :return: About one cluster per hundred features, at least two."""
    return min(p, max(2, math.ceil(0.01 * p)))


def feature_profiles(data: Dataset) -> np.ndarray:
    """
    The representation in which features are clustered: for every feature, the deviations of
    its group means from the grand mean divided by the pooled within-group SD. With two groups
    this is a single number per feature, the standardized mean difference.

    :return: A (p x m) matrix, m = 1 for two groups and g otherwise.
    """
    grand = data.X.mean(axis=0)
    means = np.vstack([data.group_rows(i).mean(axis=0) for i in range(data.g)])
    centered_sq = sum(np.sum((data.group_rows(i) - means[i]) ** 2, axis=0)
                      for i in range(data.g))
    s = np.sqrt(centered_sq / (data.n - data.g))
    usable = s > 0
    if data.g == 2:
        profile = np.zeros((data.p, 1))
        profile[usable, 0] = (means[0, usable] - means[1, usable]) / s[usable]
    else:
        profile = np.zeros((data.p, data.g))
        profile[usable] = ((means[:, usable] - grand[usable]) / s[usable]).T
    return profile


def _repair_empty(profiles: np.ndarray, labels: np.ndarray, centers: np.ndarray):
    """ Gives every empty cluster the member of the largest cluster farthest from its center."""
    k = centers.shape[0]
    for empty in np.flatnonzero(np.bincount(labels, minlength=k) == 0):
        largest = int(np.argmax(np.bincount(labels, minlength=k)))
        members = np.flatnonzero(labels == largest)
        distances = np.sum((profiles[members] - centers[largest]) ** 2, axis=1)
        moved = members[int(np.argmax(distances))]
        labels[moved] = empty
        centers[empty] = profiles[moved]
        centers[largest] = profiles[labels == largest].mean(axis=0)
        logger.debug('cluster %d was empty; split from cluster %d', empty, largest)
    return labels, centers


def cluster_features(data: Dataset, k: int = None, restarts: int = 100,
                     seed: int = 0) -> ClusterMap:
    """
    Groups the features by k-means on their standardized group-mean profiles, using Lloyd
    iterations from k-means++ seeds and keeping the best of `restarts` runs. Empty clusters
    are filled by splitting the largest one.

    :param data: The training data.
    :param k: Number of clusters, 2 <= k <= p. Defaults to ceil(0.01 p).
    :param restarts: Number of seeded initializations.
    :param seed: Seed of the initializations.

    :return: A `ClusterMap` with no empty cluster.
    """
    from sklearn.cluster import KMeans

    k = default_k(data.p) if k is None else int(k)
    if not 2 <= k <= data.p:
        raise ValidationError(
            '''
            The number of clusters must lie in 2..p = {}. Given: {}
            '''.format(data.p, k))
    profiles = feature_profiles(data)
    if k == data.p:
        return ClusterMap(assignment=np.arange(data.p), centers=profiles.copy(), inertia=0.0)

    kmeans = KMeans(n_clusters=k, init='k-means++', n_init=restarts, algorithm='lloyd',
                    random_state=seed)
    labels = kmeans.fit_predict(profiles).astype(int)
    centers = np.array(kmeans.cluster_centers_, dtype=float)
    labels, centers = _repair_empty(profiles, labels, centers)
    inertia = float(np.sum((profiles - centers[labels]) ** 2))
    logger.info('clustered %d features into %d clusters (inertia %.4g, %d restarts)',
                data.p, k, inertia, restarts)
    return ClusterMap(assignment=labels, centers=centers, inertia=inertia)


def build_meta_features(data: Dataset, cluster_map: ClusterMap, clusters=None) -> Dataset:
    """
    :param clusters: Optionally, the cluster ids to keep (in this order); all by default.

    :return: The dataset whose column c is the row-wise mean of the features in cluster c.
    """
    if cluster_map.p != data.p:
        raise ValidationError(
            '''
            The cluster map covers {} features but the data has {}.
            '''.format(cluster_map.p, data.p))
    clusters = np.arange(cluster_map.k) if clusters is None else np.asarray(clusters, dtype=int)
    A = cluster_map.averaging_matrix(clusters)
    return data.with_features(data.X @ A, ['cluster_{}'.format(c) for c in clusters])


def expand_support(model_support, cluster_map: ClusterMap) -> np.ndarray:
    """ :return: The sorted original features belonging to any of the given clusters."""
    selected = np.asarray(list(model_support), dtype=int)
    if selected.size == 0:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(np.isin(cluster_map.assignment, selected))


def expand_vector(v_meta: np.ndarray, cluster_map: ClusterMap, clusters=None) -> np.ndarray:
    """
    Rewrites a vector over meta-features as a vector over original features with identical
    scores: each cluster coefficient is spread evenly over the cluster's members.
    """
    clusters = np.arange(cluster_map.k) if clusters is None else np.asarray(clusters, dtype=int)
    return cluster_map.averaging_matrix(clusters) @ np.asarray(v_meta, dtype=float)
