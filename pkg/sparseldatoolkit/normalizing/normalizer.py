from dataclasses import dataclass

import numpy as np

'''
    Column standardization applied before any scatter matrix is computed, and replayed verbatim
    at prediction time. By default features are only centered: the within-group spread enters
    the model through the penalty weights, so dividing by a global SD would change the problem.
'''


@dataclass(frozen=True)
class Scaling:
    """
    The per-feature affine map `(x - mean) / scale` used at fit time.

    :param mean: Column means of the training matrix.
    :param scale: Column divisors; all ones unless full standardization was requested.
    """
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.mean.size:
            raise ValueError(
                '''
                The matrix to be transformed has {} columns but the scaling was fit on {}.
                '''.format(X.shape[1] if X.ndim == 2 else X.shape, self.mean.size))
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {'mean': self.mean.tolist(), 'scale': self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> 'Scaling':
        return cls(mean=np.asarray(d['mean'], dtype=float),
                   scale=np.asarray(d['scale'], dtype=float))


def fit_scaling(X: np.ndarray, with_std: bool = False) -> Scaling:
    """
    Applies the StandardScaler from the module sklearn.preprocessing to learn the column means
    (and, if requested, the column standard deviations) of the training matrix. The
    transformation is given by::

        X_scaled = (X - X.mean(axis=0)) / scale

    where `scale` is 1 for every column unless `with_std` is True. Constant columns keep a
    scale of 1 so that the transform never divides by zero.

    :param X: The n x p training matrix.
    :param with_std: False (default) to center only.

    :return: A `Scaling` that reproduces the transform.
    """
    from sklearn.preprocessing import StandardScaler

    scaler = StandardScaler(with_mean=True, with_std=with_std)
    scaler.fit(np.asarray(X, dtype=float))
    p = scaler.mean_.size
    scale = scaler.scale_ if with_std else np.ones(p)
    return Scaling(mean=np.array(scaler.mean_, dtype=float), scale=np.array(scale, dtype=float))


def center(X: np.ndarray) -> np.ndarray:
    """ :return: The matrix with each column shifted to mean zero."""
    return fit_scaling(X).transform(X)
