import os
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from sparseldatoolkit.utils.errors import IngestionError, ValidationError

logger = logging.getLogger(__name__)

'''
    This module holds the in-memory representation of a labelled data matrix, and the CSV
    reader/writer used by every command of the toolkit. Rows are samples and columns are
    features; the label column is removed from the feature matrix and encoded as integers
    0..g-1 in the order in which the labels first appear in the file.
'''


@dataclass(frozen=True)
class Dataset:
    """
    An immutable, validated n x p feature matrix with group labels.

    :param X: A float matrix of shape (n, p).
    :param labels: An integer vector of length n, with values in 0..g-1.
    :param feature_names: The column names, in order.
    :param label_names: The original label of each encoded group; `label_names[i]` is the
                        label that was encoded as `i`.
    """
    X: np.ndarray
    labels: np.ndarray
    feature_names: tuple = field(default=())
    label_names: tuple = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        labels = np.asarray(self.labels).astype(int)
        if X.ndim != 2:
            raise ValidationError(
                '''
                The feature matrix must be 2-dimensional. Given shape: {}
                '''.format(X.shape))
        if labels.shape != (X.shape[0],):
            raise ValidationError(
                '''
                The number of labels ({}) does not match the number of rows ({}).
                '''.format(labels.size, X.shape[0]))
        feature_names = tuple(self.feature_names) if len(self.feature_names) else \
            tuple('f{}'.format(j) for j in range(X.shape[1]))
        if len(feature_names) != X.shape[1]:
            raise ValidationError(
                '''
                {} feature names were given for {} columns.
                '''.format(len(feature_names), X.shape[1]))
        g = int(labels.max()) + 1 if labels.size else 0
        label_names = tuple(str(name) for name in self.label_names) if len(self.label_names) \
            else tuple(str(i) for i in range(g))
        _validate_groups(labels, len(label_names))

        X.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'feature_names', feature_names)
        object.__setattr__(self, 'label_names', label_names)

    @classmethod
    def from_arrays(cls, X: np.ndarray, raw_labels, feature_names=None) -> 'Dataset':
        """
        Builds a dataset from a matrix and an arbitrary label vector. The labels are re-encoded
        to 0..g-1 by order of first appearance.
        """
        raw_labels = pd.Series(np.asarray(raw_labels)).astype(str)
        label_names = tuple(pd.unique(raw_labels))
        encoding = {name: i for i, name in enumerate(label_names)}
        labels = raw_labels.map(encoding).to_numpy()
        return cls(X=X, labels=labels, feature_names=tuple(feature_names or ()),
                   label_names=label_names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def g(self) -> int:
        return len(self.label_names)

    @property
    def group_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.g)

    def group_rows(self, i: int) -> np.ndarray:
        """ :return: The rows of `X` that belong to the encoded group `i`."""
        return self.X[self.labels == i]

    def subset_rows(self, rows) -> 'Dataset':
        """ :return: A new dataset of the selected rows, with the same label encoding."""
        rows = np.asarray(rows)
        return Dataset(X=self.X[rows], labels=self.labels[rows],
                       feature_names=self.feature_names, label_names=self.label_names)

    def subset_columns(self, columns) -> 'Dataset':
        """ :return: A new dataset restricted to the given feature indices, in that order."""
        columns = np.asarray(columns, dtype=int)
        return Dataset(X=self.X[:, columns], labels=self.labels,
                       feature_names=tuple(self.feature_names[j] for j in columns),
                       label_names=self.label_names)

    def with_features(self, X: np.ndarray, feature_names=None) -> 'Dataset':
        """ :return: A new dataset with the same labels and a replaced feature matrix."""
        return Dataset(X=X, labels=self.labels,
                       feature_names=tuple(feature_names) if feature_names is not None
                       else self.feature_names,
                       label_names=self.label_names)

    def to_dataframe(self, label_column: str = 'label') -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.feature_names))
        df[label_column] = [self.label_names[i] for i in self.labels]
        return df


def _validate_groups(labels: np.ndarray, g: int):
    """
    Checks the group structure of an encoded label vector against these rules:

     - there are at least two groups,
     - every label lies in 0..g-1,
     - every group has at least two samples.
    """
    if g < 2:
        raise ValidationError(
            '''
            At least two groups are needed for discriminant analysis. Found: {}
            '''.format(g))
    if labels.size and (labels.min() < 0 or labels.max() >= g):
        raise ValidationError(
            '''
            Labels must lie in 0..{}. Found values in [{}, {}].
            '''.format(g - 1, labels.min(), labels.max()))
    counts = np.bincount(labels, minlength=g)
    small = np.flatnonzero(counts < 2)
    if small.size > 0:
        raise ValidationError(
            '''
            Every group needs at least 2 samples to have a sample covariance.
            Groups with fewer samples (encoded index: count):
            \t{}
            '''.format({int(i): int(counts[i]) for i in small}))


def _numeric_block(df: pd.DataFrame, path: str) -> np.ndarray:
    """
    Converts every column of the given frame to float. A cell that is missing, non-numeric or
    infinite raises an error naming its data row (1-based, header excluded) and its column.
    """
    numeric = df.apply(pd.to_numeric, errors='coerce')
    values = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise IngestionError(
            '''
            The file (printed below) has a missing or non-numeric value at data row {}
            (line {} of the file), column '{}'. Found: {!r}
            \t{}
            '''.format(row + 1, row + 2, df.columns[col], df.iat[row, col], path))
    return values


def _read_csv(path: str) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise FileNotFoundError(
            '''
            The given data file does NOT exist:
            \t{}
            '''.format(path))
    return pd.read_csv(path, sep=',', encoding='utf-8', dtype=str, keep_default_na=False,
                       na_values=[''])


def load_dataset(path: str, label_column: str) -> Dataset:
    """
    Reads a comma-separated file with a header row, takes `label_column` as the group label and
    every other column as a numeric feature.

    :param path: Path to the CSV file.
    :param label_column: Name of the column holding the group labels.

    :return: A validated `Dataset`, with labels encoded in first-appearance order.
    """
    df = _read_csv(path)
    if label_column not in df.columns:
        raise ValidationError(
            '''
            The label column '{}' is not in the file (printed below). Available columns:
            \t{}
            \t{}
            '''.format(label_column, list(df.columns)[:10], path))
    if df[label_column].isnull().any():
        row = int(np.flatnonzero(df[label_column].isnull().to_numpy())[0])
        raise IngestionError(
            '''
            Missing label at data row {} (line {} of the file):
            \t{}
            '''.format(row + 1, row + 2, path))
    features = df.drop(columns=[label_column])
    X = _numeric_block(features, path)
    data = Dataset.from_arrays(X, df[label_column].to_numpy(),
                               feature_names=list(features.columns))
    logger.info('loaded %s: n=%d, p=%d, groups=%s', path, data.n, data.p,
                dict(zip(data.label_names, data.group_counts.tolist())))
    return data


def read_feature_matrix(path: str, feature_names: tuple = None, label_column: str = None):
    """
    Reads an unlabeled (or optionally labelled) CSV for prediction.

    :param path: Path to the CSV file.
    :param feature_names: If given, these columns are selected in this order. A missing column
                          is an error.
    :param label_column: If given and present in the file, that column is returned separately.

    :return: A tuple `(X, raw_labels)` where `raw_labels` is None when no label was read.
    """
    df = _read_csv(path)
    raw_labels = None
    if label_column is not None and label_column in df.columns:
        raw_labels = df[label_column].astype(str).to_numpy()
        df = df.drop(columns=[label_column])
    if feature_names is not None:
        missing = [name for name in feature_names if name not in df.columns]
        if missing:
            raise ValidationError(
                '''
                The file (printed below) lacks {} of the model's feature columns, e.g.:
                \t{}
                \t{}
                '''.format(len(missing), missing[:5], path))
        df = df[list(feature_names)]
    return _numeric_block(df, path), raw_labels


def save_dataset(data: Dataset, path: str, label_column: str = 'label'):
    """ Writes the dataset as a CSV file whose last column holds the original labels."""
    dir_name = os.path.dirname(path)
    if dir_name:
        os.makedirs(dir_name, exist_ok=True)
    data.to_dataframe(label_column).to_csv(path, index=False, float_format='%.17g')
    logger.info('dataset stored at %s', path)
