import os
import logging
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import pandas as pd
import scipy.linalg
import yaml

from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.utils.errors import ValidationError

logger = logging.getLogger(__name__)

'''
    Synthetic two-group Gaussian scenarios. Group 1 has mean zero; group 2 is shifted on the
    first r features by an equispaced ladder of values in [0.2, 0.6]; both groups share one
    within-group covariance. The covariance is fixed by the scenario seed, and replicate i draws
    its samples from the stream seeded with `seed ^ i`, so replicates differ only in noise.
'''

STRUCTURES = ('diagonal', 'block_network', 'external_matrix', 'equicorrelation')

# eigenvalues of a repaired covariance are floored at this value
_EIGEN_FLOOR = 1e-6


@dataclass
class ScenarioSpec:
    """
    :param p: Number of features.
    :param n_train: Training samples per group.
    :param n_test: Test samples per group.
    :param r: Number of shifted features (the truth support).
    :param structure: One of 'diagonal', 'block_network', 'external_matrix', 'equicorrelation'.
    :param shift_low: Smallest mean shift.
    :param shift_high: Largest mean shift.
    :param seed: Scenario seed.
    :param covariance_path: Headerless CSV matrix, for 'external_matrix'.
    :param rho: Common correlation, for 'equicorrelation'.
    :param n_blocks: Block count for 'block_network'; scaled with p when omitted.
    :param n_cross_pairs: Correlated block pairs for 'block_network'; scaled when omitted.
    """
    p: int = 800
    n_train: int = 100
    n_test: int = 500
    r: int = 80
    structure: str = 'diagonal'
    shift_low: float = 0.2
    shift_high: float = 0.6
    seed: int = 0
    covariance_path: Optional[str] = None
    rho: float = 0.0
    n_blocks: Optional[int] = None
    n_cross_pairs: Optional[int] = None

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValidationError(
                '''
                Unknown covariance structure '{}'. Valid structures:
                \t{}
                '''.format(self.structure, STRUCTURES))
        if not 0 <= self.r <= self.p:
            raise ValidationError(
                '''
                The number of shifted features must lie in 0..p = {}. Given: {}
                '''.format(self.p, self.r))
        if self.n_train < 2 or self.n_test < 2:
            raise ValidationError(
                '''
                At least 2 training and 2 test samples per group are needed. Given: {} and {}
                '''.format(self.n_train, self.n_test))
        if not 0 <= self.shift_low <= self.shift_high:
            raise ValidationError(
                '''
                The mean-shift range must satisfy 0 <= low <= high. Given: [{}, {}]
                '''.format(self.shift_low, self.shift_high))
        if self.structure == 'external_matrix' and not self.covariance_path:
            raise ValidationError(
                '''
                The 'external_matrix' structure needs `covariance_path`.
                ''')

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BlockNetwork:
    """
    :param cov: The covariance matrix after any positive-definite repair.
    :param raw_cov: The matrix as constructed, before repair.
    :param blocks: Index arrays of the correlated blocks.
    :param cross_pairs: Pairs of block numbers that are correlated with each other.
    :param repaired: True if eigenvalues had to be floored.
    """
    cov: np.ndarray
    raw_cov: np.ndarray
    blocks: list = field(default_factory=list)
    cross_pairs: list = field(default_factory=list)
    repaired: bool = False


def default_block_geometry(p: int):
    """ :return: `(n_blocks, n_cross_pairs)` scaled from 40 blocks and 5 pairs at p = 800."""
    n_blocks = max(1, int(round(p / 20)))
    return n_blocks, max(1, int(round(n_blocks / 8)))


def nearest_positive_definite(cov: np.ndarray, floor: float = _EIGEN_FLOOR):
    """
    :return: `(matrix, repaired)`: the symmetric matrix with eigenvalues floored at `floor`,
             and whether any eigenvalue had to move.
    """
    sym = (cov + cov.T) / 2
    values, vectors = scipy.linalg.eigh(sym)
    if values.min() >= floor:
        return sym, False
    repaired = (vectors * np.maximum(values, floor)) @ vectors.T
    return (repaired + repaired.T) / 2, True


def make_block_network_cov(p: int, seed: int, n_blocks: int = None, n_cross_pairs: int = None,
                           block_size: int = 4, within: float = 0.75,
                           cross: float = 0.7) -> BlockNetwork:
    """
    Identity covariance with correlated blocks mimicking a network: `n_blocks` contiguous,
    non-overlapping blocks of `block_size` features at random offsets, with correlation
    `within` inside each block, and `n_cross_pairs` random pairs of blocks whose elements are
    correlated at `cross`. The result is repaired to positive definite when needed, which is
    logged.
    """
    default_blocks, default_pairs = default_block_geometry(p)
    n_blocks = default_blocks if n_blocks is None else n_blocks
    n_cross_pairs = default_pairs if n_cross_pairs is None else n_cross_pairs
    cov = np.eye(p)
    if n_blocks == 0:
        return BlockNetwork(cov=cov, raw_cov=cov.copy())
    free = p - n_blocks * block_size
    if free < 0:
        raise ValidationError(
            '''
            {} blocks of size {} do not fit in p = {} features.
            '''.format(n_blocks, block_size, p))
    max_pairs = n_blocks * (n_blocks - 1) // 2
    if n_cross_pairs > max_pairs:
        raise ValidationError(
            '''
            {} cross pairs were requested but only {} block pairs exist.
            '''.format(n_cross_pairs, max_pairs))

    rng = np.random.default_rng(seed)
    # gaps between consecutive blocks: sorted draws from the free slots
    gaps = np.sort(rng.choice(free + n_blocks, size=n_blocks, replace=False)) - np.arange(n_blocks)
    starts = gaps + np.arange(n_blocks) * block_size
    blocks = [np.arange(start, start + block_size) for start in starts]
    for block in blocks:
        cov[np.ix_(block, block)] = within
        cov[block, block] = 1.0

    pairs = []
    if n_cross_pairs:
        upper = np.array([(a, b) for a in range(n_blocks) for b in range(a + 1, n_blocks)])
        pairs = [tuple(int(x) for x in upper[i])
                 for i in rng.choice(len(upper), size=n_cross_pairs, replace=False)]
    for a, b in pairs:
        cov[np.ix_(blocks[a], blocks[b])] = cross
        cov[np.ix_(blocks[b], blocks[a])] = cross

    repaired_cov, repaired = nearest_positive_definite(cov)
    if repaired:
        logger.warning('block network covariance (p=%d, seed=%d) was indefinite; eigenvalues '
                       'floored at %g', p, seed, _EIGEN_FLOOR)
    return BlockNetwork(cov=repaired_cov, raw_cov=cov, blocks=blocks, cross_pairs=pairs,
                        repaired=repaired)


def make_equicorrelation_cov(p: int, rho: float) -> np.ndarray:
    """ :return: Unit variances with every pair correlated at `rho`."""
    if not -1.0 / max(p - 1, 1) < rho < 1.0:
        raise ValidationError(
            '''
            An equicorrelation matrix of size {} is positive definite only for
            -1/(p-1) < rho < 1. Given: {}
            '''.format(p, rho))
    return (1.0 - rho) * np.eye(p) + rho * np.ones((p, p))


def load_covariance(path: str, p: int = None) -> np.ndarray:
    """
    Reads a headerless CSV matrix and checks that it is square, symmetric and positive
    definite.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(
            '''
            The given covariance file does NOT exist:
            \t{}
            '''.format(path))
    cov = pd.read_csv(path, header=None).to_numpy(dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValidationError(
            '''
            The covariance matrix must be square. Found shape {} in:
            \t{}
            '''.format(cov.shape, path))
    if p is not None and cov.shape[0] != p:
        raise ValidationError(
            '''
            The covariance matrix is {0} x {0} but the scenario has p = {1}.
            '''.format(cov.shape[0], p))
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-10):
        raise ValidationError(
            '''
            The covariance matrix in the file (printed below) is not symmetric:
            \t{}
            '''.format(path))
    try:
        scipy.linalg.cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        raise ValidationError(
            '''
            The covariance matrix in the file (printed below) is not positive definite:
            \t{}
            '''.format(path))
    return cov


def scenario_covariance(spec: ScenarioSpec) -> Optional[np.ndarray]:
    """ :return: The within-group covariance, or None for the identity."""
    if spec.structure == 'diagonal':
        return None
    if spec.structure == 'block_network':
        return make_block_network_cov(spec.p, spec.seed, spec.n_blocks,
                                      spec.n_cross_pairs).cov
    if spec.structure == 'equicorrelation':
        return make_equicorrelation_cov(spec.p, spec.rho)
    return load_covariance(spec.covariance_path, spec.p)


def mean_shift(spec: ScenarioSpec) -> np.ndarray:
    """ :return: The mean of group 2: an equispaced ladder over the first r features."""
    mu = np.zeros(spec.p)
    mu[:spec.r] = np.linspace(spec.shift_low, spec.shift_high, spec.r)
    return mu


def _draw(rng: np.random.Generator, n: int, mean: np.ndarray, factor: Optional[np.ndarray]):
    z = rng.standard_normal((n, mean.size))
    return (z if factor is None else z @ factor.T) + mean


def sample_scenario(spec: ScenarioSpec, replicate: int = 0, cov: np.ndarray = None):
    """
    Draws one replicate of a scenario.

    :param spec: The scenario.
    :param replicate: Replicate index; the sampling stream is seeded with `spec.seed ^ replicate`.
    :param cov: A precomputed `scenario_covariance(spec)`, to avoid rebuilding it per replicate.

    :return: `(train, test, truth_support)`, truth_support being the 0-based shifted features.
    """
    cov = scenario_covariance(spec) if cov is None else cov
    factor = None if cov is None else scipy.linalg.cholesky(cov, lower=True)
    mu2 = mean_shift(spec)
    mu1 = np.zeros(spec.p)
    rng = np.random.default_rng(spec.seed ^ replicate)

    def one_split(n):
        X = np.vstack([_draw(rng, n, mu1, factor), _draw(rng, n, mu2, factor)])
        labels = np.repeat(['group_1', 'group_2'], n)
        return Dataset.from_arrays(X, labels, ['f{}'.format(j) for j in range(spec.p)])

    train = one_split(spec.n_train)
    test = one_split(spec.n_test)
    return train, test, np.arange(spec.r)


_scenario_keys = set(ScenarioSpec.__dataclass_fields__)


def read_scenario_spec(path: str) -> ScenarioSpec:
    """
    Reads a scenario from a YAML file of `key: value` lines. The file must exist, be a '.yml'
    file, and use only the fields of `ScenarioSpec`; omitted fields keep their defaults.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(
            '''
            The given scenario file does NOT exist:
            \t{}
            '''.format(path))
    if not path.endswith('.yml'):
        raise FileNotFoundError(
            '''
            The given scenario file is NOT a YAML file:
            \t{}
            '''.format(path))
    with open(path) as file:
        content = yaml.load(file, Loader=yaml.FullLoader) or {}
    unknown = set(content) - _scenario_keys
    if unknown:
        raise AssertionError(
            '''
            The scenario file (printed below) has unknown keys: {}
            \t{}
            '''.format(sorted(unknown), path))
    return ScenarioSpec(**content)
