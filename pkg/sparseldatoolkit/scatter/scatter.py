import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from sparseldatoolkit.data.dataset import Dataset

logger = logging.getLogger(__name__)

'''
    Sum-of-squares matrices of a labelled data matrix. With X_ci the rows of group i centered on
    the group mean, the within-group matrix is W = sum_i X_ci' X_ci, the total matrix T is the
    cross-product of all rows centered on the grand mean, and the between-group matrix is kept
    in factored form B = H'H with row i of H equal to sqrt(n_i) * (mean_i - grand_mean), so that
    B = T - W holds exactly. Neither W nor B is formed unless a dense copy is asked for.
'''

# relative cut-off below which an eigenvalue of HH' is treated as zero
_EIGEN_RTOL = 1e-12


@dataclass(frozen=True)
class ScatterSet:
    """
    Factored scatter matrices of one dataset.

    :param H: The (g x p) between-group factor, B = H'H.
    :param group_centered: All rows centered on their group mean, stacked group after group
                           (n x p, column-major for fast column access). W = G'G.
    :param row_group: The group index of each row of `group_centered`.
    :param w_diag: The diagonal of W.
    :param s: Penalty weights, the pooled within-group SDs sqrt(W_jj / (n - g)).
    :param group_counts: Samples per group.
    """
    H: np.ndarray
    group_centered: np.ndarray
    row_group: np.ndarray
    w_diag: np.ndarray
    s: np.ndarray
    group_counts: np.ndarray

    @classmethod
    def from_between_factor(cls, H: np.ndarray, w_diag: np.ndarray = None,
                            s: np.ndarray = None) -> 'ScatterSet':
        """
        Builds a scatter set with a prescribed B = H'H and a diagonal within-group matrix. No
        sample rows are attached, so the within-group part is exactly `diag(w_diag)`. This is
        the form used by the analytic checks, where W is the identity after a change of
        variables and every penalty weight is one.
        """
        H = np.atleast_2d(np.asarray(H, dtype=float))
        p = H.shape[1]
        w_diag = np.ones(p) if w_diag is None else np.asarray(w_diag, dtype=float)
        s = np.ones(p) if s is None else np.asarray(s, dtype=float)
        return cls(H=H, group_centered=np.zeros((0, p), order='F'),
                   row_group=np.zeros(0, dtype=int), w_diag=w_diag, s=s,
                   group_counts=np.zeros(H.shape[0], dtype=int))

    @property
    def p(self) -> int:
        return self.H.shape[1]

    @property
    def g(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return int(self.group_counts.sum())

    @property
    def zero_variance(self) -> np.ndarray:
        """ :return: A boolean mask of the features with no within-group variation."""
        return self.w_diag <= 0

    def group_block(self, i: int) -> np.ndarray:
        """ :return: The group-centered rows of group `i`."""
        return self.group_centered[self.row_group == i]

    def between_dot(self, v: np.ndarray) -> np.ndarray:
        """ :return: B v computed as H'(H v)."""
        return self.H.T @ (self.H @ v)

    def between_quad(self, v: np.ndarray) -> float:
        """ :return: v'Bv = ||Hv||^2."""
        hv = self.H @ v
        return float(hv @ hv)

    def within_dense(self) -> np.ndarray:
        if self.group_centered.shape[0] == 0:
            return np.diag(self.w_diag)
        return self.group_centered.T @ self.group_centered

    def between_dense(self) -> np.ndarray:
        return self.H.T @ self.H

    def total_dense(self) -> np.ndarray:
        return self.within_dense() + self.between_dense()


def compute_scatter(data: Dataset) -> ScatterSet:
    """
    Computes the factored within- and between-group scatter of a dataset.

    Features whose within-group variance is zero in every group are kept (so indices stay
    stable) and reported in the log; the solver forces their coefficients to zero.

    :param data: A validated dataset.

    :return: The corresponding `ScatterSet`.
    """
    X = data.X
    grand_mean = X.mean(axis=0)
    counts = data.group_counts
    blocks, row_group, H = [], [], np.empty((data.g, data.p))
    for i in range(data.g):
        Xi = data.group_rows(i)
        mean_i = Xi.mean(axis=0)
        blocks.append(Xi - mean_i)
        row_group.append(np.full(Xi.shape[0], i))
        H[i] = np.sqrt(counts[i]) * (mean_i - grand_mean)
    G = np.asfortranarray(np.vstack(blocks))
    w_diag = np.einsum('ij,ij->j', G, G)
    s = np.sqrt(w_diag / (data.n - data.g))

    n_constant = int(np.sum(w_diag <= 0))
    if n_constant:
        logger.warning('%d feature(s) have zero within-group variance; they cannot enter a '
                       'discriminant vector', n_constant)
    return ScatterSet(H=H, group_centered=G, row_group=np.concatenate(row_group),
                      w_diag=w_diag, s=s, group_counts=counts)


def total_scatter(data: Dataset) -> np.ndarray:
    """ :return: The dense total sum-of-squares matrix T, computed from its definition."""
    Xc = data.X - data.X.mean(axis=0)
    return Xc.T @ Xc


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    """ Flips each column so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def between_eigen(scatter: ScatterSet):
    """
    The positive eigenpairs of B, obtained from the small matrix HH' instead of the p x p
    matrix B: if HH'a = mu a then B (H'a) = mu (H'a), and ||H'a||^2 = mu.

    :param scatter: The factored scatter matrices.

    :return: A tuple `(gamma, L)` with `gamma` the eigenvalues in descending order and `L` a
             (p x k) matrix of unit eigenvectors, one per column. Both are empty when B = 0.
    """
    M = scatter.H @ scatter.H.T
    mu, A = scipy.linalg.eigh(M)
    order = np.argsort(mu)[::-1]
    mu, A = mu[order], A[:, order]
    reference = max(float(mu[0]) if mu.size else 0.0, float(scatter.w_diag.sum()))
    keep = mu > _EIGEN_RTOL * reference
    if not keep.any():
        return np.zeros(0), np.zeros((scatter.p, 0))
    mu, A = mu[keep], A[:, keep]
    L = (scatter.H.T @ A) / np.sqrt(mu)
    return mu, _fix_sign(L)
