import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.scatter.scatter import ScatterSet, compute_scatter
from sparseldatoolkit.utils.errors import ValidationError

logger = logging.getLogger(__name__)

'''
    The shrunken within-group matrix. Each group covariance S_i is pulled toward its own
    diagonal, S~_i = tau_i diag(S_i) + (1 - tau_i) S_i, and W~ = sum_i n_i S~_i. Since
    n_i S_i = X_ci' X_ci, W~ is stored as

        W~ = diag(d) + sum_i (1 - tau_i) X_ci' X_ci,     d = sum_i tau_i diag(X_ci' X_ci)

    i.e. a diagonal plus a weighted Gram factor of the group-centered rows. Shrinkage never
    touches the diagonal, so diag(W~) = diag(W).
'''

DEFAULT_P_DENSE = 2000


@dataclass(frozen=True)
class ShrunkenWithin:
    """
    :param tau: Shrinkage intensity of every group.
    :param diag: The diagonal part d.
    :param factor: The group-centered rows of the groups with tau_i < 1, column-major.
    :param row_weight: The weight 1 - tau_i of every row of `factor`.
    :param full_diag: diag(W~), equal to diag(W).
    :param p_dense: Largest p for which a dense copy may be materialized.
    """
    tau: np.ndarray
    diag: np.ndarray
    factor: np.ndarray
    row_weight: np.ndarray
    full_diag: np.ndarray
    p_dense: int = DEFAULT_P_DENSE

    @classmethod
    def diagonal(cls, w_diag: np.ndarray, p_dense: int = DEFAULT_P_DENSE) -> 'ShrunkenWithin':
        """ :return: The fully shrunken matrix diag(W), which turns the solver into its diagonal
        baseline."""
        w_diag = np.asarray(w_diag, dtype=float)
        p = w_diag.size
        return cls(tau=np.ones(1), diag=w_diag.copy(), factor=np.zeros((0, p), order='F'),
                   row_weight=np.zeros(0), full_diag=w_diag.copy(), p_dense=p_dense)

    def diagonal_part(self) -> 'ShrunkenWithin':
        return ShrunkenWithin.diagonal(self.full_diag, self.p_dense)

    @property
    def p(self) -> int:
        return self.full_diag.size

    @property
    def is_diagonal(self) -> bool:
        return self.factor.shape[0] == 0

    def matvec(self, q: np.ndarray) -> np.ndarray:
        """ :return: W~ q in O(n p)."""
        out = self.diag * q
        if not self.is_diagonal:
            out += self.factor.T @ (self.row_weight * (self.factor @ q))
        return out

    def quad(self, q: np.ndarray) -> float:
        """ :return: q' W~ q."""
        value = float(q @ (self.diag * q))
        if not self.is_diagonal:
            r = self.factor @ q
            value += float(r @ (self.row_weight * r))
        return value

    def column(self, j: int) -> np.ndarray:
        """ :return: W~ e_j."""
        col = np.zeros(self.p)
        col[j] = self.diag[j]
        if not self.is_diagonal:
            col += self.factor.T @ (self.row_weight * self.factor[:, j])
        return col

    def dense(self) -> np.ndarray:
        if self.p > self.p_dense:
            raise ValidationError(
                '''
                A dense {0} x {0} within-group matrix was requested, but only factored operations
                are allowed above p_dense = {1}.
                '''.format(self.p, self.p_dense))
        out = np.diag(self.diag)
        if not self.is_diagonal:
            out += self.factor.T @ (self.row_weight[:, None] * self.factor)
        return out

    def solve(self, Y: np.ndarray) -> np.ndarray:
        """
        Solves W~ X = Y for a (p x k) right-hand side. Features with zero within-group
        variance are left out of the system and get a zero row in the solution. When the
        diagonal part is positive the Woodbury identity reduces the work to an (m x m)
        Cholesky solve, m being the number of factor rows; otherwise a dense least-squares
        solve is used, which requires p <= p_dense.
        """
        Y = np.asarray(Y, dtype=float)
        squeeze = Y.ndim == 1
        Y = Y.reshape(self.p, -1)
        active = self.full_diag > 0
        X = np.zeros_like(Y)
        d = self.diag[active]
        if np.all(d > 0):
            F = self.factor[:, active] * np.sqrt(self.row_weight)[:, None]
            Yd = Y[active] / d[:, None]
            if F.shape[0] == 0:
                X[active] = Yd
            else:
                inner = np.eye(F.shape[0]) + (F / d) @ F.T
                correction = scipy.linalg.cho_solve(scipy.linalg.cho_factor(inner), F @ Yd)
                X[active] = Yd - (F.T @ correction) / d[:, None]
        else:
            W = self.dense()[np.ix_(active, active)]
            X[active] = scipy.linalg.lstsq(W, Y[active])[0]
        return X[:, 0] if squeeze else X


def estimate_tau(group_data: np.ndarray) -> float:
    """
    The analytic shrinkage intensity toward the diagonal, unequal-variance target: the summed
    estimated variance of the off-diagonal sample covariances divided by their summed squares,

        tau* = sum_{j != k} Var^(s_jk) / sum_{j != k} s_jk^2,

    with s_jk = n/(n-1) * wbar_jk, wbar_jk the mean of the cross-products w_ajk = x_aj x_ak, and
    Var^(s_jk) = n/(n-1)^3 * sum_a (w_ajk - wbar_jk)^2. The sums over feature pairs are
    collapsed through the Gram matrix of the rows, so the cost is O(n^2 p) rather than O(n p^2).

    :param group_data: The (n_i x p) rows of one group, centered on the group mean.

    :return: The intensity, clipped to [0, 1]. It is 1 when every off-diagonal covariance
             vanishes, and when n_i = 2, where the two cross-products of every pair coincide
             and the variance estimate is degenerate.
    """
    x = np.asarray(group_data, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValidationError(
            '''
            The shrinkage intensity needs at least 2 rows. Given: {}
            '''.format(n))
    if n == 2:
        return 1.0
    sq = x * x
    row_sq = sq.sum(axis=1)
    sum_w2_off = float(row_sq @ row_sq - np.sum(sq * sq))
    gram = x @ x.T if n <= x.shape[1] else x.T @ x
    wbar_all = float(np.sum(gram * gram)) / n ** 2
    col_mean_sq = sq.sum(axis=0) / n
    wbar_off = wbar_all - float(col_mean_sq @ col_mean_sq)
    if wbar_off <= 1e-12 * max(wbar_all, np.finfo(float).tiny):
        return 1.0
    var_sum = n / (n - 1) ** 3 * max(sum_w2_off - n * wbar_off, 0.0)
    s2_sum = (n / (n - 1)) ** 2 * wbar_off
    return float(min(max(var_sum / s2_sum, 0.0), 1.0))


def shrunken_within(data: Union[Dataset, ScatterSet], tau_override: float = None,
                    p_dense: int = DEFAULT_P_DENSE) -> ShrunkenWithin:
    """
    Builds W~ with one automatically estimated intensity per group.

    :param data: A dataset, or its already computed scatter.
    :param tau_override: If given, this intensity is used for every group instead of the
                         estimate; 1 gives diag(W), 0 gives W.
    :param p_dense: Largest p for which a dense copy may be materialized.

    :return: The factored `ShrunkenWithin`.
    """
    scatter = data if isinstance(data, ScatterSet) else compute_scatter(data)
    if tau_override is not None and not 0.0 <= tau_override <= 1.0:
        raise ValidationError(
            '''
            tau_override must lie in [0, 1]. Given: {}
            '''.format(tau_override))
    g = scatter.g
    taus = np.empty(g)
    d = np.zeros(scatter.p)
    rows, weights = [], []
    for i in range(g):
        Gi = scatter.group_block(i)
        taus[i] = estimate_tau(Gi) if tau_override is None else float(tau_override)
        d += taus[i] * np.einsum('ij,ij->j', Gi, Gi)
        if taus[i] < 1.0:
            rows.append(Gi)
            weights.append(np.full(Gi.shape[0], 1.0 - taus[i]))
    logger.info('shrinkage intensities: %s', np.round(taus, 4).tolist())
    factor = np.asfortranarray(np.vstack(rows)) if rows else np.zeros((0, scatter.p), order='F')
    row_weight = np.concatenate(weights) if weights else np.zeros(0)
    return ShrunkenWithin(tau=taus, diag=d, factor=factor, row_weight=row_weight,
                          full_diag=scatter.w_diag.copy(), p_dense=p_dense)
