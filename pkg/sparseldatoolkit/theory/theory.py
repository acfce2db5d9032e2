import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from sparseldatoolkit.data.dataset import Dataset
from sparseldatoolkit.scatter.scatter import ScatterSet, compute_scatter, between_eigen
from sparseldatoolkit.shrinkage.shrinkage import ShrunkenWithin
from sparseldatoolkit.solver.solver import SolverConfig, solve_discriminant, initial_vector, \
    lambda_max
from sparseldatoolkit.theory import oracles
from sparseldatoolkit.utils.errors import ValidationError

logger = logging.getLogger(__name__)

'''
    Analytic facts about the penalized two-group problem and the diagnostics that check them.

    With two groups B = gamma * l l' has rank one. After the change of variables z = W^(1/2) v
    with a diagonal W, the problem becomes

        maximize  gamma (l'z)^2 - lambda ||z||_1   subject to  ||z||_2 <= 1,

    whose solution keeps the coordinates with the largest |l_i| (a prefix once l is sorted by
    magnitude). Writing l^j for the first j sorted entries, the best value F_j over solutions
    supported on that prefix is bracketed by closed-form bounds, and two thresholds follow:
    m_lambda, below which no support can pay its penalty, and m', a size below which no
    support is ever optimal whatever lambda is. Together they put a floor under the number of
    features a penalized solution can select.
'''


def cochran_threshold(delta: np.ndarray) -> float:
    """
    The equicorrelation above which correlated features classify better than independent
    ones with the same standardized mean differences `delta`:
    ((sum delta)^2 - sum delta^2) / ((p - 1) sum delta^2).
    """
    delta = np.asarray(delta, dtype=float)
    if delta.size < 2:
        raise ValidationError(
            '''
            At least two features are needed for a correlation threshold. Given: {}
            '''.format(delta.size))
    sq = float(delta @ delta)
    if sq == 0:
        raise ValidationError(
            '''
            The mean differences are all zero; the threshold is undefined.
            ''')
    return (float(delta.sum()) ** 2 - sq) / ((delta.size - 1) * sq)


def correlation_benefit(delta: np.ndarray, rho: float) -> bool:
    """ :return: True when an equicorrelation `rho` lowers the Bayes error below that of
    independent features: rho is negative or exceeds the threshold."""
    return bool(rho < 0 or rho > cochran_threshold(delta))


def ttest_statistics(data: Dataset) -> np.ndarray:
    """ :return: The pooled two-sample t-statistic of every feature (0 where the pooled SD is
    zero)."""
    if data.g != 2:
        raise ValidationError(
            '''
            The t-statistic needs exactly two groups. Found: {}
            '''.format(data.g))
    scatter = compute_scatter(data)
    n0, n1 = data.group_counts
    diff = data.group_rows(0).mean(axis=0) - data.group_rows(1).mean(axis=0)
    denominator = scatter.s * np.sqrt(1.0 / n0 + 1.0 / n1)
    t = np.zeros(data.p)
    usable = denominator > 0
    t[usable] = diff[usable] / denominator[usable]
    return t


def ttest_support(data: Dataset, k: int) -> np.ndarray:
    """
    :return: The sorted indices of the k features with the largest absolute t-statistics. Ties
             are broken by feature index.
    """
    if not 0 <= k <= data.p:
        raise ValidationError(
            '''
            k must lie in 0..p = {}. Given: {}
            '''.format(data.p, k))
    order = np.argsort(-np.abs(ttest_statistics(data)), kind='stable')
    return np.sort(order[:k])


def sort_by_magnitude(l: np.ndarray):
    """ :return: `(l_sorted, order)` with `l_sorted = l[order]` in descending |l_i|."""
    l = np.asarray(l, dtype=float)
    order = np.argsort(-np.abs(l), kind='stable')
    return l[order], order


def _assert_sorted(l: np.ndarray):
    magnitude = np.abs(l)
    if np.any(np.diff(magnitude) > 0):
        raise ValidationError(
            '''
            The eigenvector must be sorted by descending magnitude. Call `sort_by_magnitude`
            first.
            ''')


def fj_bounds(gamma: float, l: np.ndarray, lam: float, j: int):
    """
    Bounds on F_j, the best objective over solutions supported on the j largest entries:

        lower = gamma ||l^j||_2^2 - lam ||l^j||_1 / ||l^j||_2
        upper = max(0, gamma ||l^j||_2^2 - lam ||l^j||_2 / |l_1|)

    The lower bound is the objective at z = l^j / ||l^j||_2.

    :return: A tuple `(lower, upper)`.
    """
    l = np.asarray(l, dtype=float)
    _assert_sorted(l)
    if not 1 <= j <= l.size:
        raise ValidationError(
            '''
            j must lie in 1..p = {}. Given: {}
            '''.format(l.size, j))
    head = np.abs(l[:j])
    norm2 = float(np.linalg.norm(head))
    norm1 = float(head.sum())
    lower = gamma * norm2 ** 2 - lam * norm1 / norm2
    upper = max(0.0, gamma * norm2 ** 2 - lam * norm2 / abs(l[0]))
    return lower, upper


def m_lambda(gamma: float, l: np.ndarray, lam: float) -> Optional[int]:
    """
    :return: The smallest j (1-based) with ||l^j||_2 > lam / (gamma |l_1|), or None when no j
             qualifies, in which case the penalized solution is zero.
    """
    l = np.asarray(l, dtype=float)
    _assert_sorted(l)
    norms = np.sqrt(np.cumsum(l ** 2))
    qualifying = np.flatnonzero(norms > lam / (gamma * abs(l[0])))
    return int(qualifying[0]) + 1 if qualifying.size else None


def m_prime(l: np.ndarray) -> int:
    """
    :return: The largest j in 1..p-1 for which some r > j satisfies
             ||l^j||_2 <= ||l^r||_2^3 / (|l_1| ||l^r||_1), or 0 when there is none. A support of
             size j <= m' is beaten by a larger prefix at every lambda.
    """
    l = np.asarray(l, dtype=float)
    _assert_sorted(l)
    p = l.size
    if p < 2:
        return 0
    norm2 = np.sqrt(np.cumsum(l ** 2))
    norm1 = np.cumsum(np.abs(l))
    rhs = norm2 ** 3 / (abs(l[0]) * norm1)
    # best_rhs_after[j - 1] = max over r > j of rhs[r - 1]
    best_rhs_after = np.maximum.accumulate(rhs[::-1])[::-1][1:]
    holds = norm2[:p - 1] <= best_rhs_after
    hits = np.flatnonzero(holds)
    return int(hits[-1]) + 1 if hits.size else 0


@dataclass(frozen=True)
class TheoryReport:
    gamma: float
    l: np.ndarray
    order: np.ndarray
    lam: float
    f_lower: np.ndarray
    f_upper: np.ndarray
    m_lambda: Optional[int]
    m_prime: int
    min_support: Optional[int]

    def to_dict(self) -> dict:
        return {'gamma': self.gamma, 'l': self.l.tolist(), 'order': self.order.tolist(),
                'lambda': self.lam, 'f_lower': self.f_lower.tolist(),
                'f_upper': self.f_upper.tolist(), 'm_lambda': self.m_lambda,
                'm_prime': self.m_prime, 'min_support': self.min_support}


def build_theory_report(gamma: float, l: np.ndarray, lam: float) -> TheoryReport:
    """ Sorts `l` by magnitude and evaluates every bound at `lam`."""
    l_sorted, order = sort_by_magnitude(l)
    l_sorted = l_sorted / np.linalg.norm(l_sorted)
    bounds = np.array([fj_bounds(gamma, l_sorted, lam, j) for j in range(1, l.size + 1)])
    m_lam = m_lambda(gamma, l_sorted, lam)
    m_p = m_prime(l_sorted)
    floor = None if m_lam is None else max(m_p + 1, m_lam)
    return TheoryReport(gamma=float(gamma), l=l_sorted, order=order, lam=float(lam),
                        f_lower=bounds[:, 0], f_upper=bounds[:, 1], m_lambda=m_lam,
                        m_prime=m_p, min_support=floor)


def reduced_problem(gamma: float, l: np.ndarray):
    """
    :return: `(scatter, within)` for B = gamma l l', W~ = I and unit penalty weights, the
             transformed two-group problem in which the bounds are stated.
    """
    l = np.asarray(l, dtype=float)
    H = np.sqrt(gamma) * l[None, :]
    scatter = ScatterSet.from_between_factor(H)
    return scatter, ShrunkenWithin.diagonal(np.ones(l.size))


def diagonal_reduction(data: Dataset):
    """
    Transforms a two-group dataset to the identity-within form with z_j = sqrt(W_jj) v_j. The
    penalty sum_j s_j |v_j| becomes ||z||_1 / sqrt(n - g), and B becomes D^(-1/2) B D^(-1/2)
    with D = diag(W). Features with zero within-group variance are dropped.

    :return: `(gamma, l, lambda_factor, kept)`: the eigenpair of the transformed B, the factor
             that converts a penalty on v into the penalty on z, and the kept feature indices.
    """
    if data.g != 2:
        raise ValidationError(
            '''
            The rank-one reduction needs exactly two groups. Found: {}
            '''.format(data.g))
    scatter = compute_scatter(data)
    kept = np.flatnonzero(~scatter.zero_variance)
    H = scatter.H[:, kept] / np.sqrt(scatter.w_diag[kept])
    gamma, L = between_eigen(ScatterSet.from_between_factor(H))
    if gamma.size == 0:
        raise ValidationError(
            '''
            The two groups have identical means; there is no eigenvector to analyse.
            ''')
    return float(gamma[0]), L[:, 0], 1.0 / np.sqrt(data.n - data.g), kept


def theory_report_for_dataset(data: Dataset, lam: float) -> TheoryReport:
    """ Evaluates the bounds for a two-group dataset at penalty `lam` (on the scale of v)."""
    gamma, l, factor, kept = diagonal_reduction(data)
    report = build_theory_report(gamma, l, lam * factor)
    logger.info('theory report: gamma=%.4g, m_lambda=%s, m_prime=%d, %d features analysed',
                gamma, report.m_lambda, report.m_prime, kept.size)
    return report


@dataclass
class PathRow:
    lam: float
    support_size: int
    objective: float
    l1_norm: float
    converged: bool


@dataclass
class PathTable:
    rows: list = field(default_factory=list)
    drop_lambda: Optional[float] = None
    min_nonzero_support: Optional[int] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{'lambda': r.lam, 'support_size': r.support_size,
                              'objective': r.objective, 'l1_norm': r.l1_norm,
                              'converged': r.converged} for r in self.rows])

    def to_csv(self, path: str):
        """ Writes the two-column (lambda, support_size) table."""
        self.to_frame()[['lambda', 'support_size']].to_csv(path, index=False,
                                                            float_format='%.10g')

    def to_dict(self) -> dict:
        return {'rows': self.to_frame().to_dict(orient='records'),
                'drop_lambda': self.drop_lambda,
                'min_nonzero_support': self.min_nonzero_support}


def solution_path(scatter: ScatterSet, within: ShrunkenWithin, grid, config: SolverConfig,
                  warm_start: bool = False, bisect: bool = True) -> PathTable:
    """
    Solves the penalized problem at every grid point and summarizes where the support
    collapses.

    Every point starts from the Fisher direction unless `warm_start` is set, in which case
    it starts from the previous point's solution. The drop location is bracketed by the
    largest lambda with a non-empty support and the smallest larger lambda with an empty one,
    then bisected to 1e-3 * lambda_max.

    :param grid: Strictly increasing penalties.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValidationError(
            '''
            The lambda grid must be non-empty and strictly increasing.
            ''')
    if config.diagonal_mode:
        within = within.diagonal_part()
        config = replace(config, diagonal_mode=False)
    v0 = initial_vector(scatter, within)
    table = PathTable()
    previous = None
    for lam in grid:
        v, diagnostics = solve_discriminant(scatter, within, config.with_lambda(lam),
                                            v_init=previous if warm_start else v0)
        previous = v
        table.rows.append(PathRow(lam=float(lam), support_size=int(np.count_nonzero(v)),
                                  objective=diagnostics.penalized_objective,
                                  l1_norm=float(np.abs(v).sum()),
                                  converged=diagnostics.converged))
        if not diagnostics.converged:
            logger.warning('path point lambda=%.6g did not converge; excluded from drop '
                           'detection', lam)

    usable = [r for r in table.rows if r.converged]
    nonzero = [r.support_size for r in usable if r.support_size > 0]
    table.min_nonzero_support = min(nonzero) if nonzero else None

    alive = [r.lam for r in usable if r.support_size > 0]
    if alive:
        lo = max(alive)
        dead = [r.lam for r in usable if r.support_size == 0 and r.lam > lo]
        if dead:
            hi = min(dead)
            resolution = 1e-3 * lambda_max(scatter, v0)
            while bisect and hi - lo > resolution > 0:
                mid = (lo + hi) / 2
                v, diagnostics = solve_discriminant(scatter, within, config.with_lambda(mid),
                                                    v_init=v0)
                if np.any(v):
                    lo = mid
                else:
                    hi = mid
            table.drop_lambda = float(hi)
    return table


@dataclass(frozen=True)
class DualityCheck:
    holds: Optional[bool]
    inconclusive: bool
    t: float
    solution_value: float
    oracle_value: Optional[float]


def duality_forward_check(v_lambda: np.ndarray, scatter: ScatterSet, within: ShrunkenWithin,
                          tolerance: float = 1e-4, max_p: int = 8, seed: int = 0) -> DualityCheck:
    """
    Checks that a penalized solution also solves the constrained problem whose budget is its
    own weighted L1 norm, t = sum_j s_j |v_j| with the penalty weights s of `scatter`: no v
    with v'W~v <= 1 and sum_j s_j |v_j| <= t may beat v_lambda' B v_lambda by more than
    `tolerance`. Above `max_p` features the search is not attempted and the result is
    inconclusive, never negative.
    """
    v_lambda = np.asarray(v_lambda, dtype=float)
    t = float(scatter.s @ np.abs(v_lambda))
    value = scatter.between_quad(v_lambda)
    if scatter.p > max_p:
        logger.info('duality check skipped: p=%d exceeds the oracle budget of %d',
                    scatter.p, max_p)
        return DualityCheck(holds=None, inconclusive=True, t=t, solution_value=value,
                            oracle_value=None)
    best = oracles.constrained_maximum(scatter.between_dense(), within.dense(), t,
                                       weights=scatter.s, seed=seed)
    return DualityCheck(holds=bool(best <= value + tolerance), inconclusive=False, t=t,
                        solution_value=value, oracle_value=best)
