import logging
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg

from sparseldatoolkit.scatter.scatter import ScatterSet
from sparseldatoolkit.shrinkage.shrinkage import ShrunkenWithin
from sparseldatoolkit.utils.errors import NoSignalError, ValidationError

logger = logging.getLogger(__name__)

'''
    The L1-penalized Fisher problem

        maximize  v'Bv - lambda * sum_j s_j |v_j|   subject to  v'W~v <= 1

    solved by alternate convex search. With u = B^(1/2) v held fixed, the problem in q

        f(q) = 2 (Bv)'q - lambda * sum_j s_j |q_j| - q'W~q

    is concave and is maximized by randomized cyclic coordinate ascent with the closed-form
    update q_j = S((Bv)_j - sum_{i != j} w_ji q_i, lambda s_j / 2) / w_jj. The new v is q
    rescaled to v'W~v = 1. B^(1/2) is never formed: B^(1/2) u = Bv = H'(Hv).

    The products W~q needed by the update are served from the cache r = F q, F being the
    factor rows of W~, so one coordinate update costs O(n).
'''

# the cached product is recomputed from scratch every this many sweeps
_REFRESH_SWEEPS = 10
_DRIFT_RTOL = 1e-8


@dataclass
class SolverConfig:
    """
    :param lam: The penalty lambda (>= 0).
    :param eps: Threshold on D, the L1 size of one sweep's change, and on the L1 change of v
                between outer iterations.
    :param max_outer: Cap on alternate-convex-search iterations.
    :param max_inner: Cap on coordinate sweeps per inner solve.
    :param seed: Seed of the generator drawing the sweep permutations.
    :param diagonal_mode: Replace W~ by diag(W) (the diagonal baseline).
    :param kkt_tol: Relative tolerance of the stationarity certificate.
    :param compare_zero: Return v = 0 when the iterate's penalized objective is negative.
    """
    lam: float = 0.0
    eps: float = 1e-6
    max_outer: int = 30
    max_inner: int = 100
    seed: int = 0
    diagonal_mode: bool = False
    kkt_tol: float = 1e-4
    compare_zero: bool = True

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValidationError(
                '''
                lambda must be a finite non-negative number. Given: {}
                '''.format(self.lam))
        if not self.eps > 0:
            raise ValidationError(
                '''
                eps must be positive. Given: {}
                '''.format(self.eps))
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValidationError(
                '''
                Iteration caps must be at least 1. Given: max_outer={}, max_inner={}
                '''.format(self.max_outer, self.max_inner))

    def with_lambda(self, lam: float) -> 'SolverConfig':
        values = asdict(self)
        values['lam'] = float(lam)
        return SolverConfig(**values)

    def to_dict(self) -> dict:
        values = asdict(self)
        values['lambda'] = values.pop('lam')
        return values


@dataclass
class SolverState:
    """
    Iterates of one solve.

    :param v: Current normalized iterate (v'W~v = 1, or v = 0).
    :param q: Current unnormalized iterate of the inner problem.
    :param wq_factor: The cache F q, from which W~q is read in O(n) per coordinate.
    :param objective_trace: f(q) after every sweep.
    :param d_trace: D after every sweep.
    :param step_sweeps: Number of sweeps of every inner solve, splitting the traces by outer
                        iteration.
    """
    v: np.ndarray
    q: np.ndarray
    wq_factor: np.ndarray
    objective_trace: list = field(default_factory=list)
    d_trace: list = field(default_factory=list)
    step_sweeps: list = field(default_factory=list)
    sweeps: int = 0

    @classmethod
    def start(cls, v: np.ndarray, within: ShrunkenWithin) -> 'SolverState':
        v = np.array(v, dtype=float)
        return cls(v=v, q=v.copy(), wq_factor=within.factor @ v)

    def wq(self, within: ShrunkenWithin) -> np.ndarray:
        """ :return: W~q assembled from the cache."""
        out = within.diag * self.q
        if not within.is_diagonal:
            out += within.factor.T @ (within.row_weight * self.wq_factor)
        return out


@dataclass
class SolverDiagnostics:
    converged: bool
    outer_iterations: int
    sweeps: int
    objective_trace: list
    d_trace: list
    step_sweeps: list
    kkt_residual: float
    kkt_scale: float
    penalized_objective: float
    zero_dominated: bool
    seed: int

    @property
    def non_converged(self) -> bool:
        return not self.converged

    def to_dict(self) -> dict:
        return asdict(self)


def soft_threshold(x, a: float):
    """
    The soft-thresholding operator S(x, a) = sign(x) * max(|x| - a, 0).

    :param x: A real number or array.
    :param a: A non-negative threshold.
    """
    if a < 0:
        raise ValueError(
            '''
            The threshold of the soft-thresholding operator must be non-negative. Given: {}
            '''.format(a))
    return np.sign(x) * np.maximum(np.abs(x) - a, 0.0)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    return -v if v[j] < 0 else v


def initial_vector(scatter: ScatterSet, within: ShrunkenWithin) -> np.ndarray:
    """
    The leading eigenvector of W~^(-1) B, i.e. the unpenalized Fisher direction. With B = H'H
    the problem reduces to the g x g matrix M = H W~^(-1) H': if Ma = mu a then W~^(-1) H'a is
    an eigenvector of W~^(-1) B for the same mu, and its W~-norm is sqrt(a'Ma) = sqrt(mu).

    :return: v0 with v0'W~v0 = 1 and its largest-magnitude entry positive.
    """
    Y = within.solve(scatter.H.T)
    M = scatter.H @ Y
    M = (M + M.T) / 2
    mu, A = scipy.linalg.eigh(M)
    top = int(np.argmax(mu))
    if mu[top] <= 1e-12 * max(1.0, float(np.abs(M).max())):
        raise NoSignalError(
            '''
            No between-group signal: the between-group scatter is zero (largest eigenvalue of
            H W^(-1) H' is {}). The groups have identical means on every usable feature.
            '''.format(mu[top]))
    v = Y @ A[:, top]
    v = v / np.sqrt(within.quad(v))
    return _fix_sign(v)


def lambda_max(scatter: ScatterSet, v0: np.ndarray, s: np.ndarray = None) -> float:
    """
    The smallest penalty at which the first coordinate sweep from v0 zeroes every component of
    a decoupled inner problem: 2 * max_j |(B v0)_j / s_j|, taken over features with s_j > 0.
    """
    s = scatter.s if s is None else np.asarray(s, dtype=float)
    bv = scatter.between_dot(v0)
    usable = s > 0
    if not usable.any():
        return 0.0
    return float(2.0 * np.max(np.abs(bv[usable] / s[usable])))


def step_objective(q: np.ndarray, bv: np.ndarray, within: ShrunkenWithin, lam: float,
                   s: np.ndarray) -> float:
    """ :return: f(q) = 2 (Bv)'q - lambda * sum_j s_j |q_j| - q'W~q."""
    return float(2.0 * bv @ q - lam * np.sum(s * np.abs(q)) - within.quad(q))


def penalized_objective(v: np.ndarray, scatter: ScatterSet, lam: float,
                        s: np.ndarray = None) -> float:
    """ :return: v'Bv - lambda * sum_j s_j |v_j|."""
    s = scatter.s if s is None else s
    return scatter.between_quad(v) - lam * float(np.sum(s * np.abs(v)))


def update_coordinate(state: SolverState, j: int, bv: np.ndarray, within: ShrunkenWithin,
                      lam: float, s: np.ndarray) -> float:
    """
    Maximizes f exactly in coordinate j and refreshes the cache.

    :return: The change of q_j.
    """
    w_jj = within.full_diag[j]
    q_old = state.q[j]
    if w_jj <= 0:
        q_new = 0.0
    else:
        wq_j = within.diag[j] * q_old
        if not within.is_diagonal:
            wq_j += within.factor[:, j] @ (within.row_weight * state.wq_factor)
        numerator = bv[j] - (wq_j - w_jj * q_old)
        q_new = float(soft_threshold(numerator, lam * s[j] / 2.0)) / w_jj
    delta = q_new - q_old
    if delta != 0.0:
        state.q[j] = q_new
        if not within.is_diagonal:
            state.wq_factor += delta * within.factor[:, j]
    return delta


def coordinate_pass(state: SolverState, scatter: ScatterSet, within: ShrunkenWithin,
                    config: SolverConfig, rng: np.random.Generator,
                    bv: np.ndarray = None) -> float:
    """
    One sweep over all coordinates in a fresh uniformly random order.

    :param bv: B v for the current outer iterate; computed from `state.v` when omitted.

    :return: D, the sum of the absolute coordinate changes.
    """
    if bv is None:
        bv = scatter.between_dot(state.v)
    s = scatter.s
    d = 0.0
    for j in rng.permutation(scatter.p):
        d += abs(update_coordinate(state, int(j), bv, within, config.lam, s))
    state.sweeps += 1
    if state.sweeps % _REFRESH_SWEEPS == 0 and not within.is_diagonal:
        _refresh_cache(state, within)
    return d


def _refresh_cache(state: SolverState, within: ShrunkenWithin):
    fresh = within.factor @ state.q
    scale = max(float(np.abs(fresh).max()), np.finfo(float).tiny)
    drift = float(np.abs(fresh - state.wq_factor).max()) / scale
    if drift > _DRIFT_RTOL:
        logger.debug('cache drift %.3g after %d sweeps', drift, state.sweeps)
    state.wq_factor = fresh


def kkt_residual(q: np.ndarray, bv: np.ndarray, wq: np.ndarray, lam: float, s: np.ndarray,
                 active: np.ndarray = None):
    """
    The largest violation of the stationarity condition of the inner problem,
    2 Bv - 2 W~q - lambda * Gamma = 0, with Gamma_j = s_j sign(q_j) where q_j != 0 and any
    value in [-s_j, s_j] where q_j = 0.

    :param active: Mask of the features that may enter the solution. Features with zero
                   within-group variance are pinned to zero and carry no condition.

    :return: A tuple `(residual, scale)` where scale is max_j |2 (Bv)_j| over active features.
    """
    if active is not None:
        q, bv, wq, s = q[active], bv[active], wq[active], s[active]
    grad = 2.0 * (bv - wq)
    nonzero = q != 0
    violation = np.where(nonzero, np.abs(grad - lam * s * np.sign(q)),
                         np.maximum(np.abs(grad) - lam * s, 0.0))
    residual = float(violation.max()) if violation.size else 0.0
    scale = float(np.abs(2.0 * bv).max()) if bv.size else 0.0
    return residual, scale


def solve_discriminant(scatter: ScatterSet, within: ShrunkenWithin, config: SolverConfig,
                       v_init: np.ndarray = None):
    """
    Runs alternate convex search from `v_init` (the Fisher direction when omitted).

    Each outer iteration computes Bv once and runs coordinate sweeps on f(q) until D < eps
    and the stationarity residual is within `kkt_tol * max_j |2 (Bv)_j|`, or `max_inner`
    sweeps. A zero q ends the search with v = 0; otherwise v <- q / sqrt(q'W~q). The search
    stops when v moves by less than eps in L1 norm, or after `max_outer` iterations.

    :return: A tuple `(v, diagnostics)`. A run that hit a cap returns its last iterate with
             `diagnostics.converged` False.
    """
    if config.diagonal_mode:
        within = within.diagonal_part()
    # a zero warm start is a fixed point of the search, so it is replaced by the Fisher direction
    if v_init is None or not np.any(v_init):
        v = initial_vector(scatter, within)
    else:
        v = np.array(v_init, dtype=float)
    rng = np.random.default_rng(config.seed)
    s = scatter.s
    active = within.full_diag > 0
    state = SolverState.start(v, within)

    inner_ok = False
    converged = False
    residual, scale = 0.0, 0.0
    outer = 0
    for outer in range(1, config.max_outer + 1):
        bv = scatter.between_dot(state.v)
        inner_ok = False
        state.step_sweeps.append(0)
        for _ in range(config.max_inner):
            d = coordinate_pass(state, scatter, within, config, rng, bv=bv)
            state.step_sweeps[-1] += 1
            state.d_trace.append(d)
            state.objective_trace.append(step_objective(state.q, bv, within, config.lam, s))
            if d < config.eps:
                residual, scale = kkt_residual(state.q, bv, state.wq(within), config.lam, s,
                                               active)
                if residual <= config.kkt_tol * scale:
                    inner_ok = True
                    break
        if not inner_ok:
            residual, scale = kkt_residual(state.q, bv, state.wq(within), config.lam, s,
                                               active)

        norm_sq = within.quad(state.q)
        if not np.any(state.q) or norm_sq <= 0:
            state.v = np.zeros(scatter.p)
            converged = inner_ok
            break
        v_new = state.q / np.sqrt(norm_sq)
        change = float(np.abs(v_new - state.v).sum())
        state.v = v_new
        if change < config.eps and inner_ok:
            converged = True
            break

    v = state.v
    objective = penalized_objective(v, scatter, config.lam, s)
    zero_dominated = False
    if config.compare_zero and np.any(v) and objective < 0:
        v = np.zeros(scatter.p)
        objective = 0.0
        zero_dominated = True

    if not converged:
        logger.warning('solve at lambda=%.6g stopped after %d outer iterations without '
                       'converging (KKT residual %.3g, scale %.3g)',
                       config.lam, outer, residual, scale)
    logger.debug('lambda=%.6g: %d outer, %d sweeps, support %d', config.lam, outer,
                 state.sweeps, int(np.count_nonzero(v)))
    diagnostics = SolverDiagnostics(converged=converged, outer_iterations=outer,
                                    sweeps=state.sweeps,
                                    objective_trace=state.objective_trace,
                                    d_trace=state.d_trace, step_sweeps=state.step_sweeps,
                                    kkt_residual=residual,
                                    kkt_scale=scale, penalized_objective=objective,
                                    zero_dominated=zero_dominated, seed=config.seed)
    return v, diagnostics
