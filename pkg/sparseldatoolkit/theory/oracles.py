import numpy as np

from sparseldatoolkit.utils.errors import ValidationError

'''
    Brute-force maximizers used to check the analytic bounds and the solver on small
    instances. They only ever under-estimate a maximum, so a bound that holds against them can
    still fail against the true value; each search seeds itself with the analytic candidates so
    that the comparisons which matter are exact.
'''


def orthant_directions(dim: int, points: int) -> np.ndarray:
    """
    Unit vectors of the non-negative orthant on a hyperspherical angle grid: `dim - 1` angles,
    each taking `points` equispaced values in [0, pi/2].

    :return: An array of shape (points ** (dim - 1), dim).
    """
    if dim == 1:
        return np.ones((1, 1))
    angles = np.linspace(0.0, np.pi / 2, points)
    grids = np.meshgrid(*([angles] * (dim - 1)), indexing='ij')
    theta = np.stack([g.ravel() for g in grids], axis=1)
    out = np.empty((theta.shape[0], dim))
    running = np.ones(theta.shape[0])
    for a in range(dim - 1):
        out[:, a] = running * np.cos(theta[:, a])
        running = running * np.sin(theta[:, a])
    out[:, dim - 1] = running
    return out


def _rank_one_values(D: np.ndarray, a: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    return gamma * (D @ a) ** 2 - lam * np.abs(D).sum(axis=1)


def restricted_maximum(gamma: float, l: np.ndarray, lam: float, j: int,
                       n_starts: int = 10000, seed: int = 0) -> float:
    """
    Brute-force value of F_j = max { gamma (l'z)^2 - lam ||z||_1 : ||z||_2 <= 1, z supported on
    the first j coordinates }. Along a ray the objective is convex in the radius, so the maximum
    is either 0 (at z = 0) or attained on the unit sphere, where aligning the signs of z with l
    never hurts. The search therefore covers unit vectors of the orthant of |l|: an angle grid
    of 401 points per angle up to three coordinates, 101 per angle at four, and a projected
    gradient multistart beyond. The candidate l^j / ||l^j|| is always evaluated.
    """
    a = np.abs(np.asarray(l, dtype=float)[:j])
    candidate = (a / np.linalg.norm(a))[None, :]
    best = float(_rank_one_values(candidate, a, gamma, lam)[0])
    if j <= 4:
        points = 401 if j <= 3 else 101
        D = orthant_directions(j, points)
        best = max(best, float(_rank_one_values(D, a, gamma, lam).max()))
    else:
        best = max(best, _projected_gradient(a, gamma, lam, n_starts, seed))
    return max(0.0, best)


def _projected_gradient(a: np.ndarray, gamma: float, lam: float, n_starts: int, seed: int,
                        steps: int = 300) -> float:
    rng = np.random.default_rng(seed)
    D = np.abs(rng.standard_normal((n_starts, a.size)))
    D[0] = a
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    step = 0.5 / (2.0 * gamma * float(a @ a) + lam + 1e-12)
    best = float(_rank_one_values(D, a, gamma, lam).max())
    for _ in range(steps):
        grad = 2.0 * gamma * (D @ a)[:, None] * a[None, :] - lam
        D = np.maximum(D + step * grad, 0.0)
        norms = np.linalg.norm(D, axis=1, keepdims=True)
        dead = norms[:, 0] == 0
        D[dead] = a / np.linalg.norm(a)
        norms[dead] = 1.0
        D /= norms
        best = max(best, float(_rank_one_values(D, a, gamma, lam).max()))
    return best


def _constrained_values(D: np.ndarray, B: np.ndarray, W: np.ndarray, t: float,
                        weights: np.ndarray) -> np.ndarray:
    quad_b = np.einsum('ij,jk,ik->i', D, B, D)
    quad_w = np.einsum('ij,jk,ik->i', D, W, D)
    l1 = np.abs(D) @ weights
    with np.errstate(divide='ignore', invalid='ignore'):
        scale_sq = np.minimum(np.where(quad_w > 0, 1.0 / quad_w, np.inf),
                              np.where(l1 > 0, t ** 2 / l1 ** 2, np.inf))
    values = quad_b * scale_sq
    values[~np.isfinite(values)] = 0.0
    return values


def constrained_maximum(B: np.ndarray, W: np.ndarray, t: float, weights: np.ndarray = None,
                        n_starts: int = 20000, seed: int = 0, refine_steps: int = 200) -> float:
    """
    Brute-force value of max { v'Bv : v'Wv <= 1, sum_j w_j |v_j| <= t }, with unit weights
    w_j when `weights` is not given. Since v'Bv is a convex quadratic, the maximum lies on the
    boundary along some ray d, where the admissible radius is
    min(1 / sqrt(d'Wd), t / sum_j w_j |d_j|). Directions searched: all vectors with entries in
    {-1, 0, 1} (the corner rays of the ball and their mixtures, for p <= 8), random Gaussian
    directions, and a shrinking random-perturbation hill climb from the best of them.
    """
    p = B.shape[0]
    weights = np.ones(p) if weights is None else np.asarray(weights, dtype=float)
    if weights.shape != (p,) or np.any(weights < 0):
        raise ValidationError(
            '''
            The L1 weights must be {} non-negative values. Given shape: {}
            '''.format(p, weights.shape))
    if t <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    grids = np.meshgrid(*([np.array([-1.0, 0.0, 1.0])] * p), indexing='ij')
    corners = np.stack([g.ravel() for g in grids], axis=1)
    corners = corners[np.abs(corners).sum(axis=1) > 0]
    D = np.vstack([corners, rng.standard_normal((n_starts, p))])
    values = _constrained_values(D, B, W, t, weights)

    top = np.argsort(values)[::-1][:64]
    current, current_values = D[top].copy(), values[top].copy()
    radius = 0.5
    for _ in range(refine_steps):
        trial = current + radius * rng.standard_normal(current.shape)
        trial_values = _constrained_values(trial, B, W, t, weights)
        better = trial_values > current_values
        current[better] = trial[better]
        current_values[better] = trial_values[better]
        radius *= 0.97
    return float(max(values.max(), current_values.max()))
