"""Error metrics, rate axes and diagnostic bounds."""
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from core.exceptions import DimensionMismatch

SQRT2 = math.sqrt(2.0)
MAX_MATCHED_COMPONENTS = 10
UNIT_TOLERANCE = 1e-9


def _check_unit(u):
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOLERANCE:
        raise ValueError("sign-flip distance needs unit vectors")


def sign_flip_distance(u1, u2):
    """min(|u1 - u2|, |u1 + u2|), the distance between directions up to sign."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape != u2.shape:
        raise DimensionMismatch(f"shapes differ: {u1.shape} vs {u2.shape}")
    _check_unit(u1)
    _check_unit(u2)
    return float(min(np.linalg.norm(u1 - u2), np.linalg.norm(u1 + u2)))


def distance_matrix(estimates, truth_B):
    return np.array([
        [sign_flip_distance(u, truth_B[:, j]) for j in range(truth_B.shape[1])]
        for u in estimates
    ])


def _matches_every_truth_column(allowed):
    # rows are truth columns; an estimate may stay unmatched
    matching = maximum_bipartite_matching(csr_matrix(allowed.T.astype(np.int8)), perm_type='column')
    return bool(np.all(matching >= 0))


def matching_error(estimates, truth, allow_missing=False, allow_extra=False):
    """Smallest achievable max sign-flip distance over estimate/truth pairings.

    Exact min-max assignment: the answer is the least entry of the distance
    matrix whose threshold graph still matches every truth column.  With
    ``allow_missing`` a short estimate list scores sqrt(2), the distance
    charged to any unmatched truth column.  With ``allow_extra`` surplus
    estimates are left out of the best assignment.
    """
    estimates = [np.asarray(u, dtype=float) for u in estimates]
    k = truth.k
    if k > MAX_MATCHED_COMPONENTS:
        raise ValueError(f"matching is limited to k <= {MAX_MATCHED_COMPONENTS}")
    if allow_missing and len(estimates) < k:
        return SQRT2
    if len(estimates) < k or (len(estimates) > k and not allow_extra):
        raise ValueError(f"expected {k} estimates, got {len(estimates)}")
    if estimates[0].shape[0] != truth.d:
        raise DimensionMismatch(f"estimates have length {estimates[0].shape[0]}, truth has d={truth.d}")
    dist = distance_matrix(estimates, truth.B)
    levels = np.unique(dist)
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _matches_every_truth_column(dist <= levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(min(levels[lo], SQRT2))


def inverse_signal_strength_lowdim(d, n):
    return max(math.sqrt(d / n), d ** 2.5 / n)


def inverse_signal_strength_highdim(s, d, n, r=None):
    """max(sqrt(s log d / n), (s log d)^{5/2} / n); log(d / r) when ``r`` is given."""
    log_term = math.log(d) if r is None else math.log(d / r)
    base = s * log_term
    return max(math.sqrt(base / n), base ** 2.5 / n)


def theoretical_error_bound(tensor_error, gamma_min, gamma_max, k, psi, C1=1.0):
    """2 sqrt5/gamma_min * tensor_error + 2 sqrt5 C1 gamma_max/gamma_min * sqrt(k) psi^2.

    A diagnostic only: ``C1`` is an uncalibrated absolute constant.  Pass the
    sparse operator-norm error and the sparse constant for the high-dimensional
    rate, which has the same shape.
    """
    if gamma_min <= 0:
        raise ValueError("gamma_min must be positive")
    scale = 2.0 * math.sqrt(5.0) / gamma_min
    return scale * tensor_error + scale * C1 * gamma_max * math.sqrt(k) * psi ** 2
