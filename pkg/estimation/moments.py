"""Empirical third-order moment tensors M = (1/n) sum_i y_i S3(x_i).

The same formula serves both models: which population tensor M estimates
depends only on how y was generated.
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings

from core.exceptions import DimensionMismatch, MemoryGuardExceeded, check_dim
from core.score import hook_terms
from core.tensors import SymTensor3, operator_norm_estimate, sparse_operator_norm_estimate, symmetrize_canonical
from simulation.generators import gamma_coefficients

logger = logging.getLogger(__name__)

# rows per block; bounds the temporaries of every contraction
SAMPLE_BLOCK = 1 << 15


class ImplicitMoment:
    """The empirical moment tensor of a dataset, available only through contractions.

    Each contraction costs O(n d) and nothing of size d**3 is ever stored.
    """

    def __init__(self, data):
        self.data = data
        self._first = data.X.T @ data.y

    @property
    def d(self):
        return self.data.d

    @property
    def n(self):
        return self.data.n

    def contract2(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        check_dim(self.d, u, v)
        X, y = self.data.X, self.data.y
        a = X @ u
        b = X @ v
        out = X.T @ (y * a * b) - (u @ v) * self._first - (y @ a) * v - (y @ b) * u
        return out / self.n

    def contract_batch(self, U):
        U = np.asarray(U, dtype=float)
        check_dim(self.d, U)
        X, y = self.data.X, self.data.y
        cubic = np.zeros_like(U)
        ya = np.zeros(U.shape[1])
        for start in range(0, self.n, SAMPLE_BLOCK):
            Xb, yb = X[start:start + SAMPLE_BLOCK], y[start:start + SAMPLE_BLOCK]
            A = Xb @ U
            W = yb[:, None] * A
            cubic += Xb.T @ (W * A)
            ya += W.sum(axis=0)
        out = cubic - np.outer(self._first, (U * U).sum(axis=0)) - 2.0 * ya * U
        return out / self.n

    def eval3(self, u, v, w):
        u = np.asarray(u, dtype=float)
        check_dim(self.d, u)
        return float(u @ self.contract2(v, w))

    def dense(self, jobs=1):
        return build_moment_tensor_dense(self.data, jobs=jobs)


def implicit_contract(m, u, v):
    return m.contract2(u, v)


def _cubic_block(X, y):
    # sum_n (y x_i x_j) x_k as a (d*d, d) matrix
    c, d = X.shape
    pairs = ((y[:, None] * X)[:, :, None] * X[:, None, :]).reshape(c, d * d)
    return pairs.T @ X


def build_moment_tensor_dense(data, jobs=1, block_rows=None):
    """Materialize (1/n) sum_i y_i S3(x_i).

    Samples are reduced block by block in index order; with ``jobs > 1`` the
    blocks are computed on a thread pool and still summed in index order, so
    the result does not depend on ``jobs``.
    """
    d, n = data.d, data.n
    if d > settings.AIM_DENSE_MAX_D:
        raise MemoryGuardExceeded(
            f"d={d} exceeds the dense limit {settings.AIM_DENSE_MAX_D}; use ImplicitMoment instead"
        )
    if block_rows is None:
        block_rows = max(1, (1 << 22) // (d * d))
    X, y = data.X, data.y
    starts = range(0, n, block_rows)

    def block(start):
        return _cubic_block(X[start:start + block_rows], y[start:start + block_rows])

    total = np.zeros((d * d, d))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(block, starts):
                total += part
    else:
        for start in starts:
            total += block(start)
    first = X.T @ y
    entries = (total.reshape(d, d, d) - hook_terms(first)) / n
    logger.debug("built dense moment tensor d=%d from n=%d samples", d, n)
    return SymTensor3(symmetrize_canonical(entries))


def population_tensor(params, gammas, weights):
    """sum_j weights[j] * gammas[j] * b_j^(x)3 over the columns b_j of ``params.B``."""
    gammas = np.asarray(gammas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if gammas.shape != (params.k,) or weights.shape != (params.k,):
        raise DimensionMismatch(f"need {params.k} gammas and weights")
    T = SymTensor3.zeros(params.d)
    for j, beta in enumerate(params.columns):
        T.rank1_accumulate(weights[j] * gammas[j], beta)
    return T


def population_moment(spec, params):
    """E[Y S3(X)] for the model: gamma_j from the links, weights 1/k or pi."""
    return population_tensor(params, gamma_coefficients(spec), spec.population_weights())


def moment_operator(data, mode='implicit', jobs=1):
    """The contraction operator the decomposition runs on; implicit unless asked otherwise.

    ``auto`` builds the dense tensor when it fits and one dense contraction
    (d**3) is cheaper than an implicit one (n d), i.e. when n >= d**2.
    """
    if mode == 'implicit':
        return ImplicitMoment(data)
    if mode == 'dense':
        return build_moment_tensor_dense(data, jobs=jobs)
    if mode != 'auto':
        raise ValueError(f"unknown moment operator mode {mode!r}")
    if data.d <= settings.AIM_DENSE_MAX_D and data.n >= data.d ** 2:
        return build_moment_tensor_dense(data, jobs=jobs)
    return ImplicitMoment(data)


def moment_error_norm(empirical, population, r=None, restarts=None, iters=None, rng=None):
    """(r-sparse) operator norm estimate of ``empirical - population``."""
    if isinstance(empirical, ImplicitMoment):
        empirical = empirical.dense()
    if empirical.d != population.d:
        raise DimensionMismatch(f"dimensions differ: {empirical.d} vs {population.d}")
    diff = empirical - population
    if r is None:
        return operator_norm_estimate(diff, restarts, iters, rng)
    return sparse_operator_norm_estimate(diff, r, restarts, iters, rng)
