"""Dense symmetric third-order tensors and their operator norms.

A ``SymTensor3`` stores all d**3 entries of a symmetric tensor in a
contiguous ``(d, d, d)`` float64 array.  Symmetry is kept bit-exact: every
constructor and accumulation writes the value computed for the sorted index
triple to all of its permutations.
"""
import itertools
import logging
from functools import lru_cache
from typing import Protocol, runtime_checkable

import numpy as np
from django.conf import settings

from .exceptions import DimensionMismatch, check_dim

logger = logging.getLogger(__name__)

# contractions with a smaller norm than this are treated as zero
TINY = 1e-14


@runtime_checkable
class TensorOperator(Protocol):
    """Anything that can contract a symmetric order-3 tensor with vectors."""

    @property
    def d(self) -> int: ...

    def contract2(self, u: np.ndarray, v: np.ndarray) -> np.ndarray: ...

    def contract_batch(self, U: np.ndarray) -> np.ndarray: ...


@lru_cache(maxsize=4)
def _canonical_index(d):
    ar = np.arange(d, dtype=np.int64)
    i, j, k = ar[:, None, None], ar[None, :, None], ar[None, None, :]
    lo = np.minimum(np.minimum(i, j), k)
    hi = np.maximum(np.maximum(i, j), k)
    mid = i + j + k - lo - hi
    flat = (lo * d + mid) * d + hi
    flat.flags.writeable = False
    return flat


def symmetrize_canonical(array):
    """Copy the entry at each sorted index triple to all its permutations."""
    d = array.shape[0]
    return np.ascontiguousarray(array).ravel()[_canonical_index(d)]


def outer3(u):
    return np.multiply.outer(np.multiply.outer(u, u), u)


def truncate_columns(U, r):
    """Keep the ``r`` largest-magnitude entries of every column of ``U``.

    Ties at the r-th magnitude go to the lower index.
    """
    order = np.argsort(-np.abs(U), axis=0, kind='stable')[:r]
    cols = np.arange(U.shape[1])[None, :]
    out = np.zeros_like(U)
    out[order, cols] = U[order, cols]
    return out


def random_unit_columns(d, count, rng):
    U = rng.standard_normal((d, count))
    return U / np.linalg.norm(U, axis=0)


class SymTensor3:
    __slots__ = ('_entries',)

    def __init__(self, entries):
        # trusted: callers pass an already symmetric, finite (d, d, d) array
        self._entries = entries

    @classmethod
    def zeros(cls, d):
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        return cls(np.zeros((d, d, d)))

    @classmethod
    def from_array(cls, array, atol=0.0):
        """Validate and wrap a (d, d, d) array.

        Entries must be finite and symmetric up to ``atol``; the stored tensor
        is the canonical symmetrization of ``array``.
        """
        array = np.asarray(array, dtype=float)
        if array.ndim != 3 or len(set(array.shape)) != 1 or array.shape[0] < 1:
            raise DimensionMismatch(f"expected a (d, d, d) array, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("tensor entries must be finite")
        for axes in itertools.permutations(range(3)):
            if np.max(np.abs(array - array.transpose(axes))) > atol:
                raise ValueError("array is not symmetric")
        return cls(symmetrize_canonical(array))

    @classmethod
    def rank1(cls, c, u):
        u = np.asarray(u, dtype=float)
        return cls.zeros(u.shape[0]).rank1_accumulate(c, u)

    @property
    def d(self):
        return self._entries.shape[0]

    @property
    def entries(self):
        view = self._entries.view()
        view.flags.writeable = False
        return view

    def __getitem__(self, index):
        return self._entries[index]

    def __repr__(self):
        return f"SymTensor3(d={self.d})"

    def copy(self):
        return SymTensor3(self._entries.copy())

    def rank1_accumulate(self, c, u):
        """Add ``c * u (x) u (x) u`` in place and return ``self``."""
        u = np.asarray(u, dtype=float)
        check_dim(self.d, u)
        if c != 0:
            self._entries += symmetrize_canonical(c * outer3(u))
        return self

    def contract2(self, u, v):
        """The vector T(I, u, v), i.e. sum_jk T[i, j, k] u[j] v[k]."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        check_dim(self.d, u, v)
        d = self.d
        return self._entries.reshape(d, d * d) @ np.outer(u, v).ravel()

    def contract_batch(self, U):
        """Column-wise T(I, u, u) for every column u of the (d, L) array ``U``."""
        U = np.asarray(U, dtype=float)
        check_dim(self.d, U)
        d, L = U.shape
        nnz = np.count_nonzero(U, axis=0)
        if L and 8 * int(nnz.max()) ** 2 <= d * d:
            # truncated iterates: gather only the support block of each column
            out = np.empty((d, L))
            rows = np.arange(d)
            for col in range(L):
                support = np.flatnonzero(U[:, col])
                us = U[support, col]
                block = self._entries[np.ix_(rows, support, support)]
                out[:, col] = block.reshape(d, -1) @ np.outer(us, us).ravel()
            return out
        pairs = (U[:, None, :] * U[None, :, :]).reshape(d * d, L)
        return self._entries.reshape(d, d * d) @ pairs

    def eval3(self, u, v, w):
        u = np.asarray(u, dtype=float)
        check_dim(self.d, u)
        return float(u @ self.contract2(v, w))

    def unique_entries(self):
        """Yield ``(i, j, k, value)`` for i <= j <= k."""
        for i, j, k in itertools.combinations_with_replacement(range(self.d), 3):
            yield i, j, k, float(self._entries[i, j, k])

    def _check_same(self, other):
        if not isinstance(other, SymTensor3):
            return NotImplemented
        if other.d != self.d:
            raise DimensionMismatch(f"dimensions differ: {self.d} vs {other.d}")
        return None

    def __add__(self, other):
        bad = self._check_same(other)
        if bad is not None:
            return bad
        return SymTensor3(self._entries + other._entries)

    def __sub__(self, other):
        bad = self._check_same(other)
        if bad is not None:
            return bad
        return SymTensor3(self._entries - other._entries)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return SymTensor3(self._entries * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return SymTensor3(-self._entries)


def eval_batch(T, U):
    """T(u, u, u) for every column u of ``U``."""
    return np.einsum('il,il->l', U, T.contract_batch(U))


def _power_sup(T, U, iters, r=None):
    best = 0.0
    for _ in range(iters):
        V = T.contract_batch(U)
        best = max(best, float(np.abs(np.einsum('il,il->l', U, V)).max()))
        if r is not None:
            V = truncate_columns(V, r)
        norms = np.linalg.norm(V, axis=0)
        live = norms > TINY
        if not live.any():
            return best
        U = np.where(live, V / np.where(live, norms, 1.0), U)
    return max(best, float(np.abs(eval_batch(T, U)).max()))


def operator_norm_estimate(T, restarts=None, iters=None, rng=None):
    """Lower bound on sup |T(u, u, u)| over the unit sphere.

    Runs ``restarts`` power iterations from random unit vectors for ``iters``
    steps each and returns the largest |T(u, u, u)| seen.  Works with any
    ``TensorOperator``.
    """
    restarts = settings.AIM_NORM_RESTARTS if restarts is None else restarts
    iters = settings.AIM_NORM_ITERS if iters is None else iters
    if restarts < 1 or iters < 1:
        raise ValueError("restarts and iters must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    U = random_unit_columns(T.d, restarts, rng)
    return _power_sup(T, U, iters)


def sparse_operator_norm_estimate(T, r, restarts=None, iters=None, rng=None):
    """Lower bound on sup |T(u, u, u)| over unit vectors with at most r nonzeros."""
    if not 1 <= r <= T.d:
        raise ValueError(f"sparsity r must lie in [1, {T.d}], got {r}")
    restarts = settings.AIM_NORM_RESTARTS if restarts is None else restarts
    iters = settings.AIM_NORM_ITERS if iters is None else iters
    if restarts < 1 or iters < 1:
        raise ValueError("restarts and iters must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    U = truncate_columns(rng.standard_normal((T.d, restarts)), r)
    U /= np.linalg.norm(U, axis=0)
    return _power_sup(T, U, iters, r=r)


# Exact oracles for tests: grid search over small spheres.

def _sphere_grid(d, points_per_angle):
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        theta = np.linspace(0.0, np.pi, points_per_angle, endpoint=False)
        return np.vstack([np.cos(theta), np.sin(theta)])
    # |T(u, u, u)| is even in u, so the upper hemisphere is enough
    theta = np.linspace(0.0, np.pi / 2, points_per_angle)
    phi = np.linspace(0.0, 2 * np.pi, points_per_angle, endpoint=False)
    t, p = np.meshgrid(theta, phi, indexing='ij')
    return np.vstack([(np.sin(t) * np.cos(p)).ravel(), (np.sin(t) * np.sin(p)).ravel(), np.cos(t).ravel()])


def spherical_grid_norm(T, points_per_angle=None, polish_iters=50, chunk=200_000):
    """sup |T(u, u, u)| by grid search over the unit sphere, for d <= 3."""
    if T.d > 3:
        raise ValueError("grid search is only available for d <= 3")
    if points_per_angle is None:
        points_per_angle = 10_000 if T.d == 2 else 1_000
    grid = _sphere_grid(T.d, points_per_angle)
    best, best_u = 0.0, grid[:, :1]
    for start in range(0, grid.shape[1], chunk):
        block = grid[:, start:start + chunk]
        values = np.abs(eval_batch(T, block))
        at = int(values.argmax())
        if values[at] > best:
            best, best_u = float(values[at]), block[:, at:at + 1]
    if polish_iters and best > 0:
        best = max(best, _power_sup(T, best_u.copy(), polish_iters))
    return best


def enumerated_sparse_norm(T, r, points_per_angle=None, polish_iters=50):
    """Exact r-sparse norm by enumerating every support of size r (d <= 12, r <= 3)."""
    if T.d > 12 or not 1 <= r <= min(3, T.d):
        raise ValueError("support enumeration needs d <= 12 and 1 <= r <= 3")
    if points_per_angle is None:
        points_per_angle = 2_000 if r == 2 else 200
    best = 0.0
    for support in itertools.combinations(range(T.d), r):
        block = SymTensor3(np.ascontiguousarray(T.entries[np.ix_(support, support, support)]))
        best = max(best, spherical_grid_norm(block, points_per_angle, polish_iters))
    return best
