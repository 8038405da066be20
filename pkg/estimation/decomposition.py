"""(Truncated) tensor power iteration with clustering of the candidates.

All L initializations are iterated together as the columns of one d x L
matrix, so every step is a single ``contract_batch`` call on the operator
(dense ``SymTensor3`` or ``ImplicitMoment``).
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from core.exceptions import DegenerateIterate, DegenerateOperator, DimensionMismatch
from core.tensors import TINY, eval_batch, truncate_columns

from .metrics import sign_flip_distance

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PowerConfig:
    """Hyperparameters of the power method.

    ``truncation`` switches on the sparse variant; ``init`` optionally gives
    the L starting unit vectors (random unit vectors otherwise).
    """
    L: int
    N: int
    k: int
    truncation: int = None
    dedup_radius: float = None
    init: tuple = None
    seed: int = 0
    max_redraws: int = None
    track_convergence: bool = False

    def __post_init__(self):
        if self.dedup_radius is None:
            object.__setattr__(self, 'dedup_radius', settings.AIM_DEDUP_RADIUS)
        if self.max_redraws is None:
            object.__setattr__(self, 'max_redraws', settings.AIM_MAX_REDRAWS)
        if self.init is not None:
            object.__setattr__(self, 'init', tuple(np.asarray(u, dtype=float) for u in self.init))
        self.clean()

    def clean(self):
        if not self.L >= self.k >= 1:
            raise ValidationError(f"need L >= k >= 1, got L={self.L}, k={self.k}.")
        if self.N < 1:
            raise ValidationError("N must be at least 1.")
        if self.truncation is not None and self.truncation < 1:
            raise ValidationError("truncation must be at least 1.")
        if self.dedup_radius <= 0:
            raise ValidationError("dedup_radius must be positive.")
        if self.init is not None:
            if len(self.init) != self.L:
                raise ValidationError(f"expected {self.L} initial vectors, got {len(self.init)}.")
            if any(abs(np.linalg.norm(u) - 1.0) > 1e-9 for u in self.init):
                raise ValidationError("initial vectors must have unit norm.")

    def check_dimension(self, d):
        if self.truncation is not None and self.truncation > d:
            raise ValidationError(f"truncation {self.truncation} exceeds d={d}.")
        if self.init is not None and any(u.shape != (d,) for u in self.init):
            raise DimensionMismatch(f"initial vectors must have length {d}")


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    components: list
    weights: list
    candidates_used: int
    exhausted: bool
    redraws: int = 0
    convergence: list = field(default=None)

    @property
    def k(self):
        return len(self.components)


def power_step(M, u):
    """M(I, u, u) / |M(I, u, u)|."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("power_step needs a unit vector")
    v = M.contract2(u, u)
    norm = np.linalg.norm(v)
    if norm < TINY:
        raise DegenerateIterate("contraction vanished; the start is orthogonal to the tensor")
    return v / norm


def truncate_normalize(u, s_bar):
    """Keep the s_bar largest-magnitude entries (lower index wins ties) and normalize."""
    u = np.asarray(u, dtype=float)
    if not 1 <= s_bar <= u.shape[0]:
        raise ValueError(f"s_bar must lie in [1, {u.shape[0]}], got {s_bar}")
    if not np.any(u):
        raise DegenerateIterate("cannot truncate the zero vector")
    t = truncate_columns(u[:, None], s_bar)[:, 0]
    return t / np.linalg.norm(t)


def _refine(M, v, N, truncation):
    for _ in range(N):
        try:
            nxt = power_step(M, v)
        except DegenerateIterate:
            break
        v = nxt if truncation is None else truncate_normalize(nxt, truncation)
    return v


def _batch_step(M, U, truncation):
    V = M.contract_batch(U)
    if truncation is not None:
        V = truncate_columns(V, truncation)
    norms = np.linalg.norm(V, axis=0)
    live = norms >= TINY
    return V / np.where(live, norms, 1.0), live


def _base_seed(config, rng):
    if config.seed is not None:
        return int(config.seed)
    rng = np.random.default_rng() if rng is None else rng
    return int(rng.integers(2 ** 63))


def _start(d, tau, attempt, base, config):
    if attempt == 0 and config.init is not None:
        return config.init[tau]
    # one independent stream per (seed, initialization, attempt)
    u = np.random.default_rng([base, tau, attempt]).standard_normal(d)
    return u / np.linalg.norm(u)


def _power_candidates(M, config, rng):
    d = M.d
    base = _base_seed(config, rng)
    attempts = np.zeros(config.L, dtype=int)
    found = [None] * config.L
    pending = list(range(config.L))
    redraws = 0
    trace = [] if config.track_convergence else None
    while pending:
        U = np.column_stack([_start(d, tau, attempts[tau], base, config) for tau in pending])
        live = np.ones(len(pending), dtype=bool)
        for _ in range(config.N):
            nxt, ok = _batch_step(M, U, config.truncation)
            live &= ok
            if not live.any():
                break
            if trace is not None and len(pending) == config.L:
                trace.append(float(np.linalg.norm(nxt - U, axis=0)[live].max()))
            U = np.where(ok, nxt, U)
        retry = []
        for col, tau in enumerate(pending):
            if live[col]:
                found[tau] = U[:, col].copy()
            elif attempts[tau] < config.max_redraws:
                attempts[tau] += 1
                redraws += 1
                retry.append(tau)
        pending = retry
    candidates = [u for u in found if u is not None]
    if not candidates:
        raise DegenerateOperator(
            f"all {config.L} initializations degenerated after {config.max_redraws} redraws each"
        )
    if len(candidates) < config.L:
        logger.warning("dropped %d degenerate initializations", config.L - len(candidates))
    return candidates, redraws, trace


def run_power_candidates(M, config, rng=None):
    """Run N (truncated) power steps from each of the L initializations.

    Returns the final iterates in initialization order.  A start whose
    contraction vanishes is redrawn up to ``config.max_redraws`` times.
    """
    config.check_dimension(M.d)
    candidates, _, _ = _power_candidates(M, config, rng)
    return candidates


def cluster_candidates(M, candidates, k, N, truncation=None, dedup_radius=None):
    """Pick, refine and deduplicate candidates until k components are found.

    Each round takes the remaining candidate with the largest |M(v, v, v)|
    (lowest index on ties), refines it with N more power steps and drops every
    candidate within ``dedup_radius`` of the result up to sign.  If the pool
    runs dry first the result is marked ``exhausted``.
    """
    if dedup_radius is None:
        dedup_radius = settings.AIM_DEDUP_RADIUS
    pool = [np.asarray(c, dtype=float) for c in candidates]
    if not pool:
        raise ValueError("no candidates to cluster")
    size = len(pool)
    components, weights = [], []
    for _ in range(k):
        if not pool:
            break
        values = np.abs(eval_batch(M, np.column_stack(pool)))
        best = int(np.argmax(values))
        v = _refine(M, pool[best], N, truncation)
        components.append(v)
        weights.append(M.eval3(v, v, v))
        pool = [c for i, c in enumerate(pool) if i != best and sign_flip_distance(c, v) > dedup_radius]
    return DecompositionResult(
        components=components,
        weights=weights,
        candidates_used=size - len(pool),
        exhausted=len(components) < k,
    )


def decompose(M, config, rng=None):
    """Power iterations from L starts followed by clustering into k components."""
    config.check_dimension(M.d)
    candidates, redraws, trace = _power_candidates(M, config, rng)
    result = cluster_candidates(M, candidates, config.k, config.N, config.truncation, config.dedup_radius)
    logger.info(
        "decomposed d=%d into %d/%d components from %d candidates%s",
        M.d, result.k, config.k, len(candidates), ' (exhausted)' if result.exhausted else '',
    )
    return replace(result, redraws=redraws, convergence=trace)
