"""Random index vectors, synthetic datasets and Stein coefficients of the links."""
import logging
import math

import numpy as np
from django.core.exceptions import ValidationError
from numpy.polynomial.hermite_e import hermegauss

from core.exceptions import DimensionMismatch

from .specs import Dataset, ModelKind, ParamSet

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = 0.1
# redraw until psi <= INCOHERENCE_C0 / sqrt(d)
INCOHERENCE_C0 = 2.0
MAX_PARAM_REDRAWS = 100
QUADRATURE_POINTS = 64


def incoherence(params):
    """max_{i != j} |<b_i, b_j>| over the columns of ``params.B``."""
    if params.k < 2:
        return 0.0
    gram = np.abs(params.B.T @ params.B)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def _perturbed_basis(d, k, kappa, rng):
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    B = q + kappa * rng.standard_normal((d, k))
    return B / np.linalg.norm(B, axis=0)


def generate_params_lowdim(d, k, kappa=DEFAULT_KAPPA, rng=None, c0=INCOHERENCE_C0):
    """k unit vectors in R^d: orthonormal directions perturbed by kappa-scaled noise.

    Draws are rejected while the incoherence exceeds ``c0 / sqrt(d)``.
    """
    if k > d:
        raise ValidationError(f"need k <= d for an orthonormal start, got k={k}, d={d}.")
    if k < 1 or kappa < 0:
        raise ValidationError("k must be positive and kappa nonnegative.")
    rng = np.random.default_rng() if rng is None else rng
    limit = c0 / math.sqrt(d)
    for attempt in range(MAX_PARAM_REDRAWS):
        params = ParamSet(_perturbed_basis(d, k, kappa, rng))
        psi = incoherence(params)
        if psi <= limit:
            return params
        logger.debug("redrawing parameters: psi=%.4f > %.4f (attempt %d)", psi, limit, attempt + 1)
    raise ValidationError(
        f"no draw reached incoherence {limit:.4f} in {MAX_PARAM_REDRAWS} attempts; lower kappa."
    )


def generate_params_highdim(d, k, s, kappa=DEFAULT_KAPPA, rng=None):
    """s-sparse unit vectors on ceil(k/s) disjoint random supports of size s.

    Column j (0-based) lives on support j // s and equals incoherent vector
    j % s of R^s there.
    """
    if s < 1:
        raise ValidationError("s must be at least 1.")
    groups = math.ceil(k / s)
    if groups * s > d:
        raise ValidationError(f"{groups} disjoint supports of size {s} do not fit in d={d}.")
    rng = np.random.default_rng() if rng is None else rng
    local = generate_params_lowdim(s, s, kappa, rng).B
    supports = rng.permutation(d)[:groups * s].reshape(groups, s)
    B = np.zeros((d, k))
    for j in range(k):
        group, member = divmod(j, s)
        B[supports[group], j] = local[:, member]
    return ParamSet(B, s=s)


def sample_dataset(spec, params, n, rng=None):
    """Draw n observations with X ~ N(0, I_d).

    Discordant: y = (1/k) sum_j [link_j(<x, b_j>) + eps_j].
    Mixture: a component z ~ Categorical(weights) is drawn independently of x
    and y = link_z(<x, b_z>) + eps.
    """
    if spec.d != params.d or spec.k != params.k:
        raise DimensionMismatch(
            f"model is d={spec.d}, k={spec.k} but parameters are d={params.d}, k={params.k}"
        )
    if n < 1:
        raise ValidationError("n must be at least 1.")
    rng = np.random.default_rng() if rng is None else rng
    X = rng.standard_normal((n, spec.d))
    Z = X @ params.B
    responses = np.column_stack([link(Z[:, j]) for j, link in enumerate(spec.links)])
    if spec.model_kind == ModelKind.DISCORDANT:
        noise = spec.noise_sd * rng.standard_normal((n, spec.k))
        y = (responses + noise).sum(axis=1) / spec.k
    else:
        labels = rng.choice(spec.k, size=n, p=np.asarray(spec.weights))
        noise = spec.noise_sd * rng.standard_normal(n)
        y = responses[np.arange(n), labels] + noise
    return Dataset(X, y)


def gamma_coefficient(link):
    """E[link'''(xi)] for xi ~ N(0, 1), computed as E[link(xi) (xi^3 - 3 xi)]."""
    nodes, weights = hermegauss(QUADRATURE_POINTS)
    weights = weights / math.sqrt(2.0 * math.pi)
    return float(np.sum(weights * link(nodes) * (nodes ** 3 - 3.0 * nodes)))


def gamma_coefficients(spec):
    return np.array([gamma_coefficient(link) for link in spec.links])
