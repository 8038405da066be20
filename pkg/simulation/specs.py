"""Value objects describing a simulated additive index model."""
import math
from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models


class ModelKind(models.TextChoices):
    DISCORDANT = 'discordant', 'Discordant single index models'
    MIXTURE = 'mixture', 'Mixture of single index models'


class LinkKind(models.TextChoices):
    CUBIC = 'cubic', 'u^3'
    CUBIC_EXP = 'cubic_exp', 'u^3 + 10 exp(-u^2)'
    CUBIC_SIN = 'cubic_sin', 'u^3 + 5 sin(2 u^2)'
    CUBIC_TANH = 'cubic_tanh', 'u^3 + 10 tanh(u^2)'


# names used for the three experiment links
LINK_ALIASES = {
    'h1': LinkKind.CUBIC_EXP,
    'h2': LinkKind.CUBIC_SIN,
    'h3': LinkKind.CUBIC_TANH,
}


@dataclass(frozen=True)
class LinkSpec:
    kind: LinkKind

    @classmethod
    def parse(cls, name):
        name = str(name).strip().lower()
        if name in LINK_ALIASES:
            return cls(LINK_ALIASES[name])
        try:
            return cls(LinkKind(name))
        except ValueError:
            raise ValidationError(f"unknown link function: {name!r}") from None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        cube = u ** 3
        if self.kind == LinkKind.CUBIC:
            return cube
        if self.kind == LinkKind.CUBIC_EXP:
            return cube + 10.0 * np.exp(-u * u)
        if self.kind == LinkKind.CUBIC_SIN:
            return cube + 5.0 * np.sin(2.0 * u * u)
        return cube + 10.0 * np.tanh(u * u)

    def __str__(self):
        return self.kind.value


@dataclass(frozen=True)
class ModelSpec:
    """Ground-truth model: kind, sizes, per-component links, noise and weights.

    ``noise_sd`` defaults to sqrt(1/k) and Mixture ``weights`` to uniform.
    """
    model_kind: ModelKind
    d: int
    k: int
    links: tuple
    noise_sd: float = None
    weights: tuple = None

    def __post_init__(self):
        try:
            object.__setattr__(self, 'model_kind', ModelKind(self.model_kind))
        except ValueError:
            raise ValidationError(f"unknown model kind: {self.model_kind!r}") from None
        object.__setattr__(self, 'links', tuple(self.links))
        if self.noise_sd is None and self.k >= 1:
            object.__setattr__(self, 'noise_sd', math.sqrt(1.0 / self.k))
        if self.model_kind == ModelKind.MIXTURE and self.weights is None and self.k >= 1:
            object.__setattr__(self, 'weights', (1.0 / self.k,) * self.k)
        if self.weights is not None:
            object.__setattr__(self, 'weights', tuple(float(w) for w in self.weights))
        self.clean()

    @classmethod
    def uniform(cls, model_kind, d, k, link, noise_sd=None, weights=None):
        link = link if isinstance(link, LinkSpec) else LinkSpec.parse(link)
        return cls(model_kind, d, k, (link,) * k, noise_sd, weights)

    def clean(self):
        if self.k < 1 or self.d < 1:
            raise ValidationError("d and k must be at least 1.")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative.")
        if len(self.links) != self.k:
            raise ValidationError(f"expected {self.k} links, got {len(self.links)}.")
        if self.model_kind == ModelKind.MIXTURE:
            weights = np.asarray(self.weights)
            if weights.shape != (self.k,) or np.any(weights < 0):
                raise ValidationError("mixture weights must be k nonnegative numbers.")
            if abs(weights.sum() - 1.0) > 1e-12:
                raise ValidationError("mixture weights must sum to 1.")

    def population_weights(self):
        """Weight of each component in the population moment tensor."""
        if self.model_kind == ModelKind.MIXTURE:
            return np.asarray(self.weights, dtype=float)
        return np.full(self.k, 1.0 / self.k)


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Unit index vectors as the columns of ``B`` (d x k), optionally s-sparse."""
    B: np.ndarray
    s: int = None

    def __post_init__(self):
        B = np.array(self.B, dtype=float, ndmin=2)
        B.flags.writeable = False
        object.__setattr__(self, 'B', B)
        self.clean()

    def clean(self):
        if self.B.ndim != 2 or self.B.shape[1] < 1:
            raise ValidationError("B must be a d x k matrix with k >= 1.")
        norms = np.linalg.norm(self.B, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValidationError("every column of B must have unit norm.")
        if self.s is not None and np.any(np.count_nonzero(self.B, axis=0) > self.s):
            raise ValidationError(f"a column of B has more than s={self.s} nonzeros.")

    @property
    def d(self):
        return self.B.shape[0]

    @property
    def k(self):
        return self.B.shape[1]

    @property
    def columns(self):
        return [self.B[:, j] for j in range(self.k)]


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).ravel()
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'y', y)
        if X.shape[0] != y.shape[0]:
            raise ValidationError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries.")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError("dataset entries must be finite.")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]
