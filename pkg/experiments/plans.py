"""Experiment sweeps and the rows they produce."""
import math
from dataclasses import asdict, dataclass, field, fields

from django.core.exceptions import ValidationError

from estimation.metrics import (
    MAX_MATCHED_COMPONENTS, inverse_signal_strength_highdim, inverse_signal_strength_lowdim,
)
from simulation.generators import DEFAULT_KAPPA
from simulation.io import format_float


@dataclass(frozen=True)
class ExperimentPlan:
    """A (link, s, k, n) grid at fixed d; high-dimensional when ``s`` or ``s_list`` is set.

    ``link_list`` and ``s_list`` sweep several links or sparsity levels in one
    run; a single ``link`` or ``s`` is a one-entry sweep.
    """
    model_kind: str
    link: str
    d: int
    k_list: tuple
    n_list: tuple
    trials: int
    L: int
    N: int
    base_seed: int = 0
    output: str = None
    jobs: int = 1
    s: int = None
    s_bar: int = None
    kappa: float = DEFAULT_KAPPA
    noise_sd: float = None
    operator: str = 'implicit'
    record_wall_time: bool = False
    link_list: tuple = None
    s_list: tuple = None

    def __post_init__(self):
        object.__setattr__(self, 'k_list', tuple(self.k_list))
        object.__setattr__(self, 'n_list', tuple(self.n_list))
        if self.link_list is not None:
            object.__setattr__(self, 'link_list', tuple(self.link_list))
        if self.s_list is not None:
            object.__setattr__(self, 's_list', tuple(self.s_list))
        if self.s is not None and self.s_bar is None:
            # s_bar = 3 s in every high-dimensional experiment
            object.__setattr__(self, 's_bar', 3 * self.s)
        self.clean()

    def clean(self):
        if not self.k_list or not self.n_list:
            raise ValidationError("k_list and n_list must be nonempty.")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1.")
        if (self.link is None) == (self.link_list is None):
            raise ValidationError("give exactly one of link and link_list.")
        if self.link_list is not None and not self.link_list:
            raise ValidationError("link_list must be nonempty.")
        if self.s is not None and self.s_list is not None:
            raise ValidationError("give at most one of s and s_list.")
        if self.s_list is not None and not self.s_list:
            raise ValidationError("s_list must be nonempty.")
        if self.s_bar is not None and not self.highdim:
            raise ValidationError("s_bar needs s or s_list.")
        k_max = max(self.k_list)
        for s in self.s_values:
            if s is None:
                continue
            if self.truncation(s) > self.d:
                raise ValidationError(f"s_bar={self.truncation(s)} exceeds d={self.d}.")
            if math.ceil(k_max / s) * s > self.d:
                raise ValidationError(f"disjoint supports of size s={s} for k={k_max} do not fit in d={self.d}.")
        if not self.highdim and k_max > self.d:
            raise ValidationError(f"k={k_max} exceeds d={self.d}.")
        if k_max > MAX_MATCHED_COMPONENTS:
            raise ValidationError(f"k={k_max} exceeds the matching limit of {MAX_MATCHED_COMPONENTS}.")
        if k_max > self.L:
            raise ValidationError("L must be at least the largest k.")

    @property
    def highdim(self):
        return self.s is not None or self.s_list is not None

    @property
    def links(self):
        return self.link_list if self.link_list is not None else (self.link,)

    @property
    def s_values(self):
        return self.s_list if self.s_list is not None else (self.s,)

    def truncation(self, s):
        if s is None:
            return None
        return self.s_bar if self.s_bar is not None else 3 * s

    @property
    def cells(self):
        """(link, s, k, n) tuples; n varies fastest."""
        return [
            (link, s, k, n)
            for link in self.links for s in self.s_values for k in self.k_list for n in self.n_list
        ]

    def inverse_signal(self, n, s=None, r=None):
        if self.highdim:
            return inverse_signal_strength_highdim(self.s if s is None else s, self.d, n, r)
        return inverse_signal_strength_lowdim(self.d, n)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ConcentrationPlan:
    """Norm-error study of the empirical moment tensor over a (d, n) grid."""
    d_list: tuple
    n_list: tuple
    trials: int
    base_seed: int = 0
    r: int = None
    model_kind: str = 'discordant'
    link: str = 'cubic'
    k: int = 1
    kappa: float = DEFAULT_KAPPA
    noise_sd: float = None
    restarts: int = None
    iters: int = None

    def __post_init__(self):
        object.__setattr__(self, 'd_list', tuple(self.d_list))
        object.__setattr__(self, 'n_list', tuple(self.n_list))
        if not self.d_list or not self.n_list:
            raise ValidationError("d_list and n_list must be nonempty.")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1.")
        if self.r is not None and not 1 <= self.r <= min(self.d_list):
            raise ValidationError("r must lie in [1, min(d_list)].")

    @property
    def cells(self):
        return [(d, n) for d in self.d_list for n in self.n_list]


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return format_float(value)
    return str(value)


class _Row:
    @classmethod
    def header(cls):
        return [f.metadata.get('column', f.name) for f in fields(cls)]

    def as_row(self):
        return [_cell(getattr(self, f.name)) for f in fields(self)]


def _column(name):
    return field(metadata={'column': name})


@dataclass(frozen=True)
class TrialRecord(_Row):
    trial_id: int
    model_kind: str = _column('model')
    link: str = _column('link')
    d: int = _column('d')
    k: int = _column('k')
    s: int = _column('s')
    s_bar: int = _column('s_bar')
    n: int = _column('n')
    seed: int = _column('seed')
    matching_error: float = _column('error')
    inverse_signal_strength: float = _column('inv_signal')
    incoherence_psi: float = _column('psi')
    wall_ms: float = _column('wall_ms')
    exhausted: bool = _column('exhausted')

    def __post_init__(self):
        if not 0.0 <= self.matching_error <= math.sqrt(2.0) + 1e-12:
            raise ValidationError(f"matching error {self.matching_error} outside [0, sqrt 2].")
        if self.wall_ms < 0:
            raise ValidationError("wall_ms must be nonnegative.")


@dataclass(frozen=True)
class ConcentrationRecord(_Row):
    d: int
    n: int
    trial: int
    seed: int
    error: float
    sparse_error: float
    inv_signal: float
    sparse_inv_signal: float
