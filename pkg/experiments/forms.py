"""JSON config files for the commands, validated with Django forms.

Every form rejects keys it does not know, so a typo in a config file is an
error rather than a silently ignored setting.
"""
import json
import math
import os
from numbers import Real
from pathlib import Path

import numpy as np
from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError

from simulation.generators import DEFAULT_KAPPA, generate_params_highdim, generate_params_lowdim
from simulation.specs import LINK_ALIASES, LinkKind, ModelKind, ModelSpec, ParamSet

from .plans import ConcentrationPlan, ExperimentPlan

MAX_SEED = 2 ** 64 - 1
LINK_CHOICES = list(LinkKind.choices) + [(alias, kind.label) for alias, kind in LINK_ALIASES.items()]
OPERATOR_CHOICES = [('auto', 'auto'), ('implicit', 'implicit'), ('dense', 'dense')]


def read_config(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must hold a JSON object.")
    return data


def check_output(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ValidationError(f"output directory {parent} does not exist.")
    if not os.access(parent, os.W_OK):
        raise ValidationError(f"output directory {parent} is not writable.")
    return Path(path)


def check_seed(seed):
    if seed is not None and not 0 <= seed <= MAX_SEED:
        raise ValidationError(f"seed must lie in [0, 2**64 - 1], got {seed}.")
    return seed


class _ListField(forms.Field):
    """A JSON array whose items are checked by ``item``."""
    default_error_messages = {
        'invalid': "Enter a list.",
        'required': "This field is required and must be a nonempty list.",
    }

    def __init__(self, *, min_value=None, **kwargs):
        self.min_value = min_value
        super().__init__(**kwargs)

    def item(self, value):
        raise NotImplementedError

    def to_python(self, value):
        if value in self.empty_values:
            return ()
        if not isinstance(value, (list, tuple)):
            raise ValidationError(self.error_messages['invalid'], code='invalid')
        items = tuple(self.item(v) for v in value)
        if self.min_value is not None and any(v < self.min_value for v in items):
            raise ValidationError(f"every entry must be at least {self.min_value}.", code='min_value')
        return items


class IntegerListField(_ListField):
    def item(self, value):
        if isinstance(value, bool) or not isinstance(value, Real) or not float(value).is_integer():
            raise ValidationError(f"{value!r} is not an integer.", code='invalid')
        return int(value)


def _finite(value):
    if isinstance(value, bool) or not isinstance(value, Real) or not math.isfinite(value):
        raise ValidationError(f"{value!r} is not a finite number.", code='invalid')
    return float(value)


class FloatListField(_ListField):
    def item(self, value):
        return _finite(value)


class VectorListField(_ListField):
    """A list of vectors, e.g. the columns of B."""

    def item(self, value):
        if not isinstance(value, (list, tuple)) or not value:
            raise ValidationError("every entry must be a nonempty list of numbers.", code='invalid')
        return tuple(_finite(v) for v in value)


class JSONConfigForm(forms.Form):
    def __init__(self, data, **kwargs):
        super().__init__(data=data, **kwargs)

    def clean(self):
        cleaned_data = super().clean()
        unknown = sorted(set(self.data) - set(self.fields))
        for key in unknown:
            self.add_error(None, f"{key}: unknown key.")
        return cleaned_data

    def error_summary(self):
        lines = []
        for field, errors in self.errors.items():
            for message in errors:
                lines.append(message if field == '__all__' else f"{field}: {message}")
        return '\n'.join(lines)

    def validated(self):
        if not self.is_valid():
            raise ValidationError(self.error_summary())
        return self.cleaned_data

    def value(self, name, default):
        value = self.cleaned_data.get(name)
        return default if value in (None, '') else value


class SimulateConfigForm(JSONConfigForm):
    """One simulated dataset.

    ``B`` gives the k index vectors explicitly (normalized to unit length);
    without it they are drawn: s-sparse on disjoint supports when ``s`` is
    set, perturbed orthonormal otherwise.
    """
    model_kind = forms.ChoiceField(choices=ModelKind.choices, required=False)
    link = forms.ChoiceField(choices=LINK_CHOICES, required=False)
    d = forms.IntegerField(min_value=1)
    k = forms.IntegerField(min_value=1)
    n = forms.IntegerField(min_value=1)
    noise_sd = forms.FloatField(min_value=0.0, required=False)
    weights = FloatListField(min_value=0.0, required=False)
    kappa = forms.FloatField(min_value=0.0, required=False)
    s = forms.IntegerField(min_value=1, required=False)
    seed = forms.IntegerField(min_value=0, max_value=MAX_SEED, required=False)
    B = VectorListField(required=False)

    def clean_B(self):
        columns = self.cleaned_data.get('B')
        if not columns:
            return None
        B = np.array(columns, dtype=float).T
        norms = np.linalg.norm(B, axis=0)
        if np.any(norms == 0.0):
            raise ValidationError("index vectors must be nonzero.")
        return B / norms

    def clean(self):
        cleaned_data = super().clean()
        d, k = cleaned_data.get('d'), cleaned_data.get('k')
        B = cleaned_data.get('B')
        if d is None or k is None:
            return cleaned_data
        if B is not None and B.shape != (d, k):
            self.add_error('B', f"expected {k} vectors of length {d}.")
        if cleaned_data.get('weights') and self.value('model_kind', ModelKind.DISCORDANT) != ModelKind.MIXTURE:
            self.add_error('weights', "weights apply to the mixture model only.")
        if not self.errors:
            try:
                self.model_spec()
            except ValidationError as e:
                self.add_error(None, e)
        return cleaned_data

    def model_spec(self):
        return ModelSpec.uniform(
            self.value('model_kind', ModelKind.DISCORDANT),
            self.cleaned_data['d'],
            self.cleaned_data['k'],
            self.value('link', LinkKind.CUBIC),
            self.cleaned_data.get('noise_sd'),
            self.cleaned_data.get('weights') or None,
        )

    def param_set(self, rng):
        d, k, s = self.cleaned_data['d'], self.cleaned_data['k'], self.cleaned_data.get('s')
        if self.cleaned_data.get('B') is not None:
            return ParamSet(self.cleaned_data['B'], s=s)
        kappa = self.value('kappa', DEFAULT_KAPPA)
        if s is not None:
            return generate_params_highdim(d, k, s, kappa, rng)
        return generate_params_lowdim(d, k, kappa, rng)


class DecomposeConfigForm(JSONConfigForm):
    """Power-method settings; command-line flags override these."""
    k = forms.IntegerField(min_value=1, required=False)
    L = forms.IntegerField(min_value=1, required=False)
    N = forms.IntegerField(min_value=1, required=False)
    s_bar = forms.IntegerField(min_value=1, required=False)
    dedup_radius = forms.FloatField(min_value=0.0, required=False)
    operator = forms.ChoiceField(choices=OPERATOR_CHOICES, required=False)
    seed = forms.IntegerField(min_value=0, max_value=MAX_SEED, required=False)


class ExperimentPlanForm(JSONConfigForm):
    model_kind = forms.ChoiceField(choices=ModelKind.choices)
    link = forms.ChoiceField(choices=LINK_CHOICES, required=False)
    link_list = forms.MultipleChoiceField(choices=LINK_CHOICES, required=False)
    d = forms.IntegerField(min_value=1)
    k_list = IntegerListField(min_value=1)
    n_list = IntegerListField(min_value=1)
    trials = forms.IntegerField(min_value=1, required=False)
    L = forms.IntegerField(min_value=1)
    N = forms.IntegerField(min_value=1)
    base_seed = forms.IntegerField(min_value=0, max_value=MAX_SEED, required=False)
    output = forms.CharField(required=False)
    jobs = forms.IntegerField(min_value=1, required=False)
    s = forms.IntegerField(min_value=1, required=False)
    s_list = IntegerListField(min_value=1, required=False)
    s_bar = forms.IntegerField(min_value=1, required=False)
    kappa = forms.FloatField(min_value=0.0, required=False)
    noise_sd = forms.FloatField(min_value=0.0, required=False)
    operator = forms.ChoiceField(choices=OPERATOR_CHOICES, required=False)

    def clean(self):
        cleaned_data = super().clean()
        if not cleaned_data.get('link') and not cleaned_data.get('link_list'):
            self.add_error('link', "give link or link_list.")
        if cleaned_data.get('s') is None and not cleaned_data.get('s_list') and cleaned_data.get('s_bar') is not None:
            self.add_error('s_bar', "s_bar needs s or s_list.")
        if not self.errors:
            try:
                self.to_plan()
            except ValidationError as e:
                self.add_error(None, e)
        return cleaned_data

    def to_plan(self, **overrides):
        c = self.cleaned_data
        plan = dict(
            model_kind=c['model_kind'],
            link=c.get('link') or None,
            link_list=tuple(c.get('link_list') or ()) or None,
            d=c['d'],
            k_list=c['k_list'],
            n_list=c['n_list'],
            trials=self.value('trials', settings.AIM_DEFAULT_TRIALS),
            L=c['L'],
            N=c['N'],
            base_seed=self.value('base_seed', 0),
            output=c.get('output') or None,
            jobs=self.value('jobs', settings.AIM_JOBS),
            s=c.get('s'),
            s_list=c.get('s_list') or None,
            s_bar=c.get('s_bar'),
            kappa=self.value('kappa', DEFAULT_KAPPA),
            noise_sd=c.get('noise_sd'),
            operator=self.value('operator', 'implicit'),
            record_wall_time=settings.AIM_RECORD_WALL_TIME,
        )
        plan.update({key: value for key, value in overrides.items() if value is not None})
        return ExperimentPlan(**plan)


class ConcentrationForm(JSONConfigForm):
    d_list = IntegerListField(min_value=1)
    n_list = IntegerListField(min_value=1)
    trials = forms.IntegerField(min_value=1, required=False)
    base_seed = forms.IntegerField(min_value=0, max_value=MAX_SEED, required=False)
    r = forms.IntegerField(min_value=1, required=False)
    model_kind = forms.ChoiceField(choices=ModelKind.choices, required=False)
    link = forms.ChoiceField(choices=LINK_CHOICES, required=False)
    k = forms.IntegerField(min_value=1, required=False)
    kappa = forms.FloatField(min_value=0.0, required=False)
    noise_sd = forms.FloatField(min_value=0.0, required=False)
    restarts = forms.IntegerField(min_value=1, required=False)
    iters = forms.IntegerField(min_value=1, required=False)

    def clean_d_list(self):
        d_list = self.cleaned_data['d_list']
        limit = settings.AIM_CONCENTRATION_MAX_D
        if any(d > limit for d in d_list):
            raise ValidationError(f"dense moment tensors are limited to d <= {limit} here.")
        return d_list

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            try:
                self.to_plan()
            except ValidationError as e:
                self.add_error(None, e)
        return cleaned_data

    def to_plan(self, **overrides):
        c = self.cleaned_data
        plan = dict(
            d_list=c['d_list'],
            n_list=c['n_list'],
            trials=self.value('trials', settings.AIM_DEFAULT_TRIALS),
            base_seed=self.value('base_seed', 0),
            r=c.get('r'),
            model_kind=self.value('model_kind', ModelKind.DISCORDANT.value),
            link=self.value('link', LinkKind.CUBIC.value),
            k=self.value('k', 1),
            kappa=self.value('kappa', DEFAULT_KAPPA),
            noise_sd=c.get('noise_sd'),
            restarts=c.get('restarts'),
            iters=c.get('iters'),
        )
        plan.update({key: value for key, value in overrides.items() if value is not None})
        return ConcentrationPlan(**plan)
