"""CSV and JSON files for datasets and their ground truth."""
import csv
import json
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from .generators import gamma_coefficients, incoherence
from .specs import Dataset, LinkSpec, ModelSpec, ParamSet


class DatasetFormatError(ValueError):
    pass


def format_float(value):
    # 17 significant digits round-trip every double exactly
    return format(float(value), '.17g')


def dataset_header(d):
    return [f'x_{i}' for i in range(1, d + 1)] + ['y']


def write_dataset(data, path):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(dataset_header(data.d))
        for row, y in zip(data.X, data.y):
            writer.writerow([format_float(v) for v in row] + [format_float(y)])


def read_dataset(path):
    try:
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetFormatError(f"cannot read {path}: {e}") from e
    if not rows:
        raise DatasetFormatError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    if d < 1 or header != dataset_header(d):
        raise DatasetFormatError(f"{path}: header must be x_1,...,x_d,y")
    if not body:
        raise DatasetFormatError(f"{path} has no observations")
    for line, row in enumerate(body, start=2):
        if not row:
            raise DatasetFormatError(f"{path}: line {line} is blank")
        if len(row) != d + 1:
            raise DatasetFormatError(f"{path}: line {line} has {len(row)} fields, expected {d + 1}")
    try:
        values = np.array([[float(v) for v in row] for row in body])
    except ValueError as e:
        raise DatasetFormatError(f"{path}: non-numeric entry ({e})") from e
    try:
        return Dataset(values[:, :d], values[:, d])
    except ValidationError as e:
        raise DatasetFormatError(f"{path}: {' '.join(e.messages)}") from e


def truth_path(dataset_path):
    path = Path(dataset_path)
    return path.with_name(path.name + '.truth.json')


def write_truth(spec, params, path, seed=None):
    truth = {
        'model_kind': spec.model_kind.value,
        'd': spec.d,
        'k': spec.k,
        'links': [str(link) for link in spec.links],
        'noise_sd': spec.noise_sd,
        'weights': list(spec.population_weights()),
        'gammas': list(gamma_coefficients(spec)),
        's': params.s,
        'psi': incoherence(params),
        'seed': seed,
        'B': params.B.T.tolist(),
    }
    with open(path, 'w') as f:
        json.dump(truth, f, indent=2, sort_keys=True)
        f.write('\n')


def read_truth(path):
    """Return the ``(ModelSpec, ParamSet)`` stored in a truth sidecar."""
    with open(path) as f:
        truth = json.load(f)
    weights = truth['weights'] if truth['model_kind'] == 'mixture' else None
    spec = ModelSpec(
        truth['model_kind'], truth['d'], truth['k'],
        tuple(LinkSpec.parse(name) for name in truth['links']),
        truth['noise_sd'], weights,
    )
    return spec, ParamSet(np.array(truth['B']).T, s=truth['s'])
