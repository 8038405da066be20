import csv

from simulation.io import format_float


def write_tensor(T, path):
    """One row ``i,j,k,value`` per entry with i <= j <= k (0-based indices)."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['i', 'j', 'k', 'value'])
        for i, j, k, value in T.unique_entries():
            writer.writerow([i, j, k, format_float(value)])


def component_header(d):
    return ['component_index', 'weight'] + [f'v_{i}' for i in range(1, d + 1)] + ['exhausted']


def write_components(result, d, path):
    exhausted = 'true' if result.exhausted else 'false'
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(component_header(d))
        for index, (v, weight) in enumerate(zip(result.components, result.weights), start=1):
            writer.writerow([index, format_float(weight)] + [format_float(x) for x in v] + [exhausted])
