import csv
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from waterclust.data import (  # noqa: E402
    CATEGORICAL,
    FILTERED,
    NUMERIC,
    Attribute,
    AttributeSchema,
    Dataset,
    Record,
)
from waterclust.synthetic import fixture_path  # noqa: E402


@pytest.fixture
def fixture_csv():
    return Path(str(fixture_path()))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def make_dataset(columns, kinds, ratio=()):
    """Filtered dataset from column lists; ranges and categories observed."""
    n = len(columns[0])
    attrs = []
    for j, (col, kind) in enumerate(zip(columns, kinds)):
        name = f"a{j}"
        if kind == NUMERIC:
            rng = (0.0, 1.0) if name in ratio else (float(min(col)), float(max(col)))
            attrs.append(Attribute(name, NUMERIC, range=rng))
        else:
            attrs.append(Attribute(name, CATEGORICAL, categories=tuple(sorted(set(col)))))
    records = tuple(
        Record(str(i), tuple(c[i] for c in columns)) for i in range(n)
    )
    return Dataset(AttributeSchema(tuple(attrs)), records, FILTERED,
                   ratio_attributes=frozenset(ratio))


def random_mixed(rng, n, n_num=2, n_cat=2, levels=3, continuous=False):
    columns, kinds = [], []
    for _ in range(n_num):
        values = rng.uniform(0, 5, n) if continuous else rng.integers(0, 6, n)
        columns.append([float(v) for v in values])
        kinds.append(NUMERIC)
    for _ in range(n_cat):
        columns.append([f"v{v}" for v in rng.integers(0, levels, n)])
        kinds.append(CATEGORICAL)
    return columns, kinds


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
