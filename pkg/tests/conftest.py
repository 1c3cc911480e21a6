import numpy as np
import pytest

from tablemark.desk import make_desk_table
from tablemark.tableio import CATEGORICAL, NUMERICAL, Column, Table, TableSchema


@pytest.fixture(scope="session")
def small_desk():
    return make_desk_table(n_rows=2000, seed=7)


@pytest.fixture
def tiny_schema():
    return TableSchema(
        columns=(
            Column(name="x", kind=NUMERICAL),
            Column(name="y", kind=NUMERICAL),
            Column(name="c", kind=CATEGORICAL, domain=("a", "b", "c")),
        )
    )


@pytest.fixture
def tiny_table(tiny_schema):
    rng = np.random.default_rng(0)
    rows = []
    for _ in range(60):
        rows.append((float(rng.normal()), float(rng.normal(5.0)), ("a", "b", "c")[rng.integers(0, 3)]))
    return Table(schema=tiny_schema, rows=tuple(rows))
