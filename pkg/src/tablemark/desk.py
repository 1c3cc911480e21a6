"""Seeded synthetic benchmark dataset ("desk" dataset).

A mixed-type table drawn from a 6-component Gaussian mixture: five
numerical columns with component-specific means and scales, plus three
categorical columns (3, 5, and 8 values) whose distributions are
correlated with the mixture component. Fully deterministic under seed.
"""

from __future__ import annotations

import numpy as np

from .tableio import CATEGORICAL, NUMERICAL, Column, Table, TableSchema

N_COMPONENTS = 6
NUM_COLS = 5
CAT_SIZES = (3, 5, 8)


def desk_schema() -> TableSchema:
    cols = [Column(name=f"num{i}", kind=NUMERICAL) for i in range(NUM_COLS)]
    for j, size in enumerate(CAT_SIZES):
        domain = tuple(f"c{j}_{v}" for v in range(size))
        cols.append(Column(name=f"cat{j}", kind=CATEGORICAL, domain=domain))
    return TableSchema(columns=tuple(cols))


def make_desk_table(n_rows: int = 20_000, seed: int = 7) -> Table:
    rng = np.random.default_rng(seed)
    schema = desk_schema()

    means = rng.uniform(-10.0, 10.0, size=(N_COMPONENTS, NUM_COLS))
    scales = rng.uniform(0.5, 2.0, size=(N_COMPONENTS, NUM_COLS))
    weights = rng.dirichlet(np.full(N_COMPONENTS, 5.0))

    # each categorical column concentrates on a component-dependent value
    cat_probs = []
    for size in CAT_SIZES:
        probs = np.full((N_COMPONENTS, size), 1.0)
        for comp in range(N_COMPONENTS):
            probs[comp, comp % size] += 4.0 * size / 3.0
        probs /= probs.sum(axis=1, keepdims=True)
        cat_probs.append(probs)

    comps = rng.choice(N_COMPONENTS, size=n_rows, p=weights)
    num = means[comps] + scales[comps] * rng.standard_normal((n_rows, NUM_COLS))
    cats = np.zeros((n_rows, len(CAT_SIZES)), dtype=np.int64)
    for j, size in enumerate(CAT_SIZES):
        u = rng.random(n_rows)
        cdf = np.cumsum(cat_probs[j], axis=1)
        cats[:, j] = (u[:, None] > cdf[comps]).sum(axis=1)

    rows = []
    cat_domains = [schema.columns[NUM_COLS + j].domain for j in range(len(CAT_SIZES))]
    for i in range(n_rows):
        row = [float(num[i, k]) for k in range(NUM_COLS)]
        row.extend(cat_domains[j][cats[i, j]] for j in range(len(CAT_SIZES)))
        rows.append(tuple(row))
    return Table(schema=schema, rows=tuple(rows))
