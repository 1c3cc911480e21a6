"""Per-cluster empirical resampler used to materialize watermarked tables.

Rows for cluster j are drawn with replacement from the original rows that
landed in cluster j, with Gaussian jitter on numerical cells (sd =
sigma_jit * column sd). Categorical cells are never touched, so every
categorical sub-tuple of an emitted row exists in the original table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clusterspace import ClusterModel, assign_clusters
from .errors import ArtifactIOError, ValidationError
from .tableio import CATEGORICAL, NUMERICAL, Table

FORMAT_TAG = "tablemark-sampler-v1"


def split_columns(table: Table) -> tuple[np.ndarray, np.ndarray]:
    """(numerical matrix, categorical code matrix) in schema column order."""
    num_idx = table.schema.numerical_indices()
    cat_idx = table.schema.categorical_indices()
    n = len(table)
    num = np.empty((n, len(num_idx)))
    for j, cidx in enumerate(num_idx):
        num[:, j] = [r[cidx] for r in table.rows]
    cats = np.empty((n, len(cat_idx)), dtype=np.int64)
    for j, cidx in enumerate(cat_idx):
        index = {v: k for k, v in enumerate(table.schema.columns[cidx].domain)}
        cats[:, j] = [index[r[cidx]] for r in table.rows]
    return num, cats


def merge_columns(schema, num: np.ndarray, cats: np.ndarray) -> Table:
    num_idx = schema.numerical_indices()
    cat_idx = schema.categorical_indices()
    n = len(num) if len(num_idx) else len(cats)
    cells: list = [None] * len(schema.columns)
    for j, cidx in enumerate(num_idx):
        cells[cidx] = [float(v) for v in num[:, j]]
    for j, cidx in enumerate(cat_idx):
        domain = schema.columns[cidx].domain
        cells[cidx] = [domain[int(c)] for c in cats[:, j]]
    rows = tuple(tuple(col[i] for col in cells) for i in range(n))
    return Table(schema=schema, rows=rows)


@dataclass
class ConditionalSampler:
    schema: object
    pools: list[np.ndarray]  # per-cluster row indices into the original table
    num: np.ndarray  # raw numerical matrix of the original table
    cats: np.ndarray  # categorical code matrix of the original table
    num_sds: np.ndarray  # per numerical column sd of the original table
    sigma_jit: float
    seed: int

    def sample_matrices(self, x, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw per-cluster rows for histogram x; returns shuffled matrices.

        Each cluster consumes its own random substream keyed by (seed, j),
        so cluster j's rows depend only on (seed, x_j). Two histograms
        sampled with the same seed therefore share rows wherever their
        counts agree (common random numbers), instead of desynchronizing
        every later cluster after the first count difference.
        """
        x = np.asarray(x, dtype=np.int64)
        if len(x) != len(self.pools):
            raise ValidationError("histogram length does not match cluster count")
        if x.sum() <= 0:
            raise ValidationError("histogram must have positive total count")
        nums = []
        cat_parts = []
        for j, count in enumerate(x):
            if count <= 0:
                continue
            rng_pick = np.random.default_rng((seed, j, 0))
            idx = self.pools[j][rng_pick.integers(0, len(self.pools[j]), size=count)]
            block = self.num[idx].copy()
            if self.sigma_jit > 0 and block.shape[1]:
                rng_jit = np.random.default_rng((seed, j, 1))
                block += rng_jit.normal(0.0, 1.0, size=block.shape) * (self.sigma_jit * self.num_sds)
            nums.append(block)
            cat_parts.append(self.cats[idx])
        num = np.concatenate(nums)
        cats = np.concatenate(cat_parts)
        perm = np.random.default_rng((seed, len(self.pools), 2)).permutation(len(num))
        return num[perm], cats[perm]


def fit_sampler(table_o: Table, model: ClusterModel, sigma_jit: float = 0.02, seed: int = 0) -> ConditionalSampler:
    if sigma_jit < 0:
        raise ValidationError("sigma_jit must be >= 0")
    assignments = assign_clusters(model, table_o)
    pools = [np.flatnonzero(assignments == j) for j in range(model.M)]
    if any(len(p) == 0 for p in pools):
        raise ValidationError("every cluster pool must be non-empty")
    num, cats = split_columns(table_o)
    num_sds = num.std(axis=0) if num.shape[1] else np.empty(0)
    return ConditionalSampler(
        schema=table_o.schema,
        pools=pools,
        num=num,
        cats=cats,
        num_sds=num_sds,
        sigma_jit=sigma_jit,
        seed=seed,
    )


def synthesize(sampler: ConditionalSampler, x, seed: int | None = None) -> Table:
    num, cats = sampler.sample_matrices(x, sampler.seed if seed is None else seed)
    return merge_columns(sampler.schema, num, cats)


def save_sampler(sampler: ConditionalSampler, path: str | Path) -> None:
    obj = {
        "format": FORMAT_TAG,
        "sigma_jit": sampler.sigma_jit,
        "seed": sampler.seed,
        "pools": [p.tolist() for p in sampler.pools],
    }
    try:
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"cannot write sampler {path}: {e}") from e


def load_sampler(path: str | Path, table_o: Table) -> ConditionalSampler:
    """Rehydrate a sampler from its artifact plus the original table."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read sampler {path}: {e}") from e
    if obj.get("format") != FORMAT_TAG:
        raise ValidationError(f"unexpected sampler format tag: {obj.get('format')!r}")
    num, cats = split_columns(table_o)
    num_sds = num.std(axis=0) if num.shape[1] else np.empty(0)
    return ConditionalSampler(
        schema=table_o.schema,
        pools=[np.array(p, dtype=np.int64) for p in obj["pools"]],
        num=num,
        cats=cats,
        num_sds=num_sds,
        sigma_jit=obj["sigma_jit"],
        seed=obj["seed"],
    )
