"""Attack suite for robustness evaluation.

Every attack is a pure, seeded function of the input table: cell-level
noise (Gaussian / uniform / Laplace with matched standard deviation),
categorical alteration, row deletion / duplication, an adaptive attacker
that reclusters the table itself and deletes from suspected template
clusters, and latent-space regeneration through an attacker-fitted
encoder and PCA basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clusterspace import FeatureEncoder, PcaBasis, _nearest, histogram_of, kmeans_fit
from .errors import ValidationError
from .synthesizer import merge_columns, split_columns
from .tableio import CATEGORICAL, NUMERICAL, Table
from .template import select_template_clusters

ATTACK_KINDS = (
    "perturb_gaussian",
    "perturb_uniform",
    "perturb_laplace",
    "alter",
    "delete",
    "insert",
    "adaptive_delete",
    "regenerate",
)

_PERTURB_KINDS = ("perturb_gaussian", "perturb_uniform", "perturb_laplace")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    intensity: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValidationError(f"unknown attack kind {self.kind!r}")
        if not 0 <= self.intensity < 1:
            raise ValidationError("intensity must be in [0,1)")


def _perturb(num: np.ndarray, kind: str, intensity: float, rng: np.random.Generator) -> np.ndarray:
    # per-cell noise sd = intensity * min(|cell|, column sd)
    col_sd = num.std(axis=0)
    sd = intensity * np.minimum(np.abs(num), col_sd)
    if kind == "perturb_gaussian":
        noise = rng.standard_normal(num.shape) * sd
    elif kind == "perturb_uniform":
        half = sd * np.sqrt(3.0)  # uniform on [-half, half] has sd `sd`
        noise = rng.uniform(-1.0, 1.0, size=num.shape) * half
    else:
        scale = sd / np.sqrt(2.0)  # Laplace(scale) has sd scale*sqrt(2)
        noise = rng.laplace(0.0, 1.0, size=num.shape) * scale
    return num + noise


def _alter(cats: np.ndarray, domain_sizes: list[int], intensity: float, rng: np.random.Generator) -> np.ndarray:
    out = cats.copy()
    n = len(out)
    for j, size in enumerate(domain_sizes):
        if size < 2:
            continue
        flip = rng.random(n) < intensity
        if not flip.any():
            continue
        # uniform over the OTHER values: add 1..size-1 modulo size
        shift = rng.integers(1, size, size=int(flip.sum()))
        out[flip, j] = (out[flip, j] + shift) % size
    return out


def _adaptive_delete(table: Table, intensity: float, M: int, L: int, rng: np.random.Generator) -> Table:
    encoder = FeatureEncoder.fit(table)
    basis = PcaBasis.fit(encoder.encode(table), target=0.99)
    latents = basis.project(encoder.encode(table))
    seed = int(rng.integers(0, 2**32))
    centroids = kmeans_fit(latents, M, seed=seed)
    assign = _nearest(latents, centroids)
    h = histogram_of(assign, M)
    selected = select_template_clusters(h, L)
    chosen = rng.choice(np.asarray(selected), size=L, replace=False)
    pool = np.flatnonzero(np.isin(assign, chosen))
    n_del = int(np.floor(intensity * len(table)))
    n_del = min(n_del, len(pool))
    victims = rng.choice(pool, size=n_del, replace=False) if n_del else np.array([], dtype=int)
    keep = np.setdiff1d(np.arange(len(table)), victims)
    return Table(schema=table.schema, rows=tuple(table.rows[i] for i in keep))


def _regenerate(table: Table, intensity: float, rng: np.random.Generator) -> Table:
    encoder = FeatureEncoder.fit(table)
    features = encoder.encode(table)
    basis = PcaBasis.fit(features, target=0.99)
    latents = basis.project(features)
    noisy = latents * (1.0 + intensity * rng.standard_normal(latents.shape))
    recon = noisy @ basis.components + basis.mean
    num_cols = [c for c in table.schema.columns if c.kind == NUMERICAL]
    n = len(table)
    num = np.zeros((n, len(num_cols)))
    cats = np.zeros((n, len(table.schema.columns) - len(num_cols)), dtype=np.int64)
    pos = 0
    num_i = 0
    cat_i = 0
    for col in table.schema.columns:
        if col.kind == NUMERICAL:
            num[:, num_i] = recon[:, pos] * encoder.stds[num_i] + encoder.means[num_i]
            pos += 1
            num_i += 1
        else:
            block = recon[:, pos : pos + len(col.domain)]
            cats[:, cat_i] = np.argmax(block, axis=1)
            pos += len(col.domain)
            cat_i += 1
    return merge_columns(table.schema, num, cats)


def apply_attack(table: Table, spec: AttackSpec, M: int = 0, L: int = 0) -> Table:
    rng = np.random.default_rng(spec.seed)
    n = len(table)
    has_num = any(c.kind == NUMERICAL for c in table.schema.columns)
    has_cat = any(c.kind == CATEGORICAL for c in table.schema.columns)

    if spec.kind in _PERTURB_KINDS:
        if not has_num:
            raise ValidationError("perturbation requires numerical columns")
        num, cats = split_columns(table)
        return merge_columns(table.schema, _perturb(num, spec.kind, spec.intensity, rng), cats)

    if spec.kind == "alter":
        if not has_cat:
            raise ValidationError("alteration requires categorical columns")
        num, cats = split_columns(table)
        sizes = [len(c.domain) for c in table.schema.columns if c.kind == CATEGORICAL]
        return merge_columns(table.schema, num, _alter(cats, sizes, spec.intensity, rng))

    if spec.kind == "delete":
        n_del = int(np.floor(spec.intensity * n))
        keep = np.sort(rng.choice(n, size=n - n_del, replace=False))
        return Table(schema=table.schema, rows=tuple(table.rows[i] for i in keep))

    if spec.kind == "insert":
        n_ins = int(np.floor(spec.intensity * n))
        picks = rng.integers(0, n, size=n_ins)
        return Table(schema=table.schema, rows=table.rows + tuple(table.rows[i] for i in picks))

    if spec.kind == "adaptive_delete":
        if M < 2 * L or L < 1:
            raise ValidationError("adaptive_delete requires M >= 2L >= 2")
        return _adaptive_delete(table, spec.intensity, M, L, rng)

    if spec.kind == "regenerate":
        return _regenerate(table, spec.intensity, rng)

    raise ValidationError(f"unknown attack kind {spec.kind!r}")
