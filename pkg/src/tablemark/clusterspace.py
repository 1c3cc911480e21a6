"""Deterministic tuple encoding, PCA, K-means clustering, and histograms.

Rows are embedded by z-scoring numerical columns and one-hot encoding
categorical columns (scaled by 1/sqrt(2) so a single category flip has a
norm comparable to a one-sd numeric shift), then projected onto a PCA
basis retaining a target fraction of variance. Clustering is seeded
k-means++ followed by Lloyd iterations in PCA space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, ValidationError
from .tableio import CATEGORICAL, NUMERICAL, Table, TableSchema

FORMAT_TAG = "tablemark-cluster-model-v1"

_ONE_HOT_SCALE = 1.0 / np.sqrt(2.0)
_KMEANS_TOL = 1e-6
_KMEANS_MAX_ITER = 300
_ASSIGN_CHUNK = 2048


@dataclass(frozen=True)
class FeatureEncoder:
    schema: TableSchema
    means: tuple[float, ...]  # per numerical column, in schema order
    stds: tuple[float, ...]  # constant columns use sd = 1
    d_raw: int

    def encode(self, table: Table) -> np.ndarray:
        if table.schema != self.schema:
            raise ValidationError("table schema does not match encoder schema")
        n = len(table)
        out = np.zeros((n, self.d_raw))
        rows = table.rows
        pos = 0
        num_i = 0
        for cidx, col in enumerate(self.schema.columns):
            if col.kind == NUMERICAL:
                vals = np.array([r[cidx] for r in rows], dtype=float)
                out[:, pos] = (vals - self.means[num_i]) / self.stds[num_i]
                pos += 1
                num_i += 1
            else:
                index = {v: j for j, v in enumerate(col.domain)}
                idx = np.array([index[r[cidx]] for r in rows], dtype=int)
                out[np.arange(n), pos + idx] = _ONE_HOT_SCALE
                pos += len(col.domain)
        return out

    def encode_arrays(self, num: np.ndarray, cats: np.ndarray) -> np.ndarray:
        """Encode pre-split column matrices (see synthesizer.split_columns)."""
        n = len(num) if num.shape[1] else len(cats)
        out = np.zeros((n, self.d_raw))
        pos = 0
        num_i = 0
        cat_i = 0
        for col in self.schema.columns:
            if col.kind == NUMERICAL:
                out[:, pos] = (num[:, num_i] - self.means[num_i]) / self.stds[num_i]
                pos += 1
                num_i += 1
            else:
                out[np.arange(n), pos + cats[:, cat_i]] = _ONE_HOT_SCALE
                pos += len(col.domain)
                cat_i += 1
        return out

    @classmethod
    def fit(cls, table: Table) -> "FeatureEncoder":
        means, stds = [], []
        d_raw = 0
        for cidx, col in enumerate(table.schema.columns):
            if col.kind == NUMERICAL:
                vals = np.array([r[cidx] for r in table.rows], dtype=float)
                mu = float(vals.mean())
                sd = float(vals.std())
                means.append(mu)
                stds.append(sd if sd > 0 else 1.0)
                d_raw += 1
            else:
                d_raw += len(col.domain)
        return cls(schema=table.schema, means=tuple(means), stds=tuple(stds), d_raw=d_raw)


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray  # (d_raw,)
    components: np.ndarray  # (d, d_raw), orthonormal rows
    explained: tuple[float, ...]  # variance fraction per retained component
    target: float

    def project(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) @ self.components.T

    @classmethod
    def fit(cls, features: np.ndarray, target: float) -> "PcaBasis":
        mean = features.mean(axis=0)
        centered = features - mean
        # SVD of the centered matrix; deterministic sign convention
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        var = s**2 / max(len(features) - 1, 1)
        total = var.sum()
        if total <= 0:
            return cls(mean=mean, components=vt[:1].copy(), explained=(1.0,), target=target)
        frac = var / total
        cum = np.cumsum(frac)
        d = int(np.searchsorted(cum, target - 1e-12) + 1)
        d = min(d, len(frac))
        comps = vt[:d].copy()
        # fix sign: largest-magnitude coefficient of each component positive
        for i in range(d):
            j = int(np.argmax(np.abs(comps[i])))
            if comps[i, j] < 0:
                comps[i] = -comps[i]
        return cls(mean=mean, components=comps, explained=tuple(float(f) for f in frac[:d]), target=target)


@dataclass(frozen=True)
class ClusterModel:
    encoder: FeatureEncoder
    basis: PcaBasis
    centroids: np.ndarray  # (M, d)
    M: int
    h: np.ndarray  # original histogram, (M,) ints
    seed: int

    def embed(self, table: Table) -> np.ndarray:
        return self.basis.project(self.encoder.encode(table))


def _nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the closest centroid per point; ties break to the lowest index."""
    n = len(points)
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, _ASSIGN_CHUNK):
        chunk = points[start : start + _ASSIGN_CHUNK]
        diff = chunk[:, None, :] - centroids[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[start : start + _ASSIGN_CHUNK] = np.argmin(d2, axis=1)
    return out


def _kmeans_pp_init(points: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((M, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, M):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def _repair_empty(points, centroids, assign, counts):
    """Re-seed each empty cluster with the farthest point of the largest cluster."""
    for k in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(assign == big)
        if len(members) < 2:
            return False
        d2 = np.sum((points[members] - centroids[big]) ** 2, axis=1)
        far = members[int(np.argmax(d2))]
        centroids[k] = points[far]
        assign[far] = k
        counts[big] -= 1
        counts[k] += 1
    return True


def kmeans_fit(points: np.ndarray, M: int, seed: int, max_iter: int = _KMEANS_MAX_ITER) -> np.ndarray:
    """Seeded k-means++ plus Lloyd iterations; returns centroids."""
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, M, rng)
    for _ in range(max_iter):
        assign = _nearest(points, centroids)
        counts = np.bincount(assign, minlength=M)
        if np.any(counts == 0):
            if not _repair_empty(points, centroids, assign, counts):
                raise ValidationError("cannot repair empty cluster: not enough points")
            counts = np.bincount(assign, minlength=M)
        new = np.zeros_like(centroids)
        np.add.at(new, assign, points)
        new /= counts[:, None]
        shift = float(np.sqrt(np.sum((new - centroids) ** 2, axis=1)).max())
        centroids = new
        if shift < _KMEANS_TOL:
            break
    counts = np.bincount(_nearest(points, centroids), minlength=M)
    if np.any(counts == 0):
        raise ValidationError("empty cluster after convergence")
    return centroids


def fit_cluster_model(table: Table, M: int, variance_target: float = 0.99, seed: int = 0) -> ClusterModel:
    if M < 2:
        raise ValidationError("M must be >= 2")
    if len(table) == 0:
        raise ValidationError("cannot fit on an empty table")
    if M > len(table):
        raise ValidationError(f"M={M} exceeds row count {len(table)}")
    encoder = FeatureEncoder.fit(table)
    features = encoder.encode(table)
    basis = PcaBasis.fit(features, variance_target)
    points = basis.project(features)
    distinct = len(np.unique(points, axis=0))
    if M > distinct:
        raise ValidationError(f"M={M} exceeds the {distinct} distinct encoded points")
    centroids = kmeans_fit(points, M, seed)
    h = np.bincount(_nearest(points, centroids), minlength=M)
    return ClusterModel(encoder=encoder, basis=basis, centroids=centroids, M=M, h=h, seed=seed)


def assign_clusters(model: ClusterModel, table: Table) -> np.ndarray:
    if table.schema != model.encoder.schema:
        raise ValidationError("table schema does not match model schema")
    return _nearest(model.embed(table), model.centroids)


def assign_points(model: ClusterModel, points: np.ndarray) -> np.ndarray:
    return _nearest(points, model.centroids)


def histogram_of(assignments, M: int) -> np.ndarray:
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.size and (assignments.min() < 0 or assignments.max() >= M):
        raise ValidationError("cluster index out of range")
    return np.bincount(assignments, minlength=M)


def save_cluster_model(model: ClusterModel, path: str | Path) -> None:
    obj = {
        "format": FORMAT_TAG,
        "seed": model.seed,
        "M": model.M,
        "schema": model.encoder.schema.to_json_obj(),
        "encoder": {"means": list(model.encoder.means), "stds": list(model.encoder.stds), "d_raw": model.encoder.d_raw},
        "pca": {
            "mean": model.basis.mean.tolist(),
            "components": model.basis.components.tolist(),
            "explained": list(model.basis.explained),
            "target": model.basis.target,
        },
        "centroids": model.centroids.tolist(),
        "h": model.h.tolist(),
    }
    try:
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"cannot write cluster model {path}: {e}") from e


def load_cluster_model(path: str | Path) -> ClusterModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read cluster model {path}: {e}") from e
    if obj.get("format") != FORMAT_TAG:
        raise ValidationError(f"unexpected cluster-model format tag: {obj.get('format')!r}")
    schema = TableSchema.from_json_obj(obj["schema"])
    encoder = FeatureEncoder(
        schema=schema,
        means=tuple(obj["encoder"]["means"]),
        stds=tuple(obj["encoder"]["stds"]),
        d_raw=obj["encoder"]["d_raw"],
    )
    basis = PcaBasis(
        mean=np.array(obj["pca"]["mean"]),
        components=np.array(obj["pca"]["components"]),
        explained=tuple(obj["pca"]["explained"]),
        target=obj["pca"]["target"],
    )
    return ClusterModel(
        encoder=encoder,
        basis=basis,
        centroids=np.array(obj["centroids"]),
        M=obj["M"],
        h=np.array(obj["h"], dtype=np.int64),
        seed=obj["seed"],
    )
