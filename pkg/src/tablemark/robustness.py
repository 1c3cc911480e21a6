"""Attack-aware error model for the cluster histogram channel.

Estimates the cluster-transition matrix and adaptive-deletion
probabilities under the configured attack-intensity thresholds, derives
the bit-error-rate ceiling from the false-negative target, folds
everything into per-bit linear coefficients, and emits the constraint set
the histogram optimizer must satisfy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from .clusterspace import ClusterModel, assign_points, kmeans_fit
from .errors import ArtifactIOError, ValidationError
from .synthesizer import ConditionalSampler
from .template import WatermarkTemplate

FORMAT_TAG = "tablemark-robustness-v1"

DELTA_BER_FLOOR = 1e-12
DELTA_BER_CAP = 0.5 - 1e-12
EPS_STRICT = 1e-9


@dataclass(frozen=True)
class RobustnessParams:
    delta_fpr: float = 1e-3
    delta_fnr: float = 1e-3
    i_per: float = 0.01
    i_alt: float = 0.01
    i_del: float = 0.1
    T: int = 2048
    eta: float = 0.01
    xi: float = 0.05
    deletion_sims: int = 50

    def __post_init__(self):
        for name in ("delta_fpr", "delta_fnr"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must be in (0,1)")
        for name in ("i_per", "i_alt", "i_del"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValidationError(f"{name} must be in [0,1)")
        if self.T < 1:
            raise ValidationError("T must be >= 1")


def required_samples(eta: float, xi: float, M: int) -> int:
    """Hoeffding sample bound T >= ln(2M/xi) / (2 eta^2) per cluster."""
    if not 0 < eta < 1 or not 0 < xi < 1:
        raise ValidationError("eta and xi must be in (0,1)")
    return math.ceil(math.log(2 * M / xi) / (2 * eta * eta))


@dataclass(frozen=True)
class DeletionProbs:
    q_in: float
    q_out: float
    template_clusters: frozenset[int]

    def q_vector(self, M: int) -> np.ndarray:
        q = np.full(M, self.q_out)
        for k in self.template_clusters:
            q[k] = self.q_in
        return q


def perturb_numeric(num: np.ndarray, col_sds: np.ndarray, intensity: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise, sd = intensity * min(|cell|, column sd), per cell."""
    if intensity <= 0 or num.shape[1] == 0:
        return num
    sd = intensity * np.minimum(np.abs(num), col_sds)
    return num + rng.normal(0.0, 1.0, size=num.shape) * sd


def alter_categorical_uniform(cats: np.ndarray, domain_sizes, intensity: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each cell with probability `intensity` to a uniform domain value."""
    if intensity <= 0 or cats.shape[1] == 0:
        return cats
    out = cats.copy()
    for j, size in enumerate(domain_sizes):
        flip = rng.random(len(cats)) < intensity
        out[flip, j] = rng.integers(0, size, size=int(flip.sum()))
    return out


def estimate_transition_matrix(
    model: ClusterModel,
    sampler: ConditionalSampler,
    T: int,
    i_per: float,
    i_alt: float,
    seed: int = 0,
) -> np.ndarray:
    """Row-stochastic confusion matrix of ground-truth vs predicted clusters.

    For each cluster, T tuples are drawn from the synthesizer, perturbed
    per the intensity thresholds, and reassigned through the decoder's
    cluster-assignment path.
    """
    if T <= 0:
        raise ValidationError("T must be positive")
    rng = np.random.default_rng(seed)
    M = model.M
    domain_sizes = [len(model.encoder.schema.columns[i].domain) for i in model.encoder.schema.categorical_indices()]
    P = np.zeros((M, M))
    for k in range(M):
        pool = sampler.pools[k]
        idx = pool[rng.integers(0, len(pool), size=T)]
        num = sampler.num[idx].copy()
        cats = sampler.cats[idx]
        if sampler.sigma_jit > 0 and num.shape[1]:
            num += rng.normal(0.0, 1.0, size=num.shape) * (sampler.sigma_jit * sampler.num_sds)
        num = perturb_numeric(num, sampler.num_sds, i_per, rng)
        cats = alter_categorical_uniform(cats, domain_sizes, i_alt, rng)
        points = model.basis.project(model.encoder.encode_arrays(num, cats))
        pred = assign_points(model, points)
        P[k] = np.bincount(pred, minlength=M) / T
    return P


def validate_transition_matrix(P: np.ndarray) -> None:
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValidationError("transition matrix must be square")
    if np.any(P < 0) or np.any(P > 1):
        raise ValidationError("transition entries must lie in [0,1]")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-9:
        raise ValidationError("transition rows must sum to 1")


def estimate_deletion_probs(
    points: np.ndarray,
    owner_assignments: np.ndarray,
    template: WatermarkTemplate,
    h: np.ndarray,
    M: int,
    i_del: float,
    sims: int,
    seed: int = 0,
    attacker_kmeans_iters: int = 100,
) -> DeletionProbs:
    """Worst-case q_in/q_out from simulated adaptive-deletion attacks.

    Each simulation reclusters the owner's tuple latents with a fresh
    seed, picks the attacker's 2L minimum-variance clusters, deletes
    uniformly from them, and counts hits on the owner's template clusters.
    The max hit count over simulations feeds q_in (worst case).
    """
    from .template import select_template_clusters

    if not 0 <= i_del < 1:
        raise ValidationError("i_del must be in [0,1)")
    template_set = frozenset(template.indices())
    if i_del == 0 or sims == 0:
        return DeletionProbs(q_in=0.0, q_out=0.0, template_clusters=template_set)
    total = int(np.sum(h))
    n_del_target = int(i_del * total)
    in_template = np.isin(owner_assignments, list(template_set))
    sum_in = int(h[list(template_set)].sum())
    sum_out = total - sum_in
    rng = np.random.default_rng(seed)
    max_hits = 0
    for s in range(sims):
        centroids = kmeans_fit(points, M, seed=seed + 1 + s, max_iter=attacker_kmeans_iters)
        attacker_assign = assign_points_to(points, centroids)
        h_att = np.bincount(attacker_assign, minlength=M)
        selected = select_template_clusters(h_att, template.L)
        candidates = np.flatnonzero(np.isin(attacker_assign, selected))
        n_del = min(n_del_target, len(candidates))
        deleted = candidates[rng.permutation(len(candidates))[:n_del]]
        hits = int(in_template[deleted].sum())
        max_hits = max(max_hits, hits)
    q_in = min(1.0, max_hits / sum_in) if sum_in else 0.0
    q_out = min(1.0, max(0.0, (n_del_target - max_hits) / sum_out)) if sum_out else 0.0
    return DeletionProbs(q_in=q_in, q_out=q_out, template_clusters=template_set)


def assign_points_to(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    from .clusterspace import _nearest

    return _nearest(points, centroids)


def fnr_bound(delta_ber: float, delta_be: int, L: int) -> float:
    """Upper bound 1 - sum_{j<=delta_be} C(L,j) p^j (1-p)^(L-j)."""
    p = delta_ber
    acc = 0.0
    for j in range(min(delta_be, L) + 1):
        acc += math.comb(L, j) * (p**j) * ((1 - p) ** (L - j))
    return 1.0 - acc


def derive_delta_ber(delta_fnr: float, delta_be: int, L: int) -> float:
    """Largest delta_ber in (0, 0.5) keeping the FNR bound at or below delta_fnr."""
    if not 0 < delta_fnr < 1:
        raise ValidationError("delta_fnr must be in (0,1)")
    if fnr_bound(DELTA_BER_CAP, delta_be, L) <= delta_fnr:
        return DELTA_BER_CAP
    lo, hi = DELTA_BER_FLOOR, DELTA_BER_CAP
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if fnr_bound(mid, delta_be, L) <= delta_fnr:
            lo = mid
        else:
            hi = mid
    return max(lo, DELTA_BER_FLOOR)


@dataclass(frozen=True)
class BitCoefficients:
    alpha: np.ndarray  # (L, M)
    beta: np.ndarray  # (L, M), non-negative
    watermark: np.ndarray  # (L,) bits; 0 means orientation x_l >= x_r
    template: WatermarkTemplate
    delta_ber: float
    phi_inv: float  # standard-normal quantile at delta_ber (negative)


def bit_coefficients(
    P: np.ndarray,
    q: DeletionProbs,
    template: WatermarkTemplate,
    watermark,
    delta_ber: float,
) -> BitCoefficients:
    validate_transition_matrix(P)
    watermark = np.asarray(watermark, dtype=np.uint8)
    if len(watermark) != template.L:
        raise ValidationError("watermark length must equal template L")
    M = P.shape[0]
    qv = q.q_vector(M)
    keep = 1.0 - qv
    alpha = np.zeros((template.L, M))
    beta = np.zeros((template.L, M))
    for i, (l, r) in enumerate(template.pairs):
        pl, pr = P[:, l], P[:, r]
        alpha[i] = keep * (pl - pr)
        beta[i] = keep * (pl * (1 - keep * pl) + pr * (1 - keep * pr) + 2 * keep * pl * pr)
    delta_ber = float(np.clip(delta_ber, DELTA_BER_FLOOR, DELTA_BER_CAP))
    return BitCoefficients(
        alpha=alpha,
        beta=beta,
        watermark=watermark,
        template=template,
        delta_ber=delta_ber,
        phi_inv=float(norm.ppf(delta_ber)),
    )


def analytic_ber(x, coeffs: BitCoefficients, bit: int) -> float:
    """Normal-approximation bit error probability at histogram x."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValidationError("histogram entries must be non-negative")
    e = float(coeffs.alpha[bit] @ x)
    v = float(coeffs.beta[bit] @ x)
    oriented_geq = coeffs.watermark[bit] == 0
    if v <= 0:
        # degenerate: z_i is deterministic, error iff the sign violates orientation
        if oriented_geq:
            return 0.0 if e >= 0 else 1.0
        return 0.0 if e < 0 else 1.0
    z = e / math.sqrt(v)
    return float(ndtr(-z)) if oriented_geq else float(ndtr(z))


@dataclass(frozen=True)
class ConstraintSet:
    """The unsimplified per-bit constraints plus equal cardinality."""

    coeffs: BitCoefficients
    total: int  # required sum of x

    def check(self, x, tol: float = 1e-7) -> list[int]:
        """Indices of violated bits; cardinality violation reported as bit -1."""
        x = np.asarray(x, dtype=float)
        violated = []
        if int(round(x.sum())) != self.total:
            violated.append(-1)
        z2 = self.coeffs.phi_inv**2
        for i in range(self.coeffs.template.L):
            s = float(self.coeffs.alpha[i] @ x)
            b = float(self.coeffs.beta[i] @ x)
            scale = max(1.0, abs(s), z2 * max(b, 0.0))
            if self.coeffs.watermark[i] == 0:
                sign_ok = s >= -tol * scale
            else:
                sign_ok = s <= -EPS_STRICT + tol * scale
            quad_ok = s * s - z2 * b >= -tol * scale
            if not (sign_ok and quad_ok):
                violated.append(i)
        return violated


def emit_constraints(coeffs: BitCoefficients, total: int) -> ConstraintSet:
    return ConstraintSet(coeffs=coeffs, total=int(total))


def save_robustness(
    path: str | Path,
    P: np.ndarray,
    q: DeletionProbs,
    delta_be: int,
    delta_ber: float,
    params: RobustnessParams,
    seed: int,
) -> None:
    obj = {
        "format": FORMAT_TAG,
        "P": P.tolist(),
        "q_in": q.q_in,
        "q_out": q.q_out,
        "template_clusters": sorted(q.template_clusters),
        "delta_be": delta_be,
        "delta_ber": delta_ber,
        "params": {
            "delta_fpr": params.delta_fpr,
            "delta_fnr": params.delta_fnr,
            "i_per": params.i_per,
            "i_alt": params.i_alt,
            "i_del": params.i_del,
            "T": params.T,
            "eta": params.eta,
            "xi": params.xi,
            "deletion_sims": params.deletion_sims,
        },
        "seed": seed,
    }
    try:
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"cannot write robustness artifact {path}: {e}") from e


def load_robustness(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read robustness artifact {path}: {e}") from e
    if obj.get("format") != FORMAT_TAG:
        raise ValidationError(f"unexpected robustness format tag: {obj.get('format')!r}")
    obj["P"] = np.array(obj["P"])
    obj["q"] = DeletionProbs(
        q_in=obj["q_in"], q_out=obj["q_out"], template_clusters=frozenset(obj["template_clusters"])
    )
    return obj
