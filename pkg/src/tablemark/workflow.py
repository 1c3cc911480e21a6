"""End-to-end pipeline glue.

Bundles the owner-side artifacts produced by fitting (cluster model,
keyed template, conditional sampler, transition matrix, deletion
probabilities, derived thresholds) and drives encode and decode flows on
top of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clusterspace import ClusterModel, assign_clusters, fit_cluster_model
from .decoder import DecodeResult, IdentifyResult, decode, identify
from .errors import ValidationError
from .optimizer import OptimizerConfig, WatermarkedHistogram, optimize
from .robustness import (
    BitCoefficients,
    DeletionProbs,
    RobustnessParams,
    bit_coefficients,
    derive_delta_ber,
    estimate_deletion_probs,
    estimate_transition_matrix,
)
from .synthesizer import ConditionalSampler, fit_sampler, synthesize
from .tableio import Table
from .template import SecretKey, WatermarkTemplate, optimal_watermark, pair_clusters, select_template_clusters
from .watermarkdb import WatermarkDatabase, bind_and_assign


@dataclass
class OwnerModel:
    model: ClusterModel
    template: WatermarkTemplate
    sampler: ConditionalSampler
    P: np.ndarray
    q: DeletionProbs
    params: RobustnessParams
    w_star: np.ndarray  # optimal watermark of the original histogram


def fit_owner(
    table_o: Table,
    key: SecretKey,
    M: int,
    L: int,
    params: RobustnessParams | None = None,
    variance_target: float = 0.99,
    sigma_jit: float = 0.02,
    seed: int = 0,
) -> OwnerModel:
    if M < 2 * L:
        raise ValidationError("need M >= 2L clusters to host the template")
    params = params or RobustnessParams()
    model = fit_cluster_model(table_o, M, variance_target=variance_target, seed=seed)
    selected = select_template_clusters(model.h, L)
    template = pair_clusters(selected, key)
    sampler = fit_sampler(table_o, model, sigma_jit=sigma_jit, seed=seed)
    P = estimate_transition_matrix(model, sampler, params.T, params.i_per, params.i_alt, seed=seed + 1)
    points = model.embed(table_o)
    assignments = assign_clusters(model, table_o)
    q = estimate_deletion_probs(
        points, assignments, template, model.h, M, params.i_del, params.deletion_sims, seed=seed + 2
    )
    w_star = optimal_watermark(model.h, template)
    return OwnerModel(model=model, template=template, sampler=sampler, P=P, q=q, params=params, w_star=w_star)


def encode_table(
    owner: OwnerModel,
    db: WatermarkDatabase,
    buyer_id: str,
    config: OptimizerConfig | None = None,
    seed: int | None = None,
) -> tuple[Table, WatermarkedHistogram, np.ndarray]:
    """Synthesize a watermarked table for a buyer.

    Binds the database to this dataset's optimal watermark on first use,
    assigns (or reuses) the buyer's watermark, and embeds the buyer's
    offset pattern (buyer watermark XOR the optimal watermark) into the
    cluster-size partial orders.
    """
    config = config or OptimizerConfig()
    w_buyer = bind_and_assign(db, owner.w_star, buyer_id)
    pattern = np.bitwise_xor(w_buyer, db.w_star).astype(np.uint8)
    coeffs = embedding_coefficients(owner, db, pattern)
    result = optimize(owner.model.h, coeffs, config)
    table_w = synthesize(owner.sampler, result.x, seed=seed)
    return table_w, result, w_buyer


def embedding_coefficients(owner: OwnerModel, db: WatermarkDatabase, pattern: np.ndarray) -> BitCoefficients:
    delta_ber = derive_delta_ber(owner.params.delta_fnr, db.delta_be, db.L)
    return bit_coefficients(owner.P, owner.q, owner.template, pattern, delta_ber)


def decode_table(owner: OwnerModel, db: WatermarkDatabase, table: Table) -> DecodeResult:
    return decode(table, owner.model, owner.template, db)


def identify_table(owner: OwnerModel, db: WatermarkDatabase, table: Table) -> IdentifyResult:
    return identify(table, owner.model, owner.template, db)
