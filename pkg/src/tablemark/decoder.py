"""Watermark decoding and buyer identification.

Decoding is blind with respect to the synthesis artifacts: it needs only
the cluster model, the secret key, and the watermark database. The
suspect table is embedded, assigned to the owner's clusters, and the
partial orders of the template pair sizes are read back as bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clusterspace import ClusterModel, assign_clusters, histogram_of
from .errors import ValidationError
from .tableio import Table
from .template import WatermarkTemplate, optimal_watermark
from .watermarkdb import WatermarkDatabase, bits_to_str, match_watermark


@dataclass(frozen=True)
class DecodeResult:
    bits: np.ndarray  # recovered buyer watermark w-hat, length L
    raw_bits: np.ndarray  # pattern read from the table before unmasking
    counts: np.ndarray  # template-pair cluster sizes, shape (L, 2)

    @property
    def bitstring(self) -> str:
        return bits_to_str(self.bits)


@dataclass(frozen=True)
class IdentifyResult:
    buyer_id: str | None
    distance: int | None
    decoded: DecodeResult


def decode_counts(assignments: np.ndarray, template: WatermarkTemplate, M: int) -> np.ndarray:
    h = histogram_of(assignments, M)
    return np.array([[h[l], h[r]] for l, r in template.pairs], dtype=np.int64)


def decode_from_histogram(h: np.ndarray, template: WatermarkTemplate, db: WatermarkDatabase) -> DecodeResult:
    if db.w_star is None:
        raise ValidationError("watermark database was never bound to a dataset; nothing was encoded with it")
    raw = optimal_watermark(h, template)
    bits = np.bitwise_xor(raw, db.w_star).astype(np.uint8)
    counts = np.array([[h[l], h[r]] for l, r in template.pairs], dtype=np.int64)
    return DecodeResult(bits=bits, raw_bits=raw, counts=counts)


def decode(table: Table, model: ClusterModel, template: WatermarkTemplate, db: WatermarkDatabase) -> DecodeResult:
    assignments = assign_clusters(model, table)
    h = histogram_of(assignments, model.M)
    return decode_from_histogram(h, template, db)


def identify(table: Table, model: ClusterModel, template: WatermarkTemplate, db: WatermarkDatabase) -> IdentifyResult:
    decoded = decode(table, model, template, db)
    buyer = match_watermark(db, decoded.bits)
    distance = None
    if buyer is not None:
        idx = db.assignments[buyer]
        distance = int(np.sum(db.watermark_of(idx) ^ decoded.bits))
    return IdentifyResult(buyer_id=buyer, distance=distance, decoded=decoded)
