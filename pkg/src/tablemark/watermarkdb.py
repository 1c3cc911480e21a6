"""Buyer watermark database: offset codebook, binding, and matching.

Offsets are a data-independent codebook with pairwise Hamming distance at
least 2*delta_be + 1, generated once by a best-first search in
(Hamming weight, numeric value) order, then XORed with the per-dataset
zero-conflict watermark to issue buyer watermarks.

Bit strings are written MSB-first: bit 0 of a watermark is the leftmost
character and the highest-order bit of its integer value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, CapacityError, ValidationError

FORMAT_TAG = "tablemark-watermark-db-v1"

_CHUNK = 1 << 22


def bits_to_int(bits) -> int:
    return int("".join(str(int(b)) for b in bits), 2) if len(bits) else 0


def int_to_bits(value: int, L: int) -> np.ndarray:
    return np.array([(value >> (L - 1 - i)) & 1 for i in range(L)], dtype=np.uint8)


def bits_to_str(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def str_to_bits(s: str) -> np.ndarray:
    return np.array([int(c) for c in s], dtype=np.uint8)


def fpr_value(N: int, L: int, delta_be: int) -> Fraction:
    """Exact false-positive rate (N / 2^L) * sum_{i<=delta_be} C(L, i)."""
    ball = sum(comb(L, i) for i in range(delta_be + 1))
    return Fraction(N * ball, 1 << L)


def derive_delta_be(N: int, L: int, delta_fpr: float) -> int:
    """Largest delta_be >= 0 whose exact FPR stays at or below delta_fpr."""
    if N < 1 or L < 1 or not 0 < delta_fpr < 1:
        raise ValidationError("need N >= 1, L >= 1, 0 < delta_fpr < 1")
    budget = Fraction(delta_fpr)
    if fpr_value(N, L, 0) > budget:
        raise CapacityError(
            f"N={N}, L={L}: even delta_be=0 gives FPR {float(fpr_value(N, L, 0)):.3g} > {delta_fpr}"
        )
    delta = 0
    while delta < L and fpr_value(N, L, delta + 1) <= budget:
        delta += 1
    return delta


def _weight_level(prev: np.ndarray, L: int) -> np.ndarray:
    """All L-bit values of weight w+1 in ascending order, from the weight-w level."""
    blocks = []
    for p in range(L):
        cut = int(np.searchsorted(prev, 1 << p))
        if cut:
            blocks.append(prev[:cut] + np.uint64(1 << p))
    return np.concatenate(blocks) if blocks else np.empty(0, dtype=np.uint64)


def _greedy_accept(level: np.ndarray, accepted: list[int], need: int, dist: int) -> None:
    """Greedily extend `accepted` with level values (ascending) at distance >= dist."""
    for start in range(0, len(level), _CHUNK):
        chunk = level[start : start + _CHUNK]
        mask = np.ones(len(chunk), dtype=bool)
        for a in accepted:
            mask &= np.bitwise_count(chunk ^ np.uint64(a)) >= dist
        chunk = chunk[mask]
        while chunk.size:
            v = int(chunk[0])
            accepted.append(v)
            if len(accepted) >= need:
                return
            chunk = chunk[np.bitwise_count(chunk ^ np.uint64(v)) >= dist]


def _generate_offsets_ints(N: int, L: int, delta_be: int) -> list[int]:
    dist = 2 * delta_be + 1
    accepted = [0]
    if N == 1:
        return accepted
    if L <= 64:
        level = np.array([0], dtype=np.uint64)
        for _ in range(L):
            level = _weight_level(level, L)
            _greedy_accept(level, accepted, N, dist)
            if len(accepted) >= N:
                return accepted
    else:
        level = [0]
        for _ in range(L):
            level = [(v | (1 << p)) for p in range(L) for v in level if v < (1 << p)]
            level.sort()
            for v in level:
                if all((v ^ a).bit_count() >= dist for a in accepted):
                    accepted.append(v)
                    if len(accepted) >= N:
                        return accepted
    raise CapacityError(
        f"codebook exhausted: only {len(accepted)} of {N} offsets exist "
        f"for L={L}, delta_be={delta_be}"
    )


def generate_offsets(N: int, L: int, delta_be: int) -> list[np.ndarray]:
    """N offsets in best-first acceptance order (weight, then numeric value).

    Equivalent to the priority-queue search seeded at the all-zero string:
    because priorities are Hamming weights with numeric ties and every
    weight-w string has a weight-(w-1) neighbor, the pop order is exactly
    all strings sorted by (weight, value).
    """
    if N < 1:
        raise ValidationError("N must be >= 1")
    return [int_to_bits(v, L) for v in _generate_offsets_ints(N, L, delta_be)]


@dataclass
class WatermarkDatabase:
    L: int
    N: int
    delta_be: int
    offsets: list[np.ndarray]  # sorted by non-decreasing Hamming weight
    assignments: dict[str, int] = field(default_factory=dict)
    w_star: np.ndarray | None = None

    @classmethod
    def generate(cls, N: int, L: int, delta_fpr: float, delta_be: int | None = None) -> "WatermarkDatabase":
        if delta_be is None:
            delta_be = derive_delta_be(N, L, delta_fpr)
        return cls(L=L, N=N, delta_be=delta_be, offsets=generate_offsets(N, L, delta_be))

    def watermark_of(self, index: int) -> np.ndarray:
        if self.w_star is None:
            raise ValidationError("database is not bound to a dataset watermark")
        return self.offsets[index] ^ self.w_star


def bind_and_assign(db: WatermarkDatabase, w_star, buyer_id: str) -> np.ndarray:
    w_star = np.asarray(w_star, dtype=np.uint8)
    if len(w_star) != db.L:
        raise ValidationError(f"w_star must have length L={db.L}")
    if db.w_star is None:
        db.w_star = w_star.copy()
    elif not np.array_equal(db.w_star, w_star):
        raise ValidationError("database is already bound to a different w_star")
    if buyer_id in db.assignments:
        return db.watermark_of(db.assignments[buyer_id])
    used = set(db.assignments.values())
    for idx in range(db.N):
        if idx not in used:
            db.assignments[buyer_id] = idx
            return db.watermark_of(idx)
    raise CapacityError(f"all {db.N} watermarks are assigned")


def match_watermark(db: WatermarkDatabase, decoded) -> str | None:
    """The unique assigned buyer within Hamming distance delta_be, if any."""
    if db.w_star is None:
        raise ValidationError("database is not bound to a dataset watermark")
    decoded = np.asarray(decoded, dtype=np.uint8)
    if len(decoded) != db.L:
        raise ValidationError(f"decoded watermark must have length L={db.L}")
    for buyer, idx in db.assignments.items():
        if int(np.sum(db.watermark_of(idx) ^ decoded)) <= db.delta_be:
            return buyer
    return None


def save_watermark_db(db: WatermarkDatabase, path: str | Path) -> None:
    obj = {
        "format": FORMAT_TAG,
        "L": db.L,
        "N": db.N,
        "delta_be": db.delta_be,
        "offsets": [bits_to_str(o) for o in db.offsets],
        "assignments": dict(sorted(db.assignments.items())),
    }
    if db.w_star is not None:
        obj["w_star"] = bits_to_str(db.w_star)
    try:
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"cannot write watermark db {path}: {e}") from e


def load_watermark_db(path: str | Path) -> WatermarkDatabase:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read watermark db {path}: {e}") from e
    if obj.get("format") != FORMAT_TAG:
        raise ValidationError(f"unexpected watermark-db format tag: {obj.get('format')!r}")
    return WatermarkDatabase(
        L=obj["L"],
        N=obj["N"],
        delta_be=obj["delta_be"],
        offsets=[str_to_bits(s) for s in obj["offsets"]],
        assignments=dict(obj["assignments"]),
        w_star=str_to_bits(obj["w_star"]) if "w_star" in obj else None,
    )
