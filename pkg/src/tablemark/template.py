"""Cluster-pair watermark templates.

Selects the 2L clusters whose original sizes form the minimum-variance
window over the sorted size array, pairs them pseudo-randomly under the
owner's secret key, and computes the zero-conflict watermark implied by
the original histogram.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, ValidationError

PAIRING_CONTEXT = b"pair-v1"
FORMAT_TAG = "tablemark-template-v1"


@dataclass(frozen=True)
class SecretKey:
    """32 bytes of opaque key material; never serialized into public artifacts."""

    material: bytes

    def __post_init__(self):
        if len(self.material) != 32:
            raise ValidationError("secret key must be exactly 32 bytes")

    def __repr__(self):  # keep key bytes out of logs and tracebacks
        return "SecretKey(<redacted>)"

    @classmethod
    def from_hex(cls, hexstr: str) -> "SecretKey":
        try:
            return cls(bytes.fromhex(hexstr.strip()))
        except ValueError as e:
            raise ValidationError(f"invalid hex key material: {e}") from e

    @classmethod
    def from_file(cls, path: str | Path) -> "SecretKey":
        data = Path(path).read_bytes()
        if len(data) == 32:
            return cls(data)
        return cls.from_hex(data.decode("ascii"))


@dataclass(frozen=True)
class WatermarkTemplate:
    L: int
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.pairs) != self.L:
            raise ValidationError("pair count must equal L")
        flat = [i for p in self.pairs for i in p]
        if len(set(flat)) != 2 * self.L:
            raise ValidationError("template cluster indices must be distinct")
        if any(i < 0 for i in flat):
            raise ValidationError("cluster indices must be non-negative")

    def indices(self) -> list[int]:
        return [i for p in self.pairs for i in p]


def select_template_clusters(h, L: int) -> list[int]:
    """The 2L cluster indices with minimum size variance.

    Solved by sliding a window of width 2L over the sizes sorted by
    (size, index); ties go to the leftmost window. Variance comparisons
    use exact integer arithmetic: for fixed n, comparing n*sum(x^2) -
    (sum(x))^2 is equivalent to comparing population variances.
    """
    h = np.asarray(h, dtype=np.int64)
    M = len(h)
    w = 2 * L
    if not 2 <= w <= M:
        raise ValidationError(f"need M >= 2L >= 2, got M={M}, L={L}")
    order = sorted(range(M), key=lambda i: (int(h[i]), i))
    sizes = [int(h[i]) for i in order]
    best_key = None
    best_start = 0
    s = sum(sizes[:w])
    s2 = sum(v * v for v in sizes[:w])
    for start in range(M - w + 1):
        if start > 0:
            out_v, in_v = sizes[start - 1], sizes[start + w - 1]
            s += in_v - out_v
            s2 += in_v * in_v - out_v * out_v
        key = w * s2 - s * s
        if best_key is None or key < best_key:
            best_key = key
            best_start = start
    return order[best_start : best_start + w]


class _KeyedShuffler:
    """Deterministic PRF stream: HMAC-SHA256(key, context || counter)."""

    def __init__(self, key: SecretKey, context: bytes):
        self._key = key.material
        self._context = context
        self._counter = 0
        self._buffer = b""

    def _refill(self):
        block = hmac.new(
            self._key, self._context + self._counter.to_bytes(8, "big"), hashlib.sha256
        ).digest()
        self._counter += 1
        self._buffer += block

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling on 8-byte words."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            while len(self._buffer) < 8:
                self._refill()
            word = int.from_bytes(self._buffer[:8], "big")
            self._buffer = self._buffer[8:]
            if word < limit:
                return word % n


def pair_clusters(selected, key: SecretKey, context: bytes = PAIRING_CONTEXT) -> WatermarkTemplate:
    """Keyed Fisher-Yates shuffle of the selected clusters, grouped pairwise."""
    items = sorted(int(i) for i in selected)
    if len(set(items)) != len(items) or len(items) % 2 != 0:
        raise ValidationError("selected must be a set of 2L distinct indices")
    shuffler = _KeyedShuffler(key, context)
    for i in range(len(items) - 1, 0, -1):
        j = shuffler.randbelow(i + 1)
        items[i], items[j] = items[j], items[i]
    pairs = tuple((items[i], items[i + 1]) for i in range(0, len(items), 2))
    return WatermarkTemplate(L=len(pairs), pairs=pairs)


def optimal_watermark(h, template: WatermarkTemplate) -> np.ndarray:
    """Bit i is 1 iff h[l_i] < h[r_i]; these partial orders hold at x = h."""
    h = np.asarray(h)
    M = len(h)
    if any(i >= M for i in template.indices()):
        raise ValidationError("template indices exceed histogram length")
    return np.array([1 if h[l] < h[r] else 0 for l, r in template.pairs], dtype=np.uint8)


def save_template(template: WatermarkTemplate, path: str | Path) -> None:
    obj = {"format": FORMAT_TAG, "L": template.L, "pairs": [list(p) for p in template.pairs]}
    try:
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"cannot write template {path}: {e}") from e


def load_template(path: str | Path) -> WatermarkTemplate:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read template {path}: {e}") from e
    if obj.get("format") != FORMAT_TAG:
        raise ValidationError(f"unexpected template format tag: {obj.get('format')!r}")
    return WatermarkTemplate(L=obj["L"], pairs=tuple(tuple(p) for p in obj["pairs"]))
