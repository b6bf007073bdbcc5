"""Token bookkeeping: concatenated text segments, image patches, toy embeddings.

The text sequence is the concatenation of a global segment followed by one
segment per instance, each padded to a fixed length. Image tokens follow in
row-major patch order. Embeddings are keyed-hash pseudo-random vectors; words
from the attribute vocabulary additionally carry a one-hot marker in the last
`len(vocabulary)` dimensions so downstream attribute decoding is possible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .layout import Layout

GLOBAL_SEGMENT = 0
PAD = None  # pad slots are represented as None, never as a literal string

DEFAULT_ATTRIBUTES = ("red", "orange", "yellow", "green", "blue", "purple", "black", "white")
DEFAULT_EMBED_DIM = 32
DEFAULT_SEG_LEN = 8

Token = Optional[str]


def tokenize(text: str, max_len: int) -> list[Token]:
    """Lowercased whitespace tokens, truncated/padded to exactly max_len."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    words = text.lower().split()[:max_len]
    return words + [PAD] * (max_len - len(words))


@dataclass(frozen=True)
class SegmentMap:
    """Which token positions belong to which segment, plus region ownership.

    Text positions [0, text_len) are tagged with a segment id (0 = global,
    i = instance i) and a pad flag; image positions follow in row-major patch
    order, tagged with the owning instance from the region grid (0 =
    background).
    """

    n: int
    seg_len: int
    grid_h: int
    grid_w: int
    segment: np.ndarray  # (text_len,) int32 segment id per text token
    pad: np.ndarray  # (text_len,) bool
    owner: np.ndarray  # (image_len,) int32 region owner per image token
    tokens: tuple[Token, ...]  # text token strings, None at pad slots

    @property
    def text_len(self) -> int:
        return (self.n + 1) * self.seg_len

    @property
    def image_len(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def total_len(self) -> int:
        return self.text_len + self.image_len

    def segment_offset(self, segment_id: int) -> tuple[int, int]:
        """(start, length) of a text segment; 0 is the global segment."""
        if not (0 <= segment_id <= self.n):
            raise ValueError(f"segment id {segment_id} outside 0..{self.n}")
        return segment_id * self.seg_len, self.seg_len

    def text_positions(self, segment_id: int) -> np.ndarray:
        start, length = self.segment_offset(segment_id)
        return np.arange(start, start + length)

    def image_positions(self, owner_id: int) -> np.ndarray:
        """Absolute positions of image tokens owned by an instance (0 = background)."""
        return self.text_len + np.flatnonzero(self.owner == owner_id)


def build_segment_map(layout: Layout, region: np.ndarray, seg_len: int) -> SegmentMap:
    """Lay out the global segment, n instance segments, then the image tokens."""
    if seg_len < 1:
        raise ValueError("seg_len must be >= 1")
    grid_h, grid_w = region.shape
    n = layout.n

    tokens: list[Token] = list(tokenize(layout.global_text, seg_len))
    segment = [GLOBAL_SEGMENT] * seg_len
    for inst in layout.instances:
        tokens.extend(tokenize(inst.text, seg_len))
        segment.extend([inst.id] * seg_len)

    return SegmentMap(
        n=n,
        seg_len=seg_len,
        grid_h=grid_h,
        grid_w=grid_w,
        segment=np.asarray(segment, dtype=np.int32),
        pad=np.array([t is PAD for t in tokens], dtype=bool),
        owner=np.asarray(region, dtype=np.int32).reshape(-1).copy(),
        tokens=tuple(tokens),
    )


def _hash_floats(key: bytes, message: str, count: int) -> np.ndarray:
    """`count` floats in [-1, 1) derived from blake2b(message, key)."""
    out = np.empty(count, dtype=np.float64)
    filled = 0
    block = 0
    while filled < count:
        digest = hashlib.blake2b(f"{message}#{block}".encode(), key=key, digest_size=64).digest()
        vals = np.frombuffer(digest, dtype="<u8").astype(np.float64) / 2.0**64
        take = min(count - filled, vals.size)
        out[filled : filled + take] = vals[:take] * 2.0 - 1.0
        filled += take
        block += 1
    return out


def embed(
    tokens: Sequence[Token],
    seg: SegmentMap,
    seed: int,
    dim: int = DEFAULT_EMBED_DIM,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
) -> np.ndarray:
    """Deterministic (total_len, dim) float64 embedding block.

    Every row is a function of (token string, position, seed) only. The last
    len(vocabulary) dimensions form the attribute sub-vector: one-hot for
    attribute words, zero elsewhere. Pad rows are all-zero.
    """
    attr_dim = len(vocabulary)
    if dim <= attr_dim:
        raise ValueError(f"dim={dim} must exceed the attribute vocabulary size {attr_dim}")
    if len(tokens) != seg.text_len:
        raise ValueError(f"expected {seg.text_len} text tokens, got {len(tokens)}")
    attr_index = {word: i for i, word in enumerate(vocabulary)}
    free_dim = dim - attr_dim
    key = str(seed).encode()

    block = np.zeros((seg.total_len, dim), dtype=np.float64)
    for pos, tok in enumerate(tokens):
        if tok is PAD:
            continue
        block[pos, :free_dim] = _hash_floats(key, f"text:{tok}:{pos}", free_dim)
        if tok in attr_index:
            block[pos, free_dim + attr_index[tok]] = 1.0
    for pos in range(seg.text_len, seg.total_len):
        block[pos, :free_dim] = _hash_floats(key, f"image:{pos}", free_dim)
    return block
