"""Masked joint attention and the toy multi-step sampler.

The sampler is not a denoiser: it exists to make attribute propagation and
leakage observable. Each step applies masked scaled-dot-product attention to
the full token block and mixes the result back with a 0.5 residual. Because
forbidden scores become -inf before the softmax, forbidden pairs carry weight
exactly 0.0 and masked-out tokens can be perturbed without changing any
permitted row bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .layout import Layout, validate_layout, rasterize
from .masks import MaskConfig, PhaseSchedule, build_mask
from .tokens import (
    DEFAULT_ATTRIBUTES,
    DEFAULT_EMBED_DIM,
    DEFAULT_SEG_LEN,
    SegmentMap,
    build_segment_map,
    embed,
)

DEFAULT_GRID = 16
DEFAULT_PARAMS_SEED = 1234
RESIDUAL = 0.5

STATE_DUMP_MAGIC = b"LJSTATE\x00"
STATE_DUMP_VERSION = 1


class DimensionMismatch(ValueError):
    pass


class EmptyRow(ValueError):
    pass


def _orthogonal(rng: np.random.Generator, size: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    # Sign-fix the QR factor so the result is unique for a given seed.
    return q * np.sign(np.diag(r))


@dataclass
class AttentionParams:
    """Projection weights for the attention block.

    Q and K are random orthogonal matrices over the full width. V is random
    orthogonal on the leading dims but identity on the trailing attribute
    sub-vector, so attention mixes attribute mass without rotating it into
    unrelated dimensions.
    """

    dim: int = DEFAULT_EMBED_DIM
    heads: int = 1
    seed: int = DEFAULT_PARAMS_SEED
    attr_dim: int = len(DEFAULT_ATTRIBUTES)
    w_q: np.ndarray = field(init=False, repr=False)
    w_k: np.ndarray = field(init=False, repr=False)
    w_v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim % self.heads != 0:
            raise ValueError(f"dim={self.dim} not divisible by heads={self.heads}")
        if not (0 <= self.attr_dim < self.dim):
            raise ValueError(f"attr_dim={self.attr_dim} outside 0..{self.dim - 1}")
        rng = np.random.default_rng(self.seed)
        self.w_q = _orthogonal(rng, self.dim)
        self.w_k = _orthogonal(rng, self.dim)
        free = self.dim - self.attr_dim
        w_v = np.eye(self.dim)
        w_v[:free, :free] = _orthogonal(rng, free)
        self.w_v = w_v


def masked_attention(
    block: np.ndarray,
    mask: np.ndarray,
    params: AttentionParams,
    pad: Optional[np.ndarray] = None,
    return_weights: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product attention with weight exactly 0 on forbidden pairs.

    Rows with no permitted key (pad rows) produce zero output. If `pad` is
    given, an empty row that is not flagged as pad raises EmptyRow.
    """
    s, dim = block.shape
    if mask.shape != (s, s):
        raise DimensionMismatch(f"mask shape {mask.shape} does not match block rows {s}")
    if dim != params.dim:
        raise DimensionMismatch(f"block dim {dim} does not match params.dim {params.dim}")

    permitted = mask.any(axis=1)
    if pad is not None and bool(np.any(~permitted & ~pad)):
        raise EmptyRow("non-pad row with no permitted key")

    heads, head_dim = params.heads, dim // params.heads
    q = (block @ params.w_q).reshape(s, heads, head_dim)
    k = (block @ params.w_k).reshape(s, heads, head_dim)
    v = (block @ params.w_v).reshape(s, heads, head_dim)

    # (heads, S, S) scores, forbidden entries forced to -inf pre-softmax.
    scores = np.einsum("qhd,khd->hqk", q, k) / np.sqrt(head_dim)
    scores = np.where(mask[None, :, :], scores, -np.inf)
    shift = np.max(scores, axis=2, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)  # keep all-forbidden rows NaN-free
    weights = np.exp(scores - shift)
    denom = weights.sum(axis=2, keepdims=True)
    denom = np.where(denom == 0.0, 1.0, denom)
    weights = weights / denom

    out = np.einsum("hqk,khd->qhd", weights, v).reshape(s, dim)
    out[~permitted] = 0.0
    if return_weights:
        return out, weights
    return out


@dataclass
class SamplerState:
    """Token states after running the sampler."""

    step: int
    block: np.ndarray
    history: Optional[list[np.ndarray]]
    segment_map: SegmentMap


def prepare_case(
    layout: Layout,
    seed: int,
    grid_h: int = DEFAULT_GRID,
    grid_w: int = DEFAULT_GRID,
    seg_len: int = DEFAULT_SEG_LEN,
    dim: int = DEFAULT_EMBED_DIM,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
) -> tuple[SegmentMap, np.ndarray]:
    """Validate, rasterize and embed a layout into (segment map, initial block)."""
    layout = validate_layout(layout)
    region = rasterize(layout, grid_h, grid_w)
    seg = build_segment_map(layout, region, seg_len)
    block = embed(seg.tokens, seg, seed, dim=dim, vocabulary=vocabulary)
    return seg, block


def sample_steps(
    block: np.ndarray,
    seg: SegmentMap,
    sched: PhaseSchedule,
    cfg: MaskConfig,
    params: AttentionParams,
    keep_history: bool = True,
) -> SamplerState:
    """Run the step loop on an existing block; history[k] is the state after k steps."""
    history = [block.copy()] if keep_history else None
    for t in range(sched.total_steps):
        mask = build_mask(seg, sched, t, cfg)
        attn = masked_attention(block, mask, params, pad=_pad_vector(seg))
        block = RESIDUAL * block + (1.0 - RESIDUAL) * attn
        if history is not None:
            history.append(block.copy())
    return SamplerState(step=sched.total_steps, block=block, history=history, segment_map=seg)


def run_sampler(
    layout: Layout,
    seed: int,
    sched: PhaseSchedule,
    cfg: MaskConfig,
    params: Optional[AttentionParams] = None,
    grid_h: int = DEFAULT_GRID,
    grid_w: int = DEFAULT_GRID,
    seg_len: int = DEFAULT_SEG_LEN,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
    keep_history: bool = True,
) -> SamplerState:
    """Full pipeline: validate, rasterize, embed, then run the masked step loop."""
    params = params or AttentionParams(attr_dim=len(vocabulary))
    seg, block = prepare_case(
        layout, seed, grid_h=grid_h, grid_w=grid_w, seg_len=seg_len, dim=params.dim, vocabulary=vocabulary
    )
    return sample_steps(block, seg, sched, cfg, params, keep_history=keep_history)


def _pad_vector(seg: SegmentMap) -> np.ndarray:
    return np.concatenate([seg.pad, np.zeros(seg.image_len, dtype=bool)])


def decode_attributes(
    state: SamplerState | np.ndarray,
    seg: SegmentMap,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
) -> list[Optional[str]]:
    """Per-image-token attribute label from the given state's block.

    Argmax over the trailing attribute sub-vector; any tie (including the
    all-zero case) decodes to None.
    """
    block = state.block if isinstance(state, SamplerState) else state
    attr = block[seg.text_len :, block.shape[1] - len(vocabulary) :]
    best = attr.max(axis=1)
    ties = (attr == best[:, None]).sum(axis=1)
    idx = attr.argmax(axis=1)
    return [vocabulary[i] if t == 1 else None for i, t in zip(idx, ties)]


# Attribute mass needs one step to reach a region from its text and a second
# to spread within it, so two strict steps are where attribution is fully
# formed but global remixing has not yet reached the background.
ATTRIBUTE_SETTLE_STEPS = 2


def readout_step(sched: PhaseSchedule) -> int:
    """Step whose state carries the settled per-region attribution."""
    if sched.gamma >= 1:
        return min(sched.gamma, ATTRIBUTE_SETTLE_STEPS, sched.total_steps)
    return sched.total_steps


def readout_state(state: SamplerState, sched: PhaseSchedule) -> np.ndarray:
    """Block used for attribute readout (see readout_step); the final block
    when the schedule has no strict phase or history was not kept."""
    if state.history is not None:
        return state.history[min(readout_step(sched), len(state.history) - 1)]
    return state.block


def dump_states(path: str | Path, history: Sequence[np.ndarray]) -> None:
    """Binary snapshot dump.

    Header: 8-byte magic "LJSTATE\\0", then little-endian u32 fields
    (version, snapshot count, rows, dim); body: snapshots as little-endian
    float64, C order, in step order.
    """
    arr = np.stack(list(history)).astype("<f8")
    count, rows, dim = arr.shape
    with open(path, "wb") as f:
        f.write(STATE_DUMP_MAGIC)
        f.write(struct.pack("<IIII", STATE_DUMP_VERSION, count, rows, dim))
        f.write(arr.tobytes())


def load_states(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != STATE_DUMP_MAGIC:
            raise ValueError(f"{path}: bad state dump magic {magic!r}")
        version, count, rows, dim = struct.unpack("<IIII", f.read(16))
        if version != STATE_DUMP_VERSION:
            raise ValueError(f"{path}: unsupported state dump version {version}")
        data = np.frombuffer(f.read(count * rows * dim * 8), dtype="<f8")
    return data.reshape(count, rows, dim).astype(np.float64)
