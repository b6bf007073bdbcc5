"""Joint-attention mask construction from a segment map and a phase schedule.

The mask covers the full token sequence (text first, then image patches) and
is the conjunction of four rule families, each independently toggleable:

* image-to-image: early ("strict") steps confine an instance's image tokens
  to their own region (background to background); later ("relaxed") steps
  open image attention completely.
* image-to-text: instance regions see only their own description early, plus
  the global text once relaxed; background sees the global text throughout;
  other instances' text is never visible.
* text-to-image: an instance's text sees only its own region, at every step;
  global text sees every patch.
* text-to-text: an instance's text sees only its own segment, at every step.
  Global text likewise keeps to its own segment: letting it read instance
  descriptions would funnel every instance's attribute into the shared
  global tokens and, through them, into unrelated regions.

Pad rows and columns are always masked out; self-attention is always kept
for non-pad tokens.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .pgm import write_pgm
from .tokens import SegmentMap

DEFAULT_TOTAL_STEPS = 20

# Strict-step budget by output resolution: higher resolutions need fewer
# constrained steps, so the budget shrinks as the anchor grows.
GAMMA_BY_RESOLUTION = {512: 4, 768: 3, 1024: 2}


class NonPositiveResolution(ValueError):
    pass


class StepOutOfRange(ValueError):
    pass


class Phase(enum.Enum):
    STRICT = "strict"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class PhaseSchedule:
    """Step budget with the first `gamma` steps strict, the rest relaxed."""

    total_steps: int = DEFAULT_TOTAL_STEPS
    gamma: int = 4

    def __post_init__(self) -> None:
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if not (0 <= self.gamma <= self.total_steps):
            raise ValueError(f"gamma={self.gamma} outside 0..{self.total_steps}")


@dataclass(frozen=True)
class MaskConfig:
    """Toggles for the four rule families plus the whole mechanism."""

    i2i_control: bool = True
    i2t_control: bool = True
    t2i_control: bool = True
    t2t_control: bool = True
    detail_renderer: bool = True


def gamma_for_resolution(resolution: int) -> int:
    """Strict-step budget for a resolution; off-anchor values snap to the
    nearest anchor, ties toward the larger budget."""
    if resolution <= 0:
        raise NonPositiveResolution(f"resolution must be positive, got {resolution}")
    # Nearest anchor; on a distance tie the larger budget wins.
    _, gamma = max(GAMMA_BY_RESOLUTION.items(), key=lambda kv: (-abs(resolution - kv[0]), kv[1]))
    return gamma


def phase_of(sched: PhaseSchedule, step: int) -> Phase:
    if not (0 <= step < sched.total_steps):
        raise StepOutOfRange(f"step {step} outside 0..{sched.total_steps - 1}")
    return Phase.STRICT if step < sched.gamma else Phase.RELAXED


def build_mask(seg: SegmentMap, sched: PhaseSchedule, step: int, cfg: MaskConfig) -> np.ndarray:
    """Boolean (S, S) mask for one sampling step; True = attention permitted."""
    phase = phase_of(sched, step)
    strict = phase is Phase.STRICT
    t_len, i_len = seg.text_len, seg.image_len
    s = t_len + i_len

    mask = np.ones((s, s), dtype=bool)
    if cfg.detail_renderer:
        seg_q = seg.segment[:, None]  # text queries
        seg_k = seg.segment[None, :]  # text keys
        own_q = seg.owner[:, None]  # image queries
        own_k = seg.owner[None, :]  # image keys

        if cfg.i2i_control and strict:
            mask[t_len:, t_len:] = own_q == own_k

        if cfg.i2t_control:
            own_text = seg_k == own_q
            global_text = np.broadcast_to(seg_k == 0, (i_len, t_len))
            instance_query = own_q > 0
            if strict:
                mask[t_len:, :t_len] = np.where(instance_query, own_text, global_text)
            else:
                mask[t_len:, :t_len] = np.where(instance_query, own_text | global_text, global_text)

        if cfg.t2i_control:
            mask[:t_len, t_len:] = np.where(seg_q > 0, own_k == seg_q, True)

        if cfg.t2t_control:
            mask[:t_len, :t_len] = seg_k == seg_q

    pad_full = np.concatenate([seg.pad, np.zeros(i_len, dtype=bool)])
    mask[pad_full, :] = False
    mask[:, pad_full] = False
    idx = np.flatnonzero(~pad_full)
    mask[idx, idx] = True
    return mask


def sidecar_metadata(seg: SegmentMap, sched: PhaseSchedule, step: int, cfg: MaskConfig) -> dict:
    """JSON-serializable description of a dumped mask."""
    segments = [{"label": "global", "start": 0, "length": seg.seg_len}]
    segments += [
        {"label": f"instance_{i}", "start": i * seg.seg_len, "length": seg.seg_len}
        for i in range(1, seg.n + 1)
    ]
    return {
        "side": seg.total_len,
        "text_len": seg.text_len,
        "image_len": seg.image_len,
        "grid": [seg.grid_h, seg.grid_w],
        "segments": segments,
        "pad_positions": np.flatnonzero(seg.pad).tolist(),
        "total_steps": sched.total_steps,
        "gamma": sched.gamma,
        "step": step,
        "phase": phase_of(sched, step).value,
        "config": asdict(cfg),
    }


def dump_mask(
    seg: SegmentMap,
    sched: PhaseSchedule,
    step: int,
    cfg: MaskConfig,
    out_dir: str | Path,
    stem: str | None = None,
) -> tuple[Path, Path]:
    """Write one step's mask as PGM (255 = permitted) plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or f"mask_step{step:03d}"
    mask = build_mask(seg, sched, step, cfg)
    pgm_path = out_dir / f"{stem}.pgm"
    json_path = out_dir / f"{stem}.json"
    write_pgm(pgm_path, mask.astype(np.uint8) * 255, maxval=255)
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(sidecar_metadata(seg, sched, step, cfg), f, indent=2)
        f.write("\n")
    return pgm_path, json_path
