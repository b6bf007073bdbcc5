"""Suite generation, instance verdicts and MIoU / ISR / SR aggregation.

The detector stand-in reads the decoded per-token attribute map: an
instance's predicted region is the bounding box of the largest 4-connected
component of tokens decoding to its target attribute. An instance succeeds
when that box overlaps the target box with IoU at or above the position
threshold and the plurality label inside the predicted box is the target
attribute (a stand-in for learned attribute verification).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .attention import (
    AttentionParams,
    SamplerState,
    decode_attributes,
    readout_state,
    run_sampler,
)
from .layout import BoundingBox, Instance, Layout, box_coverage, box_iou, validate_layout
from .masks import MaskConfig, PhaseSchedule
from .tokens import DEFAULT_ATTRIBUTES, SegmentMap

LEVELS = (2, 3, 4, 5, 6)
NOUNS = ("cup", "ball", "car", "chair", "vase", "book", "hat", "lamp", "bird", "shoe")

POSITION_IOU_THRESHOLD = 0.5
ATTRIBUTE_CRITERION = "plurality of decoded attribute labels inside the predicted box"


@dataclass(frozen=True)
class EvalProtocol:
    """Everything the pipeline needs besides the layout, the mask config and the seed."""

    total_steps: int = 20
    gamma: int = 4
    grid_h: int = 16
    grid_w: int = 16
    seg_len: int = 8
    dim: int = 32
    heads: int = 1
    params_seed: int = 1234
    vocabulary: tuple[str, ...] = DEFAULT_ATTRIBUTES
    position_threshold: float = POSITION_IOU_THRESHOLD

    def schedule(self) -> PhaseSchedule:
        return PhaseSchedule(total_steps=self.total_steps, gamma=self.gamma)

    def params(self) -> AttentionParams:
        return AttentionParams(
            dim=self.dim, heads=self.heads, seed=self.params_seed, attr_dim=len(self.vocabulary)
        )


@dataclass(frozen=True)
class InstanceVerdict:
    instance_id: int
    target_attribute: str
    target_box: tuple[float, float, float, float]
    predicted_box: Optional[tuple[float, float, float, float]]
    iou: float
    position_ok: bool
    attribute_ok: bool
    success: bool


@dataclass
class EvalReport:
    config_name: str
    mask_config: MaskConfig
    seed: int
    protocol: EvalProtocol
    verdicts: list[list[InstanceVerdict]]  # one inner list per layout, in suite order
    miou: float = field(init=False)
    isr: float = field(init=False)
    sr: float = field(init=False)
    by_level: dict[int, dict[str, float]] = field(init=False)

    def __post_init__(self) -> None:
        # Sequential sums keep aggregation reproducible against a plain
        # recomputation from the stored verdicts.
        flat = [v for layout_vs in self.verdicts for v in layout_vs]
        self.miou = sum(v.iou for v in flat) / len(flat) if flat else 0.0
        self.isr = sum(1.0 for v in flat if v.success) / len(flat) if flat else 0.0
        self.sr = (
            sum(1.0 for vs in self.verdicts if all(v.success for v in vs)) / len(self.verdicts)
            if self.verdicts
            else 0.0
        )
        self.by_level = {}
        for level in LEVELS:
            level_vs = [vs for vs in self.verdicts if len(vs) == level]
            flat_level = [v for vs in level_vs for v in vs]
            if flat_level:
                self.by_level[level] = {
                    "isr": sum(1.0 for v in flat_level if v.success) / len(flat_level),
                    "miou": sum(v.iou for v in flat_level) / len(flat_level),
                    "layouts": len(level_vs),
                    "instances": len(flat_level),
                }

    def to_json_dict(self) -> dict:
        return {
            "config_name": self.config_name,
            "mask_config": asdict(self.mask_config),
            "seed": self.seed,
            "protocol": asdict(self.protocol),
            "attribute_criterion": ATTRIBUTE_CRITERION,
            "metrics": {
                "miou": self.miou,
                "isr": self.isr,
                "sr": self.sr,
                "by_level": {str(k): v for k, v in self.by_level.items()},
            },
            "layouts": [
                {"id": i, "n": len(vs), "instances": [asdict(v) for v in vs]}
                for i, vs in enumerate(self.verdicts)
            ],
        }

    def csv_row(self) -> dict[str, str]:
        row = {"config": self.config_name}
        for level in LEVELS:
            stats = self.by_level.get(level)
            row[f"ISR_L{level}"] = f"{stats['isr']:.4f}" if stats else ""
        row["ISR_AVG"] = f"{self.isr:.4f}"
        for level in LEVELS:
            stats = self.by_level.get(level)
            row[f"MIoU_L{level}"] = f"{stats['miou']:.4f}" if stats else ""
        row["MIoU_AVG"] = f"{self.miou:.4f}"
        row["SR"] = f"{self.sr:.4f}"
        return row


CSV_COLUMNS = (
    ["config"]
    + [f"ISR_L{level}" for level in LEVELS]
    + ["ISR_AVG"]
    + [f"MIoU_L{level}" for level in LEVELS]
    + ["MIoU_AVG", "SR"]
)


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report.csv_row())
    return buf.getvalue()


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2) + "\n"


def largest_attribute_component(label_grid: np.ndarray, target: str) -> Optional[np.ndarray]:
    """Boolean grid of the largest 4-connected component matching the target.

    label_grid is an (h, w) object array of attribute strings / None. Size
    ties resolve to the component discovered first in row-major order.
    """
    match = label_grid == np.array(target, dtype=object)
    if not match.any():
        return None
    labels, count = ndimage.label(match)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == np.argmax(sizes)  # argmax takes the first (scan-order) max


def component_bounds(component: np.ndarray) -> BoundingBox:
    """Normalized bounding box of a boolean patch-grid component."""
    h, w = component.shape
    rows = np.flatnonzero(component.any(axis=1))
    cols = np.flatnonzero(component.any(axis=0))
    return BoundingBox(
        int(cols[0]) / w, int(rows[0]) / h, int(cols[-1] + 1) / w, int(rows[-1] + 1) / h
    )


def predicted_region(
    state: SamplerState | np.ndarray,
    seg: SegmentMap,
    target_attribute: str,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
) -> Optional[BoundingBox]:
    """Detector stand-in: box of the largest component decoding to the target."""
    labels = decode_attributes(state, seg, vocabulary)
    grid = np.array(labels, dtype=object).reshape(seg.grid_h, seg.grid_w)
    component = largest_attribute_component(grid, target_attribute)
    return component_bounds(component) if component is not None else None


def judge_instance(
    block: np.ndarray,
    seg: SegmentMap,
    instance: Instance,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
    position_threshold: float = POSITION_IOU_THRESHOLD,
) -> InstanceVerdict:
    """Verdict for one instance from a readout block."""
    target = instance.attribute
    if target is None:
        raise ValueError(f"instance {instance.id} has no target attribute to evaluate")
    labels = decode_attributes(block, seg, vocabulary)
    grid = np.array(labels, dtype=object).reshape(seg.grid_h, seg.grid_w)
    component = largest_attribute_component(grid, target)

    if component is None:
        return InstanceVerdict(
            instance_id=instance.id,
            target_attribute=target,
            target_box=instance.box.as_tuple(),
            predicted_box=None,
            iou=0.0,
            position_ok=False,
            attribute_ok=False,
            success=False,
        )

    predicted = component_bounds(component)
    iou = float(box_iou(predicted, instance.box))
    position_ok = bool(iou >= position_threshold)

    inside = box_coverage(predicted, seg.grid_h, seg.grid_w)
    votes: dict[Optional[str], int] = {}
    for label in grid[inside]:
        votes[label] = votes.get(label, 0) + 1
    target_votes = votes.get(target, 0)
    attribute_ok = all(target_votes > c for lbl, c in votes.items() if lbl != target)

    return InstanceVerdict(
        instance_id=instance.id,
        target_attribute=target,
        target_box=instance.box.as_tuple(),
        predicted_box=predicted.as_tuple(),
        iou=iou,
        position_ok=position_ok,
        attribute_ok=attribute_ok,
        success=position_ok and attribute_ok,
    )


def evaluate_layout(
    layout: Layout, cfg: MaskConfig, seed: int, protocol: EvalProtocol = EvalProtocol()
) -> list[InstanceVerdict]:
    """Run the pipeline on one layout and judge every instance.

    Attributes are read out after the first two strict steps (or fewer when
    gamma is smaller, or the final state when there is no strict phase): the
    point where the mask mechanism has pinned attributes to regions but
    global remixing has not yet blurred the map.
    """
    sched = protocol.schedule()
    state = run_sampler(
        layout,
        seed,
        sched,
        cfg,
        params=protocol.params(),
        grid_h=protocol.grid_h,
        grid_w=protocol.grid_w,
        seg_len=protocol.seg_len,
        vocabulary=protocol.vocabulary,
    )
    block = readout_state(state, sched)
    return [
        judge_instance(
            block,
            state.segment_map,
            inst,
            vocabulary=protocol.vocabulary,
            position_threshold=protocol.position_threshold,
        )
        for inst in validate_layout(layout).instances
    ]


def case_seed(seed: int, index: int) -> int:
    return seed * 1_000_003 + index


def _worker(args: tuple[Layout, MaskConfig, int, EvalProtocol]) -> list[InstanceVerdict]:
    layout, cfg, seed, protocol = args
    return evaluate_layout(layout, cfg, seed, protocol)


def evaluate_suite(
    suite: Sequence[Layout],
    cfg: MaskConfig,
    seed: int,
    protocol: EvalProtocol = EvalProtocol(),
    config_name: str = "with_all",
    jobs: int = 1,
) -> EvalReport:
    """Evaluate every layout and aggregate MIoU / ISR / SR plus level breakdowns."""
    if not suite:
        raise ValueError("suite must contain at least one layout")
    tasks = [(layout, cfg, case_seed(seed, i), protocol) for i, layout in enumerate(suite)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(_worker, tasks, chunksize=max(1, len(tasks) // (jobs * 4))))
    else:
        verdicts = [_worker(t) for t in tasks]
    return EvalReport(
        config_name=config_name, mask_config=cfg, seed=seed, protocol=protocol, verdicts=verdicts
    )


ABLATION_GRID: tuple[tuple[str, MaskConfig], ...] = (
    ("no_i2i", MaskConfig(i2i_control=False)),
    ("no_i2t", MaskConfig(i2t_control=False)),
    ("no_t2i", MaskConfig(t2i_control=False)),
    ("no_t2t", MaskConfig(t2t_control=False)),
    ("no_detail_renderer", MaskConfig(detail_renderer=False)),
    ("with_all", MaskConfig()),
)


def run_ablation_grid(
    suite: Sequence[Layout],
    seed: int,
    protocol: EvalProtocol = EvalProtocol(),
    jobs: int = 1,
) -> list[EvalReport]:
    """One report per mask-control configuration, same suite and seeds."""
    return [
        evaluate_suite(suite, cfg, seed, protocol=protocol, config_name=name, jobs=jobs)
        for name, cfg in ABLATION_GRID
    ]


def _fallback_boxes(rng: np.random.Generator, n: int) -> list[BoundingBox]:
    """Deterministic grid placement used when rejection sampling stalls."""
    cols = min(n, 3)
    rows = (n + cols - 1) // cols
    boxes = []
    for i in range(n):
        r, c = divmod(i, cols)
        cw, ch = 1.0 / cols, 1.0 / rows
        inset_x, inset_y = 0.15 * cw, 0.15 * ch
        boxes.append(
            BoundingBox(c * cw + inset_x, r * ch + inset_y, (c + 1) * cw - inset_x, (r + 1) * ch - inset_y)
        )
    return boxes


def _sample_boxes(
    rng: np.random.Generator,
    n: int,
    disjoint: bool,
    min_side: float,
    max_side: float,
    gap: float,
    max_overlap_iou: float,
) -> list[BoundingBox]:
    boxes: list[BoundingBox] = []
    for _ in range(n):
        placed = None
        for _attempt in range(200):
            w = rng.uniform(min_side, max_side)
            h = rng.uniform(min_side, max_side)
            x0 = rng.uniform(0.0, 1.0 - w)
            y0 = rng.uniform(0.0, 1.0 - h)
            cand = BoundingBox(x0, y0, x0 + w, y0 + h)
            if disjoint:
                grown = BoundingBox(
                    max(0.0, x0 - gap), max(0.0, y0 - gap), min(1.0, x0 + w + gap), min(1.0, y0 + h + gap)
                )
                ok = all(grown.intersection_area(b) == 0.0 for b in boxes)
            else:
                ok = all(box_iou(cand, b) <= max_overlap_iou for b in boxes)
            if ok:
                placed = cand
                break
        if placed is None:
            return _fallback_boxes(rng, n)
        boxes.append(placed)
    return boxes


def generate_suite(
    count: int,
    n_range: tuple[int, int] = (2, 6),
    seed: int = 0,
    disjoint: bool = True,
    vocabulary: Sequence[str] = DEFAULT_ATTRIBUTES,
    min_side: float = 0.2,
    max_side: float = 0.42,
    gap: float = 0.02,
    max_overlap_iou: float = 0.3,
) -> list[Layout]:
    """Deterministic synthetic layouts with pairwise-distinct attributes.

    Instance counts are drawn uniformly from n_range (a sub-range of 2..6).
    In disjoint mode boxes never touch; otherwise pairwise IoU stays at or
    below max_overlap_iou. Global texts carry no attribute words, so only
    instance descriptions inject attribute mass.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = n_range
    if not (2 <= lo <= hi <= 6):
        raise ValueError(f"n_range {n_range} must lie within (2, 6)")
    if hi > len(vocabulary):
        raise ValueError("need at least as many attribute words as instances per layout")

    rng = np.random.default_rng(seed)
    suite = []
    for _ in range(count):
        n = int(rng.integers(lo, hi + 1))
        attrs = [vocabulary[i] for i in rng.choice(len(vocabulary), size=n, replace=False)]
        nouns = [NOUNS[i] for i in rng.integers(0, len(NOUNS), size=n)]
        boxes = _sample_boxes(rng, n, disjoint, min_side, max_side, gap, max_overlap_iou)
        instances = tuple(
            Instance(id=i + 1, text=f"a {attrs[i]} {nouns[i]}", box=boxes[i], attribute=attrs[i])
            for i in range(n)
        )
        layout = Layout(global_text="a photo of " + ", ".join(f"a {noun}" for noun in nouns), instances=instances)
        suite.append(validate_layout(layout))
    return suite
