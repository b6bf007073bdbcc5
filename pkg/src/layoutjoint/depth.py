"""Procedural scene-depth stage: synthesize depth from a layout, tighten boxes.

Depth is painted back-to-front: background is a shallow vertical gradient,
instances are filled rectangles whose depth grows as their area shrinks
(smaller = nearer, value 1.0 = nearest). Refinement replaces each box with
the bounding box of the largest connected depth plateau inside it, which
undoes padding without ever enlarging a box.
"""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
from scipy import ndimage

from .layout import BoundingBox, Layout, box_coverage

log = logging.getLogger(__name__)

BACKGROUND_BASE = 0.1
BACKGROUND_SLOPE = 0.2
PLATEAU_TOLERANCE = 0.05


def layout_to_depth(layout: Layout, h: int, w: int) -> np.ndarray:
    """(h, w) float64 depth in [0, 1]; deterministic, text-independent."""
    if h < 1 or w < 1:
        raise ValueError("depth dimensions must be >= 1")
    ys = (np.arange(h) + 0.5) / h
    depth = np.broadcast_to(BACKGROUND_BASE + BACKGROUND_SLOPE * ys[:, None], (h, w)).copy()

    # Larger areas are farther away and painted first; on equal areas the
    # lower id is nearer, so it is painted later.
    order = sorted(layout.instances, key=lambda inst: (-inst.box.area, -inst.id))
    n = layout.n
    for rank, inst in enumerate(order, start=1):
        depth[box_coverage(inst.box, h, w)] = 0.5 + 0.5 * rank / n
    return depth


def _modal_depth(values: np.ndarray) -> float:
    uniq, counts = np.unique(values, return_counts=True)
    return float(uniq[np.argmax(counts)])  # ties resolve to the smallest value


def refine_layout(layout: Layout, depth: np.ndarray) -> Layout:
    """Tighten each box to the largest connected plateau at its modal depth.

    Never enlarges a box; a box whose interior covers no pixel is kept as is.
    Idempotent when boxes already match their painted rectangles.
    """
    h, w = depth.shape
    refined = []
    for inst in layout.instances:
        cover = box_coverage(inst.box, h, w)
        if not cover.any():
            log.warning("instance %d: box covers no pixel at %dx%d, kept unchanged", inst.id, h, w)
            refined.append(inst)
            continue
        modal = _modal_depth(depth[cover])
        plateau = cover & (np.abs(depth - modal) <= PLATEAU_TOLERANCE)
        labels, count = ndimage.label(plateau)  # 4-connectivity by default
        if count == 0:
            log.warning("instance %d: empty plateau component, kept unchanged", inst.id)
            refined.append(inst)
            continue
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        component = labels == np.argmax(sizes)
        rows = np.flatnonzero(component.any(axis=1))
        cols = np.flatnonzero(component.any(axis=0))
        # Clip pixel bounds back into the original box, and only move an edge
        # that tightens by at least a full pixel: the raster cannot resolve
        # sub-pixel edges, so smaller moves are quantization noise and would
        # break exact idempotence on already-tight boxes.
        x0 = max(inst.box.x0, int(cols[0]) / w)
        y0 = max(inst.box.y0, int(rows[0]) / h)
        x1 = min(inst.box.x1, int(cols[-1] + 1) / w)
        y1 = min(inst.box.y1, int(rows[-1] + 1) / h)
        box = BoundingBox(
            x0=x0 if x0 - inst.box.x0 >= 1.0 / w else inst.box.x0,
            y0=y0 if y0 - inst.box.y0 >= 1.0 / h else inst.box.y0,
            x1=x1 if inst.box.x1 - x1 >= 1.0 / w else inst.box.x1,
            y1=y1 if inst.box.y1 - y1 >= 1.0 / h else inst.box.y1,
        )
        refined.append(replace(inst, box=box))
    return Layout(global_text=layout.global_text, instances=tuple(refined))


def depth_to_u16(depth: np.ndarray) -> np.ndarray:
    """Quantize [0,1] depth to uint16 for 16-bit PGM output."""
    return np.rint(np.clip(depth, 0.0, 1.0) * 65535.0).astype(np.uint16)
