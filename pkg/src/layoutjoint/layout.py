"""Layouts: validated instance boxes and their rasterization onto a patch grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DEFAULT_MAX_INSTANCES = 16


class LayoutError(ValueError):
    """Base class for malformed layouts."""


class EmptyInstanceText(LayoutError):
    pass


class DegenerateBox(LayoutError):
    pass


class OutOfRangeCoordinate(LayoutError):
    pass


class TooManyInstances(LayoutError):
    pass


class InvalidLayout(LayoutError):
    """Raised for structural problems in layout files (missing/ill-typed fields)."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized [0,1] coordinates, x0 < x1 and y0 < y1."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, x: float, y: float) -> bool:
        # Half-open on the upper edges so adjacent boxes never share a point.
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def intersection_area(self, other: "BoundingBox") -> float:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        if w <= 0.0 or h <= 0.0:
            return 0.0
        return w * h


@dataclass(frozen=True)
class Instance:
    """One instance to render: a description, its box, an optional attribute word."""

    id: int
    text: str
    box: BoundingBox
    attribute: Optional[str] = None


@dataclass(frozen=True)
class Layout:
    """A scene description plus an ordered list of instances."""

    global_text: str
    instances: tuple[Instance, ...]

    @property
    def n(self) -> int:
        return len(self.instances)


def validate_layout(layout: Layout, max_instances: int = DEFAULT_MAX_INSTANCES) -> Layout:
    """Check a layout and return it with instance ids renumbered densely 1..n.

    Raises EmptyInstanceText, DegenerateBox, OutOfRangeCoordinate or
    TooManyInstances on the first violation found (instances in order).
    """
    if not layout.global_text.strip():
        raise EmptyInstanceText("global_text must be non-empty")
    if layout.n < 1:
        raise InvalidLayout("layout needs at least one instance")
    if layout.n > max_instances:
        raise TooManyInstances(f"{layout.n} instances exceed the maximum of {max_instances}")

    renumbered = []
    for pos, inst in enumerate(layout.instances, start=1):
        if not inst.text.strip():
            raise EmptyInstanceText(f"instance {pos} has empty text")
        b = inst.box
        for name, v in (("x0", b.x0), ("y0", b.y0), ("x1", b.x1), ("y1", b.y1)):
            if not (0.0 <= v <= 1.0):
                raise OutOfRangeCoordinate(f"instance {pos}: {name}={v} outside [0,1]")
        if not (b.x0 < b.x1 and b.y0 < b.y1):
            raise DegenerateBox(f"instance {pos}: box {b.as_tuple()} has non-positive area")
        renumbered.append(replace(inst, id=pos))
    return Layout(global_text=layout.global_text, instances=tuple(renumbered))


def patch_centers(grid_h: int, grid_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (x, y) centers of every patch, each shaped (grid_h, grid_w)."""
    ys = (np.arange(grid_h) + 0.5) / grid_h
    xs = (np.arange(grid_w) + 0.5) / grid_w
    return np.broadcast_to(xs[None, :], (grid_h, grid_w)), np.broadcast_to(ys[:, None], (grid_h, grid_w))


def box_coverage(box: BoundingBox, grid_h: int, grid_w: int) -> np.ndarray:
    """Boolean (grid_h, grid_w) map of patches whose centers fall inside the box."""
    cx, cy = patch_centers(grid_h, grid_w)
    return (box.x0 <= cx) & (cx < box.x1) & (box.y0 <= cy) & (cy < box.y1)


def rasterize(layout: Layout, grid_h: int, grid_w: int) -> np.ndarray:
    """Assign every patch an owner in {0 (background), 1..n}.

    A patch belongs to box i iff its center lies inside; overlaps go to the
    smallest-area box, ties to the lower instance id.
    """
    if grid_h < 1 or grid_w < 1:
        raise ValueError("grid dimensions must be >= 1")
    owner = np.zeros((grid_h, grid_w), dtype=np.int32)
    best_area = np.full((grid_h, grid_w), np.inf)
    for inst in layout.instances:
        covered = box_coverage(inst.box, grid_h, grid_w)
        # Strict < keeps the earlier (lower-id) instance on equal areas.
        wins = covered & (inst.box.area < best_area)
        owner[wins] = inst.id
        best_area[wins] = inst.box.area
    return owner


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


def layout_from_json(obj: dict) -> Layout:
    """Build a Layout from the JSON schema; raises InvalidLayout on bad structure.

    Schema: {"global_text": str, "resolution": int, "pixel_coords": bool?,
    "instances": [{"text": str, "attribute": str?, "box": [x0,y0,x1,y1]}]}.
    Boxes are normalized unless pixel_coords is true, in which case they are
    divided by resolution.
    """
    if not isinstance(obj, dict):
        raise InvalidLayout("layout document must be a JSON object")
    global_text = obj.get("global_text")
    if not isinstance(global_text, str):
        raise InvalidLayout("field 'global_text' must be a string")
    raw_instances = obj.get("instances")
    if not isinstance(raw_instances, list) or not raw_instances:
        raise InvalidLayout("field 'instances' must be a non-empty list")

    pixel_coords = bool(obj.get("pixel_coords", False))
    scale = 1.0
    if pixel_coords:
        resolution = obj.get("resolution")
        if not isinstance(resolution, (int, float)) or resolution <= 0:
            raise InvalidLayout("'pixel_coords' requires a positive 'resolution'")
        scale = float(resolution)

    instances = []
    for idx, item in enumerate(raw_instances, start=1):
        if not isinstance(item, dict):
            raise InvalidLayout(f"instances[{idx}] must be an object")
        text = item.get("text")
        if not isinstance(text, str):
            raise InvalidLayout(f"instances[{idx}].text must be a string")
        box = item.get("box")
        if (
            not isinstance(box, (list, tuple))
            or len(box) != 4
            or not all(isinstance(v, (int, float)) for v in box)
        ):
            raise InvalidLayout(f"instances[{idx}].box must be [x0, y0, x1, y1]")
        attribute = item.get("attribute")
        if attribute is not None and not isinstance(attribute, str):
            raise InvalidLayout(f"instances[{idx}].attribute must be a string")
        x0, y0, x1, y1 = (float(v) / scale for v in box)
        instances.append(Instance(id=idx, text=text, box=BoundingBox(x0, y0, x1, y1), attribute=attribute))
    return Layout(global_text=global_text, instances=tuple(instances))


def layout_to_json(layout: Layout) -> dict:
    """Serialize a layout back to the JSON schema (normalized coordinates)."""
    return {
        "global_text": layout.global_text,
        "instances": [
            {
                "text": inst.text,
                **({"attribute": inst.attribute} if inst.attribute is not None else {}),
                "box": list(inst.box.as_tuple()),
            }
            for inst in layout.instances
        ],
    }


def load_layout(path: str | Path, max_instances: int = DEFAULT_MAX_INSTANCES) -> Layout:
    """Read, parse and validate a layout JSON file."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise InvalidLayout(f"{path}: not valid JSON ({exc})") from exc
    return validate_layout(layout_from_json(obj), max_instances=max_instances)


def save_layout(layout: Layout, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(layout_to_json(layout), f, indent=2)
        f.write("\n")


def make_layout(
    global_text: str,
    items: Sequence[tuple[str, tuple[float, float, float, float], Optional[str]]],
) -> Layout:
    """Convenience constructor from (text, box tuple, attribute) triples."""
    instances = tuple(
        Instance(id=i, text=text, box=BoundingBox(*box), attribute=attr)
        for i, (text, box, attr) in enumerate(items, start=1)
    )
    return Layout(global_text=global_text, instances=instances)
