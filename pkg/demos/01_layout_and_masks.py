"""
Layouts, patch grids and the two-phase attention mask
=====================================================

Build a three-instance layout, rasterize it onto the image-token grid, and
look at how the joint-attention mask changes between the early strict phase
and the late relaxed phase.
"""

import numpy as np

from layoutjoint import (
    MaskConfig,
    PhaseSchedule,
    build_mask,
    build_segment_map,
    gamma_for_resolution,
    make_layout,
    phase_of,
    rasterize,
    validate_layout,
)

# A scene with three instances; boxes are normalized [0, 1] coordinates.
layout = validate_layout(
    make_layout(
        "a photo of a table with three objects",
        [
            ("a red cup", (0.05, 0.10, 0.40, 0.50), "red"),
            ("a blue vase", (0.55, 0.05, 0.95, 0.55), "blue"),
            ("a green book", (0.20, 0.60, 0.75, 0.95), "green"),
        ],
    )
)

# Each image token owns the patch whose center falls inside a box; overlaps
# go to the smaller box.
owner = rasterize(layout, 12, 12)
print("region owners on a 12x12 patch grid (0 = background):")
for row in owner:
    print("  " + "".join(str(v) for v in row))

# The text sequence is one global segment plus one segment per instance.
seg = build_segment_map(layout, owner, seg_len=6)
print(f"\ntext tokens: {seg.text_len}  image tokens: {seg.image_len}  total: {seg.total_len}")
for i in range(layout.n + 1):
    start, length = seg.segment_offset(i)
    name = "global" if i == 0 else f"instance {i}"
    print(f"  {name:11s} -> positions [{start}, {start + length})")

# The strict-step budget comes from the output resolution.
sched = PhaseSchedule(total_steps=20, gamma=gamma_for_resolution(512))
print(f"\nschedule: {sched.total_steps} steps, gamma={sched.gamma}")
print("phases:", " ".join(phase_of(sched, t).value[0].upper() for t in range(sched.total_steps)))

# Compare the mask in both phases: how many keys can each query group reach?
for step in (0, sched.total_steps - 1):
    mask = build_mask(seg, sched, step, MaskConfig())
    image_rows = mask[seg.text_len :]
    inst1_rows = mask[seg.image_positions(1) ]
    print(
        f"\nstep {step} ({phase_of(sched, step).value}): "
        f"permitted entries {int(mask.sum())} of {mask.size}"
    )
    reach = sorted(int(p) for p in np.flatnonzero(inst1_rows.any(axis=0)))
    text_reach = [p for p in reach if p < seg.text_len]
    print(f"  instance-1 image tokens can see text positions {text_reach}")
    print(f"  ... and {sum(1 for p in reach if p >= seg.text_len)} image tokens")
