"""layoutjoint: layout-driven joint-attention masking at desk scale.

A small, fully deterministic model of region-controlled joint attention:
boxes rasterize onto a patch grid, text and image tokens share one masked
attention sequence with an early strict phase and a late relaxed phase, a
toy sampler makes attribute propagation observable, and an evaluation
harness scores instance positioning (MIoU) and attribute fidelity (ISR/SR)
under ablations of each mask rule family.
"""

from .attention import (
    AttentionParams,
    DimensionMismatch,
    EmptyRow,
    SamplerState,
    decode_attributes,
    dump_states,
    load_states,
    masked_attention,
    prepare_case,
    readout_state,
    readout_step,
    run_sampler,
    sample_steps,
)
from .depth import depth_to_u16, layout_to_depth, refine_layout
from .evaluation import (
    ABLATION_GRID,
    EvalProtocol,
    EvalReport,
    InstanceVerdict,
    evaluate_layout,
    evaluate_suite,
    generate_suite,
    judge_instance,
    predicted_region,
    report_to_json,
    reports_to_csv,
    run_ablation_grid,
)
from .layout import (
    BoundingBox,
    DegenerateBox,
    EmptyInstanceText,
    Instance,
    InvalidLayout,
    Layout,
    LayoutError,
    OutOfRangeCoordinate,
    TooManyInstances,
    box_coverage,
    box_iou,
    layout_from_json,
    layout_to_json,
    load_layout,
    make_layout,
    rasterize,
    save_layout,
    validate_layout,
)
from .masks import (
    MaskConfig,
    NonPositiveResolution,
    Phase,
    PhaseSchedule,
    StepOutOfRange,
    build_mask,
    dump_mask,
    gamma_for_resolution,
    phase_of,
)
from .pgm import read_pgm, write_pgm
from .tokens import (
    DEFAULT_ATTRIBUTES,
    PAD,
    SegmentMap,
    build_segment_map,
    embed,
    tokenize,
)

__version__ = "0.1.0"
