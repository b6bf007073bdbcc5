"""Command-line interface.

Commands: build-mask, run, evaluate, depth, ablate. A JSON config file can
supply any option by its destination name; explicitly passed flags win. The
seed falls back to the LAYOUTJOINT_SEED environment variable, then 0.

Exit codes: 0 success, 2 usage errors, 3 data errors (unreadable or invalid
layouts and other I/O failures).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

from .attention import decode_attributes, dump_states, readout_state, readout_step, run_sampler
from .depth import depth_to_u16, layout_to_depth, refine_layout
from .evaluation import (
    EvalProtocol,
    evaluate_suite,
    generate_suite,
    judge_instance,
    report_to_json,
    reports_to_csv,
    run_ablation_grid,
)
from .layout import Layout, LayoutError, load_layout, rasterize, save_layout, validate_layout
from .masks import MaskConfig, PhaseSchedule, dump_mask, gamma_for_resolution
from .pgm import write_pgm
from .tokens import DEFAULT_ATTRIBUTES, DEFAULT_EMBED_DIM, build_segment_map

DEFAULTS: dict[str, Any] = {
    "resolution": 512,
    "steps": 20,
    "gamma": None,  # derived from resolution unless given
    "grid_h": 16,
    "grid_w": 16,
    "seg_len": 8,
    "seed": None,  # flag > config > LAYOUTJOINT_SEED > 0
    "jobs": None,  # default: available cores
    "attributes": None,  # default: the color vocabulary
    "i2i_control": True,
    "i2t_control": True,
    "t2i_control": True,
    "t2t_control": True,
    "detail_renderer": True,
    "refine_layout": False,
    "dump_states": False,
    "disjoint": True,
    "n_min": 2,
    "n_max": 6,
    "height": 256,
    "width": 256,
}


def _load_config(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise LayoutError(f"{path}: config file must hold a JSON object")
    return obj


class _Resolver:
    """Option lookup with flag > config file > environment > default."""

    def __init__(self, args: argparse.Namespace, config: dict[str, Any]):
        self.args = args
        self.config = config

    def get(self, key: str) -> Any:
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.config:
            return self.config[key]
        if key == "seed":
            env = os.environ.get("LAYOUTJOINT_SEED")
            if env is not None:
                return int(env)
            return 0
        return DEFAULTS[key]


def _mask_config(res: _Resolver) -> MaskConfig:
    return MaskConfig(
        i2i_control=bool(res.get("i2i_control")),
        i2t_control=bool(res.get("i2t_control")),
        t2i_control=bool(res.get("t2i_control")),
        t2t_control=bool(res.get("t2t_control")),
        detail_renderer=bool(res.get("detail_renderer")),
    )


def _schedule(res: _Resolver, parser: argparse.ArgumentParser) -> PhaseSchedule:
    try:
        steps = int(res.get("steps"))
        gamma = res.get("gamma")
        if gamma is None:
            gamma = min(gamma_for_resolution(int(res.get("resolution"))), steps)
        return PhaseSchedule(total_steps=steps, gamma=int(gamma))
    except ValueError as exc:
        parser.error(str(exc))
        raise AssertionError  # parser.error never returns


def _vocabulary(res: _Resolver, parser: argparse.ArgumentParser) -> tuple[str, ...]:
    raw = res.get("attributes")
    if raw is None:
        return DEFAULT_ATTRIBUTES
    words = [w.strip().lower() for w in (raw.split(",") if isinstance(raw, str) else raw)]
    words = [w for w in words if w]
    if not words or len(set(words)) != len(words):
        parser.error("--attributes needs a comma-separated list of distinct words")
    if len(words) >= DEFAULT_EMBED_DIM:
        parser.error(f"at most {DEFAULT_EMBED_DIM - 1} attribute words are supported")
    return tuple(words)


def _jobs(res: _Resolver) -> int:
    jobs = res.get("jobs")
    return int(jobs) if jobs is not None else (os.cpu_count() or 1)


def _out_dir(res: _Resolver) -> Path:
    out = Path(res.get("out") if res.get("out") is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def cmd_build_mask(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    res = _Resolver(args, _load_config(args.config))
    layout = load_layout(args.layout)
    sched = _schedule(res, parser)
    cfg = _mask_config(res)

    region = rasterize(layout, int(res.get("grid_h")), int(res.get("grid_w")))
    seg = build_segment_map(layout, region, int(res.get("seg_len")))
    out = _out_dir(res)
    if cfg.detail_renderer:
        wanted = {0, sched.gamma - 1, sched.gamma, sched.total_steps - 1}
    else:
        wanted = {0}  # mask is step-independent with the renderer disabled
    steps = sorted(t for t in wanted if 0 <= t < sched.total_steps)
    written = []
    for t in steps:
        pgm_path, _ = dump_mask(seg, sched, t, cfg, out)
        written.append(pgm_path.name)
    print(f"wrote {len(written)} mask file(s) to {out}: {', '.join(written)}")
    return 0


def _maybe_refine(layout: Layout, res: _Resolver) -> Layout:
    if not bool(res.get("refine_layout")):
        return layout
    size = int(res.get("resolution"))
    depth = layout_to_depth(layout, size, size)
    return refine_layout(layout, depth)


def cmd_run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    res = _Resolver(args, _load_config(args.config))
    layout = _maybe_refine(load_layout(args.layout), res)
    sched = _schedule(res, parser)
    cfg = _mask_config(res)
    vocabulary = _vocabulary(res, parser)
    seed = int(res.get("seed"))
    out = _out_dir(res)

    state = run_sampler(
        layout,
        seed,
        sched,
        cfg,
        grid_h=int(res.get("grid_h")),
        grid_w=int(res.get("grid_w")),
        seg_len=int(res.get("seg_len")),
        vocabulary=vocabulary,
    )
    seg = state.segment_map
    block = readout_state(state, sched)
    labels = decode_attributes(block, seg, vocabulary)
    grid = [labels[r * seg.grid_w : (r + 1) * seg.grid_w] for r in range(seg.grid_h)]
    _write_json(
        out / "attributes.json",
        {"grid": [seg.grid_h, seg.grid_w], "readout_step": readout_step(sched), "labels": grid},
    )

    verdicts = []
    for inst in validate_layout(layout).instances:
        if inst.attribute is None:
            verdicts.append({"instance_id": inst.id, "skipped": "no target attribute"})
            continue
        v = judge_instance(block, seg, inst, vocabulary=vocabulary)
        verdicts.append(
            {
                "instance_id": v.instance_id,
                "target_attribute": v.target_attribute,
                "target_box": list(v.target_box),
                "predicted_box": list(v.predicted_box) if v.predicted_box else None,
                "iou": v.iou,
                "position_ok": v.position_ok,
                "attribute_ok": v.attribute_ok,
                "success": v.success,
            }
        )
    _write_json(out / "verdicts.json", {"seed": seed, "instances": verdicts})

    if bool(res.get("dump_states")):
        dump_states(out / "states.bin", state.history or [state.block])
    print(f"wrote attributes.json and verdicts.json to {out}")
    return 0


def _load_suite(args: argparse.Namespace, res: _Resolver, parser: argparse.ArgumentParser) -> list[Layout]:
    if getattr(args, "layouts", None):
        paths = sorted(Path(args.layouts).glob("*.json"))
        if not paths:
            parser.error(f"no layout files found in {args.layouts}")
        return [load_layout(p) for p in paths]
    count = getattr(args, "suite_count", None)
    if count is None and "suite_count" in res.config:
        count = int(res.config["suite_count"])
    if not count or count < 1:
        parser.error("need --suite-count >= 1 or --layouts with layout files")
    n_min, n_max = int(res.get("n_min")), int(res.get("n_max"))
    try:
        return generate_suite(
            int(count),
            n_range=(n_min, n_max),
            seed=int(res.get("seed")),
            disjoint=bool(res.get("disjoint")),
            vocabulary=_vocabulary(res, parser),
        )
    except ValueError as exc:
        parser.error(str(exc))
        raise AssertionError


def _protocol(res: _Resolver, parser: argparse.ArgumentParser) -> EvalProtocol:
    sched = _schedule(res, parser)
    return EvalProtocol(
        total_steps=sched.total_steps,
        gamma=sched.gamma,
        grid_h=int(res.get("grid_h")),
        grid_w=int(res.get("grid_w")),
        seg_len=int(res.get("seg_len")),
        vocabulary=_vocabulary(res, parser),
    )


def cmd_evaluate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    res = _Resolver(args, _load_config(args.config))
    if getattr(args, "ablation_grid", False):
        return cmd_ablate(args, parser)
    suite = _load_suite(args, res, parser)
    protocol = _protocol(res, parser)
    out = _out_dir(res)
    report = evaluate_suite(
        suite,
        _mask_config(res),
        int(res.get("seed")),
        protocol=protocol,
        jobs=_jobs(res),
    )
    (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out / "report.csv").write_text(reports_to_csv([report]), encoding="utf-8")
    print(
        f"evaluated {len(suite)} layouts: ISR={report.isr:.4f} MIoU={report.miou:.4f} SR={report.sr:.4f}"
    )
    return 0


def cmd_ablate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    res = _Resolver(args, _load_config(args.config))
    suite = _load_suite(args, res, parser)
    protocol = _protocol(res, parser)
    out = _out_dir(res)
    reports = run_ablation_grid(suite, int(res.get("seed")), protocol=protocol, jobs=_jobs(res))
    for report in reports:
        (out / f"report_{report.config_name}.json").write_text(report_to_json(report), encoding="utf-8")
    (out / "summary.csv").write_text(reports_to_csv(reports), encoding="utf-8")
    for report in reports:
        print(f"{report.config_name}: ISR={report.isr:.4f} MIoU={report.miou:.4f} SR={report.sr:.4f}")
    return 0


def cmd_depth(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    res = _Resolver(args, _load_config(args.config))
    layout = load_layout(args.layout)
    h, w = int(res.get("height")), int(res.get("width"))
    out = _out_dir(res)
    depth = layout_to_depth(layout, h, w)
    write_pgm(out / "depth.pgm", depth_to_u16(depth), maxval=65535)
    if args.refine:
        save_layout(refine_layout(layout, depth), out / "refined_layout.json")
        print(f"wrote depth.pgm and refined_layout.json to {out}")
    else:
        print(f"wrote depth.pgm to {out}")
    return 0


def _add_common(sub: argparse.ArgumentParser, *, toggles: bool = True) -> None:
    sub.add_argument("--config", help="JSON file with option defaults; flags win on conflict")
    sub.add_argument("--out", help="output directory (default: current directory)")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--resolution", type=int, help="output resolution; sets the strict-step budget")
    sub.add_argument("--steps", type=int, help="total sampling steps (default 20)")
    sub.add_argument("--gamma", type=int, help="strict steps override")
    sub.add_argument("--grid-h", type=int, dest="grid_h")
    sub.add_argument("--grid-w", type=int, dest="grid_w")
    sub.add_argument("--seg-len", type=int, dest="seg_len")
    sub.add_argument("--attributes", help="comma-separated attribute vocabulary (default: 8 color words)")
    if toggles:
        for family in ("i2i", "i2t", "t2i", "t2t"):
            sub.add_argument(
                f"--{family}-control",
                dest=f"{family}_control",
                action=argparse.BooleanOptionalAction,
                default=None,
            )
        sub.add_argument(
            "--detail-renderer",
            dest="detail_renderer",
            action=argparse.BooleanOptionalAction,
            default=None,
        )


def _add_suite_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--suite-count", type=int, dest="suite_count")
    sub.add_argument("--layouts", help="directory of layout JSON files instead of a synthetic suite")
    sub.add_argument("--n-min", type=int, dest="n_min")
    sub.add_argument("--n-max", type=int, dest="n_max")
    sub.add_argument("--disjoint", action=argparse.BooleanOptionalAction, default=None)
    sub.add_argument("--jobs", type=int, help="parallel workers (default: available cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutjoint",
        description="Layout-driven joint-attention masking: masks, toy renders, depth, benchmarks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("build-mask", help="dump per-step attention masks as PGM + JSON sidecars")
    p.add_argument("--layout", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build_mask)

    p = commands.add_parser("run", help="run the toy pipeline on one layout")
    p.add_argument("--layout", required=True)
    _add_common(p)
    p.add_argument("--refine-layout", dest="refine_layout", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--dump-states", dest="dump_states", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_run)

    p = commands.add_parser("evaluate", help="evaluate a suite and write MIoU/ISR/SR reports")
    _add_common(p)
    _add_suite_options(p)
    p.add_argument("--ablation-grid", dest="ablation_grid", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("ablate", help="run the six-config mask-control grid")
    _add_common(p, toggles=False)
    _add_suite_options(p)
    p.set_defaults(func=cmd_ablate)

    p = commands.add_parser("depth", help="synthesize a scene depth map, optionally refine the layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--refine", action="store_true")
    _add_common(p, toggles=False)
    p.set_defaults(func=cmd_depth)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (LayoutError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
