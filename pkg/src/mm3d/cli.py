"""Command-line entry point.

Exit codes: 0 success, 2 data error, 64 usage error.

Every subcommand accepts ``--seed``, ``--config`` (TOML) and ``--out``;
explicit flags override config values.  Outputs are written atomically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .anchors import AnchorSpec, anchors_to_doc, generate_anchor_grid, parse_sizes
from .datasets import LabelMap, load_scene, parse_views, validate_dataset, write_scene_file
from .errors import MM3DError
from .features import pyramid_from_bytes, pyramid_to_bytes
from .fixtures import (
    FixtureSpec,
    NoiseSpec,
    generate_dataset,
    generate_pyramid,
    perturb_to_predictions,
    rig_views,
    scene_bytes,
)
from .geometry import SpaceRange
from .head import ForwardModel, HeadConfig
from .metrics import EvalConfig, EvalReport, Prediction, PredictionSet, evaluate, parse_predictions, predictions_to_jsonl
from .mixing import build_mixed_dataset, epoch_index_jsonl
from .posenc import build_coord_volume, project_positional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64

PUBLIC_COMMANDS = ("ingest", "mix", "anchors", "encode", "forward", "eval", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Resolved run settings: TOML config merged under command-line flags."""

    seed: Optional[int] = None
    out: Optional[str] = None
    space_range: SpaceRange = field(default_factory=SpaceRange)
    anchors: AnchorSpec = field(default_factory=lambda: AnchorSpec(counts=(4, 4, 1)))
    head: dict = field(default_factory=dict)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def require_seed(self) -> int:
        if self.seed is None:
            raise UsageError("--seed is required for this subcommand")
        return self.seed


def write_atomic(path: Optional[str], data: bytes) -> None:
    """Write to ``path`` via temp file + rename; ``None`` or ``-`` means stdout."""
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc


def _pick(flag: Any, section: dict, key: str, default: Any = None) -> Any:
    if flag is not None:
        return flag
    return section.get(key, default)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    conf = _load_config(getattr(args, "config", None))
    run = conf.get("run", {})
    cfg = RunConfig(seed=_pick(args.seed, run, "seed"), out=_pick(args.out, run, "out"))

    rng_conf = conf.get("range", {})
    rng_flag = getattr(args, "range", None)
    if rng_flag is not None:
        cfg.space_range = SpaceRange(*rng_flag)
    elif rng_conf:
        cfg.space_range = SpaceRange(*rng_conf["x"], *rng_conf["y"], *rng_conf["z"])

    a = conf.get("anchors", {})
    sizes_flag = getattr(args, "size", None)
    sizes = parse_sizes(sizes_flag) if sizes_flag else a.get("sizes", cfg.anchors.sizes)
    cfg.anchors = AnchorSpec(
        sizes=tuple(tuple(s) for s in sizes),
        yaws=tuple(_pick(getattr(args, "yaw", None), a, "yaws", cfg.anchors.yaws)),
        counts=tuple(_pick(getattr(args, "counts", None), a, "counts", cfg.anchors.counts)),
    )

    cfg.head = dict(conf.get("head", {}))
    e = dict(conf.get("eval", {}))
    if getattr(args, "dist_thresholds", None) is not None:
        e["dist_thresholds"] = args.dist_thresholds
    if getattr(args, "tp_threshold", None) is not None:
        e["tp_threshold"] = args.tp_threshold
    for key in ("dist_thresholds", "classes", "shared_six"):
        if key in e:
            e[key] = tuple(e[key])
    cfg.eval = EvalConfig(**e)
    return cfg


def _dump_json(doc: Any) -> bytes:
    return (json.dumps(doc, indent=1, sort_keys=False) + "\n").encode("utf-8")


# -- subcommands ---------------------------------------------------------------


def cmd_ingest(args, cfg: RunConfig) -> int:
    ds = load_scene(args.scene, args.dialect)
    reports = validate_dataset(ds)
    write_atomic(cfg.out, write_scene_file(ds))
    findings = [r.to_dict() for r in reports if not r.ok]
    summary = {
        "name": ds.name,
        "source": ds.dialect,
        "samples": len(ds),
        "boxes": sum(len(s.gt_boxes) for s in ds.samples),
        "findings": findings,
    }
    if args.report:
        write_atomic(args.report, _dump_json(summary))
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def cmd_mix(args, cfg: RunConfig) -> int:
    seed = cfg.require_seed()
    sources = [load_scene(p) for p in args.scenes]
    mixed = build_mixed_dataset(sources, LabelMap.default(), seed)
    write_atomic(cfg.out, epoch_index_jsonl(mixed, range(args.epochs)).encode("utf-8"))
    return EXIT_OK


def cmd_anchors(args, cfg: RunConfig) -> int:
    grid = generate_anchor_grid(cfg.space_range, cfg.anchors)
    write_atomic(cfg.out, _dump_json(anchors_to_doc(grid)))
    return EXIT_OK


def _views(scene_path: Optional[str]):
    if scene_path:
        ds = load_scene(scene_path)
        if not ds.samples:
            raise MM3DError("scene has no samples")
        return ds.samples[0].views
    return parse_views(rig_views())


def cmd_encode(args, cfg: RunConfig) -> int:
    seed = cfg.require_seed()
    views = _views(args.scene)
    vol = build_coord_volume(views, args.depth_bins, args.height, args.width)
    pe = project_positional(vol, args.channels, seed)
    data = np.ascontiguousarray(pe.data, dtype="<f8")
    doc = {
        "coord_shape": list(vol.shape),
        "shape": list(pe.shape),
        "sha256": hashlib.sha256(data.tobytes()).hexdigest(),
        "min": float(data.min()),
        "max": float(data.max()),
    }
    write_atomic(cfg.out, _dump_json(doc))
    return EXIT_OK


def _head_config(cfg: RunConfig, seed: int, zero: bool) -> HeadConfig:
    h = dict(cfg.head)
    h["seed"] = seed
    if zero:
        h["init"] = "zero"
    for key in ("class_names", "depth_range"):
        if key in h:
            h[key] = tuple(h[key])
    return HeadConfig(**h)


def cmd_forward(args, cfg: RunConfig) -> int:
    seed = cfg.require_seed()
    ds = load_scene(args.scene)
    with open(args.pyramid, "rb") as fh:
        levels = pyramid_from_bytes(fh.read())
    grid = generate_anchor_grid(cfg.space_range, cfg.anchors)
    hcfg = _head_config(cfg, seed, args.zero_weights)
    model = ForwardModel.build(hcfg, levels.channels)
    out: dict[str, tuple[Prediction, ...]] = {}
    for s in ds.samples:
        res = model(levels, s.views, grid)
        out[s.sample_id] = tuple(
            Prediction(box, cls, min(1.0, max(0.0, score))) for box, (cls, score) in zip(res.boxes, res.labels())
        )
    write_atomic(cfg.out, predictions_to_jsonl(PredictionSet(out)).encode("utf-8"))
    return EXIT_OK


def _write_report(report: EvalReport, out: Optional[str]) -> None:
    table = report.render_table()
    if out is None or out == "-":
        sys.stdout.write(table)
        return
    write_atomic(os.path.join(out, "report.json"), report.to_json().encode("utf-8"))
    write_atomic(os.path.join(out, "report.txt"), table.encode("utf-8"))
    sys.stdout.write(table)


def cmd_eval(args, cfg: RunConfig) -> int:
    ds = load_scene(args.scene)
    with open(args.predictions, encoding="utf-8") as fh:
        preds = parse_predictions(fh.read())
    report = evaluate(preds, ds, LabelMap.default(), cfg.eval)
    _write_report(report, cfg.out)
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    with open(args.report, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MM3DError(f"invalid report JSON: {exc}") from exc
    report = EvalReport.from_dict(doc)
    write_atomic(cfg.out, report.render_table().encode("utf-8"))
    return EXIT_OK


def cmd_gen_fixtures(args, cfg: RunConfig) -> int:
    seed = cfg.require_seed()
    out = Path(cfg.out or ".")
    for dialect, n in (("nuscenes-style", args.samples), ("lyft-style", args.samples * args.lyft_factor)):
        spec = FixtureSpec(n_samples=n, boxes_per_sample=args.boxes, dialect=dialect, seed=seed)
        write_atomic(str(out / f"{dialect.split('-')[0]}.json"), scene_bytes(spec))
    levels = generate_pyramid(args.height, args.width, seed)
    write_atomic(str(out / "pyramid.mmt"), pyramid_to_bytes(levels))
    ds = generate_dataset(FixtureSpec(n_samples=args.samples, boxes_per_sample=args.boxes, seed=seed))
    noise = NoiseSpec(args.center_noise, args.extent_noise, args.yaw_noise)
    preds = perturb_to_predictions(ds, noise, args.drop_rate, args.fp_rate, seed)
    write_atomic(str(out / "predictions.jsonl"), predictions_to_jsonl(preds).encode("utf-8"))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="root seed for all randomness")
    p.add_argument("--config", default=None, help="TOML config; flags override it")
    p.add_argument("--out", default=None, help="output path (stdout if omitted)")
    return p


def _geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--range", type=float, nargs=6, metavar=("XMIN", "XMAX", "YMIN", "YMAX", "ZMIN", "ZMAX"))
    p.add_argument("--counts", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    p.add_argument("--size", action="append", metavar="W,H,L", help="anchor size; repeatable")
    p.add_argument("--yaw", type=float, action="append", help="anchor yaw (rad); repeatable")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="mm3d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mm3d {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(PUBLIC_COMMANDS) + "}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], help="parse + validate a scene file, write canonical JSON")
    p.add_argument("scene")
    p.add_argument("--dialect", choices=("nuscenes-style", "lyft-style"))
    p.add_argument("--report", help="also write the validation summary here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mix", parents=[common], help="balanced multi-dataset epoch index (JSON lines)")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--epochs", type=int, default=1)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("anchors", parents=[common], help="emit the anchor grid as box JSON")
    _geometry_flags(p)
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("encode", parents=[common], help="positional encoding shape + checksum")
    p.add_argument("--height", type=int, default=8, help="working-resolution height")
    p.add_argument("--width", type=int, default=22, help="working-resolution width")
    p.add_argument("--depth-bins", type=int, default=4)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--scene", help="take camera views from this scene's first sample")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("forward", parents=[common], help="run the detection head, write predictions")
    p.add_argument("scene")
    p.add_argument("pyramid", help="MMT0 file holding the 4 pyramid levels")
    p.add_argument("--zero-weights", action="store_true", help="all-zero weights (boxes = anchors)")
    _geometry_flags(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("eval", parents=[common], help="NDS/mAP report (--out is a directory)")
    p.add_argument("scene")
    p.add_argument("predictions")
    p.add_argument("--dist-thresholds", type=float, nargs="+")
    p.add_argument("--tp-threshold", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="render a report JSON as a table")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-fixtures", parents=[common])
    p.add_argument("--samples", type=int, default=3)
    p.add_argument("--lyft-factor", type=int, default=2)
    p.add_argument("--boxes", type=int, default=8)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--center-noise", type=float, default=0.0)
    p.add_argument("--extent-noise", type=float, default=0.0)
    p.add_argument("--yaw-noise", type=float, default=0.0)
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_gen_fixtures)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"mm3d {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MM3DError, OSError, ValueError, KeyError) as exc:
        print(f"mm3d {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
