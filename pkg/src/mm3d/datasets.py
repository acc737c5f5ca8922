"""Scene schema, the two annotation dialects, and label unification.

A scene file is a single JSON document::

    {"name": str, "dialect": "nuscenes-style" | "lyft-style",
     "space_range": {"x": [min, max], "y": [min, max], "z": [min, max]},
     "samples": [{"id": str,
                  "ego_pose": {"t": [3], "q": [w, x, y, z]},
                  "views": [{"j": 0-5, "intrinsics": [9, row major],
                             "extrinsics": {"t": [3], "q": [4]},
                             "size": [w, h]}, ... x6],
                  "boxes": [{"c": [3], "e": [3], "yaw": f, "v": [2] | null,
                             "attr": str | null, "label": str}]}]}

Boxes are global-frame by default (as in both source datasets).  A box may
carry ``"frame": "ego"``, in which case it is moved to the global frame with
the sample's ego pose during parsing.  Extrinsics map ego -> camera.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np

from .errors import GeometryError, SchemaError
from .geometry import (
    EGO,
    GLOBAL,
    Box3D,
    CameraView,
    RigidTransform,
    SpaceRange,
    camera_frame,
    transform_box,
)

DIALECTS = ("nuscenes-style", "lyft-style")

OTHER = "Other"

SHARED_SIX = ("Car", "Bicycle", "Motorcycle", "Truck", "Bus", "Pedestrian")

UNIFIED_CLASSES = SHARED_SIX + (
    "Construction Vehicle",
    "Trailer",
    "Traffic Cone",
    "Barrier",
    "Emergency Vehicle",
    "Other Vehicle",
    "Animal",
    OTHER,
)

# Ordered (pattern, unified class).  Longest dot-prefix match wins, so the
# personal-mobility / stroller / wheelchair subclasses override the
# ``human.pedestrian`` rule.
NUSCENES_RULES = (
    ("vehicle.car", "Car"),
    ("vehicle.bicycle", "Bicycle"),
    ("vehicle.motorcycle", "Motorcycle"),
    ("vehicle.truck", "Truck"),
    ("vehicle.bus", "Bus"),
    ("human.pedestrian", "Pedestrian"),
    ("human.pedestrian.personal_mobility", OTHER),
    ("human.pedestrian.stroller", OTHER),
    ("human.pedestrian.wheelchair", OTHER),
    ("vehicle.construction", "Construction Vehicle"),
    ("vehicle.trailer", "Trailer"),
    ("movable_object.trafficcone", "Traffic Cone"),
    ("movable_object.barrier", "Barrier"),
    ("vehicle.emergency", "Emergency Vehicle"),
    ("animal", "Animal"),
)

LYFT_RULES = (
    ("car", "Car"),
    ("bicycle", "Bicycle"),
    ("motorcycle", "Motorcycle"),
    ("truck", "Truck"),
    ("bus", "Bus"),
    ("pedestrian", "Pedestrian"),
    ("emergency_vehicle", "Emergency Vehicle"),
    ("other_vehicle", "Other Vehicle"),
    ("animal", "Animal"),
)


@dataclass(frozen=True)
class LabelMap:
    """Ordered raw-label rules into a unified class list.

    Patterns are matched case-insensitively, either exactly or as a
    dot-separated prefix (``human.pedestrian`` matches
    ``human.pedestrian.adult``).  The longest matching pattern wins; equal
    lengths fall back to rule order.  Unmatched labels map to ``Other``.
    """

    rules: tuple[tuple[str, str], ...]
    unified_classes: tuple[str, ...] = UNIFIED_CLASSES
    shared_six: tuple[str, ...] = SHARED_SIX

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple((str(p), str(c)) for p, c in self.rules))
        object.__setattr__(self, "unified_classes", tuple(self.unified_classes))
        object.__setattr__(self, "shared_six", tuple(self.shared_six))
        if OTHER not in self.unified_classes:
            raise ValueError(f"unified classes must include {OTHER!r}")
        unknown = [c for _, c in self.rules if c not in self.unified_classes]
        if unknown:
            raise ValueError(f"rule targets not in unified classes: {unknown}")
        if not set(self.shared_six) <= set(self.unified_classes):
            raise ValueError("shared_six must be a subset of unified classes")

    @classmethod
    def default(cls) -> "LabelMap":
        """NuScenes + Lyft taxonomies, plus every unified name as an exact rule."""
        identity = tuple((c, c) for c in UNIFIED_CLASSES)
        return cls(NUSCENES_RULES + LYFT_RULES + identity)

    def __call__(self, raw: str) -> str:
        return map_label(raw, self)


def map_label(raw: str, label_map: LabelMap) -> str:
    key = raw.lower()
    best: Optional[str] = None
    best_len = -1
    for pattern, target in label_map.rules:
        p = pattern.lower()
        if key == p or key.startswith(p + "."):
            if len(p) > best_len:
                best, best_len = target, len(p)
    return best if best is not None else OTHER


@dataclass(frozen=True)
class Annotation:
    box: Box3D
    label: str


@dataclass(frozen=True)
class Sample:
    """One timestep: the 6 camera views, global-frame boxes and provenance."""

    sample_id: str
    views: tuple[CameraView, ...]
    gt_boxes: tuple[Annotation, ...]
    source: str
    ego_pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: tuple[Sample, ...]
    space_range: SpaceRange = field(default_factory=SpaceRange)
    class_list: tuple[str, ...] = ()
    dialect: str = "nuscenes-style"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "class_list", tuple(self.class_list))
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise SchemaError("samples", "duplicate sample ids")

    def __len__(self) -> int:
        return len(self.samples)

    def sample_by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s
        raise KeyError(sample_id)


# -- parsing -----------------------------------------------------------------


def _get(obj: Any, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        raise SchemaError(f"{path}.{key}" if path else key, "missing")
    return obj[key]


def _num(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _vec(value: Any, n: int, path: str) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        raise SchemaError(path, f"expected a list of {n} numbers")
    return tuple(_num(v, f"{path}[{i}]") for i, v in enumerate(value))


def _str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, "expected a string")
    return value


def _transform(obj: Any, path: str, source: str, target: str) -> RigidTransform:
    t = _vec(_get(obj, "t", path), 3, f"{path}.t")
    q = _vec(_get(obj, "q", path), 4, f"{path}.q")
    try:
        return RigidTransform(q, t, source, target)
    except GeometryError as exc:
        raise GeometryError(f"{path}: {exc}") from exc


def _parse_view(obj: Any, path: str) -> CameraView:
    j = _get(obj, "j", path)
    if isinstance(j, bool) or not isinstance(j, int):
        raise SchemaError(f"{path}.j", "expected an integer")
    K = _vec(_get(obj, "intrinsics", path), 9, f"{path}.intrinsics")
    size = _vec(_get(obj, "size", path), 2, f"{path}.size")
    ext = _transform(_get(obj, "extrinsics", path), f"{path}.extrinsics", EGO, camera_frame(j))
    if size[0] != int(size[0]) or size[1] != int(size[1]):
        raise SchemaError(f"{path}.size", "expected integer pixel sizes")
    try:
        return CameraView(j, np.array(K).reshape(3, 3), ext, int(size[0]), int(size[1]))
    except GeometryError as exc:
        raise GeometryError(f"{path}: {exc}") from exc


def _parse_box(obj: Any, path: str, ego_pose: RigidTransform) -> Annotation:
    c = _vec(_get(obj, "c", path), 3, f"{path}.c")
    e = _vec(_get(obj, "e", path), 3, f"{path}.e")
    yaw = _num(_get(obj, "yaw", path), f"{path}.yaw")
    v = obj.get("v")
    vel = None if v is None else _vec(v, 2, f"{path}.v")
    attr = obj.get("attr")
    if attr is not None:
        attr = _str(attr, f"{path}.attr")
    label = _str(_get(obj, "label", path), f"{path}.label")
    frame = obj.get("frame", GLOBAL)
    if frame not in (GLOBAL, EGO):
        raise SchemaError(f"{path}.frame", f"unsupported frame {frame!r}")
    box = Box3D(*c, *e, yaw=yaw, velocity=vel, attribute=attr, frame=frame)
    if frame == EGO:
        box = transform_box(box, ego_pose)
    return Annotation(box, label)


def _parse_sample(obj: Any, path: str, source: str) -> Sample:
    sid = _str(_get(obj, "id", path), f"{path}.id")
    ego_pose = _transform(_get(obj, "ego_pose", path), f"{path}.ego_pose", EGO, GLOBAL)
    views_raw = _get(obj, "views", path)
    if not isinstance(views_raw, list):
        raise SchemaError(f"{path}.views", "expected a list")
    if len(views_raw) != 6:
        raise SchemaError("views", "expected 6")
    views = [_parse_view(v, f"{path}.views[{i}]") for i, v in enumerate(views_raw)]
    if sorted(v.j for v in views) != list(range(6)):
        raise SchemaError("views", "indices must be 0..5, each once")
    views.sort(key=lambda v: v.j)
    boxes_raw = _get(obj, "boxes", path)
    if not isinstance(boxes_raw, list):
        raise SchemaError(f"{path}.boxes", "expected a list")
    boxes = [_parse_box(b, f"{path}.boxes[{i}]", ego_pose) for i, b in enumerate(boxes_raw)]
    return Sample(sid, tuple(views), tuple(boxes), source, ego_pose)


def parse_views(docs: Sequence[Any]) -> tuple[CameraView, ...]:
    """Parse a list of view documents (same schema as inside a sample)."""
    return tuple(_parse_view(v, f"views[{i}]") for i, v in enumerate(docs))


def _parse_range(obj: Any) -> SpaceRange:
    x = _vec(_get(obj, "x", "space_range"), 2, "space_range.x")
    y = _vec(_get(obj, "y", "space_range"), 2, "space_range.y")
    z = _vec(_get(obj, "z", "space_range"), 2, "space_range.z")
    try:
        return SpaceRange(x[0], x[1], y[0], y[1], z[0], z[1])
    except GeometryError as exc:
        raise SchemaError("space_range", str(exc)) from exc


def parse_scene_file(data: Union[bytes, str], dialect: Optional[str] = None) -> Dataset:
    """Parse a scene document into a ``Dataset``.

    Args:
        data: the JSON document (bytes or text).
        dialect: expected dialect; ``None`` accepts whatever the file declares.

    Raises:
        SchemaError: malformed JSON, missing or ill-typed fields, wrong view count.
        GeometryError: invalid intrinsics or non-unit quaternions.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    declared = _str(_get(doc, "dialect", ""), "dialect")
    if declared not in DIALECTS:
        raise SchemaError("dialect", f"unknown dialect {declared!r}")
    if dialect is not None and dialect != declared:
        raise SchemaError("dialect", f"file declares {declared!r}, expected {dialect!r}")
    name = doc.get("name")
    name = declared if name is None else _str(name, "name")
    space_range = _parse_range(_get(doc, "space_range", ""))
    samples_raw = _get(doc, "samples", "")
    if not isinstance(samples_raw, list):
        raise SchemaError("samples", "expected a list")
    samples = [_parse_sample(s, f"samples[{i}]", name) for i, s in enumerate(samples_raw)]
    labels: list[str] = []
    for s in samples:
        for a in s.gt_boxes:
            if a.label not in labels:
                labels.append(a.label)
    return Dataset(name, tuple(samples), space_range, tuple(labels), declared)


# -- canonical writer ----------------------------------------------------------


def _transform_doc(T: RigidTransform) -> dict:
    return {"t": list(T.translation), "q": list(T.quat)}


def _box_doc(a: Annotation) -> dict:
    b = a.box
    return {
        "c": [b.cx, b.cy, b.cz],
        "e": [b.lx, b.ly, b.lz],
        "yaw": b.yaw,
        "v": None if b.velocity is None else list(b.velocity),
        "attr": b.attribute,
        "label": a.label,
    }


def scene_to_doc(ds: Dataset) -> dict:
    r = ds.space_range
    return {
        "name": ds.name,
        "dialect": ds.dialect,
        "space_range": {"x": [r.x_min, r.x_max], "y": [r.y_min, r.y_max], "z": [r.z_min, r.z_max]},
        "samples": [
            {
                "id": s.sample_id,
                "ego_pose": _transform_doc(s.ego_pose),
                "views": [
                    {
                        "j": v.j,
                        "intrinsics": [float(x) for x in v.intrinsics.ravel()],
                        "extrinsics": _transform_doc(v.extrinsics),
                        "size": [v.width, v.height],
                    }
                    for v in s.views
                ],
                "boxes": [_box_doc(a) for a in s.gt_boxes],
            }
            for s in ds.samples
        ],
    }


def write_scene_file(ds: Dataset) -> bytes:
    """Canonical serialization: global-frame boxes, views sorted by index."""
    return (json.dumps(scene_to_doc(ds), indent=1) + "\n").encode("utf-8")


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    kind: str  # out_of_range | degenerate_extent | duplicate | frame
    index: int
    message: str


@dataclass(frozen=True)
class ValidationReport:
    sample_id: str
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def __len__(self) -> int:
        return len(self.findings)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "findings": [{"kind": f.kind, "index": f.index, "message": f.message} for f in self.findings],
        }


def validate_sample(s: Sample, space_range: SpaceRange) -> ValidationReport:
    """List boxes outside the range, degenerate boxes and duplicated entries."""
    findings: list[Finding] = []
    seen_views: set[int] = set()
    for v in s.views:
        if v.j in seen_views:
            findings.append(Finding("duplicate", v.j, f"view index {v.j} repeated"))
        seen_views.add(v.j)
    seen_boxes: dict[tuple, int] = {}
    for i, a in enumerate(s.gt_boxes):
        b = a.box
        if b.frame != GLOBAL:
            findings.append(Finding("frame", i, f"box in frame {b.frame!r}"))
        if not space_range.contains(b.center):
            findings.append(Finding("out_of_range", i, f"center {tuple(b.center)} outside range"))
        if not (min(b.lx, b.ly, b.lz) > 0 and all(math.isfinite(x) for x in (b.lx, b.ly, b.lz))):
            findings.append(Finding("degenerate_extent", i, f"extents {(b.lx, b.ly, b.lz)}"))
        key = (b.cx, b.cy, b.cz, b.lx, b.ly, b.lz, b.yaw, a.label)
        if key in seen_boxes:
            findings.append(Finding("duplicate", i, f"same as box {seen_boxes[key]}"))
        else:
            seen_boxes[key] = i
    return ValidationReport(s.sample_id, tuple(findings))


def validate_dataset(ds: Dataset) -> list[ValidationReport]:
    return [validate_sample(s, ds.space_range) for s in ds.samples]


def unified_labels(sample: Sample, label_map: LabelMap) -> tuple[str, ...]:
    return tuple(map_label(a.label, label_map) for a in sample.gt_boxes)


def load_scene(path, dialect: Optional[str] = None) -> Dataset:
    with open(path, "rb") as fh:
        return parse_scene_file(fh.read(), dialect)
