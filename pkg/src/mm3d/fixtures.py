"""Synthetic scenes, noisy predictions and feature pyramids with known answers.

Scenes use a 6-camera ring (fx = fy = 500, principal point at the center of
a 704 x 256 image) and boxes drawn inside the default detection range.  The
geometry stream does not depend on the dialect: the same seed gives the
same boxes in both dialects, only the label strings differ.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .datasets import DIALECTS, SHARED_SIX, Dataset, LabelMap, map_label, parse_scene_file
from .errors import InvalidShape, InvalidSpec
from .features import NUM_LEVELS, NUM_VIEWS, FeatureTensor, PyramidLevels
from .geometry import EGO, RigidTransform, SpaceRange, camera_frame
from .metrics import Prediction, PredictionSet
from .rng import numpy_rng

IMAGE_WIDTH = 704
IMAGE_HEIGHT = 256
FOCAL = 500.0

# Camera heading (degrees, ccw from ego +x) per view index.
VIEW_HEADINGS = (55.0, 0.0, -55.0, 110.0, 180.0, -110.0)

LABELS = {
    "nuscenes-style": {
        "Car": "vehicle.car",
        "Bicycle": "vehicle.bicycle",
        "Motorcycle": "vehicle.motorcycle",
        "Truck": "vehicle.truck",
        "Bus": "vehicle.bus.rigid",
        "Pedestrian": "human.pedestrian.adult",
        "Construction Vehicle": "vehicle.construction",
        "Trailer": "vehicle.trailer",
        "Traffic Cone": "movable_object.trafficcone",
        "Barrier": "movable_object.barrier",
        "Emergency Vehicle": "vehicle.emergency.ambulance",
        "Animal": "animal",
    },
    "lyft-style": {
        "Car": "car",
        "Bicycle": "bicycle",
        "Motorcycle": "motorcycle",
        "Truck": "truck",
        "Bus": "bus",
        "Pedestrian": "pedestrian",
        "Emergency Vehicle": "emergency_vehicle",
        "Other Vehicle": "other_vehicle",
        "Animal": "animal",
    },
}

MEAN_SIZES = {
    "Car": (4.6, 1.9, 1.7),
    "Bicycle": (1.7, 0.6, 1.3),
    "Motorcycle": (2.1, 0.8, 1.5),
    "Truck": (6.9, 2.5, 2.8),
    "Bus": (11.0, 2.9, 3.5),
    "Pedestrian": (0.7, 0.7, 1.8),
    "Construction Vehicle": (6.4, 2.8, 3.2),
    "Trailer": (12.0, 2.9, 3.9),
    "Traffic Cone": (0.4, 0.4, 1.0),
    "Barrier": (0.5, 2.5, 1.0),
    "Emergency Vehicle": (5.5, 2.2, 2.3),
    "Other Vehicle": (8.0, 2.6, 3.0),
    "Animal": (0.9, 0.4, 0.8),
}

STATIC = {"Traffic Cone", "Barrier"}

ATTRIBUTES = {
    "Pedestrian": ("pedestrian.moving", "pedestrian.standing"),
    "Bicycle": ("cycle.with_rider", "cycle.without_rider"),
    "Motorcycle": ("cycle.with_rider", "cycle.without_rider"),
}
VEHICLE_ATTRIBUTES = ("vehicle.moving", "vehicle.parked", "vehicle.stopped")


def _attributes_for(cls: str) -> tuple[str, ...]:
    if cls in STATIC or cls == "Animal":
        return ()
    return ATTRIBUTES.get(cls, VEHICLE_ATTRIBUTES)


@dataclass(frozen=True)
class NoiseSpec:
    """Prediction jitter: center sigma (m), log-extent sigma, yaw sigma (rad)."""

    center: float = 0.0
    extent: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if min(self.center, self.extent, self.yaw) < 0:
            raise InvalidSpec("noise sigmas must be >= 0")


@dataclass(frozen=True)
class FixtureSpec:
    n_samples: int = 3
    boxes_per_sample: int = 8
    class_mix: Mapping[str, float] = field(default_factory=lambda: {c: 1.0 / 6 for c in SHARED_SIX})
    noise: NoiseSpec = NoiseSpec()
    dialect: str = "nuscenes-style"
    seed: int = 0
    name: Optional[str] = None
    space_range: SpaceRange = SpaceRange()

    def __post_init__(self):
        if self.n_samples < 0 or self.boxes_per_sample < 0:
            raise InvalidSpec("counts must be >= 0")
        if self.dialect not in DIALECTS:
            raise InvalidSpec(f"unknown dialect {self.dialect!r}")
        mix = dict(self.class_mix)
        if not mix or any(w < 0 for w in mix.values()) or abs(math.fsum(mix.values()) - 1.0) > 1e-9:
            raise InvalidSpec("class mix weights must be >= 0 and sum to 1")
        missing = [c for c in mix if c not in LABELS[self.dialect]]
        if missing:
            raise InvalidSpec(f"{self.dialect} has no label for {missing}")
        object.__setattr__(self, "class_mix", mix)


def rig_views() -> list[dict]:
    """View documents for the synthetic 6-camera ring (extrinsics: ego -> camera)."""
    K = [FOCAL, 0.0, IMAGE_WIDTH / 2, 0.0, FOCAL, IMAGE_HEIGHT / 2, 0.0, 0.0, 1.0]
    views = []
    for j, heading in enumerate(VIEW_HEADINGS):
        a = math.radians(heading)
        forward = np.array([math.cos(a), math.sin(a), 0.0])
        right = np.array([math.sin(a), -math.cos(a), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        R_ego_cam = np.stack([right, down, forward], axis=1)  # columns: camera axes in ego
        mount = np.array([1.0 + 0.5 * math.cos(a), 0.5 * math.sin(a), 1.6])
        ego_from_cam = RigidTransform.from_matrix(R_ego_cam, mount, camera_frame(j), EGO)
        cam_from_ego = ego_from_cam.inverse()
        views.append(
            {
                "j": j,
                "intrinsics": K,
                "extrinsics": {"t": list(cam_from_ego.translation), "q": list(cam_from_ego.quat)},
                "size": [IMAGE_WIDTH, IMAGE_HEIGHT],
            }
        )
    return views


def generate_scene(spec: FixtureSpec) -> dict:
    """Canonical scene document for ``spec``; deterministic per seed."""
    rng = numpy_rng(spec.seed, "fixture-scene")
    classes = list(spec.class_mix)
    probs = np.array([spec.class_mix[c] for c in classes])
    probs = probs / probs.sum()
    r = spec.space_range
    margin = np.minimum(1.0, 0.25 * r.span)
    lo, hi = r.lower + margin, r.upper - margin
    views = rig_views()
    samples = []
    for k in range(spec.n_samples):
        ego_yaw = rng.uniform(-math.pi, math.pi)
        ego = RigidTransform.from_yaw(ego_yaw)
        boxes = []
        for _ in range(spec.boxes_per_sample):
            cls = classes[int(rng.choice(len(classes), p=probs))]
            center = rng.uniform(lo, hi)
            ext = np.array(MEAN_SIZES[cls]) * rng.uniform(0.9, 1.1, size=3)
            yaw = rng.uniform(-math.pi, math.pi)
            v = rng.normal(0.0, 2.0, size=2)
            attrs = _attributes_for(cls)
            a = int(rng.integers(0, 3))
            boxes.append(
                {
                    "c": [float(x) for x in center],
                    "e": [float(x) for x in ext],
                    "yaw": float(yaw),
                    "v": None if cls in STATIC else [float(x) for x in v],
                    "attr": attrs[a % len(attrs)] if attrs else None,
                    "label": LABELS[spec.dialect][cls],
                }
            )
        samples.append(
            {
                "id": f"{spec.dialect.split('-')[0]}-{spec.seed}-{k:04d}",
                "ego_pose": {"t": list(ego.translation), "q": list(ego.quat)},
                "views": views,
                "boxes": boxes,
            }
        )
    return {
        "name": spec.name or spec.dialect,
        "dialect": spec.dialect,
        "space_range": {"x": [r.x_min, r.x_max], "y": [r.y_min, r.y_max], "z": [r.z_min, r.z_max]},
        "samples": samples,
    }


def scene_bytes(spec: FixtureSpec) -> bytes:
    return (json.dumps(generate_scene(spec), indent=1) + "\n").encode("utf-8")


def generate_dataset(spec: FixtureSpec) -> Dataset:
    return parse_scene_file(scene_bytes(spec), spec.dialect)


def perturb_to_predictions(
    scene: Dataset,
    noise: NoiseSpec = NoiseSpec(),
    drop_rate: float = 0.0,
    fp_rate: float = 0.0,
    seed: int = 0,
    label_map: Optional[LabelMap] = None,
) -> PredictionSet:
    """Predictions derived from ground truth with known corruption.

    Each gt box is dropped with probability ``drop_rate``, otherwise jittered
    by ``noise`` and emitted with its unified class and a confidence in
    [0.5, 1].  Independently, each gt spawns a false positive with
    probability ``fp_rate`` at a uniform position in the range, with
    confidence in [0, 1].  With all parameters 0 the boxes are copied exactly.
    """
    if not (0.0 <= drop_rate <= 1.0 and 0.0 <= fp_rate <= 1.0):
        raise InvalidSpec("rates must lie in [0, 1]")
    label_map = LabelMap.default() if label_map is None else label_map
    rng = numpy_rng(seed, "perturb")
    r = scene.space_range
    out: dict[str, tuple[Prediction, ...]] = {}
    for s in scene.samples:
        preds: list[Prediction] = []
        for a in s.gt_boxes:
            b = a.box
            cls = map_label(a.label, label_map)
            u_drop, u_fp = rng.uniform(size=2)
            dc = rng.normal(0.0, 1.0, size=3) * noise.center
            de = rng.normal(0.0, 1.0, size=3) * noise.extent
            dy = rng.normal(0.0, 1.0) * noise.yaw
            score = rng.uniform(0.5, 1.0)
            if u_drop >= drop_rate:
                box = b.replace(
                    cx=b.cx + dc[0], cy=b.cy + dc[1], cz=b.cz + dc[2],
                    lx=b.lx * math.exp(de[0]), ly=b.ly * math.exp(de[1]), lz=b.lz * math.exp(de[2]),
                    yaw=b.yaw + dy,
                )
                preds.append(Prediction(box, cls, score))
            fp_center = rng.uniform(r.lower, r.upper)
            fp_score = rng.uniform(0.0, 1.0)
            if u_fp < fp_rate:
                fp = b.replace(cx=fp_center[0], cy=fp_center[1], cz=fp_center[2])
                preds.append(Prediction(fp, cls, fp_score))
        out[s.sample_id] = tuple(preds)
    return PredictionSet(out)


def generate_pyramid(
    height: int, width: int, seed: int, channels: int = 64, views: int = NUM_VIEWS
) -> PyramidLevels:
    """Seeded standard-normal levels at H/4 .. H/32.

    Values are rounded to float32 so the MMT0 file form is lossless.
    """
    if height % 32 or width % 32 or height <= 0 or width <= 0:
        raise InvalidShape(f"H and W must be positive multiples of 32, got {height}x{width}")
    rng = numpy_rng(seed, "pyramid")
    levels = []
    for i in range(NUM_LEVELS):
        f = 4 << i
        data = rng.standard_normal((views, channels, height // f, width // f)).astype(np.float32)
        levels.append(FeatureTensor(data.astype(np.float64)))
    return PyramidLevels(tuple(levels))


def zero_pyramid(height: int, width: int, channels: int = 64, views: int = NUM_VIEWS) -> PyramidLevels:
    return PyramidLevels(
        tuple(FeatureTensor(np.zeros((views, channels, height // (4 << i), width // (4 << i)))) for i in range(NUM_LEVELS))
    )


def shared_six_mix() -> dict[str, float]:
    return {c: 1.0 / 6 for c in SHARED_SIX}


def uniform_mix(classes: Sequence[str]) -> dict[str, float]:
    return {c: 1.0 / len(classes) for c in classes}
