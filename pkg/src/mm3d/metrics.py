"""nuScenes-style detection evaluation: AP over center-distance thresholds,
true-positive errors, mAP, mAP over the six shared classes, and NDS.

Matching is greedy by descending confidence: each prediction takes the
nearest still-unmatched ground-truth box of the same sample and class whose
ground-plane center distance is strictly below the threshold (lower gt index
on ties).

AP integrates the precision-recall step function exactly.  With operating
points taken in confidence order, recall ``r`` in ``(m-1, m] / n_gt`` gets the
precision observed when the ``m``-th true positive arrives; recall never
reached contributes 0.  Only recall above ``recall_floor`` counts and
precision is shifted down by ``score_floor`` (clipped at 0)::

    AP = integral_{recall_floor}^{1} max(P(r) - score_floor, 0) dr
         / ((1 - recall_floor) * (1 - score_floor))

The integral is evaluated in rational arithmetic and rounded once, so a
perfect detector scores exactly 1.0 and results do not depend on
summation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .datasets import OTHER, SHARED_SIX, UNIFIED_CLASSES, Dataset, LabelMap, map_label
from .errors import EmptyGroundTruth, NoGroundTruth, SchemaError, UnknownSample
from .geometry import Box3D, aligned_iou3d, center_distance, yaw_diff

NAN = float("nan")
TP_METRICS = ("ATE", "ASE", "AOE", "AVE", "AAE")
DEFAULT_UNDEFINED = {
    "Traffic Cone": ("AOE", "AVE", "AAE"),
    "Barrier": ("AVE", "AAE"),
}


@dataclass(frozen=True)
class Prediction:
    box: Box3D
    cls: str
    score: float

    def __post_init__(self):
        s = float(self.score)
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"confidence {s} outside [0, 1]")
        object.__setattr__(self, "score", s)


@dataclass(frozen=True)
class PredictionSet:
    """Predictions keyed by sample id."""

    by_sample: Mapping[str, tuple[Prediction, ...]]

    def __post_init__(self):
        object.__setattr__(self, "by_sample", {str(k): tuple(v) for k, v in self.by_sample.items()})

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_sample.values())

    def sample_ids(self) -> list[str]:
        return sorted(self.by_sample)


@dataclass(frozen=True)
class EvalConfig:
    dist_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    recall_floor: float = 0.1
    # Precision floor subtracted before integrating AP (nuScenes "min_precision").
    score_floor: float = 0.05
    classes: tuple[str, ...] = tuple(c for c in UNIFIED_CLASSES if c != OTHER)
    shared_six: tuple[str, ...] = SHARED_SIX
    tp_threshold: float = 2.0
    mean_ap_weight: float = 5.0
    undefined_errors: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_UNDEFINED))

    def __post_init__(self):
        th = tuple(float(t) for t in self.dist_thresholds)
        if not th or any(t <= 0 for t in th) or list(th) != sorted(th):
            raise ValueError("dist_thresholds must be positive and sorted ascending")
        if not 0.0 <= self.recall_floor < 1.0 or not 0.0 <= self.score_floor < 1.0:
            raise ValueError("recall_floor and score_floor must lie in [0, 1)")
        if self.tp_threshold <= 0:
            raise ValueError("tp_threshold must be positive")
        object.__setattr__(self, "dist_thresholds", th)
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "shared_six", tuple(self.shared_six))


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of one class slice.

    ``order`` lists prediction indices in processing order and ``tp`` the
    matching outcome for each of them; ``pairs`` holds ``(pred, gt, dist)``.
    """

    order: tuple[int, ...]
    tp: tuple[bool, ...]
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]
    num_gt: int


Entry = tuple  # (sample_id, Prediction) for predictions, (sample_id, Box3D) for gts


def _pred_key(entry: tuple[str, Prediction], index: int):
    sid, p = entry
    b = p.box
    return (-p.score, sid, b.cx, b.cy, b.cz, b.lx, b.ly, b.lz, b.yaw, index)


def match_detections(
    preds: Sequence[tuple[str, Prediction]], gts: Sequence[tuple[str, Box3D]], threshold: float
) -> MatchResult:
    """Greedy one-to-one matching of a single-class slice.

    Equal confidences are ordered by sample id and box values, so the result
    does not depend on input order.
    """
    order = sorted(range(len(preds)), key=lambda i: _pred_key(preds[i], i))
    by_sample: dict[str, list[int]] = {}
    for g, (sid, _) in enumerate(gts):
        by_sample.setdefault(sid, []).append(g)
    taken = [False] * len(gts)
    tp: list[bool] = []
    pairs: list[tuple[int, int, float]] = []
    for i in order:
        sid, p = preds[i]
        best, best_d = -1, math.inf
        for g in by_sample.get(sid, ()):
            if taken[g]:
                continue
            d = center_distance(p.box, gts[g][1])
            if d < best_d:
                best, best_d = g, d
        if best >= 0 and best_d < threshold:
            taken[best] = True
            pairs.append((i, best, best_d))
            tp.append(True)
        else:
            tp.append(False)
    matched = {i for i, _, _ in pairs}
    return MatchResult(
        tuple(order),
        tuple(tp),
        tuple(pairs),
        tuple(i for i in order if i not in matched),
        tuple(g for g in range(len(gts)) if not taken[g]),
        len(gts),
    )


def _decimal(x: float) -> Fraction:
    # floors are read as the decimals they were written as, so 0.1 is exactly 1/10
    return Fraction(repr(float(x)))


def ap_from_matches(tp: Sequence[bool], num_gt: int, recall_floor: float, score_floor: float) -> Fraction:
    """Exact AP of a confidence-ordered true/false-positive sequence."""
    if num_gt <= 0:
        raise NoGroundTruth("no ground truth")
    rf, pf = _decimal(recall_floor), _decimal(score_floor)
    total = Fraction(0)
    hits = 0
    prev_recall = Fraction(0)
    for k, flag in enumerate(tp, start=1):
        if not flag:
            continue
        hits += 1
        recall = Fraction(hits, num_gt)
        lo = max(prev_recall, rf)
        if recall > lo:
            gain = Fraction(hits, k) - pf
            if gain > 0:
                total += (recall - lo) * gain
        prev_recall = recall
    return total / ((1 - rf) * (1 - pf))


def average_precision(
    preds: Sequence[tuple[str, Prediction]],
    gts: Sequence[tuple[str, Box3D]],
    threshold: float,
    cfg: EvalConfig = EvalConfig(),
) -> float:
    """AP of one class slice at one distance threshold.

    Raises:
        NoGroundTruth: the slice has no ground-truth boxes.
    """
    if not gts:
        raise NoGroundTruth("class slice has no ground truth")
    m = match_detections(preds, gts, threshold)
    return float(ap_from_matches(m.tp, m.num_gt, cfg.recall_floor, cfg.score_floor))


@dataclass(frozen=True)
class TPErrors:
    ATE: float = NAN
    ASE: float = NAN
    AOE: float = NAN
    AVE: float = NAN
    AAE: float = NAN

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in TP_METRICS)


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else NAN


def tp_errors(
    match: MatchResult,
    preds: Sequence[tuple[str, Prediction]],
    gts: Sequence[tuple[str, Box3D]],
    undefined: Iterable[str] = (),
    recall_floor: float = 0.0,
) -> TPErrors:
    """Mean errors over matched pairs; ``nan`` where no pair contributes.

    Only pairs reached at a recall strictly above ``recall_floor`` count: the
    k-th match in confidence order sits at recall ``k / num_gt``.  Velocity
    and attribute pairs are skipped when either side lacks the field.
    Metrics named in ``undefined`` are forced to ``nan``.
    """
    rf = _decimal(recall_floor)
    ate, ase, aoe, ave, aae = [], [], [], [], []
    for k, (i, g, dist) in enumerate(match.pairs, start=1):
        if Fraction(k, match.num_gt) <= rf:
            continue
        p, gt = preds[i][1].box, gts[g][1]
        ate.append(dist)
        ase.append(1.0 - aligned_iou3d(p, gt))
        aoe.append(yaw_diff(p.yaw, gt.yaw))
        if p.velocity is not None and gt.velocity is not None:
            ave.append(math.hypot(p.velocity[0] - gt.velocity[0], p.velocity[1] - gt.velocity[1]))
        if p.attribute is not None and gt.attribute is not None:
            aae.append(0.0 if p.attribute == gt.attribute else 1.0)
    values = dict(zip(TP_METRICS, (_mean(ate), _mean(ase), _mean(aoe), _mean(ave), _mean(aae))))
    for k in undefined:
        values[k] = NAN
    return TPErrors(**values)


def compute_nds(mean_ap: float, tp_means: Sequence[float], mean_ap_weight: float = 5.0) -> float:
    """``(w * mAP + sum(1 - min(1, e))) / (w + #terms)`` over non-nan TP means."""
    present = [e for e in tp_means if not math.isnan(e)]
    score = mean_ap_weight * mean_ap + math.fsum(1.0 - min(1.0, e) for e in present)
    return score / (mean_ap_weight + len(present))


@dataclass(frozen=True)
class ClassRow:
    AP: float = NAN
    ATE: float = NAN
    ASE: float = NAN
    AOE: float = NAN
    AVE: float = NAN
    AAE: float = NAN
    num_gt: int = 0

    def values(self) -> tuple[float, ...]:
        return (self.AP, self.ATE, self.ASE, self.AOE, self.AVE, self.AAE)


@dataclass(frozen=True)
class EvalReport:
    rows: Mapping[str, ClassRow]
    mAP: float
    mAP6: float
    mATE: float
    mASE: float
    mAOE: float
    mAVE: float
    mAAE: float
    NDS: float
    shared_six: tuple[str, ...] = SHARED_SIX

    def tp_means(self) -> tuple[float, ...]:
        return (self.mATE, self.mASE, self.mAOE, self.mAVE, self.mAAE)

    def to_dict(self) -> dict:
        def clean(x: float):
            return None if math.isnan(x) else x

        return {
            "classes": {
                c: {"AP": clean(r.AP), **{k: clean(getattr(r, k)) for k in TP_METRICS}, "num_gt": r.num_gt}
                for c, r in self.rows.items()
            },
            "NDS": clean(self.NDS),
            "mAP": clean(self.mAP),
            "mAP-6": clean(self.mAP6),
            "mATE": clean(self.mATE),
            "mASE": clean(self.mASE),
            "mAOE": clean(self.mAOE),
            "mAVE": clean(self.mAVE),
            "mAAE": clean(self.mAAE),
            "shared_six": list(self.shared_six),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        def num(x):
            return NAN if x is None else float(x)

        try:
            rows = {
                c: ClassRow(num(r["AP"]), *(num(r[k]) for k in TP_METRICS), int(r.get("num_gt", 0)))
                for c, r in doc["classes"].items()
            }
            return cls(
                rows,
                num(doc["mAP"]),
                num(doc["mAP-6"]),
                *(num(doc["m" + k]) for k in TP_METRICS),
                num(doc["NDS"]),
                tuple(doc.get("shared_six", SHARED_SIX)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError("report", f"malformed report: {exc}") from exc

    def render_table(self) -> str:
        """Aligned text table: shared classes, mAP-6, other classes, aggregates."""

        def cell(x: float, digits: int = 3) -> str:
            return "nan" if math.isnan(x) else f"{x:.{digits}f}"

        w = max([len("Object Class"), len("mAP for Common 6")] + [len(c) for c in self.rows]) + 2
        header = "Object Class".ljust(w) + "".join(f"{h:>8}" for h in ("AP",) + TP_METRICS)
        rule = "-" * len(header)
        lines = [header, rule]
        shared = [c for c in self.rows if c in self.shared_six]
        others = [c for c in self.rows if c not in self.shared_six]
        for c in shared:
            lines.append(c.ljust(w) + "".join(f"{cell(v):>8}" for v in self.rows[c].values()))
        lines.append(rule)
        lines.append("mAP for Common 6".ljust(w) + f"{cell(self.mAP6, 4):>8}")
        lines.append(rule)
        for c in others:
            lines.append(c.ljust(w) + "".join(f"{cell(v):>8}" for v in self.rows[c].values()))
        lines.append(rule)
        agg_names = ("NDS", "mAP", "mATE", "mASE", "mAOE", "mAVE", "mAAE")
        agg_vals = (self.NDS, self.mAP) + self.tp_means()
        lines.append("".join(f"{n:>8}" for n in agg_names))
        lines.append("".join(f"{cell(v, 4):>8}" for v in agg_vals))
        return "\n".join(lines) + "\n"


def class_slices(
    preds: PredictionSet, gts: Dataset, label_map: LabelMap
) -> tuple[dict[str, list], dict[str, list]]:
    """Per unified class: (sample_id, Prediction) and (sample_id, Box3D) lists.

    Samples are visited in sorted id order and boxes in file order, so gt
    indices are stable under any reordering of the samples.
    """
    pred_slices: dict[str, list] = {}
    gt_slices: dict[str, list] = {}
    for s in sorted(gts.samples, key=lambda s: s.sample_id):
        for a in s.gt_boxes:
            gt_slices.setdefault(map_label(a.label, label_map), []).append((s.sample_id, a.box))
    for sid in preds.sample_ids():
        for p in preds.by_sample[sid]:
            pred_slices.setdefault(map_label(p.cls, label_map), []).append((sid, p))
    return pred_slices, gt_slices


def evaluate(
    preds: PredictionSet,
    gts: Dataset,
    label_map: Optional[LabelMap] = None,
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Full report over ``cfg.classes``; classes without ground truth are nan rows.

    Raises:
        UnknownSample: a prediction's sample id is not in ``gts``.
        EmptyGroundTruth: none of the evaluated classes has ground truth.
    """
    label_map = LabelMap.default() if label_map is None else label_map
    known = {s.sample_id for s in gts.samples}
    unknown = sorted(set(preds.by_sample) - known)
    if unknown:
        raise UnknownSample(f"predictions reference unknown sample ids: {unknown[:5]}")
    pred_slices, gt_slices = class_slices(preds, gts, label_map)

    rows: dict[str, ClassRow] = {}
    for c in cfg.classes:
        g = gt_slices.get(c, [])
        p = pred_slices.get(c, [])
        if not g:
            rows[c] = ClassRow()
            continue
        aps = []
        for th in cfg.dist_thresholds:
            m = match_detections(p, g, th)
            aps.append(ap_from_matches(m.tp, m.num_gt, cfg.recall_floor, cfg.score_floor))
        ap = float(sum(aps, Fraction(0)) / len(aps))
        m = match_detections(p, g, cfg.tp_threshold)
        err = tp_errors(m, p, g, cfg.undefined_errors.get(c, ()), cfg.recall_floor)
        rows[c] = ClassRow(ap, *err.as_tuple(), num_gt=len(g))

    evaluable = [c for c in cfg.classes if rows[c].num_gt > 0]
    if not evaluable:
        raise EmptyGroundTruth("no ground-truth boxes for any evaluated class")
    mean_ap = _mean([rows[c].AP for c in evaluable])
    mean_ap6 = _mean([rows[c].AP for c in evaluable if c in cfg.shared_six])
    tp_means = tuple(
        _mean([getattr(rows[c], k) for c in evaluable if not math.isnan(getattr(rows[c], k))]) for k in TP_METRICS
    )
    nds = compute_nds(mean_ap, tp_means, cfg.mean_ap_weight)
    return EvalReport(rows, mean_ap, mean_ap6, *tp_means, nds, cfg.shared_six)


# -- prediction JSON-lines -------------------------------------------------------


def _num(x, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SchemaError(path, "expected a number")
    return float(x)


def _vec(x, n: int, path: str) -> list[float]:
    if not isinstance(x, list) or len(x) != n:
        raise SchemaError(path, f"expected {n} numbers")
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(x)]


def prediction_from_doc(doc: dict, path: str) -> Prediction:
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    try:
        c = _vec(doc["c"], 3, f"{path}.c")
        e = _vec(doc["e"], 3, f"{path}.e")
        yaw = _num(doc["yaw"], f"{path}.yaw")
        v = doc.get("v")
        vel = None if v is None else tuple(_vec(v, 2, f"{path}.v"))
        attr = doc.get("attr")
        cls = doc["class"]
        score = _num(doc["score"], f"{path}.score")
    except KeyError as exc:
        raise SchemaError(f"{path}.{exc.args[0]}", "missing") from exc
    if not isinstance(cls, str):
        raise SchemaError(f"{path}.class", "expected a string")
    if attr is not None and not isinstance(attr, str):
        raise SchemaError(f"{path}.attr", "expected a string or null")
    if not 0.0 <= score <= 1.0:
        raise SchemaError(f"{path}.score", "confidence outside [0, 1]")
    return Prediction(Box3D(*c, *e, yaw=yaw, velocity=vel, attribute=attr), cls, score)


def prediction_to_doc(p: Prediction) -> dict:
    b = p.box
    return {
        "c": [b.cx, b.cy, b.cz],
        "e": [b.lx, b.ly, b.lz],
        "yaw": b.yaw,
        "v": None if b.velocity is None else list(b.velocity),
        "attr": b.attribute,
        "class": p.cls,
        "score": p.score,
    }


def parse_predictions(text: str) -> PredictionSet:
    """One ``{"sample_id": ..., "boxes": [...]}`` object per line.

    Repeated sample ids are merged in file order.
    """
    out: dict[str, list[Prediction]] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {n}", f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("sample_id"), str):
            raise SchemaError(f"line {n}.sample_id", "missing or not a string")
        boxes = doc.get("boxes")
        if not isinstance(boxes, list):
            raise SchemaError(f"line {n}.boxes", "expected a list")
        bucket = out.setdefault(doc["sample_id"], [])
        bucket.extend(prediction_from_doc(b, f"line {n}.boxes[{i}]") for i, b in enumerate(boxes))
    return PredictionSet({k: tuple(v) for k, v in out.items()})


def predictions_to_jsonl(preds: PredictionSet) -> str:
    return "".join(
        json.dumps({"sample_id": sid, "boxes": [prediction_to_doc(p) for p in preds.by_sample[sid]]}) + "\n"
        for sid in preds.sample_ids()
    )
