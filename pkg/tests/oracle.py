"""Brute-force reference evaluator.

Written without touching mm3d's matching, AP or TP-error code: every score
cutoff re-runs an O(n^2) greedy match of the top-k predictions from scratch,
the PR curve is integrated by probing the midpoint of every recall interval,
and box errors use their own formulas.  Only data containers are shared.
"""

import math
from fractions import Fraction


def _dist(a, b):
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def _order_key(entry):
    sid, p = entry
    b = p.box
    return (-p.score, sid, b.cx, b.cy, b.cz, b.lx, b.ly, b.lz, b.yaw)


def _greedy(preds_sorted, gts, threshold):
    """List of (pred position, gt index, distance) for the given prefix."""
    used = set()
    pairs = []
    for pos, (sid, p) in enumerate(preds_sorted):
        cands = []
        for g, (gsid, gbox) in enumerate(gts):
            if gsid == sid and g not in used:
                cands.append((_dist(p.box, gbox), g))
        if not cands:
            continue
        d, g = min(cands)
        if d < threshold:
            used.add(g)
            pairs.append((pos, g, d))
    return pairs


def brute_ap(preds, gts, threshold, recall_floor, precision_floor):
    npos = len(gts)
    order = sorted(preds, key=_order_key)
    # operating point for every cutoff k, each from a fresh matching
    points = []
    for k in range(1, len(order) + 1):
        tp = len(_greedy(order[:k], gts, threshold))
        points.append((Fraction(tp, npos), Fraction(tp, k)))
    rf = Fraction(recall_floor).limit_denominator(10**6)
    pf = Fraction(precision_floor).limit_denominator(10**6)
    breaks = sorted({rf, Fraction(1)} | {r for r, _ in points if rf < r < 1})
    total = Fraction(0)
    for lo, hi in zip(breaks, breaks[1:]):
        mid = (lo + hi) / 2
        prec = next((p for r, p in points if r >= mid), 0)
        total += (hi - lo) * max(Fraction(prec) - pf, 0)
    return total / ((1 - rf) * (1 - pf))


def _iou_aligned(a, b):
    inter = 1.0
    for x, y in ((a.lx, b.lx), (a.ly, b.ly), (a.lz, b.lz)):
        inter *= min(x, y)
    return inter / (a.lx * a.ly * a.lz + b.lx * b.ly * b.lz - inter)


def _angle(a, b):
    d = a - b
    return abs(math.atan2(math.sin(d), math.cos(d)))


def _avg(xs):
    return sum(xs) / len(xs) if xs else float("nan")


def brute_tp(preds, gts, threshold, undefined, recall_floor):
    order = sorted(preds, key=_order_key)
    pairs = _greedy(order, gts, threshold)
    rf = Fraction(recall_floor).limit_denominator(10**6)
    ate, ase, aoe, ave, aae = [], [], [], [], []
    for pos, g, d in pairs:
        # recall reached once this prediction is accepted
        if Fraction(sum(1 for q, _, _ in pairs if q <= pos), len(gts)) <= rf:
            continue
        p = order[pos][1].box
        t = gts[g][1]
        ate.append(d)
        ase.append(1 - _iou_aligned(p, t))
        aoe.append(_angle(p.yaw, t.yaw))
        if p.velocity is not None and t.velocity is not None:
            ave.append(math.sqrt((p.velocity[0] - t.velocity[0]) ** 2 + (p.velocity[1] - t.velocity[1]) ** 2))
        if p.attribute is not None and t.attribute is not None:
            aae.append(int(p.attribute != t.attribute))
    out = {"ATE": _avg(ate), "ASE": _avg(ase), "AOE": _avg(aoe), "AVE": _avg(ave), "AAE": _avg(aae)}
    for k in undefined:
        out[k] = float("nan")
    return out


def brute_evaluate(preds, gts, label_map, cfg):
    """Dict of per-class rows and aggregates, same keys as EvalReport.to_dict()."""
    gt_by_cls, pred_by_cls = {}, {}
    for s in sorted(gts.samples, key=lambda s: s.sample_id):
        for a in s.gt_boxes:
            gt_by_cls.setdefault(label_map(a.label), []).append((s.sample_id, a.box))
    for sid in sorted(preds.by_sample):
        for p in preds.by_sample[sid]:
            pred_by_cls.setdefault(label_map(p.cls), []).append((sid, p))
    rows = {}
    for c in cfg.classes:
        g = gt_by_cls.get(c, [])
        p = pred_by_cls.get(c, [])
        if not g:
            rows[c] = None
            continue
        aps = [brute_ap(p, g, th, cfg.recall_floor, cfg.score_floor) for th in cfg.dist_thresholds]
        row = {"AP": float(sum(aps) / len(aps))}
        row.update(brute_tp(p, g, cfg.tp_threshold, cfg.undefined_errors.get(c, ()), cfg.recall_floor))
        rows[c] = row
    have = [c for c in cfg.classes if rows[c] is not None]
    mAP = _avg([rows[c]["AP"] for c in have])
    mAP6 = _avg([rows[c]["AP"] for c in have if c in cfg.shared_six])
    tp = {}
    for k in ("ATE", "ASE", "AOE", "AVE", "AAE"):
        tp[k] = _avg([rows[c][k] for c in have if not math.isnan(rows[c][k])])
    present = [v for v in tp.values() if not math.isnan(v)]
    nds = (cfg.mean_ap_weight * mAP + sum(1 - min(1, v) for v in present)) / (cfg.mean_ap_weight + len(present))
    return {"rows": rows, "mAP": mAP, "mAP-6": mAP6, **{"m" + k: v for k, v in tp.items()}, "NDS": nds}


def rounded(x, digits=10):
    """The shared rounding applied to both evaluators before comparison."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return round(float(x), digits)
