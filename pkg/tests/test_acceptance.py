"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary (see conftest.py).
"""

import math
import time
from collections import Counter

import numpy as np

from mm3d.anchors import AnchorSpec, axis_positions, generate_anchor_grid
from mm3d.cli import main
from mm3d.datasets import Annotation, Dataset, LabelMap, Sample, map_label
from mm3d.features import combine_features, fuse_multilevel
from mm3d.fixtures import FixtureSpec, NoiseSpec, generate_dataset, generate_pyramid, perturb_to_predictions, zero_pyramid
from mm3d.geometry import Box3D, SpaceRange
from mm3d.head import HeadConfig, attention, attention_weights, forward, softmax
from mm3d.layers import AffineMap
from mm3d.metrics import EvalConfig, Prediction, PredictionSet, compute_nds, evaluate
from mm3d.mixing import build_mixed_dataset, epoch_iterator
from mm3d.posenc import CoordBounds, build_coord_volume, denormalize_coords, project_positional
from oracle import brute_evaluate, rounded
from conftest import NUSC_CLASSES

AGG_KEYS = ("NDS", "mAP", "mAP-6", "mATE", "mASE", "mAOE", "mAVE", "mAAE")


# AC1 -----------------------------------------------------------------------------

PUBLISHED_ROWS = {
    # name: (mAP, mATE, mASE, mAOE, mAVE, mAAE, published NDS)
    "nuScenes-mini": (0.3767, 0.6590, 0.2364, 0.5139, 0.6071, 0.2300, 0.4637),
    "Lyft": (0.2046, 0.5569, 0.2763, 0.670, 0.6250, 0.2176, 0.3677),
}


def test_ac1_nds_formula_consistency(criterion):
    start = time.perf_counter()
    got = {name: compute_nds(row[0], row[1:6]) for name, row in PUBLISHED_ROWS.items()}
    elapsed = time.perf_counter() - start
    ok = all(abs(got[n] - PUBLISHED_ROWS[n][6]) <= 0.01 for n in got) and elapsed < 1e-3
    detail = ", ".join(f"{n} {got[n]:.5f} vs {PUBLISHED_ROWS[n][6]}" for n in got) + f"; {elapsed * 1e6:.0f} us"
    criterion("AC1 NDS formula consistency", ok, detail)
    assert ok


# AC2 -----------------------------------------------------------------------------


def _random_case(rng: np.random.Generator):
    classes = list(rng.choice(NUSC_CLASSES, size=int(rng.integers(1, len(NUSC_CLASSES) + 1)), replace=False))
    weights = rng.dirichlet(np.ones(len(classes)))
    weights[-1] = 1.0 - weights[:-1].sum()
    n_samples = int(rng.integers(1, 6))
    per_sample = int(rng.integers(1, 50 // n_samples + 1))
    spec = FixtureSpec(
        n_samples=n_samples,
        boxes_per_sample=per_sample,
        class_mix=dict(zip(classes, weights)),
        seed=int(rng.integers(2**31)),
        # a tight range crowds boxes so matching has real competition
        space_range=SpaceRange(*(rng.choice([4.0, 10.0, 51.2]) * np.array([-1, 1, -1, 1, -0.1, 0.1]))),
    )
    scene = generate_dataset(spec)
    noise = NoiseSpec(*rng.uniform(0, [1.5, 0.3, 0.6]))
    preds = perturb_to_predictions(
        scene, noise, float(rng.uniform(0, 0.6)), float(rng.uniform(0, 0.8)), int(rng.integers(2**31))
    )
    # mutate attributes, velocities and confidences so every error path runs
    mutated = {}
    for sid, ps in preds.by_sample.items():
        out = []
        for p in ps:
            b = p.box
            u = rng.uniform(size=4)
            if u[0] < 0.2:
                b = b.replace(velocity=None)
            elif u[0] < 0.5 and b.velocity is not None:
                b = b.replace(velocity=(b.velocity[0] + rng.normal(), b.velocity[1]))
            if u[1] < 0.3:
                b = b.replace(attribute=None if u[1] < 0.1 else "vehicle.parked")
            score = round(p.score, 1) if u[2] < 0.3 else p.score  # ties
            cls = p.cls if u[3] > 0.05 else str(rng.choice(NUSC_CLASSES))
            out.append(Prediction(b, cls, score))
        mutated[sid] = tuple(out)
    return scene, PredictionSet(mutated)


def _flatten(doc):
    out = {k: rounded(doc[k]) for k in AGG_KEYS}
    for c, row in doc["rows" if "rows" in doc else "classes"].items():
        if row is None or row.get("num_gt", 1) == 0:
            out[c] = None
            continue
        out[c] = tuple(rounded(row[k]) for k in ("AP", "ATE", "ASE", "AOE", "AVE", "AAE"))
    return out


def test_ac2_eval_oracle_equivalence(criterion):
    rng = np.random.default_rng(20240601)
    label_map = LabelMap.default()
    cfg = EvalConfig()
    mismatches, boxes, elapsed = [], 0, 0.0
    for case in range(200):
        scene, preds = _random_case(rng)
        boxes = max(boxes, sum(len(s.gt_boxes) for s in scene.samples))
        start = time.perf_counter()
        ours = _flatten(evaluate(preds, scene, label_map, cfg).to_dict())
        ref = _flatten(brute_evaluate(preds, scene, lambda raw: map_label(raw, label_map), cfg))
        elapsed += time.perf_counter() - start
        if ours != ref:
            mismatches.append(case)
    ok = not mismatches and boxes <= 50 and elapsed < 30
    criterion(
        "AC2 eval oracle equivalence",
        ok,
        f"200 fixtures, max {boxes} gt boxes, {len(mismatches)} mismatches {mismatches[:5]}, {elapsed:.1f} s",
    )
    assert ok


# AC3 -----------------------------------------------------------------------------


def _planted_scene():
    # one Car per sample, 20 m apart, predictions offset by (3, 4)
    samples, preds = [], {}
    for k in range(5):
        gt = Box3D(20.0 * k - 40.0, 10.0, 0.0, 4.0, 2.0, 1.5, 0.0, velocity=(1.0, 0.0), attribute="vehicle.moving")
        sid = f"s{k}"
        samples.append(Sample(sid, (), (Annotation(gt, "car"),), "planted"))
        preds[sid] = (Prediction(gt.replace(cx=gt.cx + 3.0, cy=gt.cy + 4.0), "car", 0.9),)
    return Dataset("planted", tuple(samples), SpaceRange(), ("Car",), "lyft-style"), PredictionSet(preds)


def test_ac3_known_answers(rich_scene, criterion):
    perfect = evaluate(perturb_to_predictions(rich_scene), rich_scene)
    dropped = evaluate(perturb_to_predictions(rich_scene, drop_rate=1.0), rich_scene)
    scene, preds = _planted_scene()
    planted = evaluate(preds, scene, cfg=EvalConfig(tp_threshold=6.0))
    ok = perfect.NDS == 1.0 and dropped.mAP == 0.0 and planted.rows["Car"].ATE == 5.0 and planted.mATE == 5.0
    criterion(
        "AC3 known-answer metrics",
        ok,
        f"NDS {perfect.NDS!r}, dropped mAP {dropped.mAP!r}, planted ATE {planted.mATE!r}",
    )
    assert ok


# AC4 -----------------------------------------------------------------------------


def test_ac4_anchor_grid_exactness(criterion):
    rng = np.random.default_rng(4)
    worst_gap, bad_counts = 0.0, 0
    for _ in range(50):
        lo = rng.uniform(-80, 0, size=3)
        hi = lo + rng.uniform(0.5, 120, size=3)
        r = SpaceRange(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2])
        counts = tuple(int(c) for c in rng.integers(1, 9, size=3))
        sizes = tuple(tuple(rng.uniform(0.2, 6, size=3)) for _ in range(int(rng.integers(1, 4))))
        yaws = tuple(rng.uniform(-math.pi, math.pi, size=int(rng.integers(1, 4))))
        grid = generate_anchor_grid(r, AnchorSpec(sizes, yaws, counts))
        expected = counts[0] * counts[1] * counts[2] * len(sizes) * len(yaws)
        bad_counts += len(grid) != expected
        arr = grid.as_array()
        for axis, n in enumerate(counts):
            pos = np.unique(arr[:, axis])
            if n == 1:
                worst_gap = max(worst_gap, abs(pos[0] - (lo[axis] + hi[axis]) / 2))
                continue
            step = (hi[axis] - lo[axis]) / (n - 1)
            worst_gap = max(worst_gap, np.abs(np.diff(pos) - step).max())
            worst_gap = max(worst_gap, abs(pos[0] - lo[axis]), abs(pos[-1] - hi[axis]))
    ok = bad_counts == 0 and worst_gap <= 1e-12
    criterion("AC4 anchor grid exactness", ok, f"50 specs, {bad_counts} count errors, worst gap error {worst_gap:.2e}")
    assert ok


# AC5 -----------------------------------------------------------------------------


def test_ac5_positional_encoding_bounds(views, criterion):
    D, H, W = 8, 64, 176
    vol = build_coord_volume(views, D, H, W).values
    in_unit = bool(((vol >= 0) & (vol <= 1)).all())
    worst = 0.0
    for j, view in enumerate(views):
        b = CoordBounds.for_view(view)
        raw = np.meshgrid(axis_positions(*b.d, D), axis_positions(*b.h, H), axis_positions(*b.w, W), indexing="ij")
        dw, dh, dd = denormalize_coords(vol[j, ..., 0], vol[j, ..., 1], vol[j, ..., 2], b)
        for got, want in ((dw, raw[2]), (dh, raw[1]), (dd, raw[0])):
            worst = max(worst, float(np.abs(got - want).max()))
    ok = in_unit and worst <= 1e-12
    criterion("AC5 positional-encoding bounds", ok, f"{vol.size // 3} coords, in [0,1]: {in_unit}, worst round trip {worst:.2e}")
    assert ok


# AC6 -----------------------------------------------------------------------------


def test_ac6_shape_algebra(views, criterion):
    f2d = fuse_multilevel(generate_pyramid(256, 704, seed=0), seed=0)
    pe = project_positional(build_coord_volume(views, 4, f2d.height, f2d.width), f2d.channels, seed=0)
    f3d = combine_features(f2d, pe)
    ok = f2d.shape == (6, 64, 64, 176) and f3d.shape == f2d.shape
    criterion("AC6 shape algebra", ok, f"fused {f2d.shape}, with encoding {f3d.shape}")
    assert ok


# AC7 -----------------------------------------------------------------------------


def test_ac7_attention_properties(criterion):
    rng = np.random.default_rng(7)
    worst = {"row sum": 0.0, "permutation": 0.0, "shift": 0.0}
    for _ in range(1000):
        nq, nk, d, dv = rng.integers(1, 12, size=4)
        scale = rng.choice([0.1, 1.0, 5.0])
        Q, K, V = (rng.normal(0, scale, size=s) for s in ((nq, d), (nk, d), (nk, dv)))
        w = attention_weights(Q, K)
        worst["row sum"] = max(worst["row sum"], float(np.abs(w.sum(axis=1) - 1).max()))
        perm = rng.permutation(nk)
        diff = np.abs(attention(Q, K[perm], V[perm]) - attention(Q, K, V)).max()
        worst["permutation"] = max(worst["permutation"], float(diff))
        logits = Q @ K.T
        shift = rng.normal(0, 100, size=(nq, 1))
        diff = np.abs(softmax(logits + shift) - softmax(logits)).max()
        worst["shift"] = max(worst["shift"], float(diff))
    ok = all(v <= 1e-9 for v in worst.values())
    criterion("AC7 attention properties", ok, "1000 triples, worst " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


# AC8 -----------------------------------------------------------------------------


def test_ac8_identity_forward(views, criterion):
    grid = generate_anchor_grid(SpaceRange(), AnchorSpec(sizes=((4, 2, 1.5), (0.8, 0.8, 1.8)), counts=(5, 4, 2)))
    cfg = HeadConfig(init="zero")
    res = forward(zero_pyramid(64, 128), views, grid, cfg)
    same = res.boxes == grid.anchors
    uniform = bool((res.scores == 1.0 / cfg.num_classes).all())
    ok = same and uniform
    criterion("AC8 identity forward", ok, f"{len(grid)} anchors, boxes equal {same}, uniform scores {uniform}")
    assert ok


# AC9 -----------------------------------------------------------------------------


def test_ac9_determinism(tmp_path, capsys, criterion):
    fx = tmp_path / "fx"
    assert main(["gen-fixtures", "--seed", "9", "--out", str(fx), "--samples", "2", "--center-noise", "0.5", "--fp-rate", "0.3"]) == 0
    runs = {
        "mix": ["mix", fx / "nuscenes.json", fx / "lyft.json", "--epochs", "3", "--seed", "7"],
        "forward": ["forward", fx / "nuscenes.json", fx / "pyramid.mmt", "--seed", "7"],
        "eval": ["eval", fx / "nuscenes.json", fx / "predictions.jsonl", "--seed", "7"],
    }
    identical = {}
    for name, argv in runs.items():
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{name}{rep}"
            assert main([str(a) for a in argv] + ["--out", str(out)]) == 0
            path = out / "report.json" if name == "eval" else out
            outputs.append(path.read_bytes())
        identical[name] = outputs[0] == outputs[1] and len(outputs[0]) > 0
    capsys.readouterr()

    rng = np.random.default_rng(9)
    base = generate_dataset(FixtureSpec(n_samples=40, boxes_per_sample=0, seed=1))
    balance_failures = 0
    for _ in range(100):
        sizes = rng.integers(1, 41, size=2)
        sources = [Dataset(f"s{i}", base.samples[:n], base.space_range, (), base.dialect) for i, n in enumerate(sizes)]
        order = epoch_iterator(build_mixed_dataset(sources, LabelMap.default(), int(rng.integers(2**32))), int(rng.integers(10)))
        counts = Counter()
        for k, (i, _) in enumerate(order, start=1):
            counts[i] += 1
            if k % 2 == 0 and counts[0] != counts[1]:
                balance_failures += 1
                break
        balance_failures += len(order) != 2 * max(sizes)
    ok = all(identical.values()) and balance_failures == 0
    criterion(
        "AC9 determinism and mixing balance",
        ok,
        ", ".join(f"{k} rerun identical {v}" for k, v in identical.items()) + f"; 100 size pairs, {balance_failures} balance failures",
    )
    assert ok


# AC10 ----------------------------------------------------------------------------


def test_ac10_affine_jvp(criterion):
    rng = np.random.default_rng(10)
    eps, worst = 1e-4, 0.0
    for probe in range(20):
        n_in, n_out = (int(v) for v in rng.integers(1, 65, size=2))
        m = AffineMap.seeded(n_in, n_out, probe, "jvp-probe")
        x, v = rng.normal(size=(2, n_in)) * rng.uniform(0.1, 10)
        fd = (m(x + eps * v) - m(x - eps * v)) / (2 * eps)
        jvp = m.jvp(x, v)
        worst = max(worst, float(np.linalg.norm(fd - jvp) / np.linalg.norm(jvp)))
    ok = worst < 1e-5
    criterion("AC10 affine JVP vs finite differences", ok, f"20 probes, worst relative error {worst:.1e}")
    assert ok
