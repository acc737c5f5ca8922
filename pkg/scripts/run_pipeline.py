"""End-to-end run on synthetic data: fixtures -> mix -> forward -> eval.

    python3 scripts/run_pipeline.py --seed 0 --out runs/demo
"""

import argparse
from pathlib import Path

from mm3d.cli import main as cli


def run(*argv) -> None:
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(f"step {argv[0]} exited with {code}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/demo"))
    ap.add_argument("--samples", type=int, default=4)
    ap.add_argument("--center-noise", type=float, default=0.4)
    ap.add_argument("--fp-rate", type=float, default=0.3)
    args = ap.parse_args()

    fx = args.out / "fixtures"
    run("gen-fixtures", "--seed", args.seed, "--out", fx, "--samples", args.samples,
        "--center-noise", args.center_noise, "--yaw-noise", 0.1, "--extent-noise", 0.05,
        "--drop-rate", 0.1, "--fp-rate", args.fp_rate)
    run("ingest", fx / "nuscenes.json", "--out", args.out / "nuscenes.canonical.json",
        "--report", args.out / "ingest_report.json")
    run("mix", fx / "nuscenes.json", fx / "lyft.json", "--epochs", 2, "--seed", args.seed,
        "--out", args.out / "epochs.jsonl")
    run("forward", fx / "nuscenes.json", fx / "pyramid.mmt", "--seed", args.seed,
        "--out", args.out / "head_predictions.jsonl")

    print("== untrained head (seeded weights) ==")
    run("eval", fx / "nuscenes.json", args.out / "head_predictions.jsonl", "--out", args.out / "head_eval")
    print("\n== perturbed ground truth ==")
    run("eval", fx / "nuscenes.json", fx / "predictions.jsonl", "--out", args.out / "perturbed_eval")


if __name__ == "__main__":
    main()
