"""Recompute NDS from published mAP and TP-error means and compare."""

from mm3d.metrics import compute_nds

ROWS = [
    # label, mAP, mATE, mASE, mAOE, mAVE, mAAE, reported NDS
    ("nuScenes-mini, MdT + transformer", 0.3767, 0.6590, 0.2364, 0.5139, 0.6071, 0.2300, 0.4637),
    ("Lyft, MdT + transformer", 0.2046, 0.5569, 0.2763, 0.670, 0.6250, 0.2176, 0.3677),
]


def main() -> None:
    print(f"{'row':<36}{'reported':>10}{'recomputed':>12}{'delta':>10}")
    for label, m, *errs, reported in ROWS:
        nds = compute_nds(m, errs)
        print(f"{label:<36}{reported:>10.4f}{nds:>12.5f}{nds - reported:>+10.5f}")


if __name__ == "__main__":
    main()
