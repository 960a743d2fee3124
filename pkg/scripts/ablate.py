"""Occupancy and intensity ablations on the synthetic corpus.

Prints one row per variant and writes both tables as CSV.
"""

import argparse
from pathlib import Path

from mslc.entropy_models.training import TrainSchedule, prepare_corpus
from mslc.harness import intensity_ablation, occupancy_ablation, synthetic_corpus
from mslc.metrics import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--train", type=int, default=200)
    ap.add_argument("--test", type=int, default=20)
    ap.add_argument("--sweeps", type=int, default=6)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--intensity-steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=2)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    train = prepare_corpus(synthetic_corpus(100, args.train, args.sweeps), args.depth)
    test = prepare_corpus(synthetic_corpus(900, args.test, args.sweeps), args.depth)
    args.out.mkdir(parents=True, exist_ok=True)

    occ = occupancy_ablation(train, test, TrainSchedule(args.steps, args.lr, args.batch, 0))
    for r in occ:
        print(f"occupancy {r.variant:9s} {r.bpp:.4f} bpp  {r.train_seconds:.0f} s")
    write_csv(occ, args.out / "ablation_occupancy.csv")

    ints = intensity_ablation(train, test, TrainSchedule(args.intensity_steps, args.lr, args.batch, 0))
    for r in ints:
        print(f"intensity {r.method:9s} {r.bpp:.4f} bpp")
    write_csv(ints, args.out / "ablation_intensity.csv")


if __name__ == "__main__":
    main()
