"""Write the synthetic train/test corpora used by the experiments to disk."""

import argparse
from pathlib import Path

from mslc.pointcloud import SceneParams, generate_synthetic_stream, write_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--train", type=int, default=200, help="train streams (seeds 100..)")
    ap.add_argument("--test", type=int, default=20, help="test streams (seeds 900..)")
    ap.add_argument("--sweeps", type=int, default=6)
    args = ap.parse_args()
    params = SceneParams()
    for split, first, n in (("train", 100, args.train), ("test", 900, args.test)):
        d = args.out / split
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            write_stream(generate_synthetic_stream(first + i, args.sweeps, params), d / f"s{first + i:04d}.mss")
        print(f"{split}: {n} streams in {d}")


if __name__ == "__main__":
    main()
