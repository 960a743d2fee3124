"""How well do generic byte compressors shrink the leaf-offset stream?"""

import argparse

from mslc.harness import leaf_offset_probe, synthetic_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="+", default=list(range(11, 17)))
    ap.add_argument("--streams", type=int, default=10)
    ap.add_argument("--sweeps", type=int, default=6)
    args = ap.parse_args()
    streams = synthetic_corpus(900, args.streams, args.sweeps)
    for D in args.depths:
        for r in leaf_offset_probe(streams, D):
            print(f"D={D:2d} {r.compressor:5s} {r.compressed_bytes:8d}/{r.raw_bytes:8d} = {r.ratio:.4f}")


if __name__ == "__main__":
    main()
