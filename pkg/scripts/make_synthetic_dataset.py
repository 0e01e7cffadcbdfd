#!/usr/bin/env python3
"""Write a synthetic multi-annotator dataset and its manifest.

    python scripts/make_synthetic_dataset.py data/synthetic --n 40 --seed 5
"""
import argparse
from pathlib import Path

from psoca.synthetic import write_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=Path)
    ap.add_argument("--n", type=int, default=40, help="number of scenes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--height", type=int, default=321)
    ap.add_argument("--width", type=int, default=481)
    ap.add_argument("--annotators", type=int, default=5)
    args = ap.parse_args()
    manifest = write_dataset(args.root, args.n, args.seed, args.height, args.width,
                             n_annotators=args.annotators)
    print(manifest)


if __name__ == "__main__":
    main()
