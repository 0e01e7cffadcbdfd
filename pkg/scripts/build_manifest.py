#!/usr/bin/env python3
"""Build a manifest CSV from a BSDS500-style directory tree.

Expects ``<root>/images/<split>/<id>.jpg`` and either
``<root>/groundTruth/<split>/<id>.mat`` (the original MATLAB cell arrays,
one ``Boundaries`` matrix per annotator) or ready-made PNGs named
``<id>_<k>.png`` in a directory given with ``--png-annotations``.

Category labels come from a CSV with columns ``id,category``. MAT files are
exported to PNG under ``<out>/annotations`` so the package never reads them.

    python scripts/build_manifest.py BSR/BSDS500/data labels.csv data/bsds500
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np
from scipy.io import loadmat

from psoca.image_core import CATEGORIES, ManifestEntry, save_edge_map, write_manifest


def read_labels(path: Path) -> dict[str, str]:
    with path.open(newline="") as fh:
        labels = {row["id"].strip(): row["category"].strip().lower() for row in csv.DictReader(fh)}
    bad = {c for c in labels.values() if c not in CATEGORIES}
    if bad:
        sys.exit(f"unknown categories in {path}: {sorted(bad)}")
    return labels


def export_mat(mat: Path, out_dir: Path) -> list[Path]:
    cells = loadmat(mat)["groundTruth"][0]
    paths = []
    for k, cell in enumerate(cells):
        boundaries = np.asarray(cell["Boundaries"][0, 0], dtype=np.uint8)
        p = out_dir / f"{mat.stem}_{k}.png"
        save_edge_map(p, (boundaries > 0).astype(np.uint8))
        paths.append(p)
    return paths


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=Path, help="directory holding images/ and groundTruth/")
    ap.add_argument("labels", type=Path, help="CSV with id,category")
    ap.add_argument("out", type=Path, help="output directory for manifest.csv and PNG annotations")
    ap.add_argument("--png-annotations", type=Path, help="use <id>_<k>.png files from here instead of .mat")
    args = ap.parse_args()

    labels = read_labels(args.labels)
    ann_dir = args.out / "annotations"
    ann_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for image in sorted((args.root / "images").glob("*/*.jpg")):
        if image.stem not in labels:
            continue
        if args.png_annotations:
            annotations = sorted(args.png_annotations.glob(f"{image.stem}_*.png"))
        else:
            annotations = export_mat(args.root / "groundTruth" / image.parent.name / f"{image.stem}.mat", ann_dir)
        if not annotations:
            sys.exit(f"no annotations for {image.stem}")
        entries.append(ManifestEntry(image.resolve(), tuple(a.resolve() for a in annotations), labels[image.stem]))
    missing = set(labels) - {e.name for e in entries}
    if missing:
        print(f"warning: {len(missing)} labelled ids have no image", file=sys.stderr)
    write_manifest(args.out / "manifest.csv", entries)
    counts = {c: sum(e.category == c for e in entries) for c in CATEGORIES}
    print(f"{len(entries)} images {counts} -> {args.out / 'manifest.csv'}")


if __name__ == "__main__":
    main()
