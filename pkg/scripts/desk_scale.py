#!/usr/bin/env python3
"""Run the full experiment set at desk scale and print the comparison tables.

Covers k-fold for both radii, the general model, transfer-learned and
individually trained category models, and the checks that are only
reported, never asserted.

    python scripts/desk_scale.py data/bsds500/manifest.csv --out results/desk
"""
import argparse
import dataclasses
from pathlib import Path

from psoca.harness import ExperimentSpec, load_dataset, run_experiment
from psoca.image_core import CATEGORIES
from psoca.pso import PSOConfig


def fmt(s):
    return "-" if s.mean is None else f"{s.mean:.3f} ± {s.std:.3f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("manifest", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results/desk"))
    ap.add_argument("--particles", type=int, default=10)
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    samples = load_dataset(args.manifest)
    base = ExperimentSpec(kind="kfold", manifest=str(args.manifest), seed=args.seed, k=args.k,
                          pso=PSOConfig(args.particles, args.iterations), threads=args.threads)

    def run(**changes):
        return run_experiment(dataclasses.replace(base, **changes), args.out, samples)

    print("== k-fold")
    kfold = {r: run(radius=r) for r in (1, 2)}
    for r, out in kfold.items():
        ours = out.summary_for(f"psoca-r{r}", "kfold")
        print(f"r={r}  PSNR {fmt(ours.psnr)}  SSIM {fmt(ours.ssim)}")
    canny = kfold[1].summary_for("canny", "kfold")
    print(f"canny PSNR {fmt(canny.psnr)}  SSIM {fmt(canny.ssim)}")

    present = [c for c in CATEGORIES if any(s.category == c for s in samples)]
    tf, cold = {}, {}
    for r in (1, 2):
        general = run(kind="general", radius=r, name=f"general_r{r}")
        snap = args.out / f"general_r{r}" / "population.json"
        tf[r] = run(kind="specialized_tf", radius=r, warm_start=str(snap))
        cold[r] = run(kind="individual", radius=r)
        print(f"\n== general r={r}")
        for name in ["general", *present]:
            row = general.summary_for(f"psoca-r{r}-general", name)
            print(f"{name:12s} PSNR {fmt(row.psnr)}  SSIM {fmt(row.ssim)}")
        print(f"\n== category models r={r} (SSIM; rows = training category)")
        print(" " * 24 + "".join(f"{e:>20s}" for e in ["general", *present]))
        for label, out, prefix in (("tf", tf[r], f"psoca-r{r}-tf-"), ("cold", cold[r], f"psoca-r{r}-")):
            for c in present:
                cells = [fmt(out.summary_for(prefix + c, e).ssim) for e in ["general", *present]]
                print(f"{label + ' ' + c:24s}" + "".join(f"{x:>20s}" for x in cells))

    print("\n== soft expectations")
    s1 = kfold[1].summary_for("psoca-r1", "kfold").ssim.mean
    s2 = kfold[2].summary_for("psoca-r2", "kfold").ssim.mean
    print(f"r=1 SSIM >= r=2 SSIM: {s1:.3f} vs {s2:.3f} -> {s1 >= s2}")
    ranking = sorted(present, key=lambda c: tf[1].summary_for(f"psoca-r1-tf-{c}", "general").ssim.mean)
    print(f"worst TF model on the general set: {ranking[0]} (expected landscapes)")
    for c in present:
        a = tf[1].summary_for(f"psoca-r1-tf-{c}", c).ssim
        b = cold[1].summary_for(f"psoca-r1-{c}", c).ssim
        print(f"TF - cold on {c}: {a.mean - b.mean:+.3f} (std {max(a.std, b.std):.3f})")


if __name__ == "__main__":
    main()
