"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .ca_engine import DetectorParams, detect_edges, load_cell_table
from .canny import CannyConfig
from .harness import ConfigurationError, ExperimentSpec
from .image_core import (
    DataError,
    InvalidInputError,
    ManifestEntry,
    load_edge_map,
    load_image,
    load_manifest,
    resize_max_side,
    save_edge_map,
    save_gray,
    standardize_orientation,
    write_manifest,
)
from .metrics import evaluate_maps
from .pso import PSOConfig, load_snapshot, optimize, warm_start_optimize

log = logging.getLogger("psoca")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_FMT = argparse.ArgumentDefaultsHelpFormatter


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int, default=42, help="random seed")
    g.add_argument("--radius", type=int, choices=(1, 2), default=1, help="neighbourhood radius")
    g.add_argument("--prob-threshold", type=float, default=0.02,
                   help="annotation probability threshold p (edge iff probability > p)")
    g.add_argument("--threads", type=int, default=1, help="worker threads for batch fitness")
    g.add_argument("--config", type=Path, help="JSON file of option values; explicit flags win")
    g.add_argument("--log-level", default="INFO", help="logging level")
    return p


def _data_opts() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("data")
    g.add_argument("--manifest", type=Path, help="CSV with image,annotations,category")
    g.add_argument("--max-side", type=int, default=128, help="resize so the larger side equals this")
    g.add_argument("--square", action="store_true", help="zero-pad to max-side x max-side")
    return p


def _pso_opts() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    d = PSOConfig()
    g = p.add_argument_group("swarm")
    g.add_argument("--particles", type=int, default=d.n_particles, help="swarm size")
    g.add_argument("--iterations", type=int, default=d.iterations, help="swarm steps")
    g.add_argument("--w", type=float, default=d.w, help="inertia weight")
    g.add_argument("--c1", type=float, default=d.c1, help="personal-best acceleration")
    g.add_argument("--c2", type=float, default=d.c2, help="global-best acceleration")
    g.add_argument("--scalar-draws", action="store_true", help="one r1/r2 per particle instead of per coordinate")
    g.add_argument("--full-neighborhood", action="store_true", help="ignore the rule coordinate, use every cell")
    g.add_argument("--keep-snapshot-fitness", action="store_true",
                   help="on warm start, trust stored personal-best scores instead of re-evaluating")
    return p


def _canny_opts() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    d = CannyConfig()
    g = p.add_argument_group("canny baseline")
    g.add_argument("--sigma", type=float, default=d.sigma, help="Gaussian smoothing sigma")
    g.add_argument("--low", type=float, default=d.low_threshold, help="hysteresis low threshold (10%% of 255)")
    g.add_argument("--high", type=float, default=d.high_threshold, help="hysteresis high threshold (20%% of 255)")
    return p


def _experiment_opts() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("output")
    g.add_argument("--out-dir", type=Path, default=Path("results"), help="results root")
    g.add_argument("--name", help="experiment directory name (default: <kind>_r<radius>)")
    g.add_argument("--emit-maps", action="store_true", help="write detected edge maps as PNG")
    return p


def _params_opts(required: bool) -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("detector")
    g.add_argument("--delta", type=int, required=required, help="damping constant in [0, 255]")
    g.add_argument("--tau", type=float, required=required, help="threshold in [0, 1]")
    g.add_argument("--rule", type=int, required=required, help="linear rule number")
    g.add_argument("--cell-table", type=Path, help="JSON cell numbering table [[bit, dy, dx], ...]")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psoca", description="Cellular-automaton edge detector tuned by particle swarm.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    common, data, pso, cny, exp = _common(), _data_opts(), _pso_opts(), _canny_opts(), _experiment_opts()

    p = sub.add_parser("preprocess", parents=[common, data], formatter_class=_FMT,
                       help="grayscale, orient, resize and threshold a dataset")
    p.add_argument("--image", type=Path, help="single image to preprocess instead of a manifest")
    p.add_argument("--out", type=Path, required=True, help="output directory (manifest) or file (--image)")

    p = sub.add_parser("detect", parents=[common, _params_opts(True)], formatter_class=_FMT,
                       help="run the detector on one image")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--out", type=Path, help="edge map path (default: <image>.edges.png)")
    p.add_argument("--max-side", type=int, help="resize before detection")

    p = sub.add_parser("optimize", parents=[common, data, pso], formatter_class=_FMT,
                       help="tune detector parameters on a dataset")
    p.add_argument("--selector", default="all", help="all | category:<name>")
    p.add_argument("--warm-start", type=Path, help="population snapshot to start from")
    p.add_argument("--out", type=Path, required=True, help="result JSON path")

    p = sub.add_parser("evaluate", parents=[common], formatter_class=_FMT,
                       help="compare a detected edge map with an annotation")
    p.add_argument("--detected", type=Path, required=True)
    p.add_argument("--annotated", type=Path, required=True)

    for name, help_ in (
        ("kfold", "k-fold cross-validation with Canny comparison"),
        ("general", "train on all images, evaluate per category, save the population"),
        ("specialized", "warm-start one model per category from a general population"),
        ("individual", "train one model per category from scratch"),
    ):
        p = sub.add_parser(name, parents=[common, data, pso, cny, exp], formatter_class=_FMT, help=help_)
        if name == "kfold":
            p.add_argument("--k", type=int, default=10, help="number of folds")
        if name == "specialized":
            p.add_argument("--warm-start", type=Path, required=False,
                           help="population.json from a general run (required)")

    p = sub.add_parser("compare", parents=[common, data, cny, exp, _params_opts(True)], formatter_class=_FMT,
                       help="score fixed detector params against Canny")
    p.add_argument("--selector", default="all", help="all | category:<name>")
    return parser


_SPEC_TO_DEST = {
    "pso": {"n_particles": "particles", "iterations": "iterations", "w": "w", "c1": "c1", "c2": "c2",
            "scalar_draws": "scalar_draws", "full_neighborhood": "full_neighborhood"},
    "canny": {"sigma": "sigma", "low_threshold": "low", "high_threshold": "high"},
}


def _flatten_config(raw: dict) -> dict:
    """Accept either CLI option names or the nested experiment-spec layout."""
    flat = {}
    for key, value in raw.items():
        if key in _SPEC_TO_DEST and isinstance(value, dict):
            for k, v in value.items():
                if k == "reevaluate_warm_start":
                    flat["keep_snapshot_fitness"] = not v
                elif k in _SPEC_TO_DEST[key]:
                    flat[_SPEC_TO_DEST[key][k]] = v
                elif k != "seed":
                    raise UsageError(f"unknown config key {key}.{k}")
        elif key == "params" and isinstance(value, dict):
            flat.update({k: value[k] for k in ("delta", "tau", "rule") if k in value})
        elif key == "kind":
            continue
        else:
            flat[key.replace("-", "_")] = value
    return flat


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    sub = parser._subparsers._group_actions[0].choices.get(command)
    if known.config is not None and sub is not None:
        try:
            raw = json.loads(Path(known.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {known.config}: {exc}") from exc
        cfg = _flatten_config(raw)
        unknown = set(cfg) - {a.dest for a in sub._actions}
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        for action in sub._actions:
            if action.dest in cfg:
                if action.type is Path and cfg[action.dest] is not None:
                    cfg[action.dest] = Path(cfg[action.dest])
                action.required = False
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


# execution knobs that must not leak into persisted outputs
_RUNTIME_ONLY = {"threads", "log_level"}


def _resolved(args, persist: bool = True) -> dict:
    return {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if not (persist and k in _RUNTIME_ONLY)
    }


def _pso_config(args) -> PSOConfig:
    return PSOConfig(
        n_particles=args.particles, iterations=args.iterations, w=args.w, c1=args.c1, c2=args.c2,
        seed=args.seed, scalar_draws=args.scalar_draws,
        reevaluate_warm_start=not args.keep_snapshot_fitness,
        full_neighborhood=args.full_neighborhood,
    )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _need_manifest(args) -> Path:
    if args.manifest is None:
        raise UsageError(f"{args.command}: --manifest is required")
    return args.manifest


# ------------------------------------------------------------ subcommands


def cmd_preprocess(args) -> None:
    if args.image is not None:
        img = resize_max_side(standardize_orientation(load_image(args.image)), args.max_side)
        save_gray(args.out, img)
        return
    manifest = load_manifest(_need_manifest(args))
    out = args.out
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest.entries:
        s = harness.preprocess_entry(entry, args.prob_threshold, args.max_side, args.square)
        image_path = out / "images" / f"{s.name}.png"
        gt_path = out / "annotations" / f"{s.name}.png"
        save_gray(image_path, s.image)
        save_edge_map(gt_path, s.truth)
        entries.append(ManifestEntry(image_path, (gt_path,), s.category))
    write_manifest(out / "manifest.csv", entries)
    _write_json(out / "config.json", _resolved(args))


def cmd_detect(args) -> None:
    table = load_cell_table(args.cell_table) if args.cell_table else None
    params = DetectorParams.from_triple(args.delta, args.tau, args.rule, args.radius, table)
    img = load_image(args.image)
    if args.max_side:
        img = resize_max_side(standardize_orientation(img), args.max_side)
    out = args.out or args.image.with_name(f"{args.image.stem}.edges.png")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_edge_map(out, detect_edges(img, params))
    _write_json(out.with_suffix(".json"), _resolved(args))
    print(out)


def cmd_optimize(args) -> None:
    samples = harness.load_dataset(_need_manifest(args), args.prob_threshold, args.max_side, args.square)
    train = [(s.image, s.truth) for s in harness.select(samples, args.selector)]
    if not train:
        raise DataError(f"selector {args.selector!r} matched no images")
    config = _pso_config(args)
    if args.warm_start:
        result = warm_start_optimize(load_snapshot(args.warm_start), train, args.radius, config, args.threads)
    else:
        result = optimize(train, args.radius, config, args.threads)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(args.out, result.to_dict())
    _write_json(args.out.with_name(f"{args.out.stem}.population.json"), result.final_population.snapshot())
    _write_json(args.out.with_name(f"{args.out.stem}.config.json"), _resolved(args))
    p = result.best_params
    print(f"delta={p.delta} tau={p.tau!r} rule={p.rule} radius={p.radius} dsc={result.best_fitness!r}")


def cmd_evaluate(args) -> None:
    report = evaluate_maps(load_edge_map(args.detected), load_edge_map(args.annotated))
    print("image,dsc,psnr,ssim,mse")
    print(",".join([args.detected.stem, repr(report.dsc), harness._fmt(report.psnr),
                    repr(report.ssim), repr(report.mse)]))


_KIND = {"kfold": "kfold", "general": "general", "specialized": "specialized_tf",
         "individual": "individual", "compare": "evaluate_only"}


def spec_from_args(args) -> ExperimentSpec:
    kind = _KIND[args.command]
    extra = {}
    if kind == "kfold":
        extra["k"] = args.k
    if kind == "specialized_tf":
        extra["warm_start"] = str(args.warm_start) if args.warm_start else None
    if kind == "evaluate_only":
        extra["params"] = {"delta": args.delta, "tau": args.tau, "rule": args.rule}
        extra["selector"] = args.selector
    return ExperimentSpec(
        kind=kind,
        manifest=str(_need_manifest(args)),
        radius=args.radius,
        prob_threshold=args.prob_threshold,
        seed=args.seed,
        pso=_pso_config(args) if hasattr(args, "particles") else PSOConfig(seed=args.seed),
        max_side=args.max_side,
        square=args.square,
        canny=CannyConfig(args.sigma, args.low, args.high),
        threads=args.threads,
        emit_maps=args.emit_maps,
        name=args.name,
        **extra,
    )


def cmd_experiment(args) -> None:
    spec = spec_from_args(args)
    output = harness.run_experiment(spec, args.out_dir)
    dest = args.out_dir / spec.experiment_name
    print(dest)
    for row in output.summary:
        ssim = "" if row.ssim.mean is None else f"{row.ssim.mean:.3f} ± {row.ssim.std:.3f}"
        psnr = "" if row.psnr.mean is None else f"{row.psnr.mean:.3f} ± {row.psnr.std:.3f}"
        print(f"{row.model:28s} {row.eval_set:12s} PSNR {psnr:18s} SSIM {ssim}")


COMMANDS = {
    "preprocess": cmd_preprocess,
    "detect": cmd_detect,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "kfold": cmd_experiment,
    "general": cmd_experiment,
    "specialized": cmd_experiment,
    "individual": cmd_experiment,
    "compare": cmd_experiment,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        print(json.dumps(_resolved(args, persist=False), sort_keys=True), file=sys.stderr)
        COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, ConfigurationError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
