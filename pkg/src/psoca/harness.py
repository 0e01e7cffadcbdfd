"""Experiment orchestration: dataset preparation, splits, case studies, tables.

Every run is a pure function of its :class:`ExperimentSpec`; outputs are
written with stable ordering and full-precision floats so identical specs
give byte-identical files.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ca_engine import DetectorParams, detect_edges
from .canny import CannyConfig, canny
from .image_core import (
    CATEGORIES,
    DataError,
    InvalidInputError,
    ManifestEntry,
    average_annotations,
    letterbox,
    load_edge_map,
    load_image,
    load_manifest,
    resize_bilinear,
    resize_max_side,
    save_edge_map,
    standardize_orientation,
    target_size,
    threshold_probability,
)
from .metrics import MetricReport, evaluate_maps
from .pso import (
    OptimizationResult,
    PSOConfig,
    load_snapshot,
    optimize,
    warm_start_optimize,
)

log = logging.getLogger(__name__)

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "Sample",
    "ImageRow",
    "ResultRow",
    "Summary",
    "preprocess_entry",
    "load_dataset",
    "select",
    "kfold_split",
    "evaluate_detector",
    "aggregate",
    "summarize",
    "run_kfold",
    "run_general",
    "run_specialized",
    "run_evaluate",
    "run_experiment",
    "write_outputs",
]

KINDS = ("kfold", "general", "specialized_tf", "individual", "evaluate_only")
GENERAL = "general"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    manifest: str
    radius: int = 1
    prob_threshold: float = 0.02
    seed: int = 42
    pso: PSOConfig = PSOConfig()
    selector: str = "all"
    warm_start: str | None = None
    k: int = 10
    max_side: int = 128
    square: bool = False
    canny: CannyConfig = CannyConfig()
    params: dict | None = None
    threads: int = 1
    emit_maps: bool = False
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.kind == "specialized_tf" and not self.warm_start:
            raise ConfigurationError("specialized_tf needs a warm-start population snapshot")
        if self.kind == "kfold" and self.k < 2:
            raise ConfigurationError("kfold needs k >= 2")
        if self.kind == "evaluate_only" and not self.params:
            raise ConfigurationError("evaluate_only needs detector params (delta, tau, rule)")
        if self.radius not in (1, 2):
            raise ConfigurationError(f"unsupported radius {self.radius}")

    @property
    def experiment_name(self) -> str:
        return self.name or f"{self.kind}_r{self.radius}"

    def to_dict(self) -> dict:
        """Serialisable form; ``threads`` is left out since it never changes results."""
        d = dataclasses.asdict(self)
        del d["threads"]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        raw = dict(raw)
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - fields
        if unknown:
            raise ConfigurationError(f"unknown spec fields: {sorted(unknown)}")
        if isinstance(raw.get("pso"), dict):
            raw["pso"] = PSOConfig(**raw["pso"])
        if isinstance(raw.get("canny"), dict):
            raw["canny"] = CannyConfig(**raw["canny"])
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------------ dataset


@dataclass(frozen=True)
class Sample:
    name: str
    category: str
    image: np.ndarray
    truth: np.ndarray


def preprocess_entry(entry: ManifestEntry, p: float = 0.02, max_side: int = 128,
                     square: bool = False) -> Sample:
    """Gray image plus thresholded ground truth, both oriented and resized.

    The annotators are averaged at full resolution; the probability map is
    then resampled (not rounded) and thresholded at ``p`` so thin boundaries
    survive downscaling.
    """
    image = standardize_orientation(load_image(entry.image))
    pmap = standardize_orientation(average_annotations([load_edge_map(a) for a in entry.annotations]))
    if pmap.shape != image.shape:
        raise DataError(f"{entry.image}: annotation size {pmap.shape} != image size {image.shape}")
    h, w = target_size(*image.shape, max_side)
    image = resize_max_side(image, max_side)
    if pmap.shape != (h, w):
        pmap = np.clip(resize_bilinear(pmap, h, w), 0.0, 1.0)
    truth = threshold_probability(pmap, p)
    if square:
        image, truth = letterbox(image, max_side), letterbox(truth, max_side)
    return Sample(entry.name, entry.category, image, truth)


def load_dataset(manifest, p: float = 0.02, max_side: int = 128, square: bool = False) -> list[Sample]:
    entries = load_manifest(manifest).entries
    return [preprocess_entry(e, p, max_side, square) for e in entries]


def select(samples: Sequence[Sample], selector: str) -> list[Sample]:
    """``all`` or ``category:<name>``."""
    if selector == "all":
        return list(samples)
    kind, _, value = selector.partition(":")
    if kind == "category" and value in CATEGORIES:
        return [s for s in samples if s.category == value]
    raise ConfigurationError(f"bad training selector {selector!r}")


def kfold_split(n: int, k: int, seed: int) -> list[tuple[list[int], list[int]]]:
    """Shuffle ``range(n)`` with ``seed`` and cut it into ``k`` contiguous folds."""
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if k > n:
        raise InvalidInputError(f"k={k} exceeds dataset size {n}")
    order = np.random.default_rng(seed).permutation(n)
    folds = [sorted(f.tolist()) for f in np.array_split(order, k)]
    return [
        (sorted(j for f in folds[:i] + folds[i + 1:] for j in f), folds[i])
        for i in range(k)
    ]


# --------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class ImageRow:
    model: str
    train_set: str
    eval_set: str
    image: str
    report: MetricReport


@dataclass(frozen=True)
class Summary:
    mean: float | None
    std: float | None
    n: int
    excluded: int = 0


def summarize(values: Iterable[float]) -> Summary:
    """Mean and sample standard deviation over the finite values."""
    values = list(values)
    finite = [v for v in values if math.isfinite(v)]
    excluded = len(values) - len(finite)
    if not finite:
        return Summary(None, None, 0, excluded)
    mean = math.fsum(finite) / len(finite)
    if len(finite) == 1:
        return Summary(mean, 0.0, 1, excluded)
    var = math.fsum((v - mean) ** 2 for v in finite) / (len(finite) - 1)
    return Summary(mean, math.sqrt(var), len(finite), excluded)


@dataclass(frozen=True)
class ResultRow:
    model: str
    train_set: str
    eval_set: str
    radius: int | None
    psnr: Summary
    ssim: Summary
    dsc: Summary
    optimization_dsc: float | None = None
    delta: int | None = None
    tau: float | None = None
    rule: int | None = None


def evaluate_detector(samples: Sequence[Sample], detect, model: str, train_set: str,
                      eval_set: str, maps_dir: Path | None = None) -> list[ImageRow]:
    rows = []
    for s in samples:
        edges = detect(s.image)
        if maps_dir is not None:
            out = maps_dir / model
            out.mkdir(parents=True, exist_ok=True)
            save_edge_map(out / f"{s.name}.png", edges)
        rows.append(ImageRow(model, train_set, eval_set, s.name, evaluate_maps(edges, s.truth)))
    return rows


def aggregate(rows: Sequence[ImageRow], params: dict[str, dict] | None = None) -> list[ResultRow]:
    """Collapse per-image rows to one row per (model, train set, eval set), first-seen order."""
    params = params or {}
    groups: dict[tuple[str, str, str], list[ImageRow]] = {}
    for row in rows:
        groups.setdefault((row.model, row.train_set, row.eval_set), []).append(row)
    out = []
    for (model, train_set, eval_set), members in groups.items():
        info = params.get(model, {})
        out.append(ResultRow(
            model=model,
            train_set=train_set,
            eval_set=eval_set,
            radius=info.get("radius"),
            psnr=summarize(r.report.psnr for r in members),
            ssim=summarize(r.report.ssim for r in members),
            dsc=summarize(r.report.dsc for r in members),
            optimization_dsc=info.get("optimization_dsc"),
            delta=info.get("delta"),
            tau=info.get("tau"),
            rule=info.get("rule"),
        ))
    return out


@dataclass
class ExperimentOutput:
    spec: ExperimentSpec
    image_rows: list[ImageRow]
    summary: list[ResultRow]
    results: dict[str, OptimizationResult] = field(default_factory=dict)

    def summary_for(self, model: str, eval_set: str) -> ResultRow:
        for row in self.summary:
            if row.model == model and row.eval_set == eval_set:
                return row
        raise KeyError((model, eval_set))


def _pairs(samples: Sequence[Sample]) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(s.image, s.truth) for s in samples]


def _model_info(result: OptimizationResult) -> dict:
    p = result.best_params
    return {"radius": p.radius, "optimization_dsc": result.best_fitness,
            "delta": p.delta, "tau": p.tau, "rule": p.rule}


def _detector(params: DetectorParams):
    return lambda img: detect_edges(img, params)


def _canny(config: CannyConfig):
    return lambda img: canny(img, config)


def _eval_sets(samples: Sequence[Sample]) -> list[tuple[str, list[Sample]]]:
    sets = [(GENERAL, list(samples))]
    for c in CATEGORIES:
        members = [s for s in samples if s.category == c]
        if members:
            sets.append((c, members))
    return sets


def _maps_dir(spec: ExperimentSpec, out_dir: Path | None) -> Path | None:
    if spec.emit_maps and out_dir is not None:
        return out_dir / spec.experiment_name / "maps"
    return None


def run_kfold(spec: ExperimentSpec, samples: Sequence[Sample], out_dir: Path | None = None) -> ExperimentOutput:
    """Optimise on k-1 folds, evaluate on the held-out fold; Canny on the same folds."""
    maps = _maps_dir(spec, out_dir)
    rows: list[ImageRow] = []
    info: dict[str, dict] = {}
    results: dict[str, OptimizationResult] = {}
    pooled = f"psoca-r{spec.radius}"
    for i, (train_idx, test_idx) in enumerate(kfold_split(len(samples), spec.k, spec.seed)):
        train = [samples[j] for j in train_idx]
        test = [samples[j] for j in test_idx]
        config = dataclasses.replace(spec.pso, seed=spec.seed + i)
        result = optimize(_pairs(train), spec.radius, config, spec.threads)
        model = f"{pooled}-fold{i}"
        log.info("fold %d: dsc=%.4f params=%s", i, result.best_fitness, result.best_params.as_dict())
        results[model] = result
        info[model] = _model_info(result)
        fold_set = f"fold{i}"
        rows += evaluate_detector(test, _detector(result.best_params), model, f"not-{fold_set}", fold_set, maps)
        rows += evaluate_detector(test, _canny(spec.canny), f"canny-fold{i}", "-", fold_set)
    summary = aggregate(rows, info)
    # pooled over all held-out images, one row per detector
    pooled_rows = [dataclasses.replace(r, model=pooled, train_set="kfold", eval_set="kfold")
                   for r in rows if r.model.startswith(pooled)]
    canny_rows = [dataclasses.replace(r, model="canny", train_set="-", eval_set="kfold")
                  for r in rows if r.model.startswith("canny")]
    summary += aggregate(pooled_rows) + aggregate(canny_rows)
    return ExperimentOutput(spec, rows, summary, results)


def run_general(spec: ExperimentSpec, samples: Sequence[Sample], out_dir: Path | None = None) -> ExperimentOutput:
    """Train on everything, then score on the full set and on each category."""
    maps = _maps_dir(spec, out_dir)
    result = optimize(_pairs(samples), spec.radius, dataclasses.replace(spec.pso, seed=spec.seed), spec.threads)
    model = f"psoca-r{spec.radius}-general"
    rows: list[ImageRow] = []
    for name, members in _eval_sets(samples):
        rows += evaluate_detector(members, _detector(result.best_params), model, GENERAL, name,
                                  maps if name == GENERAL else None)
    for name, members in _eval_sets(samples):
        rows += evaluate_detector(members, _canny(spec.canny), "canny", "-", name)
    return ExperimentOutput(spec, rows, aggregate(rows, {model: _model_info(result)}), {model: result})


def run_specialized(spec: ExperimentSpec, samples: Sequence[Sample], out_dir: Path | None = None) -> ExperimentOutput:
    """One model per category, each scored on every category and the full set.

    ``specialized_tf`` starts each category from the saved general population;
    ``individual`` starts cold.
    """
    maps = _maps_dir(spec, out_dir)
    tf = spec.kind == "specialized_tf"
    snapshot = None
    if tf:
        path = Path(spec.warm_start)
        if not path.is_file():
            raise ConfigurationError(f"warm-start snapshot not found: {path}")
        snapshot = load_snapshot(path)
    eval_sets = _eval_sets(samples)
    rows: list[ImageRow] = []
    info: dict[str, dict] = {}
    results: dict[str, OptimizationResult] = {}
    for c in CATEGORIES:
        train = [s for s in samples if s.category == c]
        if not train:
            continue
        config = dataclasses.replace(spec.pso, seed=spec.seed + CATEGORIES.index(c))
        if tf:
            result = warm_start_optimize(snapshot, _pairs(train), spec.radius, config, spec.threads)
        else:
            result = optimize(_pairs(train), spec.radius, config, spec.threads)
        model = f"psoca-r{spec.radius}-{'tf-' if tf else ''}{c}"
        log.info("%s: dsc=%.4f params=%s", model, result.best_fitness, result.best_params.as_dict())
        results[model] = result
        info[model] = _model_info(result)
        for name, members in eval_sets:
            rows += evaluate_detector(members, _detector(result.best_params), model, c, name,
                                      maps if name == GENERAL else None)
    for name, members in eval_sets:
        rows += evaluate_detector(members, _canny(spec.canny), "canny", "-", name)
    return ExperimentOutput(spec, rows, aggregate(rows, info), results)


def run_evaluate(spec: ExperimentSpec, samples: Sequence[Sample], out_dir: Path | None = None) -> ExperimentOutput:
    """Score fixed detector params and Canny on the selected images."""
    maps = _maps_dir(spec, out_dir)
    p = spec.params
    params = DetectorParams.from_triple(p["delta"], p["tau"], p["rule"], spec.radius)
    chosen = select(samples, spec.selector)
    eval_set = spec.selector.replace("category:", "") if spec.selector != "all" else GENERAL
    model = f"psoca-r{spec.radius}-fixed"
    info = {model: {**params.as_dict(), "optimization_dsc": None}}
    rows = evaluate_detector(chosen, _detector(params), model, "-", eval_set, maps)
    rows += evaluate_detector(chosen, _canny(spec.canny), "canny", "-", eval_set)
    return ExperimentOutput(spec, rows, aggregate(rows, info))


_RUNNERS = {
    "kfold": run_kfold,
    "general": run_general,
    "specialized_tf": run_specialized,
    "individual": run_specialized,
    "evaluate_only": run_evaluate,
}


def run_experiment(spec: ExperimentSpec, out_dir=None, samples: Sequence[Sample] | None = None) -> ExperimentOutput:
    out_dir = Path(out_dir) if out_dir is not None else None
    if samples is None:
        samples = load_dataset(spec.manifest, spec.prob_threshold, spec.max_side, spec.square)
    if not samples:
        raise DataError("dataset is empty")
    output = _RUNNERS[spec.kind](spec, samples, out_dir)
    if out_dir is not None:
        write_outputs(output, out_dir / spec.experiment_name)
    return output


# ------------------------------------------------------------------ outputs


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if x == math.inf else repr(x)
    return str(x)


def write_rows_csv(path: Path, rows: Sequence[ImageRow]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "train_set", "eval_set", "image", "dsc", "psnr", "ssim", "mse"])
        for r in rows:
            m = r.report
            w.writerow([r.model, r.train_set, r.eval_set, r.image,
                        _fmt(m.dsc), _fmt(m.psnr), _fmt(m.ssim), _fmt(m.mse)])


SUMMARY_HEADER = [
    "model", "train_set", "eval_set", "radius", "n",
    "psnr_mean", "psnr_std", "psnr_excluded", "ssim_mean", "ssim_std",
    "dsc_mean", "dsc_std", "optimization_dsc", "delta", "tau", "rule",
]


def write_summary_csv(path: Path, rows: Sequence[ResultRow]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_fmt(v) for v in (
                r.model, r.train_set, r.eval_set, r.radius, r.ssim.n,
                r.psnr.mean, r.psnr.std, r.psnr.excluded, r.ssim.mean, r.ssim.std,
                r.dsc.mean, r.dsc.std, r.optimization_dsc, r.delta, r.tau, r.rule,
            )])


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_outputs(output: ExperimentOutput, dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    write_rows_csv(dest / "rows.csv", output.image_rows)
    write_summary_csv(dest / "summary.csv", output.summary)
    _dump(dest / "config.json", output.spec.to_dict())
    if output.results:
        populations = {m: r.final_population.snapshot() for m, r in output.results.items()}
        histories = {m: r.to_dict() for m, r in output.results.items()}
        if len(populations) == 1:
            # a lone model's snapshot is directly reusable as a warm start
            (populations,) = populations.values()
        _dump(dest / "population.json", populations)
        _dump(dest / "history.json", histories)
