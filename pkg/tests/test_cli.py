import json

import numpy as np
import pytest
from PIL import Image

from psoca.cli import build_parser, main, parse_args
from psoca.image_core import load_edge_map


@pytest.fixture
def gray_png(tmp_path, rng):
    path = tmp_path / "a.png"
    Image.fromarray(rng.integers(0, 256, (20, 30), dtype=np.uint8)).save(path)
    return path


def _kfold_args(manifest, out, *extra):
    return ["kfold", "--manifest", str(manifest), "--k", "2", "--particles", "3", "--iterations", "2",
            "--max-side", "48", "--out-dir", str(out), *extra]


def test_detect_writes_edges(gray_png, capsys):
    code = main(["detect", "--image", str(gray_png), "--delta", "20", "--tau", "0.744077",
                 "--rule", "350", "--radius", "1"])
    assert code == 0
    out = gray_png.with_name("a.edges.png")
    assert out.is_file()
    assert load_edge_map(out).shape == (20, 30)
    resolved = json.loads(out.with_suffix(".json").read_text())
    assert resolved["rule"] == 350 and "threads" not in resolved
    assert str(out) in capsys.readouterr().out


def test_evaluate_prints_csv(gray_png, tmp_path, capsys):
    main(["detect", "--image", str(gray_png), "--delta", "20", "--tau", "0.5", "--rule", "511"])
    edges = gray_png.with_name("a.edges.png")
    capsys.readouterr()
    assert main(["evaluate", "--detected", str(edges), "--annotated", str(edges)]) == 0
    header, line = capsys.readouterr().out.strip().splitlines()
    assert header == "image,dsc,psnr,ssim,mse"
    assert line == "a.edges,1.0,inf,1.0,0.0"


def test_usage_errors(gray_png, capsys):
    assert main(["detect", "--image", str(gray_png)]) == 1
    assert main(["bogus"]) == 1
    assert main(["detect", "--image", str(gray_png), "--delta", "300", "--tau", "0.5", "--rule", "1"]) == 1
    assert main(["detect", "--image", str(gray_png), "--delta", "3", "--tau", "0.5", "--rule", "1",
                 "--radius", "3"]) == 1
    assert main(["detect", "--image", str(gray_png), "--delta", "3", "--tau", "0.5", "--rule", "1",
                 "--no-such-flag"]) == 1
    assert "error" in capsys.readouterr().err


def test_data_errors(tmp_path):
    assert main(["detect", "--image", str(tmp_path / "missing.png"), "--delta", "3",
                 "--tau", "0.5", "--rule", "1"]) == 2
    assert main(["kfold", "--manifest", str(tmp_path / "missing.csv")]) == 2


def test_specialized_without_snapshot(toy_manifest, tmp_path):
    assert main(["specialized", "--manifest", str(toy_manifest), "--out-dir", str(tmp_path)]) == 1


def test_resolved_config_on_stderr(gray_png, capsys):
    main(["detect", "--image", str(gray_png), "--delta", "20", "--tau", "0.5", "--rule", "3", "--seed", "9"])
    first = capsys.readouterr().err.strip().splitlines()[0]
    resolved = json.loads(first)
    assert resolved["seed"] == 9 and resolved["prob_threshold"] == 0.02


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"manifest": "m.csv", "iterations": 7, "seed": 5, "pso": {"c1": 0.1}}))
    args = parse_args(["kfold", "--config", str(cfg), "--seed", "11"])
    assert (args.iterations, args.seed, args.c1) == (7, 11, 0.1)
    assert str(args.manifest) == "m.csv"


def test_config_file_params_satisfy_required(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"delta": 1, "tau": 0.2, "rule": 3}}))
    args = parse_args(["detect", "--config", str(cfg), "--image", "x.png"])
    assert (args.delta, args.tau, args.rule) == (1, 0.2, 3)


def test_config_file_unknown_key(tmp_path, gray_png):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"flavour": 1}))
    assert main(["detect", "--config", str(cfg), "--image", str(gray_png)]) == 1


@pytest.mark.parametrize("command", ["kfold", "general", "specialized", "individual", "compare"])
def test_help_shows_defaults(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    for needle in ("0.02", "25.5", "51.0", "--sigma", "--threads"):
        assert needle in text


def test_every_subcommand_exists():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"preprocess", "detect", "optimize", "evaluate", "kfold", "general",
                        "specialized", "individual", "compare"}


def test_kfold_twice_identical(toy_manifest, tmp_path):
    assert main(_kfold_args(toy_manifest, tmp_path / "a")) == 0
    assert main(_kfold_args(toy_manifest, tmp_path / "b", "--threads", "2")) == 0
    a, b = tmp_path / "a" / "kfold_r1", tmp_path / "b" / "kfold_r1"
    for name in ("rows.csv", "summary.csv", "config.json", "population.json", "history.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_general_then_specialized(toy_manifest, tmp_path):
    common = ["--manifest", str(toy_manifest), "--particles", "3", "--iterations", "1",
              "--max-side", "48", "--out-dir", str(tmp_path)]
    assert main(["general", *common]) == 0
    snap = tmp_path / "general_r1" / "population.json"
    assert main(["specialized", *common, "--warm-start", str(snap)]) == 0
    summary = (tmp_path / "specialized_tf_r1" / "summary.csv").read_text().splitlines()
    assert len([l for l in summary if l.startswith("psoca-r1-tf-")]) == 20


def test_optimize_and_warm_start(toy_manifest, tmp_path, capsys):
    common = ["--manifest", str(toy_manifest), "--particles", "3", "--iterations", "2", "--max-side", "48"]
    out = tmp_path / "opt.json"
    assert main(["optimize", *common, "--out", str(out)]) == 0
    assert "dsc=" in capsys.readouterr().out
    pop = tmp_path / "opt.population.json"
    assert pop.is_file() and (tmp_path / "opt.config.json").is_file()
    warm = tmp_path / "warm.json"
    assert main(["optimize", *common, "--selector", "category:animals", "--warm-start", str(pop),
                 "--out", str(warm)]) == 0
    assert json.loads(warm.read_text())["best_params"]["radius"] == 1


def test_preprocess_manifest(toy_manifest, tmp_path):
    out = tmp_path / "pre"
    assert main(["preprocess", "--manifest", str(toy_manifest), "--max-side", "32", "--out", str(out)]) == 0
    lines = (out / "manifest.csv").read_text().splitlines()
    assert len(lines) == 9
    img = np.asarray(Image.open(out / "images" / "scene003.png"))
    assert img.shape[1] == 32


def test_compare(toy_manifest, tmp_path):
    assert main(["compare", "--manifest", str(toy_manifest), "--delta", "20", "--tau", "0.5",
                 "--rule", "350", "--max-side", "48", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "evaluate_only_r1" / "summary.csv").is_file()
