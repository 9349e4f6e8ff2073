import filecmp
import json

import pytest

from graplus.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main

from conftest import TINY

SETS = [a for s in TINY for a in ("--set", s)]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "toy.json"
    spec.write_text(json.dumps({"rules": [{"foreground": "cup", "anchor": "table", "scale": 1.0}]}))
    assert main(["gen-data", "--spec", str(spec), "--n", "5", "--seed", "1", "--out", str(root / "data")]) == EXIT_OK
    return root


def _dirs_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    return not (cmp.diff_files or cmp.left_only or cmp.right_only) and all(
        _dirs_equal(a / d, b / d) for d in cmp.common_dirs)


def test_gen_data_deterministic(data_dir, tmp_path):
    spec = data_dir / "toy.json"
    assert main(["gen-data", "--spec", str(spec), "--n", "5", "--seed", "1", "--out", str(tmp_path / "again")]) == 0
    assert _dirs_equal(data_dir / "data", tmp_path / "again")


def test_train_infer_compose_eval(data_dir, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--data", str(data_dir / "data"), "--steps", "7", "--out", str(run), *SETS]) == EXIT_OK
    assert len((run / "metrics.ndjson").read_text().splitlines()) == 7
    preds = tmp_path / "preds.ndjson"
    assert main(["infer", "--checkpoint", str(run / "checkpoint.zip"), "--data", str(data_dir / "data"),
                 "--samples", "10", "--out", str(preds)]) == EXIT_OK
    records = [json.loads(line) for line in preds.read_text().splitlines()]
    assert len(records) == 50
    assert all(0 < v < 1 for r in records for v in r["t"])
    comp = tmp_path / "comp"
    assert main(["compose", "--data", str(data_dir / "data"), "--predictions", str(preds), "--out", str(comp),
                 *SETS]) == EXIT_OK
    assert len(list(comp.glob("*.png"))) == 50
    report = tmp_path / "report.json"
    assert main(["eval", "--predictions", str(preds), "--gt", str(data_dir / "data" / "gt.ndjson"),
                 "--out", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["n_samples"] == 50


def test_train_reproducible(data_dir, tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--data", str(data_dir / "data"), "--steps", "3", "--seed", "4",
                     "--out", str(tmp_path / name), *SETS]) == EXIT_OK
    assert (tmp_path / "a" / "metrics.ndjson").read_bytes() == (tmp_path / "b" / "metrics.ndjson").read_bytes()


def test_infer_single_graph(data_dir, tmp_path):
    run = tmp_path / "run"
    main(["train", "--data", str(data_dir / "data"), "--steps", "1", "--out", str(run), *SETS])
    graph = data_dir / "data" / "graphs" / "scene_00000.json"
    out = tmp_path / "p.ndjson"
    assert main(["infer", "--checkpoint", str(run / "checkpoint.zip"), "--graph", str(graph), "--fg-category",
                 "cup", "--fg-size", "48", "64", "--samples", "3", "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 3
    assert main(["infer", "--checkpoint", str(run / "checkpoint.zip"), "--graph", str(graph), "--fg-category",
                 "unicorn", "--fg-size", "4", "4", "--out", str(out)]) == EXIT_USAGE


def test_exit_codes(data_dir, tmp_path, capsys):
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["train", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["eval", "--predictions", str(tmp_path / "none"), "--gt", str(tmp_path / "none")]) == EXIT_USAGE
    code = main(["train", "--data", str(data_dir / "data"), "--out", str(tmp_path),
                 "--set", "gtn_layerz=1", "--set", "lr_g=-1"])
    assert code == EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "gtn_layerz" in err and "lr_g" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["gen-data", "--spec", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION


def test_numerical_failure_exit_code(data_dir, tmp_path, monkeypatch):
    from graplus import cli

    def explode(self, *a, **k):
        raise cli.NumericalError("non-finite loss", {"step": 1})

    monkeypatch.setattr(cli.Trainer, "train", explode)
    code = main(["train", "--data", str(data_dir / "data"), "--steps", "2", "--out", str(tmp_path), *SETS])
    assert code == EXIT_NUMERICAL
