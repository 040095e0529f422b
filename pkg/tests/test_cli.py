import json
from pathlib import Path

import pytest

from aloft.cli import main
from aloft.data import read_image
from aloft.model import Checkpoint


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    assert main(["gen-data", "--seed", "7", "--per-class", "6", "--out", str(out)]) == 0
    return out


def test_gen_data_deterministic(dataset, tmp_path, capsys):
    again = tmp_path / "again"
    assert main(["gen-data", "--seed", "7", "--per-class", "6", "--out", str(again)]) == 0
    assert _tree(dataset) == _tree(again)
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 7 and manifest["split_seed"] == 7
    assert len(manifest["domains"]) == 4 and "wrote 72 images" in capsys.readouterr().out


def test_train_zero_epochs_gives_init_checkpoint(dataset, tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--data", str(dataset), "--target-domain", "domain0", "--method", "baseline",
                 "--epochs", "0", "--out", str(out)])
    assert code == 0
    ckpt = Checkpoint.load(out / "model.ckpt")
    assert ckpt.meta["best_epoch"] == 0 and ckpt.config.num_classes == 3
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["train"]["epochs"] == 0 and doc["train"]["aloft"]["method"] == "none"


def test_manifest_reproduces_run(dataset, tmp_path):
    first = tmp_path / "a"
    main(["train", "--data", str(dataset), "--target-domain", "domain1", "--method", "aloft-e",
          "--epochs", "1", "--seed", "5", "--stages", "1,0", "--quiet", "--out", str(first)])
    second = tmp_path / "b"
    assert main(["train", "--config", str(first / "manifest.json"), "--target-domain", "domain1",
                 "--quiet", "--out", str(second)]) == 0
    assert (first / "model.ckpt").read_bytes() == (second / "model.ckpt").read_bytes()
    assert (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()


def test_flags_override_config_file(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"epochs": 3, "lr": 1e-3, "aloft": {"method": "aloft_s", "alpha": 0.4}},
                               "data": str(dataset)}))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--epochs", "0", "--target-domain", "domain0",
                 "--out", str(out)]) == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["train"]["epochs"] == 0 and doc["train"]["lr"] == 1e-3
    assert doc["train"]["aloft"]["method"] == "aloft_s" and doc["train"]["aloft"]["alpha"] == 0.4
    assert doc["data"] == str(dataset)
    # switching method without an alpha falls back to that method's default
    main(["train", "--config", str(cfg), "--epochs", "0", "--method", "aloft-e", "--target-domain", "domain0",
          "--out", str(out)])
    assert json.loads((out / "manifest.json").read_text())["train"]["aloft"]["alpha"] == 1.0


def test_lodo_writes_json_and_csv(dataset, tmp_path, capsys):
    out = tmp_path / "lodo"
    assert main(["lodo", "--data", str(dataset), "--method", "aloft-e", "--epochs", "1", "--seeds", "2",
                 "--quiet", "--out", str(out)]) == 0
    rows = (out / "result.csv").read_text().splitlines()
    assert rows[0] == "domain,accuracy" and len(rows) == 6 and rows[-1].startswith("average,")
    doc = json.loads((out / "result.json").read_text())
    assert doc["seeds"] == [0, 100] and len(doc["summary"]["runs"]) == 2
    assert doc["train"]["aloft"]["method"] == "aloft_e"
    assert "sem over 2 seeds" in capsys.readouterr().out


@pytest.fixture(scope="module")
def checkpoint(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    main(["train", "--data", str(dataset), "--target-domain", "domain2", "--epochs", "2", "--quiet",
          "--out", str(out)])
    return out / "model.ckpt"


def test_eval(checkpoint, dataset, capsys):
    assert main(["eval", "--ckpt", str(checkpoint), "--data", str(dataset), "--domain", "domain2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["domain"] == "domain2" and 0 <= doc["accuracy"] <= 1


def test_freq_curve_csv(checkpoint, dataset, tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["freq-curve", "--ckpt", str(checkpoint), "--data", str(dataset), "--band", "high",
                 "--radii", "0.5,0.3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "radius,accuracy" and [l.split(",")[0] for l in lines[1:]] == ["0.3", "0.5"]


def test_domain_gap_csv(checkpoint, dataset, tmp_path, capsys):
    out = tmp_path / "gap.csv"
    assert main(["domain-gap", "--ckpt", str(checkpoint), "--data", str(dataset),
                 "--domains", "domain0,domain1,domain3", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5
    assert json.loads(capsys.readouterr().out)["d"] > 0


@pytest.mark.parametrize("method", ["aloft-e", "aloft-s"])
def test_augment_alpha_zero_is_identity(dataset, tmp_path, method):
    src = dataset / "domain0" / "circle"
    out = tmp_path / "aug"
    assert main(["augment", "--input", str(src), "--method", method, "--alpha", "0", "--out", str(out)]) == 0
    assert _tree(out) == _tree(src)


def test_augment_changes_images(dataset, tmp_path):
    src = dataset / "domain0" / "circle"
    out = tmp_path / "aug"
    assert main(["augment", "--input", str(src), "--out", str(out)]) == 0
    before, after = _tree(src), _tree(out)
    assert before.keys() == after.keys() and before != after
    name = next(iter(after))
    assert read_image(out / name).shape == read_image(src / name).shape


def test_exit_codes(dataset, tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err
    # validation problems
    assert main(["train", "--data", str(dataset), "--target-domain", "nowhere", "--epochs", "0",
                 "--out", str(tmp_path / "o")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["train", "--config", str(bad), "--target-domain", "domain0", "--out", str(tmp_path)]) == 1
    assert main(["train", "--data", str(dataset), "--target-domain", "domain0", "--stages", "a,b",
                 "--out", str(tmp_path)]) == 1
    # I/O problems
    assert main(["eval", "--ckpt", str(tmp_path / "none.ckpt"), "--data", str(dataset), "--domain", "d"]) == 2
    assert main(["augment", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "I/O error" in err and "error:" in err
