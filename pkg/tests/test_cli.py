import csv
import json

import pytest

from tdomt.cli import main
from tdomt.experiment import save_config

from conftest import tiny_config


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "tiny.json"
    save_config(tiny_config(name="tiny"), path)
    return path


@pytest.fixture()
def trained(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    return out


def test_gen_corpus(tmp_path, config_file):
    out = tmp_path / "corpus"
    assert main(["gen-corpus", "--config", str(config_file), "--out", str(out)]) == 0
    for name in ("train.tsv", "valid.tsv", "test_supervised.tsv", "test_zeroshot.tsv"):
        assert (out / name).read_text().strip()


def test_train_writes_trace_and_checkpoint(trained):
    assert (trained / "config.json").exists()
    assert (trained / "loss_trace.csv").read_text().startswith("step,lr,ce,ctr,tokens")
    assert (trained / "checkpoint_last").is_dir()


def test_translate(tmp_path, trained, capsys):
    src = tmp_path / "in.tsv"
    src.write_text("<2xa>\ten1 en2 en3 en4\n<2en>\txb5 xb6 xb7 xb8\n")
    assert main(["translate", "--checkpoint", str(trained / "checkpoint_last"), "--input", str(src),
                 "--beam", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2


def test_evaluate_writes_metrics(tmp_path, trained):
    out = tmp_path / "eval"
    assert main(["evaluate", "--checkpoint", str(trained / "checkpoint_last"), "--beam", "1", "--out", str(out)]) == 0
    data = json.loads((out / "metrics.json").read_text())
    assert set(data["groups"]) == {"en->", "->en", "zero-shot", "all"}
    assert "chrf++" in data["groups"]["all"]
    assert (out / "metrics.csv").read_text().startswith("direction,token_accuracy")


def test_evaluate_rejects_testset_without_references(tmp_path, trained):
    bad = tmp_path / "bad.tsv"
    bad.write_text("<2xa>\ten1 en2\n")
    assert main(["evaluate", "--checkpoint", str(trained / "checkpoint_last"), "--testset", str(bad),
                 "--out", str(tmp_path / "e")]) == 2


def test_params_report(capsys):
    assert main(["params", "--vocab", "50000", "--d-model", "512", "--num-layers", "6"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["encoder_decoder"]["total"] == 69_738_496
    assert report["decoder_only"]["total"] == 63_428_608


def test_analyze_row_count(tmp_path, trained):
    out = tmp_path / "an"
    assert main(["analyze", "--checkpoint", str(trained / "checkpoint_last"), "--directions", "xa-xb,xc-xd",
                 "--set-size", "24", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "preference.csv")))
    assert len(rows) == 2 * 2  # two directions times 2N layers
    assert (out / "preference.json").exists()
    again = tmp_path / "an2"
    main(["analyze", "--checkpoint", str(trained / "checkpoint_last"), "--directions", "xa-xb,xc-xd",
          "--set-size", "24", "--out", str(again)])
    for name in ("preference.csv", "preference.json"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_sweep_rows_and_resume(tmp_path, config_file, capsys):
    out = tmp_path / "sweep"
    argv = ["sweep", "--config", str(config_file), "--axis", "instrucl_layer", "--values", "1,2",
            "--baseline", "1", "--beam", "1", "--out", str(out)]
    assert main(argv) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    acc = [r for r in rows if r["metric"] == "token_accuracy" and r["group"] == "all"]
    assert [r["instrucl_layer"] for r in acc] == ["1", "2"]
    assert float(acc[0]["delta"]) == 0.0
    first = (out / "instrucl_layer=2" / "result.json").read_bytes()
    capsys.readouterr()
    assert main(argv) == 0  # completed runs are reused, not retrained
    assert "step" not in capsys.readouterr().out
    assert (out / "instrucl_layer=2" / "result.json").read_bytes() == first


def test_sweep_over_m_gives_one_row_per_value(tmp_path):
    path = tmp_path / "deep.json"
    save_config(tiny_config(**{"model.num_layers": 4, "model.d_model": 8, "training.steps": 1}), path)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(path), "--axis", "M", "--values", "2,4,6", "--beam", "1",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    acc = [r for r in rows if r["metric"] == "token_accuracy" and r["group"] == "all"]
    assert [r["M"] for r in acc] == ["2", "4", "6"]


def test_sweep_rejects_out_of_range_value(tmp_path, config_file):
    assert main(["sweep", "--config", str(config_file), "--axis", "M", "--values", "1,5",
                 "--out", str(tmp_path / "s")]) == 2


def test_bad_config_is_reported(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"model": {"nonsense": 1}}')
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
