import json

import numpy as np
import pytest

from neurotune.cli import main
from neurotune.container import read_container
from neurotune.evalharness.reports import read_csv
from neurotune.modelzoo import build_model, count_params, load_model_config

from conftest import SMALL_LABRAM


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def synth_dir(tmp_path, capsys):
    out = tmp_path / "synth"
    code, _, _ = run(["synth", "--out", out, "--subjects", 4, "--trials-per-subject", 4, "--duration-s", 2,
                      "--seed", 1], capsys)
    assert code == 0
    return out


def write_config(path, data_dir, out_dir, **harness):
    block = {"epochs": 1, "folds": 2, "batch_size": 8, "ranks": [1, 2], "dropouts": [0.0, 0.5],
             "layer_combos": [["attention"], ["conv"]], **harness}
    cfg = {"name": "t", "model": "labram_like_reference", "model_overrides": SMALL_LABRAM, "data": str(data_dir),
           "lora": {"rank": 1}, "harness": block, "seed": 2, "output_dir": str(out_dir)}
    path.write_text(json.dumps(cfg))
    return path


def test_synth_writes_container(synth_dir):
    ts = read_container(synth_dir)
    assert len(ts) == 16 and ts.fs == 200.0


@pytest.mark.parametrize("style,fs,n_ch", [("labram", 200.0, 8), ("neurogpt", 250.0, 22)])
def test_preprocess(tmp_path, synth_dir, capsys, style, fs, n_ch):
    code, out, _ = run(["preprocess", "--in", synth_dir, "--style", style, "--out", tmp_path / style], capsys)
    assert code == 0
    ts = read_container(tmp_path / style)
    assert ts.fs == fs and ts.n_channels == n_ch
    mapping = json.loads((tmp_path / style / "mapping.json").read_text())
    assert mapping["style"] == style and mapping["fs"] == fs
    assert len(mapping["output_channels"]) == n_ch


def test_preprocess_missing_data_file(tmp_path, synth_dir, capsys):
    (synth_dir / "data.bin").unlink()
    code, _, err = run(["preprocess", "--in", synth_dir, "--style", "labram", "--out", tmp_path / "x"], capsys)
    assert code == 2 and "data.bin" in err


def test_count_params_head_only(capsys):
    code, out, _ = run(["count-params", "--model", "labram_like_reference", "--freeze", "backbone",
                        "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["trainable"] == 402


def test_count_params_single_attention_adapter(tmp_path, capsys):
    lora = tmp_path / "lora.json"
    lora.write_text(json.dumps({"targets": ["attention"], "rank": 1}))
    code, out, _ = run(["count-params", "--model", "labram_like_reference", "--set", "depth=1", "--lora", lora,
                        "--format", "json", "--json", tmp_path / "r.json"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["trainable"] == 1_202
    assert payload["lora"]["breakdown"] == {"attention": 800, "head": 402}
    assert json.loads((tmp_path / "r.json").read_text()) == payload


def test_count_params_matches_enumeration(capsys):
    code, out, _ = run(["count-params", "--model", "labram_like_reference", "--format", "json"], capsys)
    model = build_model(load_model_config("labram_like_reference"))
    oracle = sum(int(np.prod(p.shape)) for _, p in model.named_parameters())
    assert json.loads(out)["total"] == oracle == count_params(model).total
    code, out, _ = run(["count-params", "--model", "labram_like_reference"], capsys)
    assert code == 0 and "TOTAL" in out


def test_count_params_bad_inputs(capsys):
    assert run(["count-params", "--model", "nope"], capsys)[0] == 2
    code, _, err = run(["count-params", "--model", "labram_like_reference", "--set", "heads=3"], capsys)
    assert code == 2
    code, _, err = run(["count-params", "--model", "labram_like_reference", "--lora", '{"rank": 0}'], capsys)
    assert code == 2 and "rank" in err


def test_train_writes_records(tmp_path, synth_dir, capsys):
    cfg = write_config(tmp_path / "c.json", synth_dir, tmp_path / "out")
    code, _, _ = run(["train", "--config", cfg], capsys)
    assert code == 0
    folds = read_csv(tmp_path / "out" / "folds.csv")
    assert [int(r["fold"]) for r in folds] == [0, 1]
    assert len(list((tmp_path / "out" / "runs").glob("*.json"))) == 2
    (summary,) = read_csv(tmp_path / "out" / "summary.csv")
    assert summary["mode"] == "lora" and int(summary["n_folds"]) == 2


def test_ablate_reproducible_and_report(tmp_path, synth_dir, capsys, monkeypatch):
    monkeypatch.delenv("NEUROTUNE_SEED", raising=False)
    for name in ("a", "b"):
        cfg = write_config(tmp_path / f"{name}.json", synth_dir, tmp_path / name)
        assert run(["ablate", "--config", cfg], capsys)[0] == 0
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert csvs == ["acc_vs_params.csv", "acc_vs_rank.csv", "dropout_delta.csv", "dropout_study.csv",
                    "layer_ablation.csv", "rank_sweep.csv"]
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(read_csv(tmp_path / "a" / "layer_ablation.csv")) == 2

    code, _, _ = run(["report", "--runs", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "rep"], capsys)
    assert code == 0
    for row in read_csv(tmp_path / "rep" / "ttest.csv"):
        assert 0.0 <= float(row["p"]) <= 1.0
    assert (tmp_path / "rep" / "acc_vs_rank.csv").exists()

    monkeypatch.setenv("NEUROTUNE_SEED", "99")
    code, _, err = run(["ablate", "--config", tmp_path / "a.json"], capsys)
    assert code == 2 and "fresh output_dir" in err


def test_config_errors(tmp_path, synth_dir, capsys):
    cfg = write_config(tmp_path / "c.json", synth_dir, tmp_path / "out")
    data = json.loads(cfg.read_text())
    data["harnes"] = data.pop("harness")
    cfg.write_text(json.dumps(data))
    code, _, err = run(["train", "--config", cfg], capsys)
    assert code == 2 and "harnes" in err
    data["harness"] = {"epochs": 0}
    del data["harnes"]
    cfg.write_text(json.dumps(data))
    code, _, err = run(["train", "--config", cfg], capsys)
    assert code == 2 and "harness.epochs" in err
    assert run(["train", "--config", tmp_path / "missing.json"], capsys)[0] == 2
    assert run(["report", "--runs", tmp_path, "--out", tmp_path / "r"], capsys)[0] == 2


def test_pretrain_checkpoint_feeds_experiment(tmp_path, synth_dir, capsys):
    ckpt = tmp_path / "ckpt"
    args = ["pretrain", "--model", "labram_like_reference", "--data", synth_dir, "--out", ckpt, "--epochs", 1,
            "--perturb", 0.1]
    for k, v in SMALL_LABRAM.items():
        args += ["--set", f"{k}={v}"]
    code, out, _ = run(args, capsys)
    assert code == 0 and (ckpt / "manifest.json").exists()
    cfg = write_config(tmp_path / "c.json", synth_dir, tmp_path / "out")
    data = json.loads(cfg.read_text())
    data["backbone_checkpoint"] = str(ckpt)
    data["harness"]["mode"] = "head_only"
    cfg.write_text(json.dumps(data))
    assert run(["train", "--config", cfg], capsys)[0] == 0


@pytest.mark.slow
def test_ablate_default_synthetic_rank_sweep(tmp_path, capsys):
    data = tmp_path / "synth"
    assert run(["synth", "--out", data], capsys)[0] == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "labram_like_reference", "model_overrides": SMALL_LABRAM, "data": str(data),
                               "harness": {"epochs": 1, "studies": ["rank_sweep"]}, "output_dir": str(tmp_path / "o")}))
    assert run(["ablate", "--config", cfg, "--workers", 1], capsys)[0] == 0
    assert len(list((tmp_path / "o" / "runs").glob("*.json"))) == 50
    rows = read_csv(tmp_path / "o" / "rank_sweep.csv")
    params = [int(r["trainable_params"]) for r in rows]
    assert [int(r["rank"]) for r in rows] == [1, 2, 4, 8, 16] and params == sorted(set(params))
