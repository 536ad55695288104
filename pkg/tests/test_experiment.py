import json

import numpy as np
import pytest
import yaml

from labelmia import ConfigError, FormatError
from labelmia.experiment import (defense_combinations, load_config, parse_config, run_defense_grid,
                                 run_experiment, run_relaxation_matrix, stage_seed)
from labelmia.experiment.cli import main
from labelmia.experiment.runner import DEFENSE_FLAGS, _defense_overrides

TINY = """\
name: tiny
base_seed: 3
repetitions: 1
target:
  dataset: {name: sbm-tiny, synthetic: {num_nodes: 160, feature_dim: 16, intra_edge_prob: 0.06, inter_edge_prob: 0.01, feature_signal: 1.0}}
  gnn: {preset: high, gnn_type: GCN, overrides: {epochs: 15, num_layers: 2, hidden_dim: 16}}
rate_set: [1.0]
attack: {epochs: 8, hidden_layer_sizes: [16]}
"""


def tiny(tmp_path, extra="", name="c.yaml"):
    path = tmp_path / name
    path.write_text(TINY + extra + f"output: {{dir: {tmp_path / 'out'}}}\n")
    return path


@pytest.mark.parametrize("doc,fragment", [
    ({}, "target"),
    ({"target": {"dataset": {"synthetic": {}}}, "repetitions": 0}, "repetitions"),
    ({"target": {"dataset": {"synthetic": {}, "bundle": "x"}}}, "exactly one"),
    ({"target": {"dataset": {"synthetic": {}}}, "bogus": 1}, "bogus"),
    ({"target": {"dataset": {"synthetic": {}}, "gnn": {"preset": "mid"}}}, "preset"),
    ({"target": {"dataset": {"synthetic": {}}, "gnn": {"overrides": {"depth": 3}}}}, "depth"),
    ({"target": {"dataset": {"synthetic": {}}}, "rate_set": [0.0]}, "rate_set"),
    ({"target": {"dataset": {"synthetic": {}}}, "baselines": ["hop7"]}, "baselines"),
    ({"target": {"dataset": {"synthetic": {}}}, "sampling": {"method": "stratified"}}, "sampling"),
    ({"target": {"dataset": {"synthetic": {}}}, "attack": {"selection": "best"}}, "selection"),
    ({"target": {"dataset": {"synthetic": {}}}, "relaxation": {"axis": "gnn_type", "entries": ["GCN"]}},
     "relaxation"),
])
def test_config_validation(doc, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert fragment in str(info.value)


def test_config_defaults_and_fingerprint(tmp_path):
    cfg = load_config(tiny(tmp_path))
    assert cfg.shadow_dataset == cfg.target_dataset and cfg.shadow_model == cfg.target_model
    assert cfg.sampling_method == "balanced" and cfg.fpr_target == 0.1
    assert cfg.fingerprint() == load_config(tiny(tmp_path)).fingerprint()
    assert cfg.fingerprint() != cfg.with_overrides(base_seed=4).fingerprint()
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.yaml")
    (tmp_path / "bad.yaml").write_text("target: [\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_stage_seeds_distinct():
    seeds = {stage_seed(5, s) for s in ("split_target", "split_shadow", "train_target", "train_shadow",
                                        "extract_shadow", "extract_target", "attack_holdout", "attack_model")}
    assert len(seeds) == 8
    assert stage_seed(5, "train_target") == stage_seed(5, "train_target") != stage_seed(6, "train_target")


def test_run_experiment_smoke_and_echo(tmp_path):
    path = tiny(tmp_path, "baselines: [hop0]\n")
    cfg = load_config(path)
    report = run_experiment(cfg)
    assert len(report.repetitions) == 1 and not report.partial
    rep = report.repetitions[0]
    assert rep.seed == 3
    assert rep.accuracies["target_train_acc"] - rep.accuracies["target_test_acc"] > 0
    assert rep.queries["target_posterior_queries"] == 0
    assert rep.queries["target_label_queries"] > 0
    assert "hop0" in rep.baselines
    out = tmp_path / "out"
    assert (out / "config.yaml").read_bytes() == path.read_bytes()
    header = (out / "aggregate.csv").read_text().splitlines()[0]
    assert header == "dataset,gnn,test_acc,train_acc,acc,pre,rec,auc,f1,tpr_at_fpr"
    assert (out / "baselines.csv").read_text().splitlines()[1].startswith("label_only,")


def test_run_is_deterministic(tmp_path):
    cfg = load_config(tiny(tmp_path))
    first = (run_experiment(cfg), (tmp_path / "out" / "aggregate.csv").read_bytes())
    second = (run_experiment(cfg), (tmp_path / "out" / "aggregate.csv").read_bytes())
    assert first[1] == second[1]
    assert first[0].aggregate == second[0].aggregate


def test_failed_stage_is_tagged(tmp_path):
    # asks for more nodes than the tiny graph has
    cfg = load_config(tiny(tmp_path, "sampling: {method: random, sizes: [100, 100, 100, 100]}\n"))
    report = run_experiment(cfg)
    rep = report.repetitions[0]
    assert rep.status == "failed" and rep.stage == "split"
    assert report.aggregate is None


def test_defense_combinations_order():
    rows = defense_combinations()
    assert len(rows) == 16 and len(set(rows)) == 16
    assert rows[0] == (False,) * 4 and rows[-1] == (True,) * 4
    assert [sum(r) for r in rows] == sorted(sum(r) for r in rows)
    assert DEFENSE_FLAGS == ("normalization", "dropout", "regularization", "jumping_knowledge")
    assert rows[1:5] == [tuple(i == j for j in range(4)) for i in range(4)]
    for r in rows:
        assert _defense_overrides(r)["weight_decay"] == (0.5 if r[2] else 0.0)


def test_defense_grid_rows(tmp_path):
    cfg = load_config(tiny(tmp_path))
    rows = run_defense_grid(cfg)
    assert [r["row"] for r in rows] == list(range(16))
    assert all(r["status"] == "ok" for r in rows)
    lines = (tmp_path / "out" / "defense_grid.csv").read_text().splitlines()
    assert len(lines) == 17
    assert lines[1].startswith("0,0,0,0,0,") and lines[16].startswith("15,1,1,1,1,")


def test_relaxation_matrix_layout_and_diagonal(tmp_path):
    cfg = load_config(tiny(tmp_path, "relaxation: {axis: gnn_type, entries: [GCN, GraphSAGE]}\n"))
    labels, matrix = run_relaxation_matrix(cfg)
    assert labels == ["GCN", "GraphSAGE"] and np.array(matrix).shape == (2, 2)
    lines = (tmp_path / "out" / "relaxation_matrix.csv").read_text().splitlines()
    assert lines[0] == "target\\shadow,GCN,GraphSAGE"
    assert [ln.split(",")[0] for ln in lines[1:]] == labels
    sage = load_config(tiny(tmp_path, name="s.yaml").parent / "s.yaml")
    sage = sage.with_overrides(target_model=type(sage.target_model)("high", "GraphSAGE",
                                                                    sage.target_model.overrides),
                               shadow_model=type(sage.target_model)("high", "GraphSAGE",
                                                                    sage.target_model.overrides))
    assert run_experiment(sage, write=False).aggregate["mean"]["accuracy"] == matrix[1][1]


def test_cli_run_repetitions(tmp_path, capsys):
    path = tiny(tmp_path)
    out = tmp_path / "cli"
    assert main(["run", "--config", str(path), "--repetitions", "3", "--out", str(out)]) == 0
    lines = (out / "reports.jsonl").read_text().splitlines()
    assert len(lines) == 3 and [json.loads(x)["repetition"] for x in lines] == [0, 1, 2]
    assert len((out / "aggregate.csv").read_text().splitlines()) == 2
    assert json.loads((out / "aggregate.json").read_text())["n_succeeded"] == 3
    assert capsys.readouterr().out.splitlines()[1].startswith("sbm-tiny,GCN,")


def test_cli_gen_synthetic_then_run(tmp_path):
    bundle = tmp_path / "bundle"
    assert main(["gen-synthetic", "--out", str(bundle), "--num-nodes", "160", "--feature-dim", "16",
                 "--intra", "0.06", "--inter", "0.01", "--seed", "2"]) == 0
    assert (bundle / "manifest.json").exists()
    doc = yaml.safe_load(TINY)
    doc["target"]["dataset"] = {"name": "gen", "bundle": "bundle"}
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(doc))
    assert main(["run", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "o"),
                 "--format", "json-lines"]) == 0
    assert (tmp_path / "o" / "aggregate.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    (tmp_path / "missing.yaml").write_text("target: {dataset: {bundle: nowhere}}\n")
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 3
    assert "nowhere" in capsys.readouterr().err
    (tmp_path / "zero.yaml").write_text("target: {dataset: {synthetic: {}}}\nrepetitions: 0\n")
    assert main(["run", "--config", str(tmp_path / "zero.yaml")]) == 2
    assert main(["run", "--config", str(tmp_path / "absent.yaml")]) == 2
    assert main(["evaluate", "--scores", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 3


def test_cli_staged_pipeline(tmp_path):
    b = str(tmp_path / "b")
    o = str(tmp_path)
    assert main(["gen-synthetic", "--out", b, "--num-nodes", "160", "--feature-dim", "16", "--seed", "1",
                 "--intra", "0.06", "--inter", "0.01"]) == 0
    assert main(["split", "--bundle", b, "--out", o, "--seed", "1"]) == 0
    split = str(tmp_path / "split.json")
    for role in ("target", "shadow"):
        assert main(["train", "--bundle", b, "--split", split, "--role", role, "--epochs", "10",
                     "--out", o]) == 0
        assert main(["extract-features", "--bundle", b, "--split", split, "--role", role,
                     "--checkpoint", str(tmp_path / f"{role}_model"), "--rate-set", "1.0",
                     "--out", o]) == 0
    assert main(["attack", "--train-table", str(tmp_path / "shadow_attack.csv"),
                 "--eval-table", str(tmp_path / "target_attack.csv"), "--epochs", "5", "--out", o]) == 0
    assert main(["evaluate", "--scores", str(tmp_path / "scores.csv"), "--out", o]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert 0.0 <= metrics["auc"] <= 1.0


def test_missing_bundle_raises_before_compute(tmp_path):
    cfg = parse_config({"target": {"dataset": {"bundle": "nope"}}}, base_dir=tmp_path)
    with pytest.raises(FormatError) as info:
        run_experiment(cfg, write=False)
    assert "nope" in str(info.value)
