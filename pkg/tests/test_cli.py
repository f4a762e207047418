import json

import numpy as np
import pytest
from click.testing import CliRunner

from flowcast.cli import main
from flowcast.config import load_config
from flowcast.errors import ParseError


@pytest.fixture()
def runner():
    return CliRunner()


CONFIG_YAML = """\
# small synthetic setup for CLI tests
experiment:
  observe_steps: 4
  chunk_lengths_s: [0.6]
  subspace_size: 120
  kept_dim: 30
  peak_window_s: 0.15
clustering:
  max_groups: 5
  distance_threshold: 400.0
  signature_chunk_length_s: 0.6
synth:
  n_groups: 2
  flows_per_group: 4
  duration_s: 8.0
hyper:
  source: fixed
  fixed: {lambda_t: 0.05, lambda_o: 1.0e-3, state_bw_scale: 1.0, obs_bw_scale: 1.0, kappa: 1.0e-3}
seed: 7
"""


@pytest.fixture()
def workspace(tmp_path, runner):
    cfg = tmp_path / "config.yaml"
    cfg.write_text(CONFIG_YAML)
    out = tmp_path / "out"
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out), "synth"])
    assert result.exit_code == 0, result.output
    return cfg, out


def test_config_hash_echoed(workspace, runner):
    cfg, out = workspace
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out), "synth"])
    assert "config_hash=" in result.output


def test_synth_writes_store_and_truth(workspace):
    _, out = workspace
    assert (out / "traces.csv").exists()
    truth = (out / "truth_groups.csv").read_text().splitlines()
    assert truth[0] == "flow_id,group_id"
    assert len(truth) == 1 + 8  # 2 groups x 4 flows


def test_synth_manifest(workspace):
    _, out = workspace
    manifest = json.loads((out / "manifest_synth.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 7
    assert len(manifest["config_hash"]) == 12


def test_ingest_binned_roundtrip(workspace, runner, tmp_path):
    cfg, out = workspace
    out2 = tmp_path / "out2"
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out2),
                                  "ingest", str(out / "traces.csv"),
                                  "--format", "csv_binned"])
    assert result.exit_code == 0, result.output
    assert "flows=8" in result.output
    assert "duration_buckets" in result.output
    assert (out2 / "traces.csv").exists()


def test_ingest_events(runner, tmp_path):
    events = tmp_path / "events.csv"
    rows = ["src,src_port,dst,dst_port,proto,ts_s,bytes"]
    for i in range(200):
        rows.append(f"10.0.0.1,5001,10.0.0.2,80,TCP,{i*0.01:.2f},500")
    events.write_text("\n".join(rows) + "\n")
    out = tmp_path / "out"
    result = runner.invoke(main, ["--out", str(out), "ingest", str(events)])
    assert result.exit_code == 0, result.output
    assert "flows=1" in result.output


def test_ingest_malformed_row_exit_2(runner, tmp_path):
    events = tmp_path / "events.csv"
    events.write_text("src,src_port,dst,dst_port,proto,ts_s,bytes\n"
                      "10.0.0.1,5001,10.0.0.2,80,TCP,zero,500\n")
    out = tmp_path / "out"
    result = runner.invoke(main, ["--out", str(out), "ingest", str(events)])
    assert result.exit_code == 2
    assert "line 2" in result.output


def test_ingest_empty_file(runner, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "out"
    result = runner.invoke(main, ["--out", str(out), "ingest", str(empty)])
    assert result.exit_code == 0
    assert "flows=0" in result.output


def test_ingest_empty_directory(runner, tmp_path):
    src = tmp_path / "input"
    src.mkdir()
    out = tmp_path / "out"
    result = runner.invoke(main, ["--out", str(out), "ingest", str(src)])
    assert result.exit_code == 0
    assert "flows=0" in result.output


def test_ingest_directory_of_files(runner, tmp_path):
    src = tmp_path / "input"
    src.mkdir()
    header = "src,src_port,dst,dst_port,proto,ts_s,bytes\n"
    (src / "a.csv").write_text(header + "10.0.0.1,5001,10.0.0.2,80,TCP,0.0,100\n")
    (src / "b.csv").write_text(header + "10.0.0.3,5002,10.0.0.2,80,UDP,0.0,100\n")
    out = tmp_path / "out"
    result = runner.invoke(main, ["--out", str(out), "ingest", str(src)])
    assert result.exit_code == 0
    assert "flows=2" in result.output


def test_cluster_recovers_groups(workspace, runner):
    cfg, out = workspace
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                  "cluster", str(out / "traces.csv")])
    assert result.exit_code == 0, result.output
    assert "groups=2" in result.output
    lines = (out / "groups.csv").read_text().splitlines()
    assert lines[0] == "flow_id,group_id,distance_to_centroid"
    got = {}
    for line in lines[1:]:
        fid, gid, _ = line.split(",")
        got.setdefault(gid, []).append(int(fid))
    # compare against the generation truth
    truth_lines = (out / "truth_groups.csv").read_text().splitlines()[1:]
    truth = {}
    for line in truth_lines:
        fid, gid = line.split(",")
        truth.setdefault(gid, set()).add(int(fid))
    got_sets = sorted(sorted(v) for v in got.values())
    truth_sets = sorted(sorted(v) for v in truth.values())
    assert got_sets == truth_sets


def test_learn_and_predict(workspace, runner):
    cfg, out = workspace
    runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                         "cluster", str(out / "traces.csv")])
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                  "learn", str(out / "traces.csv"),
                                  "--groups", str(out / "groups.csv"),
                                  "--group-id", "1"])
    assert result.exit_code == 0, result.output
    model_path = out / "model_group1.npz"
    assert model_path.exists()

    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                  "predict", str(out / "traces.csv"),
                                  "--model", str(model_path), "--flow-id", "0"])
    assert result.exit_code == 0, result.output
    assert "forecast_steps=20" in result.output
    lines = (out / "prediction_flow0.csv").read_text().splitlines()
    assert lines[0] == "t_s,actual_kbit,predicted_kbit,variance"
    assert len(lines) == 1 + 100  # 20 steps x 0.05 s at T_S = 0.01


def test_predict_missing_model_exit_3(workspace, runner):
    cfg, out = workspace
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                  "predict", str(out / "traces.csv"),
                                  "--model", str(out / "missing.npz"),
                                  "--flow-id", "0"])
    assert result.exit_code == 3


def test_numerical_failure_exit_4(workspace, runner, monkeypatch):
    cfg, out = workspace
    runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                         "cluster", str(out / "traces.csv")])
    import flowcast.cli as cli_mod
    from flowcast.errors import NumericalFailure

    def broken_learn(*args, **kwargs):
        raise NumericalFailure("innovation_gain")

    monkeypatch.setattr(cli_mod.fkkf, "learn", broken_learn)
    result = runner.invoke(main, ["--config", str(cfg), "--out", str(out),
                                  "learn", str(out / "traces.csv"),
                                  "--groups", str(out / "groups.csv"),
                                  "--group-id", "1"])
    assert result.exit_code == 4
    assert "innovation_gain" in result.output


def test_bad_config_exit_2(runner, tmp_path):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("unknown_section:\n  foo: 1\n")
    result = runner.invoke(main, ["--config", str(cfg), "--out",
                                  str(tmp_path / "out"), "synth"])
    assert result.exit_code == 2


class TestConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.experiment.predict_horizon_s == 1.0
        assert cfg.hyper.source == "fixed"

    def test_hash_stable_and_sensitive(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("seed: 1\n")
        a = load_config(p).config_hash()
        b = load_config(p).config_hash()
        assert a == b
        p.write_text("seed: 2\n")
        assert load_config(p).config_hash() != a

    def test_rejects_unknown_keys(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("experiment:\n  no_such_key: 3\n")
        with pytest.raises(ParseError):
            load_config(p)

    def test_grid_section_parsed(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("hyper:\n  source: grid\n  grid:\n    lambda_t: [0.1]\n"
                     "    lambda_o: [0.001]\n    state_bw_scale: [1.0]\n"
                     "    obs_bw_scale: [1.0]\n    kappa: [0.001]\n")
        cfg = load_config(p)
        assert cfg.hyper.source == "grid"
        assert cfg.hyper.grid.lambda_t == (0.1,)

    def test_comments_allowed(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("# a comment\nseed: 3  # trailing comment\n")
        assert load_config(p).seed == 3
