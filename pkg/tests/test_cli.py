import csv
import json

import numpy as np
import pytest

from gaitstab import cli
from gaitstab.config import ConfigParseError, RunConfig, dump_config, parse_config, parse_methods
from gaitstab.sim import load_episode

SMALL = """
# tiny cohort for quick runs
name = tiny
subjects = 2
window = 50
sim.duration = 40
sim.fall_risk_count = 2
train.epochs = 1
train.batch_size = 64
net.hidden = 4
"""


@pytest.fixture()
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def _schema(path):
    return {(r["record"], tuple(sorted(r))) for r in map(json.loads, path.read_text().splitlines())}


def test_empty_config_is_benchmark():
    assert parse_config("") == RunConfig()


def test_parse_values():
    cfg = parse_config(SMALL + "sim.com_obs_noise = 0.1, 0.3\nnoiseless = yes\nmethods = rule svm\n")
    assert cfg.name == "tiny" and cfg.subjects == 2 and cfg.noiseless is True
    assert cfg.sim.duration == 40.0 and isinstance(cfg.sim.duration, float)
    assert cfg.sim.com_obs_noise == (0.1, 0.3)
    assert cfg.net_overrides == (("hidden", 4),)
    assert cfg.methods == ("rule", "svm")


def test_dump_parse_roundtrip():
    cfg = parse_config(SMALL)
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", ["bogus = 1", "sim.nope = 1", "foo.bar = 1", "subjects = many",
                                  "noiseless = maybe", "methods = rule,knn", "no equals sign"])
def test_parse_errors(text):
    with pytest.raises(ConfigParseError):
        parse_config(text)


def test_parse_methods():
    assert parse_methods("all") == ("rule", "svm", "lstm", "fc-lstm")
    assert parse_methods("fc-lstm,rule") == ("rule", "fc-lstm")


def test_simulate_writes_episodes_deterministically(tmp_path, small_cfg):
    out1, out2, out3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["simulate", "--config", str(small_cfg), "--out", str(out1)]) == 0
    assert cli.main(["simulate", "--config", str(small_cfg), "--out", str(out2)]) == 0
    assert cli.main(["simulate", "--config", str(small_cfg), "--out", str(out3), "--seed", "5"]) == 0
    files = sorted(p.name for p in out1.iterdir())
    assert files == ["S1.episode.jsonl", "S2.episode.jsonl"]
    for name in files:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        assert (out1 / name).read_bytes() != (out3 / name).read_bytes()
        assert _schema(out1 / name) == _schema(out3 / name)


def test_default_cohort_size(tmp_path):
    cfg = RunConfig().replace(sim=RunConfig().sim.replace(duration=80.0, fall_risk_count=1))
    assert len(cli.cmd_simulate(cfg, tmp_path)) == 5


def test_track_outputs(tmp_path, small_cfg):
    eps, data = tmp_path / "eps", tmp_path / "data"
    cli.main(["simulate", "--config", str(small_cfg), "--out", str(eps)])
    assert cli.main(["track", str(eps), "--config", str(small_cfg), "--out", str(data)]) == 0
    ep = load_episode(eps / "S1.episode.jsonl")
    with open(data / "S1.dataset.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(ep.t)
    fu = np.mean([int(r["from_update"]) for r in rows])
    assert abs(fu - 30 / 40 * 0.8) <= 0.05 * 0.6


def test_track_noiseless_labels_match_ground_truth(tmp_path, small_cfg):
    small_cfg.write_text(SMALL + "noiseless = true\n")
    eps, data = tmp_path / "eps", tmp_path / "data"
    cli.main(["simulate", "--config", str(small_cfg), "--out", str(eps)])
    cli.main(["track", str(eps), "--config", str(small_cfg), "--out", str(data)])
    ep = load_episode(eps / "S2.episode.jsonl")
    with open(data / "S2.dataset.csv") as fh:
        labels = [int(r["label"]) for r in csv.DictReader(fh)]
    assert labels == ep.labels.tolist()


def test_track_missing_detections(tmp_path, small_cfg, capsys):
    small_cfg.write_text(SMALL + "sim.detection_dropout_prob = 1.0\n")
    eps = tmp_path / "eps"
    cli.main(["simulate", "--config", str(small_cfg), "--out", str(eps)])
    assert cli.main(["track", str(eps), "--config", str(small_cfg), "--out", str(tmp_path / "d")]) == 1
    assert "S1" in capsys.readouterr().err


def test_experiment_rule_noiseless(tmp_path, small_cfg, capsys):
    small_cfg.write_text(SMALL + "noiseless = true\n")
    code = cli.main(["experiment", "--simulate", "--config", str(small_cfg), "--methods", "rule",
                     "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "tiny" / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["method"] for r in rows} == {"rule"}
    assert all(float(r["accuracy"]) == 1.0 for r in rows)
    assert "ACCURACY" in capsys.readouterr().out


def test_experiment_from_episodes_and_roc_export(tmp_path, small_cfg):
    eps = tmp_path / "eps"
    cli.main(["simulate", "--config", str(small_cfg), "--out", str(eps)])
    assert cli.main(["experiment", "--data", str(eps), "--config", str(small_cfg), "--methods", "all",
                     "--out", str(tmp_path / "runs"), "--name", "fromdata"]) == 0
    run = tmp_path / "runs" / "fromdata"
    with open(run / "report.csv") as fh:
        methods = [r["method"] for r in csv.DictReader(fh)]
    assert sorted(set(methods)) == ["fc-lstm", "lstm", "rule", "svm"]
    before = (run / "svm" / "S1" / "roc.csv").read_bytes()
    (run / "svm" / "S1" / "roc.csv").unlink()
    assert cli.main(["roc-export", str(run)]) == 0
    assert (run / "svm" / "S1" / "roc.csv").read_bytes() == before
    assert not (run / "rule" / "S1" / "roc.csv").exists()


def test_experiment_needs_a_data_source(small_cfg):
    with pytest.raises(SystemExit):
        cli.main(["experiment", "--config", str(small_cfg)])


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("sim.wobble = 3\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "wobble" in capsys.readouterr().err


def test_failed_experiment_leaves_no_report(tmp_path, small_cfg):
    small_cfg.write_text(SMALL + "sim.duration = 10\n")  # windows do not fit
    assert cli.main(["experiment", "--simulate", "--config", str(small_cfg), "--out", str(tmp_path)]) == 1
    assert not (tmp_path / "tiny" / "report.csv").exists()
