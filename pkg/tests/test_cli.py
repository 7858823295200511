from __future__ import annotations

import csv
import json

import pytest

from ieq_occupancy import __version__
from ieq_occupancy.cli import main
from ieq_occupancy.report import parse_text_report


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--preset", "paper", "--days", "4", "--seed", "5", "--out", str(out)]) == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_simulate_writes_three_zones(sim_dir):
    names = sorted(p.name for p in sim_dir.glob("*.csv"))
    assert names == ["conference.csv", "office_a.csv", "office_b.csv"]
    rows = read_rows(sim_dir / "office_a.csv")
    assert rows[0][0] == "timestamp" and rows[0][-1] == "occupied"
    assert len(rows) == 1 + 4 * 288
    conf = read_rows(sim_dir / "conference.csv")
    assert all(r[1] == "" for r in conf[1:])
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 5
    assert manifest["version"] == __version__


def test_simulate_is_deterministic(sim_dir, tmp_path):
    assert main(["simulate", "--preset", "paper", "--days", "4", "--seed", "5", "--out", str(tmp_path)]) == 0
    for name in ("office_a.csv", "office_b.csv", "conference.csv"):
        assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()


def test_simulate_rejects_zero_days(tmp_path, capsys):
    assert main(["simulate", "--preset", "paper", "--days", "0", "--out", str(tmp_path)]) == 1
    assert "--days" in capsys.readouterr().err


def test_simulate_from_config(tmp_path):
    cfg = tmp_path / "zones.json"
    cfg.write_text(json.dumps({"zones": [{"name": "den", "channels": ["co2_bg", "voc"]}]}))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--days", "1", "--interval", "0", "--out", str(out)]) == 0
    rows = read_rows(out / "den.csv")
    assert len(rows) == 1 + 1440
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["input_sha256"][0]["path"] == str(cfg)


def test_plot_data(tmp_path):
    src = tmp_path / "zone.csv"
    lines = ["timestamp,co2_inhale_ppm,co2_bg_ppm,voc_ppb,light_lux,temp_c,rh_pct,occupied"]
    lines += [f"2024-03-01T00:{m:02d}:00Z,,{500 + m},{100 + m},,,,{m % 2}" for m in range(10)]
    src.write_text("\n".join(lines) + "\n")
    out = tmp_path / "long.csv"
    assert main(["plot-data", "--data", str(src), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["timestamp", "channel", "value", "occupied"]
    assert len(rows) == 1 + 20
    assert rows[1] == ["2024-03-01T00:00:00Z", "co2_bg", "500.000", "0"]
    assert rows[2][1] == "voc"
    assert main(["plot-data", "--data", str(src), "--channels", "pm25", "--out", str(out)]) == 1


def test_malformed_csv_names_row_and_column(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("timestamp,co2_inhale_ppm,co2_bg_ppm,voc_ppb,light_lux,temp_c,rh_pct,occupied\n"
                   "2024-03-01T00:00:00Z,,500,abc,,,,0\n")
    assert main(["plot-data", "--data", str(src), "--out", str(tmp_path / "x.csv")]) == 1
    err = capsys.readouterr().err
    assert "row 2" in err and "voc_ppb" in err


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["plot-data", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_train_and_predict(sim_dir, tmp_path):
    model = tmp_path / "models" / "gnb.json"
    assert main(["train", "--data", str(sim_dir / "office_a.csv"), "--model", "GNB", "--out", str(model)]) == 0
    doc = json.loads(model.read_text())
    assert doc["kind"] == "GNB" and doc["parameters"]["feature_set"] == ["co2_inhale", "voc"]
    assert (model.parent / "manifest.json").exists()
    pred = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(sim_dir / "office_a.csv"), "--out", str(pred)]) == 0
    rows = read_rows(pred)
    assert rows[0] == ["timestamp", "predicted", "occupied"]
    assert len(rows) > 1000
    acc = sum(r[1] == r[2] for r in rows[1:]) / (len(rows) - 1)
    assert acc > 0.9
    # the conference room has no inhale probe
    assert main(["predict", "--model", str(model), "--data", str(sim_dir / "conference.csv"),
                 "--out", str(pred)]) == 1


def test_train_with_params_and_channel_list(sim_dir, tmp_path):
    model = tmp_path / "svm.json"
    assert main(["train", "--data", str(sim_dir / "office_b.csv"), "--model", "SVM", "--features",
                 "co2_bg,voc", "--params", '{"C": 10}', "--out", str(model)]) == 0
    assert json.loads(model.read_text())["parameters"]["feature_set"] == ["co2_bg", "voc"]
    assert main(["train", "--data", str(sim_dir / "office_b.csv"), "--model", "SVM",
                 "--params", "{C:", "--out", str(model)]) == 1
    assert main(["train", "--data", str(sim_dir / "office_b.csv"), "--model", "KNN",
                 "--params", '{"kk": 3}', "--out", str(model)]) == 1


def test_experiment_local_and_global(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"models": ["GNB", "KNN"], "feature_sets": ["CO2_inhale", "CO2+VOC"],
                               "k_folds": 3}))
    data = [str(sim_dir / f"{z}.csv") for z in ("office_a", "office_b", "conference")]
    local = tmp_path / "local"
    assert main(["experiment", "--mode", "local", "--data", *data, "--config", str(cfg), "--out", str(local)]) == 0
    shown = capsys.readouterr().out
    assert shown.startswith("Local model accuracy (%); each cell lists office_a / office_b / conference")
    assert "[detail]" not in shown
    doc = json.loads((local / "report.json").read_text())
    assert parse_text_report((local / "report.txt").read_text()) == doc
    cell = next(c for c in doc["local"] if c["zone"] == "conference" and c["feature_set"] == "CO2_inhale")
    assert cell["mean_acc"] is None

    glob = tmp_path / "global"
    assert main(["experiment", "--mode", "global", "--data", *data, "--config", str(cfg),
                 "--train-zone", "office_a", "--local-report", str(local / "report.json"),
                 "--out", str(glob)]) == 0
    gdoc = json.loads((glob / "report.json").read_text())
    assert {g["test_zone"] for g in gdoc["global"]} == {"office_b", "conference"}
    assert gdoc["local"] == doc["local"]
    manifest = json.loads((glob / "manifest.json").read_text())
    assert len(manifest["input_sha256"]) == 5

    assert main(["experiment", "--mode", "global", "--data", *data, "--out", str(glob)]) == 1
    assert main(["experiment", "--mode", "global", "--data", *data, "--train-zone", "attic",
                 "--out", str(glob)]) == 1
