import json
import math

import pytest

from optoconvert.cli import build_parser, main
from optoconvert.experiments import CSV_COLUMNS, rows_from_csv


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("bath_temperature_k = 2\nkappa1_over_2pi_hz = 1e6\nkappa2_over_2pi_hz = 1e6\n")
    return str(path)


def test_steady_state(tmp_path, cfg_file):
    out = tmp_path / "ss.json"
    assert main(["steady-state", "--config", cfg_file, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["pulse_mode_1"]["eps"] == pytest.approx(1e7, rel=1e-9)
    assert doc["pulse_mode_2"]["swap_duration_s"] == pytest.approx(math.pi / (2 * 7e6))
    assert doc["pulse_mode_1"]["residual"] < 1e-9


def test_run_reports_fidelities(tmp_path, cfg_file):
    out = tmp_path / "run.json"
    assert main(["run", "--config", cfg_file, "--out", str(out), "--state", "coherent:1",
                 "--seed", "7"]) == 0
    doc = json.loads(out.read_text())
    assert doc["F"] > 0.5 and doc["engine"] == "gaussian"
    assert len(doc["diagnostics"]) == 3
    assert doc["config"]["system"]["T"] == 2.0


def test_run_ideal_model(tmp_path):
    out = tmp_path / "run.json"
    assert main(["run", "--model", "ideal", "--state", "cat:1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["F"] == pytest.approx(1.0, abs=1e-9) and doc["engine"] == "hybrid"


def test_sweep_csv_range_log(tmp_path, cfg_file):
    out = tmp_path / "k.csv"
    argv = ["sweep", "--config", cfg_file, "--out", str(out), "--var", "kappa",
            "--range", "1e5", "1e6", "3", "--scale", "log", "--states", "coherent:1;coherent:2"]
    assert main(argv) == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = rows_from_csv(text)
    assert len(rows) == 6
    assert rows[-1].sweep_value == pytest.approx(2 * math.pi * 1e6, rel=1e-8)
    # byte-identical on rerun, serial or parallel
    again = tmp_path / "k2.csv"
    assert main(argv[:4] + [str(again)] + argv[5:] + ["--workers", "2"]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_sweep_json_grid(tmp_path):
    out = tmp_path / "a.json"
    assert main(["sweep", "--var", "alpha", "--grid", "0.5,1", "--format", "json",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [r["state"] for r in doc["rows"]] == ["coherent:0.5", "coherent:1"]
    assert doc["config"]["model"] == "full"


def test_cool_reports_temperature(tmp_path, cfg_file):
    out = tmp_path / "cool.csv"
    assert main(["cool", "--config", cfg_file, "--out", str(out)]) == 0
    fields = dict(line.split(",") for line in out.read_text().splitlines())
    assert float(fields["bath_temperature_K"]) == 2.0
    assert 0 < float(fields["T_eff_K"]) < 0.1


def test_cool_matches_run(tmp_path):
    cool, run = tmp_path / "c.csv", tmp_path / "r.json"
    main(["cool", "--out", str(cool)])
    main(["run", "--out", str(run)])
    fields = dict(line.split(",") for line in cool.read_text().splitlines())
    assert float(fields["T_eff_K"]) == pytest.approx(json.loads(run.read_text())["T_eff_K"],
                                                     rel=1e-8)


def test_stdout_output(capsys):
    assert main(["cool", "--model", "ideal"]) == 0
    assert "T_eff_K,0" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["sweep", "--var", "kappa"],
    ["sweep", "--var", "kappa", "--grid", "2,1,3"],
    ["sweep", "--var", "alpha", "--grid", "1", "--states", ";"],
    ["run", "--state", "banana"],
    ["run", "--state", "cat:1", "--engine", "gaussian"],
])
def test_user_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_path_exit_2(tmp_path):
    assert main(["cool", "--config", str(tmp_path / "none.cfg")]) == 2


def test_parser_rejects_unknown_choices():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--model", "exact"])
