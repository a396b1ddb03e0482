import math

import pytest

from optoconvert.config import DEFAULTS, RunConfig, from_mapping, load_config, parse_detuning, parse_text
from optoconvert.errors import InvalidSpec

TWO_PI = 2 * math.pi


def test_defaults_resolve_to_angular_units():
    cfg = load_config(None)
    assert cfg.system.omega_m == pytest.approx(TWO_PI * 100e6)
    assert cfg.system.kappa == pytest.approx((TWO_PI * 1e6, TWO_PI * 1e6))
    assert cfg.system.Q_m == 1e4
    assert cfg.system.gamma_m == pytest.approx(TWO_PI * 100e6 / 1e4)
    assert cfg.eps == (1e7, 7e6)
    assert cfg.system.T == 2.0
    assert cfg.model == "full" and cfg.detuning_offset == 0.0


def test_file_parsing_comments_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# nominal point\n\nkappa1_over_2pi_hz = 2e6  # faster cavity\n"
                    "g2_eps_over_2pi_hz = 1e6\nmodel = rwa\ndetuning_mode = offset:3e7\n")
    cfg = load_config(path)
    assert cfg.system.kappa == pytest.approx((TWO_PI * 2e6, TWO_PI * 1e6))
    assert cfg.eps == pytest.approx((1e7, TWO_PI * 1e6))
    assert cfg.model == "rwa"
    assert cfg.detuning_offset == pytest.approx(TWO_PI * 3e7)


@pytest.mark.parametrize("text", ["bogus = 1\n", "kappa1_over_2pi_hz\n", "q_m = fast\n",
                                  "model = classical\n", "detuning_mode = off\n",
                                  "g1_eps_hz = 1\ng1_eps_over_2pi_hz = 1\n",
                                  "bath_temperature_k = -1\n"])
def test_bad_config_rejected(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(InvalidSpec):
        load_config(path)


def test_missing_file_is_invalid_spec(tmp_path):
    with pytest.raises(InvalidSpec, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_parse_detuning():
    assert parse_detuning("resonant") == 0.0
    assert parse_detuning(" offset:-1e6 ") == pytest.approx(-TWO_PI * 1e6)
    with pytest.raises(InvalidSpec):
        parse_detuning("offset:abc")


def test_parse_text_keeps_raw_strings():
    assert parse_text("q_m = 5e3\n") == {"q_m": "5e3"}


def test_resolved_dict_and_helpers():
    cfg = from_mapping({"q_m": "inf"})
    d = cfg.resolved()
    assert d["system"]["Q_m"] is None
    assert d["eps"] == [1e7, 7e6]
    assert cfg.with_kappa(3.0).system.kappa == (3.0, 3.0)
    assert cfg.with_temperature(0.5).system.T == 0.5
    assert set(cfg.raw) == set(DEFAULTS)


def test_runconfig_validation():
    base = load_config(None)
    with pytest.raises(InvalidSpec):
        RunConfig(base.system, eps=(1.0,))
    with pytest.raises(InvalidSpec):
        RunConfig(base.system, eps=(1.0, -1.0))
    with pytest.raises(InvalidSpec):
        RunConfig(base.system, model="exact")
