import json
import math

import pytest

from stochlp.cli import RunConfig, load_config, main


def run_cli(args, capsys):
    code = main(args)
    return code, capsys.readouterr().out


def test_symbol_check_heat(tmp_path, capsys):
    code, _ = run_cli(["symbol-check", "--symbol", "heat", "--out", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    ell = next(r for r in rep["reports"] if r["name"].startswith("ellipticity"))
    assert ell["passed"] and abs(ell["quantities"]["inf_ratio"] - 1) <= 1e-12
    assert (tmp_path / "manifest.json").exists()


def test_json_flag_prints_report(tmp_path, capsys):
    code, out = run_cli(["symbol-check", "--json", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads(out)["passed"] is True


def test_unknown_command_error_json(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code != 0
    assert "error" in json.loads(capsys.readouterr().out)


def test_invalid_config_error_json(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    with pytest.raises(SystemExit) as exc:
        main(["spde", "--config", str(cfg)])
    assert exc.value.code != 0
    assert json.loads(capsys.readouterr().out)["error"]["type"] == "ValueError"


def test_ini_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nsymbol = frac:1\nseed = 3\n[grid]\nn = 32\np_list = 2, 4\n")
    cfg = RunConfig.from_mapping(dict(load_config(ini), command="spde"))
    assert cfg.symbol == "frac:1" and cfg.seed == 3 and cfg.n == 32 and cfg.p_list == [2, 4]


def test_spde_zero_process_excluded(tmp_path, capsys):
    ini = tmp_path / "zero.ini"
    ini.write_text("[run]\nprocess = zero\nM_paths = 64\nK_modes = 2\nn = 32\nn_t = 16\n")
    run_cli(["spde", "--config", str(ini), "--out", str(tmp_path / "o")], capsys)
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    ratios = [r for r in rep["reports"] if r["name"].startswith("lp_ratio")]
    assert ratios and all(any("excluded: zero input" in n for n in r["notes"]) for r in ratios)


def test_hormander_frac1_default(tmp_path, capsys):
    code, _ = run_cli(["hormander", "--symbol", "frac:1", "--out", str(tmp_path)], capsys)
    rep = json.loads((tmp_path / "report.json").read_text())
    h = next(r for r in rep["reports"] if r["name"].startswith("hormander"))
    assert code == 0 and h["passed"] and math.isfinite(h["quantities"]["sup"])
    assert (tmp_path / "tables").is_dir()


def test_manifest_rerun_identical(tmp_path, capsys):
    ini = tmp_path / "r.ini"
    ini.write_text("[run]\nM_paths = 64\nK_modes = 2\nn = 32\nn_t = 16\niso_members = 2\np_list = 2\n")
    run_cli(["spde", "--config", str(ini), "--out", str(tmp_path / "a")], capsys)
    run_cli(["spde", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b"),
             "--threads", "3"], capsys)
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
