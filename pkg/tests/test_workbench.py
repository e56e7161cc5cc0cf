import csv
import json
import subprocess
import sys

import pytest

from extsnyder.workbench import (SPECTRUM_HEADER, SWEEP_HEADER, ConfigError, config_from_dict,
                                 load_config, main)

MINIMAL = {"model": "covariant_extended", "realization": "weyl", "d": 2, "lambda": 0.1,
           "beta": 1.0, "tensor_mass": 1.0, "omega": 1.0, "n_max": 4}


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def run(tmp_path, command, cfg, *extra):
    out = tmp_path / f"{command}.out"
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    return code, (out.read_text() if out.exists() else None)


def rows(text):
    return list(csv.reader(text.splitlines()))


# --- configuration ---------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = config_from_dict(MINIMAL)
    assert cfg.interior_margin == 4 and cfg.levels == 10
    assert cfg.omega_tensor == cfg.omega
    assert cfg.lambda_sweep is None and cfg.tolerances == {}


def test_realization_defaults_to_model_choice():
    cfg = config_from_dict({k: v for k, v in MINIMAL.items() if k != "realization"})
    assert cfg.realization == "weyl"


def test_d_one_rejected():
    with pytest.raises(ConfigError, match="d"):
        config_from_dict({**MINIMAL, "d": 1})


def test_unknown_key_suggestion():
    bad = dict(MINIMAL)
    bad["Lambda"] = bad.pop("lambda")
    with pytest.raises(ConfigError, match="'lambda'"):
        config_from_dict(bad)
    with pytest.raises(ConfigError, match="'omega_tensor'"):
        config_from_dict({**MINIMAL, "omega_tensr": 2.0})
    with pytest.raises(ConfigError, match="'slope_window'"):
        config_from_dict({**MINIMAL, "tolerances": {"slope_windw": 0.1}})


@pytest.mark.parametrize("change", [{"n_max": 2.5}, {"omega": -1}, {"beta": "1"},
                                    {"levels": 0}, {"lambda_sweep": []},
                                    {"realization": "classical"}, {"model": "snyder"},
                                    {"sweep_quantity": "entropy"}])
def test_constraint_violations(change):
    with pytest.raises(ConfigError):
        config_from_dict({**MINIMAL, **change})


def test_missing_required_key():
    with pytest.raises(ConfigError, match="n_max"):
        config_from_dict({k: v for k, v in MINIMAL.items() if k != "n_max"})


def test_parse_error_reports_position(tmp_path, capsys):
    path = write(tmp_path, '{\n  "model": "covariant_extended",\n  "d": 2,,\n}')
    with pytest.raises(ConfigError, match="line 3, column 10"):
        load_config(path)
    assert main(["spectrum", "--config", path]) == 1
    assert "line 3" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 1


# --- verify-algebra ------------------------------------------------------------

def test_verify_algebra_moyal_exact(tmp_path):
    cfg = {**MINIMAL, "model": "moyal_dynamic", "realization": "moyal", "lambda": 0.4,
           "interior_margin": 2}
    code, text = run(tmp_path, "verify-algebra", cfg)
    assert code == 0
    report = json.loads(text)
    assert report["pass"] and all(r["expected"] == "exact" for r in report["relations"])


def test_verify_algebra_weyl_orders(tmp_path):
    cfg = {**MINIMAL, "interior_margin": 2, "lambda_sweep": [0.05, 0.1, 0.2]}
    code, text = run(tmp_path, "verify-algebra", cfg)
    assert code == 0
    fitted = [r["fitted_order"] for r in json.loads(text)["relations"] if r["fitted_order"] is not None]
    assert fitted and min(fitted) >= 1.8


def test_verify_algebra_negative_control(tmp_path):
    cfg = {**MINIMAL, "interior_margin": 2, "lambda_sweep": [0.05, 0.1, 0.2]}
    code, _ = run(tmp_path, "verify-algebra", cfg, "--corrupt-realization")
    assert code == 2


# --- spectrum ------------------------------------------------------------------

def test_spectrum_covariant_rows(tmp_path):
    cfg = {**MINIMAL, "tensor_mass": 1.3, "omega": 1.1, "n_max": 5, "levels": 3}
    code, text = run(tmp_path, "spectrum", cfg)
    assert code == 0
    table = rows(text)
    assert table[0] == SPECTRUM_HEADER
    body = [dict(zip(SPECTRUM_HEADER, r)) for r in table[1:]]
    assert len(body) == 1 + 3 + 6
    target = next(r for r in body if json.loads(r["occupations"]) == {"v1": 0, "v2": 0, "t12": 1})
    assert float(target["de_closed"]) == pytest.approx(0.01 * 0.25 * 1.3 * 1.1**2)
    assert abs(float(target["de_diagonal"]) - float(target["de_closed"])) <= 1e-9
    keys = [(float(r["e0"]), tuple(json.loads(r["occupations"]).values())) for r in body]
    assert keys == sorted(keys)
    assert '{"v1":0,"v2":0,"t12":1}' in text.replace('""', '"')


def test_spectrum_zero_coupling(tmp_path):
    code, text = run(tmp_path, "spectrum", {**MINIMAL, "lambda": 0.0, "levels": 3})
    assert code == 0
    for r in rows(text)[1:]:
        rec = dict(zip(SPECTRUM_HEADER, r))
        assert float(rec["de_closed"]) == float(rec["de_diagonal"]) == float(rec["de_degenerate"]) == 0
        assert abs(float(rec["e_exact"]) - float(rec["e0"])) <= 1e-10


def test_spectrum_moyal_vacuum(tmp_path):
    cfg = {**MINIMAL, "model": "moyal_dynamic", "realization": "moyal", "lambda": 0.2,
           "beta": 0.8, "omega_tensor": 1.7, "levels": 1}
    code, text = run(tmp_path, "spectrum", cfg)
    assert code == 0
    rec = dict(zip(SPECTRUM_HEADER, rows(text)[1]))
    m = 1.0 / 0.8**2
    assert float(rec["de_closed"]) == pytest.approx(0.04 * m * 2 / 32)


def test_spectrum_closed_form_tolerance_gate(tmp_path):
    cfg = {**MINIMAL, "model": "split_two_frequency_weyl", "omega_tensor": 2.3, "levels": 3,
           "tolerances": {"closed_form": 1e-9}}
    code, _ = run(tmp_path, "spectrum", cfg)
    assert code == 2


def test_spectrum_dimension_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("EXTSNYDER_DIM_CAP", "50")
    code, _ = run(tmp_path, "spectrum", MINIMAL)
    assert code == 1


def test_spectrum_is_byte_identical(tmp_path):
    cfg = {**MINIMAL, "model": "split_two_frequency_classical", "realization": "classical",
           "omega_tensor": 1.9, "levels": 4}
    a = run(tmp_path, "spectrum", cfg)[1]
    b = run(tmp_path, "spectrum", cfg)[1]
    assert a == b


# --- sweep / convergence -------------------------------------------------------------

SWEEP = {**MINIMAL, "model": "split_two_frequency_weyl", "beta": 0.7, "tensor_mass": 1.3,
         "omega": 1.1, "omega_tensor": 2.3, "n_max": 6, "levels": 2,
         "lambda_sweep": [0.025, 0.05, 0.1]}


def test_sweep_csv_and_slope(tmp_path):
    code, text = run(tmp_path, "convergence", SWEEP)
    assert code == 0
    table = rows(text)
    assert table[0] == SWEEP_HEADER
    assert table[-1][0] == "slope"
    assert float(table[-1][1]) == pytest.approx(4.0, abs=0.3)
    assert len(table) == 1 + 3 * (1 + 2) + 1  # vacuum + two single vector quanta


def test_sweep_is_byte_identical(tmp_path):
    a = run(tmp_path, "sweep", SWEEP)[1]
    b = run(tmp_path, "sweep", SWEEP)[1]
    assert a == b


def test_single_point_sweep_rejected(tmp_path):
    code, _ = run(tmp_path, "sweep", {**SWEEP, "lambda_sweep": [0.1]})
    assert code == 1


def test_configured_slope_assertion(tmp_path):
    cfg = {**SWEEP, "tolerances": {"slope_target": 2.0, "slope_window": 0.2}}
    assert run(tmp_path, "sweep", cfg)[0] == 2
    assert run(tmp_path, "sweep", SWEEP)[0] == 0


def test_relation_sweep(tmp_path):
    cfg = {**MINIMAL, "interior_margin": 2, "lambda_sweep": [0.05, 0.1, 0.2],
           "sweep_quantity": "relation:coord:x_i,x_j"}
    code, text = run(tmp_path, "convergence", cfg)
    assert code == 0
    assert float(rows(text)[-1][1]) == pytest.approx(2.0, abs=0.2)
    code, _ = run(tmp_path, "sweep", {**cfg, "sweep_quantity": "relation:nope"})
    assert code == 1


def test_module_entry_point(tmp_path):
    path = write(tmp_path, {**MINIMAL, "levels": 1})
    proc = subprocess.run([sys.executable, "-m", "extsnyder", "spectrum", "--config", path],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith(",".join(SPECTRUM_HEADER))
