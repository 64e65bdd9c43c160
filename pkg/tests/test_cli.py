import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qdetect.cli import main, read_csv
from qdetect.config import ConfigError, parse_config
from qdetect.scenario import NOISE_POWER

BASE = """\
[experiment]
schema_version = 1
"""


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(BASE + text)
    return str(path)


def run(tmp_path, command, text, *extra):
    cfg = write(tmp_path, text)
    return main([command, "--config", cfg, "--out", str(tmp_path / "out"), *extra])


# ---- config

def test_defaults_are_standard_parameters():
    cfg = parse_config(BASE)
    sc = cfg.scenario()
    assert sc.noise_power == pytest.approx(30 / np.pi)
    assert sc.snr == 0.05
    assert (sc.signal.omega0, sc.signal.delta_omega) == (10.0, 3.0)
    assert cfg["grid"]["dt"] == 1e-3
    assert cfg["control"]["tau_cpmg"] == pytest.approx(np.pi / 10)


def test_schema_version_required():
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config("[grid]\ndt = 0.01\n")
    with pytest.raises(ConfigError, match="unsupported version"):
        parse_config("[experiment]\nschema_version = 9\n")


def test_errors_name_the_line():
    text = BASE + "\n[grid]\ndt = 0.001\nt_max = banana\n"
    with pytest.raises(ConfigError, match=r"exp.ini:6: \[grid\] t_max"):
        parse_config(text, source="exp.ini")
    with pytest.raises(ConfigError, match=r":4: \[grid\] colour: unknown key"):
        parse_config(BASE + "[grid]\ncolour = red\n")
    with pytest.raises(ConfigError, match=r":3: \[gird\] unknown section"):
        parse_config(BASE + "[gird]\n")


def test_j_scaled_correlation_time():
    cfg = parse_config(BASE + "[scenario]\nbackground = lorentzian\nbackground_j_sigma_t = 1.17\n")
    assert cfg.scenario().background.sigma_t == pytest.approx(1.17 / np.sqrt(NOISE_POWER))


def test_round_trip_is_identical():
    text = BASE + """
[scenario]
background = lorentzian
background_sigma_t = 0.25
[control]
scheme = cpmg
omega_sweep = 8, 10, 12
[crossover]
j_sigma_t_list = 0.1, 0.5, 1.0
"""
    cfg = parse_config(text)
    again = parse_config(cfg.to_ini())
    assert again.values == cfg.values
    assert again.to_ini() == cfg.to_ini()


def test_config_round_trip_gives_identical_run(tmp_path):
    text = "[grid]\ndt = 0.01\nt_max = 3\n[control]\nscheme = cpmg\n"
    assert run(tmp_path, "optimize", text) == 0
    first = (tmp_path / "out" / "optimize_control.csv").read_text()
    resolved = parse_config(BASE + text).to_ini()
    (tmp_path / "resolved.ini").write_text(resolved)
    assert main(["optimize", "--config", str(tmp_path / "resolved.ini"), "--out", str(tmp_path / "out2")]) == 0
    assert (tmp_path / "out2" / "optimize_control.csv").read_text() == first


# ---- subcommands

def test_sca_scan_sweep_peaks_in_band(tmp_path):
    text = "[grid]\nt_max = 15\nn_points = 50\n[control]\nomega_sweep = 2, 5, 8, 10, 12, 15, 20\n"
    assert run(tmp_path, "sca-scan", text) == 0
    header, data = read_csv(tmp_path / "out" / "sca_sweep.csv")
    assert header == ["omega", "t_opt", "chi_eta", "chi_s", "objective"]
    best = data[np.argmax(data[:, 4]), 0]
    assert 7 <= best <= 13
    header, scan = read_csv(tmp_path / "out" / "sca_scan.csv")
    assert header == ["t", "chi_eta", "chi_s", "p0_eta", "p0_sig", "objective"]
    assert scan.shape[0] == 50


def test_sca_scan_ramsey(tmp_path):
    text = "[scenario]\nbackground = lorentzian\nbackground_sigma_t = 0.5\n[grid]\nt_max = 3\n" \
           "[control]\nscheme = ramsey\n"
    assert run(tmp_path, "sca-scan", text) == 0
    _, scan = read_csv(tmp_path / "out" / "sca_scan.csv")
    assert np.all(np.diff(scan[:, 1]) > 0)
    assert scan[:, 5].max() < 0.01


def test_empty_time_range_is_usage_error(tmp_path, capsys):
    assert run(tmp_path, "sca-scan", "[grid]\nt_min = 4\nt_max = 2\n") == 2
    assert "empty time range" in capsys.readouterr().err


def test_unknown_scheme_is_config_error(tmp_path):
    assert run(tmp_path, "optimize", "[control]\nscheme = magic\n") == 2


def test_missing_config_file(tmp_path):
    assert main(["optimize", "--config", str(tmp_path / "nope.ini")]) == 2


def test_optimize_gradient_outputs(tmp_path):
    text = "[scenario]\nbackground = lorentzian\nbackground_j_sigma_t = 1.17\n" \
           "[grid]\ndt = 0.01\nt_min = 2\nt_max = 3\nn_points = 2\n" \
           "[control]\nscheme = gradient_opt\nomega_max = 15\n[optimizer]\nmax_iter = 100\nlearning_rate = 0.1\n"
    assert run(tmp_path, "optimize", text) == 0
    out = tmp_path / "out"
    res = json.loads((out / "optimize.json").read_text())["results"]
    assert 0 < res["objective"] < 0.5 and res["n_iter"] == 100
    _, ctrl = read_csv(out / "optimize_control.csv")
    assert np.abs(ctrl[:, 2]).max() <= 15
    _, trace = read_csv(out / "optimize_trace.csv")
    assert trace.shape == (100, 2)


def test_optimize_eigen(tmp_path):
    text = "[grid]\nt_min = 1\nt_max = 2\nn_points = 3\n[control]\nscheme = eigen_opt\n"
    assert run(tmp_path, "optimize", text) == 0
    res = json.loads((tmp_path / "out" / "optimize.json").read_text())["results"]
    assert res["scheme"] == "eigen_opt" and res["objective"] > 0


def test_simulate_and_detect(tmp_path):
    text = "[grid]\nt_max = 2\n[simulation]\nn_real = 100\nn_times = 4\nschemes = spin_lock, ramsey\n" \
           "[detection]\nn_list = 1, 10, 100\n"
    assert run(tmp_path, "simulate", text, "--seed", "17") == 0
    out = tmp_path / "out"
    doc = json.loads((out / "simulate.json").read_text())
    assert doc["results"]["seed"] == 17 and doc["config"]["simulation"]["seed"] == 17
    header, data = read_csv(out / "simulate_spin_lock_signal.csv")
    assert header == ["t", "P_mean", "P_stderr", "P_sca"] and data.shape == (4, 4)
    assert run(tmp_path, "detect", text) == 0
    header, rows = read_csv(out / "detect_ramsey.csv")
    assert header == ["n", "k_star", "fp", "fn", "mean_error"]
    ranking = json.loads((out / "detect.json").read_text())["results"]["ranking"]
    assert ranking["100"][0] == "spin_lock"


def test_detect_single_scheme_sca(tmp_path):
    text = "[grid]\nt_max = 5\n[detection]\nsource = sca\nschemes = spin_lock\nn_list = 1, 5\n"
    assert run(tmp_path, "detect", text) == 0
    _, rows = read_csv(tmp_path / "out" / "detect_spin_lock.csv")
    assert rows.shape == (2, 5)
    body = [ln for ln in (tmp_path / "out" / "detect_ranking.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert body[0] == "n,scheme,mean_error,rank"
    assert [ln.split(",")[1] for ln in body[1:]] == ["spin_lock", "spin_lock"]
    assert [ln.split(",")[3] for ln in body[1:]] == ["1", "1"]


def test_detect_without_simulation_points_to_prerequisite(tmp_path, capsys):
    assert run(tmp_path, "detect", "[detection]\nschemes = cpmg\n") == 2
    assert "qdetect simulate" in capsys.readouterr().err


def test_zero_realizations_rejected(tmp_path):
    assert run(tmp_path, "simulate", "[simulation]\nn_real = 0\n") == 2


def test_crossover_outputs(tmp_path):
    text = "[crossover]\nomega0_list = 5, 10\nsigma_t_list = 0.01, 0.05, 0.2, 1.0\nt_max = 12\n"
    assert run(tmp_path, "crossover", text) == 0
    out = tmp_path / "out"
    header, rows = read_csv(out / "crossover.csv")
    assert header == ["omega0", "sigma_t", "O_SL", "t_SL", "O_CPMG", "t_CPMG", "O_opt"]
    assert rows.shape == (8, 7)
    fit = json.loads((out / "crossover.json").read_text())["results"]["fit"]
    assert {"slope", "intercept", "r_squared"} <= set(fit)
    header, _ = read_csv(out / "crossover_fit.csv")
    assert header == ["slope", "intercept", "r_squared"]


def test_crossover_empty_list(tmp_path):
    assert run(tmp_path, "crossover", "[crossover]\nsigma_t_list =\n") == 2


def test_outputs_embed_config(tmp_path):
    assert run(tmp_path, "optimize", "[grid]\nt_max = 1\n[control]\nscheme = ramsey\n") == 0
    text = (tmp_path / "out" / "optimize_scan.csv").read_text()
    assert text.startswith("# qdetect optimize\n# [experiment]\n# schema_version = 1\n")
    assert "# scheme = ramsey" in text


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "[grid]\nt_max = 1\n")
    proc = subprocess.run([sys.executable, "-m", "qdetect.cli", "sca-scan", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "sca_scan.csv").exists()
