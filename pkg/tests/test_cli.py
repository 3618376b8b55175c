"""End-to-end CLI tests over the shipped configuration files."""

import csv
from pathlib import Path

import numpy as np
import pytest

from mirage.channel import load_tensor
from mirage.cli import SPECTRUM_CSV_HEADER, main
from mirage.geometry import SPEED_OF_LIGHT

ROOT = Path(__file__).resolve().parents[1]
SCENARIO = str(ROOT / "configs" / "scenario_ref.toml")

THETA_TRUE = 0.46364760900080612
THETA_SPOOF = -0.58800260354756755
TAU_SPOOF_S = 36.055512754639893 / SPEED_OF_LIGHT


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def series_argmax(rows, name):
    pts = [(float(g), float(p)) for s, g, p in rows if s == name]
    grid, power = zip(*pts)
    return grid[int(np.argmax(power))], len(pts)


def test_spectra_argmaxes_and_determinism(tmp_path):
    out = tmp_path / "spec"
    assert main(["spectra", SCENARIO, "--method", "oracle",
                 "--out", str(out), "--seed", "1"]) == 0
    header, rows = read_csv(out / "aoa_spectrum.csv")
    assert tuple(header) == SPECTRUM_CSV_HEADER
    peak_plain, n_plain = series_argmax(rows, "no_spoof")
    peak_spoof, n_spoof = series_argmax(rows, "oracle")
    assert n_plain == n_spoof
    assert peak_plain == pytest.approx(THETA_TRUE, abs=1.1e-3)
    assert peak_spoof == pytest.approx(THETA_SPOOF, abs=1.1e-3)

    _, delay_rows = read_csv(out / "delay_spectrum.csv")
    bin_s = delay_rows[1][1]  # second grid point = one bin
    peak_tau, _ = series_argmax(delay_rows, "oracle")
    assert abs(peak_tau - TAU_SPOOF_S) <= float(bin_s)

    out2 = tmp_path / "spec2"
    assert main(["spectra", SCENARIO, "--method", "oracle",
                 "--out", str(out2), "--seed", "1"]) == 0
    assert (out / "aoa_spectrum.csv").read_bytes() == (out2 / "aoa_spectrum.csv").read_bytes()
    assert (out / "manifest.json").exists()


def test_design_writes_pilot_tensor(tmp_path):
    out = tmp_path / "des"
    assert main(["design", SCENARIO, "--method", "blind",
                 "--out", str(out), "--seed", "1"]) == 0
    pilot = load_tensor(out / "pilot.tns")
    assert pilot.shape == (24, 16, 256)
    energy = float(np.vdot(pilot, pilot).real)
    assert energy == pytest.approx(pilot.size, rel=1e-9)
    _, rows = read_csv(out / "design.csv")
    fields = dict((k, v) for k, v in rows)
    assert fields["method"] == "blind"
    assert float(fields["pilot_energy"]) == pytest.approx(energy)


def test_estimate_no_spoof_recovers_scene(tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", SCENARIO, "--method", "no_spoof",
                 "--out", str(out), "--seed", "1"]) == 0
    _, rows = read_csv(out / "estimates.csv")
    assert len(rows) == 2
    cdelays = sorted(float(r[2]) * SPEED_OF_LIGHT for r in rows)
    np.testing.assert_allclose(cdelays, [11.180339887498948, 36.776693773403533], atol=0.05)
    aoas = [float(r[3]) for r in rows]
    assert aoas[0] == pytest.approx(THETA_TRUE, abs=2e-3)


def test_locate_oracle_lands_on_target(tmp_path):
    out = tmp_path / "loc"
    assert main(["locate", SCENARIO, "--method", "oracle",
                 "--out", str(out), "--seed", "1"]) == 0
    _, rows = read_csv(out / "position.csv")
    (trial, x, y, d0, valid), = rows
    assert valid == "1"
    assert float(x) == pytest.approx(30.0, abs=0.05)
    assert float(y) == pytest.approx(-20.0, abs=0.05)


def test_locate_dais_matches_no_spoof(tmp_path):
    a = tmp_path / "plain"
    b = tmp_path / "dais"
    assert main(["locate", SCENARIO, "--method", "no_spoof",
                 "--out", str(a), "--seed", "4"]) == 0
    assert main(["locate", SCENARIO, "--method", "dais",
                 "--out", str(b), "--seed", "4"]) == 0
    _, rows_a = read_csv(a / "position.csv")
    _, rows_b = read_csv(b / "position.csv")
    assert float(rows_b[0][1]) == pytest.approx(float(rows_a[0][1]), abs=1e-9)
    assert float(rows_b[0][2]) == pytest.approx(float(rows_a[0][2]), abs=1e-9)


def test_sweep_power_outputs(tmp_path):
    exp = tmp_path / "exp.toml"
    exp.write_text('kind = "power"\nmethods = ["no_spoof", "oracle"]\n'
                   'p_t_dbm = [35.0]\ntrials = 2\n')
    out = tmp_path / "swp"
    assert main(["sweep", SCENARIO, str(exp), "--out", str(out), "--seed", "2"]) == 0
    _, trial_rows = read_csv(out / "trials.csv")
    assert len(trial_rows) == 4  # 2 methods x 2 trials x 1 power
    _, summary_rows = read_csv(out / "summary.csv")
    assert len(summary_rows) == 6  # 2 methods x 3 metrics
    dev = {r[2]: float(r[4]) for r in summary_rows if r[3] == "eps_dev_rmse_m"}
    assert dev["oracle"] < 0.5 < dev["no_spoof"]

    out2 = tmp_path / "swp2"
    assert main(["sweep", SCENARIO, str(exp), "--out", str(out2),
                 "--seed", "2", "--threads", "2"]) == 0
    assert (out / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_sweep_uncertainty_axis(tmp_path):
    exp = tmp_path / "exp.toml"
    exp.write_text('kind = "uncertainty"\nmethods = ["oracle"]\n'
                   'sigma_ue_m = [0.0, 0.5]\ntrials = 2\n')
    out = tmp_path / "unc"
    assert main(["sweep", SCENARIO, str(exp), "--out", str(out), "--seed", "2"]) == 0
    _, rows = read_csv(out / "summary.csv")
    assert {r[0] for r in rows} == {"sigma_ue_m"}
    assert {float(r[1]) for r in rows} == {0.0, 0.5}


def test_heatmap_sector_filter(tmp_path):
    out = tmp_path / "hm"
    assert main(["heatmap", SCENARIO, "--step", "10", "--out", str(out)]) == 0
    _, rows = read_csv(out / "heatmap.csv")
    assert len(rows) == 27  # 10 m grid cells inside the 50 m, +-60 deg sector
    for x, y, rate in rows:
        x, y, rate = float(x), float(y), float(rate)
        assert np.isfinite(rate) and rate > 0
        assert np.hypot(x, y) <= 50.0 + 1e-9
        assert abs(np.arctan2(y, x)) <= np.pi / 3 + 1e-9


def test_exit_codes(tmp_path, capsys):
    assert main(["estimate", "/no/such.toml", "--out", str(tmp_path / "a")]) == 2
    assert "no such file" in capsys.readouterr().err

    bad = tmp_path / "bad.toml"
    bad.write_text('kind = "power"\nmethods = ["psychic"]\np_t_dbm = [35.0]\n')
    assert main(["sweep", SCENARIO, str(bad), "--out", str(tmp_path / "b")]) == 2
    assert "valid tags are" in capsys.readouterr().err

    mismatched = tmp_path / "scen.toml"
    text = Path(SCENARIO).read_text().replace(
        "scatter_points = [[40.0, -10.0]]", "scatter_points = []"
    )
    mismatched.write_text(text)
    assert main(["design", str(mismatched), "--method", "oracle",
                 "--out", str(tmp_path / "c")]) == 3
    assert "paths" in capsys.readouterr().err

    with pytest.raises(SystemExit) as exc:
        main(["estimate", SCENARIO, "--method", "levitate", "--out", str(tmp_path / "d")])
    assert exc.value.code == 2


def test_cli_never_mutates_inputs(tmp_path):
    before = Path(SCENARIO).read_bytes()
    main(["locate", SCENARIO, "--method", "oracle", "--out", str(tmp_path / "x")])
    assert Path(SCENARIO).read_bytes() == before
