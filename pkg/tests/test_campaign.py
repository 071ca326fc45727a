"""Campaign runner, configuration parsing, sweeps and the command line."""
import csv
import json
import math

import numpy as np
import pytest

from baconshor.campaign import ConfigError, ExperimentConfig, WORKERS_ENV, jackknife, run_campaign, with_updates
from baconshor.cli import main
from baconshor.config import load_config, parse_config
from baconshor.sweep import parse_axis, run_sweep

BASE = """\
version: 1
mode: continuous
detectors: {tau_m: 1.0, eta: 1.0}
decoherence: {kind: none}
correlator: {kernel: exponential, T_R: 12, armed: false}
simulation: {n_traj: 200, total_time: 20, n_records: 5, seed: 4}
"""

RELAX = """\
version: 1
detectors: {tau_m: 1.0}
decoherence: {kind: relaxation, rates: [0.02, 0.02, 0, 0]}
correlator: {kernel: exponential, T_R: 6}
simulation: {n_traj: 400, total_time: 40, n_records: 4, seed: 9, boost: 5}
"""


def _identity_chi(n):
    out = np.zeros((n, 4, 4))
    out[:, 0, 0] = 1
    return out


@pytest.mark.parametrize("engine", ["gauge", "statevector", "density"])
def test_zero_decoherence_disarmed(engine):
    over = {"simulation": {"engine": engine}}
    if engine == "density":
        over["simulation"].update({"n_traj": 20, "total_time": 2})
    cfg = parse_config(BASE, overrides=over)
    res = run_campaign(cfg)
    assert res.engine == engine
    np.testing.assert_array_equal(res.survival, 1.0)
    floor = 3 / math.sqrt(cfg.n_traj)
    assert np.max(np.abs(res.chi - _identity_chi(len(res.times)))) < floor


def test_armed_code_space_alarms_terminate():
    cfg = parse_config(BASE, overrides={"correlator": {"armed": True, "T_R": 4},
                                        "simulation": {"total_time": 60}})
    res = run_campaign(cfg)
    alarmed = res.records["alarm_step"] >= 0
    assert 0 < alarmed.sum() < cfg.n_traj
    assert res.survival[-1] == pytest.approx(1 - alarmed.mean())
    assert res.fits["n_alarms"] == alarmed.sum()


def test_relaxation_campaign_sanity():
    res = run_campaign(parse_config(RELAX))
    assert res.engine == "statevector"
    for chi in res.chi:
        assert np.trace(chi).real == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(chi, chi.conj().T, atol=1e-10)
    # survival does not depend on the logical input state
    sigma = np.sqrt(res.survival * (1 - res.survival) / res.config.n_traj)
    dev = np.max(np.abs(res.survival_by_input - res.survival[:, None]), axis=1)
    assert np.all(dev <= 4 * np.maximum(sigma, 1e-12))


def test_determinism_across_workers(tmp_path, monkeypatch):
    text = RELAX.replace("n_traj: 400", "n_traj: 96") + "output: {dir: x}\n"
    outs = []
    for workers in ("1", "2"):
        monkeypatch.setenv(WORKERS_ENV, workers)
        cfg = parse_config(text, overrides={"output": {"dir": str(tmp_path / workers)},
                                            "simulation": {"chunk_size": 16}})
        assert cfg.resolved_workers() == int(workers)
        run_campaign(cfg)
        outs.append((tmp_path / workers / "aggregates.csv").read_bytes())
    assert outs[0] == outs[1]


def test_campaign_outputs(tmp_path):
    cfg = parse_config(BASE, overrides={"output": {"dir": str(tmp_path), "traces": 2}})
    res = run_campaign(cfg)
    summary = json.loads((tmp_path / "campaign.json").read_text())
    assert summary["config"]["source"]["version"] == 1
    assert summary["survival"] == res.survival.tolist()
    with open(tmp_path / "trajectories.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == cfg.n_traj
    assert all((r["survived"] == "True") == (r["alarm_time"] == "") for r in rows)
    assert len(list((tmp_path / "traces").glob("*.csv"))) == 2


def test_projective_campaign_matches_predictions():
    res = run_campaign(load_config("configs/projective.yaml", {"output": {"dir": None}}))
    assert res.engine == "projective"
    for key in ("gamma_term", "gamma_X", "gamma_Z"):
        assert res.fits[key] == pytest.approx(res.predictions[key], rel=0.05)


def test_jackknife_error_of_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4000)
    full, err = jackknife(x, np.mean)
    assert full == np.mean(x)
    assert err == pytest.approx(np.std(x) / np.sqrt(len(x)), rel=0.4)
    _, err_c = jackknife(x + 1j * x, np.mean)
    assert err_c.real == pytest.approx(err) and err_c.imag == pytest.approx(err)


def test_with_updates_and_validation():
    cfg = parse_config(BASE)
    assert with_updates(cfg, n_traj=5).n_traj == 5
    with pytest.raises(ConfigError):
        with_updates(cfg, dt=-1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="continuous")
    with pytest.raises(ConfigError):
        run_campaign(parse_config(BASE, overrides={"mode": "analytics"}))


@pytest.mark.parametrize("text,line,fragment", [
    (BASE.replace("version: 1\n", ""), 1, "missing 'version'"),
    (BASE.replace("n_traj: 200", "n_traj: -3"), 6, "simulation.n_traj"),
    (BASE.replace("n_traj: 200", "n_traj: many"), 6, "expected an integer"),
    (BASE.replace("tau_m: 1.0", "tau_m: 1.0, colour: red"), 3, "detectors.colour"),
    (BASE.replace("T_R: 12", "T_R: 12, T_c: 20"), 5, "exactly one of T_R or T_c"),
    (BASE.replace("kind: none", "kind: magic"), 4, "decoherence.kind"),
    (BASE + "bogus: 1\n", 7, "unknown section"),
    ("version: 1\nmode: [1\n", 3, "invalid YAML"),
])
def test_config_diagnostics(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "exp.yaml")
    msg = str(exc.value)
    assert msg.startswith(f"exp.yaml:{line}:")
    assert fragment in msg


def test_config_units():
    text = RELAX.replace("tau_m: 1.0", "tau_m: 2.0")
    gm = 1 / (2 * 2.0)
    assert parse_config(text).decoherence.rates[0] == pytest.approx(0.02 * gm)
    absolute = text.replace("rates: [0.02, 0.02, 0, 0]", "rates: [0.02, 0.02, 0, 0], unit: absolute")
    assert parse_config(absolute).decoherence.rates[0] == pytest.approx(0.02)


def test_parse_axis():
    assert parse_axis("correlator.T_R=12,16") == (("correlator", "T_R"), [12, 16])
    assert parse_axis("correlator.T_c=linspace(5,60,12)")[1][-1] == 60.0
    assert parse_axis("decoherence.rates=[1,0,0,0];[0,1,0,0]")[1] == [[1, 0, 0, 0], [0, 1, 0, 0]]
    with pytest.raises(ConfigError):
        parse_axis("no_equals")


def test_single_point_sweep_equals_campaign():
    rows = run_sweep(BASE, ["simulation.seed=4"])
    res = run_campaign(parse_config(BASE))
    vals = {r["metric"]: r["value"] for r in rows}
    assert vals["gamma_term"] == res.fits["gamma_term"]
    assert vals["predicted_response_time"] == res.predictions["response_time"]


def test_tradeoff_family_monotone(tmp_path):
    text = open("configs/tradeoff.yaml").read()
    rows = run_sweep(text, ["detectors.tau_m=1,0.3,0.1,0.03", "correlator.T_c=linspace(5,60,12)"],
                     output_dir=str(tmp_path))
    for tau_m in (1, 0.3, 0.1, 0.03):
        r = [x["value"] for x in rows if x["metric"] == "termination_ratio" and x["detectors.tau_m"] == tau_m]
        assert len(r) == 12
        assert r[0] >= 1 and np.all(np.diff(r) <= 0)
        assert r[-1] == pytest.approx(1.0, abs=0.05)
        if tau_m == 1:
            assert r[0] > 5
    plot = json.loads((tmp_path / "plotdata.json").read_text())
    assert plot["x_axis"] == "detectors.tau_m"
    assert (tmp_path / "sweep.csv").exists()


def test_cli_end_to_end(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(BASE)
    out = tmp_path / "run"
    assert main(["simulate", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    assert (out / "campaign.json").exists() and (out / "aggregates.csv").exists()
    assert main(["fit", str(out)]) == 0
    assert (out / "fits.json").exists()
    assert main(["plotdata", str(out)]) == 0
    assert json.loads((out / "plotdata.json").read_text())["series"]
    assert main(["analytics", "configs/tradeoff.yaml"]) == 0
    assert main(["sweep", str(cfg), "--axis", "simulation.seed=1,2", "--out", str(tmp_path / "sw")]) == 0
    capsys.readouterr()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(BASE.replace("n_traj: 200", "n_traj: 0"))
    assert main(["simulate", str(bad)]) == 2
    assert f"{bad}:6:" in capsys.readouterr().err
    coarse = tmp_path / "coarse.yaml"
    coarse.write_text(BASE.replace("total_time: 20", "total_time: 20, dt: 0.05"))
    assert main(["simulate", str(coarse)]) == 3
    assert main(["fit", str(tmp_path)]) == 2
    assert main(["simulate", "configs/tradeoff.yaml"]) == 2


def test_weighted_survival_above_one():
    from baconshor.campaign import fit_campaign
    from baconshor.trajectory import NumericalError

    t = np.array([10.0, 20.0, 30.0])
    chi = np.tile(_identity_chi(1), (3, 1, 1)).astype(complex)
    fits = fit_campaign(t, np.array([1.0004, 0.999, 0.998]), np.full(3, 0.001), chi)
    assert fits["gamma_term"] > 0
    with pytest.raises(NumericalError):
        fit_campaign(t, np.array([1.1, 0.999, 0.998]), np.full(3, 0.001), chi)


def test_null_output_dir_writes_nothing():
    cfg = parse_config(BASE + "output: {dir: runs/x}\n", overrides={"output": {"dir": None}})
    assert cfg.output_dir is None


def test_slope_errors_from_jackknife_replicates():
    res = run_campaign(parse_config(RELAX))
    assert res.fits["slope_err_method"] == "jackknife"
    err = res.fits["slope_ZZ_err"][0]
    assert np.isfinite(err) and err > 0
