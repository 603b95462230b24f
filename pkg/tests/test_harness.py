import json
import os
import shutil
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlab.errors import ConfigurationError, DomainError
from wlab.harness import cli
from wlab.harness.config import ExperimentConfig, canonical_json, config_hash
from wlab.harness.io import emit, read_csv, read_json, write_manifest
from wlab.harness.sweep import CSV_FIELDS, FitResult, SweepRecord, fit_exponent, run_point, run_sweep


def smoke_config(**over):
    cfg = {
        "potential": {"name": "gaussian_well"},
        "gamma": 0.0,
        "d": 1,
        "grid": {"N": 1024, "L": 4.0},
        "hbar": [0.4 * 2 ** (-k / 2) for k in range(8)],
        "phi": {"center": [0.0], "radius": 0.8},
        "mollify": True,
        "seed": 7,
    }
    cfg.update(over)
    return cfg


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


# -- config

@settings(max_examples=30)
@given(st.dictionaries(st.text(min_size=1, max_size=6), st.integers() | st.text(max_size=5), max_size=8),
       st.randoms())
def test_hash_ignores_key_order(d, rnd):
    items = list(d.items())
    rnd.shuffle(items)
    assert config_hash(dict(items)) == config_hash(d)
    assert canonical_json(dict(items)) == canonical_json(d)


@pytest.mark.parametrize("bad", [
    {"gamma": 1.5}, {"gamma": -0.1}, {"d": 0}, {"hbar": [0.1, -0.2]}, {"grid": {"N": 64}},
    {"potential": {"name": "nonesuch"}}, {"mu": 10.0, "hbar": [0.5]}, {"mu": [1.0, 2.0], "hbar": [0.1]},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigurationError):
        cfg = ExperimentConfig.from_dict(smoke_config(**bad))
        cfg.potential_model()


def test_config_missing_key():
    raw = smoke_config()
    del raw["gamma"]
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(raw)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict([1, 2])


def test_config_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(str(bad))


@pytest.mark.parametrize("gamma", [0.0, 0.5])
def test_coupling_exponent(gamma):
    raw = smoke_config(potential={"name": "holder_well", "params": {"kappa": 0.8}}, gamma=gamma)
    cfg = ExperimentConfig.from_dict(raw)
    k = cfg.kappa
    assert cfg.delta == pytest.approx((k - gamma) / (2 + k))
    h = 0.1
    assert cfg.epsilon(h) ** (2 + k) == pytest.approx(h ** (2 + gamma), rel=1e-12)


def test_delta_out_of_range():
    raw = smoke_config(potential={"name": "holder_well", "params": {"kappa": 0.5}}, gamma=1.0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(raw)


def test_localizer_mass():
    cfg = ExperimentConfig.from_dict(smoke_config(phi={"center": [0.0], "radius": 0.8, "mass": 2.0}))
    from wlab.quadrature import nested_quadrature
    phi = cfg.localizer()
    assert nested_quadrature(phi, np.array([-0.8]), np.array([0.8]), rtol=1e-10) == pytest.approx(2.0, rel=1e-8)


def test_constant_potential():
    cfg = ExperimentConfig.from_dict(smoke_config(potential={"name": "constant", "params": {"value": -0.5}}))
    assert cfg.potential_model().value(np.zeros((2, 1))).tolist() == [-0.5, -0.5]


# -- fits

def _records(hs, vals):
    return [SweepRecord(h, h, 0.0, 0.0, v, v, 64, 0.0) for h, v in zip(hs, vals)]


def test_fit_recovers_power():
    hs = [0.4 * 2.0**-k for k in range(6)]
    fit = fit_exponent(_records(hs, [3.0 * h**2 for h in hs]))
    assert fit.slope == pytest.approx(2.0, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-10)
    assert fit.hbar_range == (min(hs), max(hs))


def test_fit_constant_has_zero_slope():
    hs = [0.4 * 2.0**-k for k in range(5)]
    fit = fit_exponent(_records(hs, [0.7] * 5))
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0


def test_fit_needs_points_and_skips_floor():
    hs = [0.4, 0.2, 0.1, 0.05, 0.025]
    vals = [h for h in hs[:-1]] + [1e-20]
    fit = fit_exponent(_records(hs, vals), floor=1e-13)
    assert fit.points == 4 and fit.slope == pytest.approx(1.0)
    with pytest.raises(DomainError):
        fit_exponent(_records(hs[:3], hs[:3]))


# -- io

@settings(max_examples=25)
@given(st.lists(st.tuples(st.floats(1e-6, 1.0), st.floats(-1e6, 1e6, allow_subnormal=True),
                          st.integers(1, 4096)), min_size=0, max_size=6))
def test_csv_roundtrip_bit_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    recs = [SweepRecord(h, h**0.7, v, -v, abs(v), abs(v) * h, n, 1e-13, 0.0) for h, v, n in rows]
    emit(recs, "csv", str(path))
    back = read_csv(str(path))
    assert [r.row() for r in back] == [r.row() for r in recs]
    emit(back, "csv", str(path.with_suffix(".2")))
    assert path.read_bytes() == path.with_suffix(".2").read_bytes()


def test_empty_csv_has_header(tmp_path):
    path = tmp_path / "e.csv"
    emit([], "csv", str(path))
    assert path.read_text() == ",".join(CSV_FIELDS) + "\n"
    assert read_csv(str(path)) == []


def test_json_roundtrip(tmp_path):
    recs = _records([0.2, 0.1], [0.5, 0.25])
    emit(recs, "json", str(tmp_path / "r.json"))
    assert read_json(str(tmp_path / "r.json")) == recs
    fit = FitResult(1.0, 0.5, 0.99, 4, (0.1, 0.4), "residual")
    emit(fit, "json", str(tmp_path / "f.json"))
    assert read_json(str(tmp_path / "f.json")) == fit
    with pytest.raises(ValueError):
        emit(fit, "csv", str(tmp_path / "f.csv"))
    with pytest.raises(ValueError):
        emit(recs, "xml", str(tmp_path / "r.xml"))


def test_manifest_stable_under_reordering(tmp_path):
    raw = smoke_config()
    shuffled = dict(reversed(list(raw.items())))
    a = write_manifest(raw, str(tmp_path / "a.json"), {"seed": 1}, "sweep")
    b = write_manifest(shuffled, str(tmp_path / "b.json"), {"seed": 1}, "sweep")
    assert a["config_hash"] == b["config_hash"]
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert set(a["versions"]) >= {"python", "numpy", "scipy"}


# -- sweep

def test_sweep_smoke_slope():
    cfg = ExperimentConfig.from_dict(smoke_config())
    recs = run_sweep(cfg)
    assert [r.hbar for r in recs] == sorted(cfg.hbar, reverse=True)
    assert all(r.valid for r in recs)
    assert fit_exponent(recs).slope >= 0.8


def test_resolution_failure_is_recorded():
    cfg = ExperimentConfig.from_dict(smoke_config(grid={"N": 128, "L": 4.0}, hbar=[0.4, 0.05]))
    recs = run_sweep(cfg)
    assert recs[0].valid and not recs[1].valid and recs[1].note == "resolution"
    assert np.isnan(recs[1].residual)


def test_threads_do_not_change_results():
    cfg = ExperimentConfig.from_dict(smoke_config(hbar=[0.4, 0.3, 0.2]))
    assert [r.row() for r in run_sweep(cfg, threads=1)] == [r.row() for r in run_sweep(cfg, threads=3)]


def test_run_point_magnetic_gate():
    cfg = ExperimentConfig.from_dict(smoke_config(hbar=[0.4]))
    cfg.hbar_mu_max = 0.1
    rec = run_point(cfg, 0.4, 1.0)
    assert not rec.valid and rec.note == "gate"


# -- CLI

def test_cli_sweep_and_report(tmp_path):
    path = write_config(tmp_path, smoke_config())
    out = tmp_path / "run"
    assert cli.main(["sweep", "--config", path, "--out", str(out)]) == 0
    for name in ("sweep.csv", "sweep.json", "fit.json", "sweep.json", "manifest.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == config_hash(smoke_config())
    assert cli.main(["report", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    fit = json.loads((out / "fit.json").read_text())
    assert rep["result"]["fit"]["slope"] == fit["slope"]


def test_cli_determinism(tmp_path):
    path = write_config(tmp_path, smoke_config())
    for run in ("a", "b"):
        assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / run)]) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["tauberian-check", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    good = write_config(tmp_path, smoke_config(hbar=[0.4]))
    assert cli.main(["tauberian-check", "--config", good, "--out", str(tmp_path / "t"), "--assert"]) == 0
    # an unreachable residual tolerance trips the solver gate
    gate = write_config(tmp_path, smoke_config(hbar=[0.4], solver={"tol": 1e-40}), "gate.json")
    assert cli.main(["spectrum", "--config", gate, "--out", str(tmp_path / "g")]) == 3
    strict = write_config(tmp_path, smoke_config(**{"assert": {"min_slope": 50.0}}), "strict.json")
    assert cli.main(["sweep", "--config", strict, "--out", str(tmp_path / "s"), "--assert"]) == 4
    assert cli.main(["sweep", "--config", strict, "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["report", "--config", good, "--out", str(tmp_path / "empty")]) == 2
    assert cli.main(["sweep", "--config", good, "--out", str(tmp_path / "x"), "--seed", "-1"]) == 2


def test_cli_threads_env(tmp_path, monkeypatch):
    path = write_config(tmp_path, smoke_config(hbar=[0.4, 0.3]))
    monkeypatch.setenv("WLAB_THREADS", "3")
    assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["threads"] == 3
    monkeypatch.setenv("WLAB_THREADS", "many")
    assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / "f")]) == 2


def test_cli_other_commands(tmp_path):
    raw = smoke_config(hbar=[0.4, 0.2], grid={"N": 256, "L": 4.0})
    path = write_config(tmp_path, raw)
    for cmd in ("weyl-term", "spectrum", "quantize-check"):
        assert cli.main([cmd, "--config", path, "--out", str(tmp_path / cmd), "--assert"]) == 0, cmd
        assert (tmp_path / cmd / f"{cmd.replace('-', '_')}.json").exists()
    hold = write_config(tmp_path, smoke_config(potential={"name": "holder_well", "params": {"kappa": 0.5}}), "h.json")
    assert cli.main(["mollify-rates", "--config", hold, "--out", str(tmp_path / "m"), "--assert"]) == 0


def test_cli_spectrum_dump(tmp_path):
    from wlab.schrodgrid import load_matrix
    path = write_config(tmp_path, smoke_config(hbar=[0.4], grid={"N": 128, "L": 4.0}, dump_matrix=True))
    assert cli.main(["spectrum", "--config", path, "--out", str(tmp_path)]) == 0
    head, M = load_matrix(str(tmp_path / "matrix_0.bin"))
    assert head["N"] == 128 and M.shape == (127, 127)


def test_cli_partition(tmp_path):
    raw = smoke_config(d=2, hbar=[0.2], grid={"N": 64, "L": 4.0}, phi={"center": [0.0, 0.0], "radius": 0.8},
                       partition={"region": {"ball": [[0.0, 0.0], 1.5]}})
    path = write_config(tmp_path, raw)
    assert cli.main(["partition", "--config", path, "--out", str(tmp_path), "--assert"]) == 0
    rows = json.loads((tmp_path / "cover_0.json").read_text())
    assert rows and {"x_k", "l_k", "hbar_k"} <= set(rows[0])


def test_console_script_installed(tmp_path):
    exe = shutil.which("wlab")
    assert exe is not None
    res = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep" in res.stdout
    res = subprocess.run([exe, "sweep", "--config", str(tmp_path / "none.json")], capture_output=True, text=True,
                         cwd=tmp_path)
    assert res.returncode == 2 and "configuration error" in res.stderr
