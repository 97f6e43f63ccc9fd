import csv
import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gwroute.cli import RunConfig, main, surface_table, write_report_json, write_surface_csv
from gwroute.global_models import fit_ols
from gwroute.gwr import fit_gwr
from gwroute.kernel import Bandwidth, KernelSpec

SPEC = {"n": 100, "extent": 1000.0, "layout": "grid", "noise_sd": 0.5, "seed": 3,
        "surfaces": {"Intercept": {"kind": "constant", "c": 1.0},
                     "x1": {"kind": "gaussian_bump", "center": [500, 500], "amplitude": 2.0,
                            "length_scale": 200.0},
                     "x2": {"kind": "constant", "c": -0.5}}}


@pytest.fixture(autouse=True)
def _threads_env(monkeypatch):
    # main() forwards --threads through the environment
    monkeypatch.delenv("GWROUTE_THREADS", raising=False)


@pytest.fixture
def data_csv(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SPEC))
    path = tmp_path / "synth.csv"
    assert main(["simulate", "--spec", str(spec), "--out", str(path),
                 "--truth", str(tmp_path / "truth.csv")]) == 0
    return path


def _data_args(path):
    return ["--input", str(path), "--response", "response", "--predictors", "x1,x2"]


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _report(path):
    with open(path) as fh:
        return json.load(fh)


def test_simulate_outputs(data_csv, tmp_path):
    header, vals = _read_csv(data_csv)
    assert header == ["x", "y", "response", "x1", "x2"]
    assert vals.shape == (100, 5)
    th, tv = _read_csv(tmp_path / "truth.csv")
    assert th == ["x", "y", "Intercept", "x1", "x2"]
    assert_allclose(tv[:, 2], 1.0)


class TestExitCodes:
    def test_missing_response(self, data_csv, capsys):
        assert main(["fit", "--model", "ols", "--input", str(data_csv),
                     "--predictors", "x1"]) == 1
        assert "--response" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["fit", "--frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_command(self):
        assert main([]) == 1

    def test_missing_file(self, tmp_path):
        assert main(["fit", "--model", "ols", *_data_args(tmp_path / "nope.csv")]) == 1

    def test_numerical_failure_is_two(self, data_csv, tmp_path):
        assert main(["fit", "--model", "gwr", "--bw", "fixed:1", *_data_args(data_csv),
                     "--out", str(tmp_path / "o")]) == 2

    def test_malformed_output_path(self, data_csv, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["fit", "--model", "ols", *_data_args(data_csv),
                     "--out", str(blocker / "sub")]) == 1

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "gwroute" in capsys.readouterr().out


@pytest.mark.parametrize("model", ["ols", "sam", "gwr", "mxgwr", "msgwr"])
def test_fit_every_model(model, data_csv, tmp_path):
    out = tmp_path / model
    extra = ["--global", "x2"] if model == "mxgwr" else []
    assert main(["fit", "--model", model, *_data_args(data_csv), "--out", str(out),
                 "--bw-form", "adaptive", *extra]) == 0
    rep = _report(out / "report.json")
    assert rep["report"]["model"] == model
    assert rep["config"]["model"] == model
    assert (out / f"surfaces_{model}.csv").exists() == (model not in ("ols", "sam"))


def test_surface_csv_round_trip(ds60, tmp_path):
    fit = fit_gwr(ds60, spec=KernelSpec("bisquare", Bandwidth.adaptive(20)))
    path = write_surface_csv(fit, tmp_path / "s.csv")
    header, vals = _read_csv(path)
    assert header[:7] == ["x", "y", "beta_Intercept", "se_Intercept", "t_Intercept",
                          "p_Intercept", "sig_Intercept"]
    assert_allclose(vals[:, :2], fit.coords, rtol=1e-15)
    for j, nm in enumerate(fit.names):
        col = header.index(f"beta_{nm}")
        assert_allclose(vals[:, col], fit.params[:, j], rtol=1e-9, atol=0)
        assert_allclose(vals[:, col + 1], fit.bse[:, j], rtol=1e-9)
        assert np.array_equal(vals[:, col + 4], (fit.pvalues[:, j] < 0.05).astype(float))


def test_global_fit_has_no_surfaces(ds60, tmp_path):
    with pytest.raises(ValueError, match="global"):
        write_surface_csv(fit_ols(ds60), tmp_path / "x.csv")
    with pytest.raises(ValueError):
        surface_table(object())


def test_report_json_deterministic_modulo_timestamp(data_csv, tmp_path):
    for d in ("a", "b"):
        assert main(["routemap", *_data_args(data_csv), "--out", str(tmp_path / d)]) == 0
    a, b = _report(tmp_path / "a" / "report.json"), _report(tmp_path / "b" / "report.json")
    assert a.pop("generated_at") != "" and b.pop("generated_at") != ""
    a["config"].pop("out"), b["config"].pop("out")
    assert a == b
    comp = a["report"]["comparison"]
    assert {"ols_aicc", "msgwr_aicc", "chosen_model", "chosen_aicc"} <= set(comp)
    text = (tmp_path / "a" / "report.txt").read_text()
    assert text.startswith("Recommendation:")


def test_fixed_timestamp_gives_identical_bytes(ds60, tmp_path):
    fit = fit_ols(ds60)
    write_report_json(fit, tmp_path / "a.json", timestamp="T")
    write_report_json(fit, tmp_path / "b.json", timestamp="T")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_config_echo_replays(data_csv, tmp_path):
    first = tmp_path / "first"
    assert main(["routemap", *_data_args(data_csv), "--global-threshold", "0.6",
                 "--out", str(first)]) == 0
    second = tmp_path / "second"
    assert main(["routemap", "--config", str(first / "report.json"), "--out", str(second)]) == 0
    a, b = _report(first / "report.json"), _report(second / "report.json")
    assert a["report"] == b["report"]
    assert b["report"]["config"]["global_threshold"] == 0.6


def test_flags_override_config(data_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(data_csv), "response": "response",
                               "predictors": ["x1", "x2"], "model": "gwr",
                               "bw": "adaptive:30"}))
    assert main(["fit", "--config", str(cfg), "--bw", "adaptive:50",
                 "--out", str(tmp_path / "o")]) == 0
    assert _report(tmp_path / "o" / "report.json")["report"]["bandwidth"] == "adaptive:50"


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bandwith": 3}))
    assert main(["fit", "--config", str(cfg)]) == 1


def test_run_config_round_trip():
    cfg = RunConfig(command="fit", input="a.csv", response="y", predictors=["a", "b"],
                    transforms={"y": "natural_log"}, bw="fixed:0.1", seed=7,
                    routemap={"global_threshold": 0.6})
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_surfaces_identical_across_threads(data_csv, tmp_path):
    for t in ("1", "3"):
        assert main(["fit", "--model", "gwr", "--bw", "adaptive:25", *_data_args(data_csv),
                     "--threads", t, "--out", str(tmp_path / t)]) == 0
    a = (tmp_path / "1" / "surfaces_gwr.csv").read_bytes()
    b = (tmp_path / "3" / "surfaces_gwr.csv").read_bytes()
    assert a == b


def test_geojson(data_csv, tmp_path):
    assert main(["fit", "--model", "gwr", "--bw", "adaptive:25", *_data_args(data_csv),
                 "--geojson", "--out", str(tmp_path)]) == 0
    doc = _report(tmp_path / "surfaces_gwr.geojson")
    assert doc["type"] == "FeatureCollection"
    assert len(doc["features"]) == 100
    props = doc["features"][0]["properties"]
    assert {"beta_x1", "sig_x1", "p_Intercept"} <= set(props)


def test_diagnose(data_csv, tmp_path):
    assert main(["diagnose", *_data_args(data_csv), "--permutations", "99", "--seed", "4",
                 "--bw", "adaptive:30", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "diagnostics.json")["report"]
    assert rep["moran_ols_residuals"]["permutations"] == 99
    assert "collinearity" in rep and "local_collinearity" in rep


def test_bw_curve(data_csv, tmp_path):
    assert main(["bw-curve", *_data_args(data_csv), "--bw-form", "adaptive", "--n-points", "12",
                 "--out", str(tmp_path)]) == 0
    header, vals = _read_csv(tmp_path / "bw_curve.csv")
    assert header == ["bandwidth", "aicc"]
    assert len(vals) == 12
    assert os.path.exists(tmp_path / "bw_curve.json")


def test_transform_flag(data_csv, tmp_path):
    assert main(["fit", "--model", "ols", *_data_args(data_csv), "--transform", "x1=natural_log",
                 "--out", str(tmp_path)]) == 1      # x1 has negative values
    assert main(["fit", "--model", "ols", *_data_args(data_csv), "--transform", "x1",
                 "--out", str(tmp_path)]) == 1
