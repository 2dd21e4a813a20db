import json
import shutil
from pathlib import Path

import pytest

from flutterlife.cli import STAGES, main
from flutterlife.config import config_hash, default_bands, load_config
from flutterlife.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, **overrides):
    cfg = json.loads((CONFIGS / "example.json").read_text())
    cfg["paths"]["derivative_file"] = str(CONFIGS / "flat_plate_derivatives.csv")
    cfg["simulate"]["segments_per_month"] = 2
    cfg["trend"]["min_segments_per_month"] = 2
    cfg["doe"]["levels"] = 3
    cfg["lifecycle"]["grid_points"] = 4096
    for key, value in overrides.items():
        cfg[key] = value
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_default_bands_cover_reference_modes():
    bands = default_bands()
    assert [b["name"] for b in bands] == ["1-AS-V", "2-S-V", "2-AS-V", "1-S-T", "1-AS-T", "3-AS-V"]
    for lo, hi in zip(bands, bands[1:]):
        assert lo["f_hi"] <= hi["f_lo"]
    assert {b["role"] for b in bands} == {"v1", "t1", None}


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(tmp_path / "bad.json")
    (tmp_path / "extra.json").write_text('{"bogus": 1}')
    with pytest.raises(ConfigError, match="bogus"):
        load_config(tmp_path / "extra.json")
    (tmp_path / "path.json").write_text('{"paths": {"wind_file": "missing.csv"}}')
    with pytest.raises(ConfigError, match="wind_file"):
        load_config(tmp_path / "path.json")
    (tmp_path / "box.json").write_text('{"doe": {"box": {"f_v1": [0.1, 0.09]}}}')
    with pytest.raises(ConfigError, match="doe"):
        load_config(tmp_path / "box.json")


def test_config_hash_independent_of_location(tmp_path):
    a = load_config(CONFIGS / "example.json")
    copy = tmp_path / "example.json"
    shutil.copy(CONFIGS / "example.json", copy)
    shutil.copy(CONFIGS / "flat_plate_derivatives.csv", tmp_path)
    assert config_hash(load_config(copy)) == config_hash(a)
    assert config_hash(load_config(copy, seed=1)) != config_hash(a)


@pytest.mark.parametrize("stage", STAGES)
def test_help_for_every_stage(stage, capsys):
    assert main([stage, "--help"]) == 0
    assert "--config" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(capsys):
    assert main(["flutter", "--config", "x.json", "--bogus"]) == 1
    assert "code=1" in capsys.readouterr().err
    assert main(["nonsense"]) == 1
    assert main([]) == 1


def test_missing_config_exit_1(tmp_path, capsys):
    assert main(["flutter", "--config", str(tmp_path / "nope.json")]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: stage=flutter code=1 reason=")
    assert len(err.splitlines()) == 1


def test_lifecycle_without_surrogate_names_artifact(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["lifecycle", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 1
    assert "surrogate/surrogate.json" in capsys.readouterr().err


def test_no_flutter_is_data_error(tmp_path, capsys):
    cfg = small_config(tmp_path, bridge={"B": 36.0, "span": 1650.0, "m0": 27000.0,
                                          "I0": 3.0e6, "rho": 0.0})
    assert main(["flutter", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 2
    assert "code=2" in capsys.readouterr().err


def _run_all(cfg, out):
    for stage in STAGES:
        assert main([stage, "--config", str(cfg), "--out", str(out), "--threads", "2"]) == 0, stage
    (root,) = Path(out).glob("run-*")
    return root


@pytest.mark.slow
def test_end_to_end_is_complete_and_reproducible(tmp_path):
    cfg = small_config(tmp_path)
    first = _run_all(cfg, tmp_path / "a")
    expected = [
        "simulate/manifest.json", "simulate/wind.csv", "simulate/truth.csv",
        "identify/estimates.jsonl", "identify/summary.json",
        "trend/trend.json", "trend/monthly.csv",
        "flutter/solution.json", "flutter/derivatives.json", "flutter/branches.csv",
        "surrogate/surrogate.json", "surrogate/doe.csv",
        "lifecycle/summary.json", "lifecycle/pf-none.csv", "lifecycle/pf-increase-30%.csv",
        "lifecycle/pf-decrease-30%.csv", "report/summary.csv", "report/pf_curve.svg", "report/critical_speed_pdf.svg",
        "report/trend-1-AS-V-frequency.svg", "report/fluctuation-1-AS-T-damping.svg",
    ]
    for name in expected:
        assert (first / name).is_file(), name
    pf = (first / "lifecycle/pf-none.csv").read_text().splitlines()
    assert pf[0] == "year,p_f,vr_mean,vr_std,extrapolation_flag"
    assert len(pf) == 102
    trend = json.loads((first / "trend/trend.json").read_text())
    assert set(trend) == {"1-AS-V", "1-AS-T"}
    for band in trend.values():
        assert {"frequency", "damping", "correlation", "role"} <= set(band)
        assert band["correlation"]["pairs"] == 48

    second = _run_all(cfg, tmp_path / "b")
    assert first.name == second.name
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    for rel in files:
        assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel
