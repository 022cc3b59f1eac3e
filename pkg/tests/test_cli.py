import csv
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import yaml

from fsmpc.artifacts import CSV_COLUMNS, ellipse_outline, trajectory_csv, trajectory_svg
from fsmpc.cli import main
from fsmpc.config import OUTPUT_DIR_ENV, ConfigError, load_config
from fsmpc.controller import mpc_run
from fsmpc.egdclf import Condition, EgdclfSpec
from fsmpc.model import UnicycleParams
from fsmpc.ocp import CostConfig, Ellipse


def write_cfg(tmp_path, data):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


SMALL = {"initial_state": [1.0, 0.5, 0.2, 0.0, 0.0], "horizon_steps": 8, "egdclf": {"condition": 2}}


def test_preset_cond1():
    cfg = load_config(preset="sec6-cond1")
    np.testing.assert_allclose(cfg.x0(), [15, 15, -math.pi / 4, 0, 0])
    spec = cfg.spec()
    assert spec.condition is Condition.COND1 and spec.sigma[:11] == (1e-3,) * 11
    assert spec.N == 12 and spec.alpha == 0.3
    p = cfg.params()
    assert (p.m, p.J, p.k, p.kappa, p.h) == (10, 20, 5, 15, 1)
    cost = cfg.cost_config()
    assert cost.rho == 1e5 and len(cost.obstacles) == 2
    assert cfg.plant.kind == "continuous" and cfg.plant.substeps == 20


def test_preset_cond2():
    cfg = load_config(preset="sec6-cond2")
    np.testing.assert_allclose(cfg.x0(), [10, 0, math.pi / 2, -3, 0])
    assert cfg.spec() == EgdclfSpec.cond2()
    e1, e2 = cfg.cost_config().obstacles
    np.testing.assert_allclose(e2.Q, np.diag([3.5, 0.6]) / 7)


def test_config_rejects_short_horizon():
    with pytest.raises(ConfigError) as err:
        load_config(overrides={"egdclf": {"N": 7}})
    assert any(loc == "egdclf.N" and ">= 8" in msg for loc, msg in err.value.errors)


@pytest.mark.parametrize(
    "override, field",
    [
        ({"model": {"m": -1}}, "model.m"),
        ({"egdclf": {"alpha": 1.5}}, "egdclf.alpha"),
        ({"initial_state": [1, 2]}, "initial_state"),
        ({"plant": {"kind": "analog"}}, "plant.kind"),
        ({"bogus": 1}, "bogus"),
        ({"egdclf": {"condition": 1, "sigma": 0.5}}, "egdclf"),
        ({"cost": {"obstacles": [{"center": [0, 0], "shape": [[1, 0], [0, -1]]}]}}, "cost"),
    ],
)
def test_config_field_diagnostics(override, field):
    with pytest.raises(ConfigError) as err:
        load_config(overrides=override)
    assert any(loc == field for loc, _ in err.value.errors), err.value.errors


def test_cli_run_rejects_n7(tmp_path, capsys):
    path = write_cfg(tmp_path, {"egdclf": {"N": 7}})
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "N must be >= 8" in capsys.readouterr().err


def test_cli_run_bad_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("model: [1, 2\n")
    assert main(["run", "--config", str(path)]) == 2


def test_cli_run_writes_artifacts(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env-out"))
    path = write_cfg(tmp_path, SMALL)
    assert main(["run", "--config", str(path)]) == 0
    out = tmp_path / "env-out"
    rows = list(csv.reader((out / "run.csv").open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[-1][6] == "" and rows[-1][9] == ""
    summary = (out / "run_summary.txt").read_text()
    assert "final_norm:" in summary and "envelope_passed: true" in summary
    ET.parse(out / "run.svg")


def test_cli_run_truncated_first_iteration(tmp_path):
    cfg = {**SMALL, "horizon_steps": 1, "initial_state": [15, 15, -0.78, 0, 0]}
    cfg["cost"] = {"rho": 1e5, "obstacles": [{"center": [6, 7], "shape": [[0.1, 0], [0, 0.4]]}]}
    path = write_cfg(tmp_path, cfg)
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert "truncated: true" in (tmp_path / "run_summary.txt").read_text()


def test_cli_run_is_deterministic(tmp_path):
    path = write_cfg(tmp_path, {**SMALL, "initial_state": None, "seed": 7})
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "run.csv").read_bytes() == (tmp_path / "b" / "run.csv").read_bytes()


def test_cli_verify_egdclf(capsys):
    assert main(["verify", "--suite", "egdclf", "--samples", "2000"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and all(c["passed"] for c in report["checks"])


def test_cli_verify_steering_workers(capsys):
    assert main(["verify", "--suite", "steering", "--samples", "100", "--workers", "3", "--seed", "5"]) == 0
    a = json.loads(capsys.readouterr().out)
    assert main(["verify", "--suite", "steering", "--samples", "100", "--seed", "5"]) == 0
    b = json.loads(capsys.readouterr().out)
    assert a == b and a["passed"]


def test_cli_verify_corrupted_alpha_is_config_error(capsys):
    assert main(["verify", "--suite", "egdclf", "--alpha", "1.5"]) == 2
    assert "alpha" in capsys.readouterr().err


def test_cli_verify_property_failure_exit(monkeypatch, capsys):
    import fsmpc.verify as v

    monkeypatch.setitem(v._SUITE_FNS, "egdclf", lambda **kw: [v._check("forced", False, witness=[1, 2])])
    assert main(["verify", "--suite", "egdclf"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert not report["passed"] and report["checks"][0]["witness"] == [1, 2]


def test_csv_format():
    log = mpc_run([1.0, 0, 0, 0, 0], EgdclfSpec.cond2(), CostConfig(), UnicycleParams(), "discrete", 3)
    text = trajectory_csv(log)
    lines = text.split("\n")
    assert text.endswith("\n") and lines[0] == ",".join(CSV_COLUMNS)
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[1]) == 1.0 and first[9] == "0"
    assert float(first[8]) == pytest.approx(1.0)
    # round-trip precision
    parsed = np.array([[float(c) for c in ln.split(",")[1:6]] for ln in lines[1:-1]])
    np.testing.assert_array_equal(parsed, log.states)


def test_ellipse_outline_on_level_set():
    e = Ellipse((1.0, -2.0), [[0.3, 0.1], [0.1, 0.5]])
    pts = ellipse_outline(e, 64) - e.p
    np.testing.assert_allclose(np.einsum("ni,ij,nj->n", pts, e.Q, pts), 1.0, rtol=1e-12)


def test_svg_contents():
    X = np.array([[0, 0, 0, 0, 0], [1, 1, 0.5, 0, 0], [2, 0, 1.0, 0, 0]], dtype=float)
    obstacles = [Ellipse((1, 1), [[1, 0], [0, 1]])]
    root = ET.fromstring(trajectory_svg(X, obstacles, arrow_every=1))
    tags = [el.tag.split("}")[-1] for el in root.iter()]
    assert tags.count("polyline") == 1 and tags.count("polygon") == 1
    assert sum(1 for el in root.iter() if el.get("class") == "heading") == 3
