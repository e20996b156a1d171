import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from heatfcs.cli import main
from heatfcs.config import ConfigError, load_yaml, parse_config

from conftest import two_qubit_system

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def base_cfg(**kw):
    data = {
        "model": {"kind": "xy", "L": 2, "M": 0},
        "beta": [1.0, 2.0],
        "tasks": ["cgf"],
        "t_list": [1.0],
        "alpha_grid": {"min": -0.5, "max": 0.5, "count": 3},
    }
    data.update(kw)
    return data


def test_parse_defaults():
    cfg = parse_config(base_cfg())
    assert cfg.ell == 2
    assert cfg.alpha_points().shape == (9, 2)
    assert cfg.format == "csv"


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"model": {"kind": "nope"}}, "model.kind"),
        ({"beta": [1.0, -1.0]}, "beta"),
        ({"tasks": ["cgf", "fly"]}, "tasks[1]"),
        ({"alpha_grid": {"min": -1, "max": 1, "count": 4}}, "alpha_grid.count[0]"),
        ({"alpha_grid": {"min": 0.1, "max": 1, "count": 3}}, "alpha_grid.min[0]"),
        ({"tasks": ["sample"]}, "seed"),
        ({"format": "xml"}, "format"),
    ],
)
def test_parse_errors_name_field(patch, field):
    with pytest.raises(ConfigError) as err:
        parse_config(base_cfg(**patch))
    assert err.value.path == field


def test_yaml_parse_error_location(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("model: {kind: xy\nbeta: [1, 2]\n")
    with pytest.raises(ConfigError, match="line"):
        load_yaml(p)


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", str(write_cfg(tmp_path, base_cfg()))]) == 0
    assert "dim 2^5" in capsys.readouterr().out


def test_validate_bad_config_exit_2(tmp_path, capsys):
    assert main(["validate", str(write_cfg(tmp_path, base_cfg(beta="hot")))]) == 2
    assert "beta" in capsys.readouterr().err


def test_cap_refusal_shows_arithmetic(tmp_path, capsys):
    cfg = base_cfg(model={"kind": "ebb", "L": 7}, tasks=["distribution"])
    assert main(["validate", str(write_cfg(tmp_path, cfg))]) == 2
    err = capsys.readouterr().err
    assert "2^15" in err and "16 B" in err


def test_run_xy_small(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "xy_small.yaml"), "--output-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["all_passed"]
    assert {t["task"] for t in man["tasks"]} == {
        "distribution", "cgf", "symmetry_suite", "bounds_suite", "asymptotics", "sample", "linear_response"
    }
    for name in ("distribution_t1.csv", "cgf.csv", "rate_function.csv", "asymptotics.json", "bounds.csv"):
        assert (out / name).exists(), name
    assert "versions" in man and "wall_seconds" in man["tasks"][0]


def test_run_sample_reproducible(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tasks=["sample"], seed=11, sample={"n": 20000}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--output-dir", str(a)]) == 0
    assert main(["run", str(cfg), "--output-dir", str(b)]) == 0
    assert (a / "sample_t1.csv").read_bytes() == (b / "sample_t1.csv").read_bytes()
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "c"), "--seed", "12"]) == 0
    assert (a / "sample_t1.csv").read_bytes() != (tmp_path / "c" / "sample_t1.csv").read_bytes()


def test_run_json_format(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg())
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o"), "--format", "json"]) == 0
    rows = json.loads((tmp_path / "o" / "cgf.json").read_text())
    assert len(rows) == 9


def test_run_custom_model(tmp_path):
    q = two_qubit_system()
    npz = tmp_path / "q.npz"
    np.savez(npz, energies=q.energies, interaction=q.interaction, beta=q.beta)
    cfg = write_cfg(tmp_path, base_cfg(model={"kind": "custom", "path": str(npz)}, tasks=["cgf", "symmetry_suite"]))
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0


def test_failed_task_recorded(tmp_path):
    # distribution needs a many-body representation; EBB with 19 modes has none
    cfg = write_cfg(tmp_path, base_cfg(model={"kind": "ebb", "L": 9}, tasks=["cgf"]))
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    data = base_cfg(model={"kind": "ebb", "L": 9}, tasks=["cgf", "linear_response"], t_list=[0.0])
    cfg = write_cfg(tmp_path, data, "bad.yaml")
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["tasks"][1]["status"] == "failed"
    assert man["tasks"][0]["status"] == "ok"
