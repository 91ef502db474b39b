import json

import pytest

from zdx import cli
from zdx.orchestrator import ConfigError, load_config, run, table_csv, validate_config


def _err(cfg):
    with pytest.raises(ConfigError) as e:
        validate_config(cfg)
    return e.value.path


def test_unknown_kind():
    assert _err({"kind": "wat"}) == "kind"


def test_unknown_driver_kind():
    path = _err({"kind": "spectral", "driver": {"kind": "levy"}})
    assert path == "driver.kind"


def test_missing_driver_field():
    assert _err({"kind": "spectral", "driver": {"kind": "iid", "d": 1}}) == "driver.atoms"


def test_bad_param_type():
    assert _err({"kind": "kernel", "driver": "lazy_1d", "params": {"points": [[1]], "tol": "x"}}) == "params.tol"


def test_missing_required_param():
    assert _err({"kind": "kernel", "driver": "lazy_1d"}) == "params.points"


def test_bad_enum():
    assert _err({"kind": "gk", "driver": "lazy_1d", "observable": [1], "params": {"mode": "magic"}}) == "params.mode"


def test_missing_driver_file(tmp_path):
    assert _err({"kind": "spectral", "driver": str(tmp_path / "none.json")}) == "driver"


def test_bad_observable():
    assert _err({"kind": "limit", "driver": "lazy_1d",
                 "observable": {"d": 1, "support": [[[1], 1.0]]}}).startswith("observable")


def test_load_config_relative_paths(tmp_path):
    (tmp_path / "drv.json").write_text(json.dumps({"kind": "iid", "d": 1,
                                                   "atoms": [[[-1], 0.25], [[0], 0.5], [[1], 0.25]]}))
    (tmp_path / "cfg.json").write_text(json.dumps({"kind": "kernel", "driver": "drv.json",
                                                   "params": {"points": [[1], [2]], "method": "series"}}))
    cfg = load_config(tmp_path / "cfg.json")
    man = run(cfg)
    vals = [r["g_series"] for r in man.outputs["kernel"]]
    assert vals == pytest.approx([4.0, 8.0], abs=1e-4)


def test_csv_deterministic(tmp_path):
    cfg = validate_config({"kind": "kernel", "driver": "lazy_2d", "seed": 3,
                           "params": {"points": [[1, 0], [2, 1]], "method": "both"}})
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "kernel.csv").read_text()
    assert a == (tmp_path / "b" / "kernel.csv").read_text()
    assert a.splitlines()[0].startswith("p,")
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["assertions"]["series_vs_fourier"]


def test_table_csv_repr_floats():
    text = table_csv([{"a": 0.1, "b": "x"}, {"a": 1 / 3}])
    assert text.splitlines()[2].startswith(repr(1 / 3))


def test_cli_config_error_exit_code(capsys):
    assert cli.main(["kernel", "--driver", "no_such_fixture.json", "--p", "1"]) == 2
    assert "driver" in capsys.readouterr().err


def test_cli_kernel_runs(tmp_path, capsys):
    code = cli.main(["kernel", "--driver", "lazy_1d", "--p", "1", "--p", "3", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "manifest.json").exists()
    assert json.loads(capsys.readouterr().out)["passed"]


def test_cli_mlgm_runs(capsys):
    assert cli.main(["mlgm", "--gamma", "0.5", "--samples", "2e4", "--seed", "1"]) in (0, 1)
    out = json.loads(capsys.readouterr().out)
    assert out["config"]["params"]["samples"] == 20000


def test_cli_gk_extension(capsys):
    code = cli.main(["gk", "--driver", "lazy_1d", "--obs", "no_obs.json"])
    assert code == 2
    obs_code = cli.main(["excursion", "--driver", "lazy_1d", "--p", "1", "--samples", "1e4"])
    assert obs_code == 0


def test_cli_rejects_fractional_count():
    with pytest.raises(SystemExit):
        cli.main(["mlgm", "--samples", "1.5"])
