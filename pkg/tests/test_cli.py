import pytest
import yaml
from click.testing import CliRunner

from lmgp import __version__
from lmgp.cli import cli, main


def _config(tmp_path, **sections):
    raw = {"optimizer": {"n_starts": 2, "max_iter": 40}}
    raw.update(sections)
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def _exit(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def test_version_and_help():
    r = CliRunner().invoke(cli, ["--version"])
    assert r.exit_code == 0 and __version__ in r.output
    r = CliRunner().invoke(cli, ["--help"])
    for cmd in ("fit", "predict", "latent", "sweep", "varlen", "sensitivity", "bo"):
        assert cmd in r.output


def test_usage_errors_exit_1(tmp_path):
    assert _exit(["sweep", "--jobs", "0"]) == 1
    assert _exit(["nosuchcommand"]) == 1
    assert _exit(["sweep", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_config_error_exit_1(tmp_path):
    cfg = _config(tmp_path, data={"replicates": 0})
    r = CliRunner().invoke(cli, ["sweep", "--config", cfg, "--function", "3"])
    assert r.exit_code == 1 and "replicates" in r.output


def test_sweep_via_cli_is_deterministic(tmp_path):
    cfg = _config(tmp_path, experiment={"function": 3},
                  data={"train_sizes": [12], "noise": ["zero"], "replicates": 2, "test_size": 20})
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        r = CliRunner().invoke(cli, ["sweep", "--config", cfg, "--seed", "7", "--out", str(out)])
        assert r.exit_code == 0, r.output
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].decode().startswith(f"# lmgp {__version__} config=")
    assert b"seed=7" in outs[0].splitlines()[0]


def test_fit_predict_latent_chain(tmp_path):
    cfg = _config(tmp_path, data={"train_sizes": [30], "noise": ["zero"], "test_size": 20})
    run = CliRunner().invoke
    r = run(cli, ["fit", "--config", cfg, "--function", "borehole", "--model", "lmgp", "--out", str(tmp_path / "f")])
    assert r.exit_code == 0, r.output
    art = tmp_path / "f" / "model.json"
    r = run(cli, ["latent", "--model-file", str(art), "--out", str(tmp_path / "l")])
    assert r.exit_code == 0
    assert len((tmp_path / "l" / "latent.csv").read_text().splitlines()) == 2 + 45
    inp = tmp_path / "in.csv"
    inp.write_text("x1,x2,x3,x4,x5,t1,t2,t3\n0.1,100,1000,90000,700,1,2,3\n")
    r = run(cli, ["predict", "--model-file", str(art), "--inputs", str(inp), "--out", str(tmp_path / "p")])
    assert r.exit_code == 0, r.output
    lines = (tmp_path / "p" / "predictions.csv").read_text().splitlines()
    assert lines[1] == "mean,variance" and len(lines) == 3


def test_predict_schema_mismatch_exit_1(tmp_path):
    cfg = _config(tmp_path, data={"train_sizes": [15], "noise": ["zero"], "test_size": 10})
    CliRunner().invoke(cli, ["fit", "--config", cfg, "--function", "3", "--out", str(tmp_path / "f")])
    inp = tmp_path / "in.csv"
    inp.write_text("x1,t1\n0.1,1\n")
    r = CliRunner().invoke(cli, ["predict", "--model-file", str(tmp_path / "f" / "model.json"),
                                 "--inputs", str(inp), "--out", str(tmp_path / "p")])
    assert r.exit_code == 1


def test_sensitivity_cli(tmp_path):
    r = CliRunner().invoke(cli, ["sensitivity", "--function", "3", "--n-base", "2048", "--out", str(tmp_path)])
    assert r.exit_code == 0
    assert len((tmp_path / "sensitivity_borehole.csv").read_text().splitlines()) == 2 + 8
