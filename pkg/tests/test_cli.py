import json

import pytest

from phasecurv import cli
from phasecurv import minimize as mn


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("PHASECURV_OUTPUT", str(tmp_path / "runs"))


def run(argv, out):
    code = cli.main(argv + ["--out", str(out)])
    return code, json.loads((out / "manifest.json").read_text())


def test_profile_check(tmp_path, capsys):
    code, man = run(["profile-check", "--eps", "1e-2,1e-3,1e-4"], tmp_path / "p")
    assert code == 0
    assert man["command"] == "profile-check" and man["exit_code"] == 0
    assert man["config"]["profile"]["eps"] == [1e-2, 1e-3, 1e-4]
    assert set(man["versions"]) >= {"phasecurv", "numpy", "scipy", "python"}
    assert "total_s" in man["timings"]
    assert (tmp_path / "p" / "profile.csv").exists()
    assert "PASS" in capsys.readouterr().out


def test_reruns_bit_identical(tmp_path):
    argv = ["point-energy", "--eps", "1e-3,1e-4", "--jobs", "2"]
    run(argv, tmp_path / "a")
    run(argv[:-2], tmp_path / "b")
    for name in ("point_energy.csv",):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_minimize_reruns_bit_identical(tmp_path):
    argv = ["minimize", "--n", "32", "--steps", "5", "--perturb", "0.05", "--seed", "3"]
    assert run(argv, tmp_path / "a")[0] == 0
    run(argv, tmp_path / "b")
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert (tmp_path / "a" / "v_final.bin").read_bytes() == (tmp_path / "b" / "v_final.bin").read_bytes()


def test_default_run_directory_is_config_hash(tmp_path):
    assert cli.main(["convexify", "--phi", "cos4", "--beta", "0.9", "--n-dirs", "256"]) == 0
    assert cli.main(["convexify", "--phi", "cos4", "--beta", "0.9", "--n-dirs", "256"]) == 0
    runs = list((tmp_path / "runs").iterdir())
    assert len(runs) == 1 and runs[0].name.startswith("convexify-")
    assert cli.main(["convexify", "--phi", "cos4", "--beta", "0.8", "--n-dirs", "256"]) == 0
    assert len(list((tmp_path / "runs").iterdir())) == 2


def test_config_file_and_set(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[varifold]\nsweep = 4\n[shape]\nname = ellipse\n")
    code, man = run(["varifold-check", "--config", str(ini), "--set", "varifold.h=0.005"], tmp_path / "v")
    assert code == 0
    assert man["config"]["varifold"] == {"h": 0.005, "sweep": 4}
    assert man["config_source"] == str(ini)
    assert man["checks"]["gauss_bonnet"]["pass"]


def test_varifold_refuses_polygon(tmp_path):
    code, man = run(["varifold-check", "--shape", "square"], tmp_path / "s")
    assert code == 0
    assert "refused" in json.dumps(man["results"])


def test_config_errors_exit_1(tmp_path, capsys):
    assert cli.main(["recovery-energy", "--eps", "abc"]) == 1
    err = capsys.readouterr().err
    assert "recovery.eps" in err and "--eps" in err
    bad = tmp_path / "bad.ini"
    bad.write_text("[recovery]\n\nn = many\n")
    assert cli.main(["recovery-energy", "--config", str(bad)]) == 1
    assert f"{bad}:3:" in capsys.readouterr().err
    assert cli.main(["profile-check", "--set", "nonsense"]) == 1


def test_invalid_parameters_exit_1(tmp_path):
    code, man = run(["recovery-energy", "--shape", "segment", "--eps", "0.1", "--n", "64"], tmp_path / "r")
    assert code == 1 and "error" in man


def test_missed_check_exit_2(tmp_path):
    argv = ["recovery-energy", "--eps", "0.1,0.05", "--n", "128", "--set", "recovery.tolerance=1e-9"]
    code, man = run(argv, tmp_path / "r")
    assert code == 2
    assert not man["checks"]["finest_within_tolerance"]["pass"]


def test_divergence_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise mn.DivergenceError("energy rose")

    monkeypatch.setattr(mn, "flow_F_eps", boom)
    code, man = run(["minimize", "--n", "32", "--steps", "2"], tmp_path / "m")
    assert code == 3 and man["exit_code"] == 3


def test_csv_precision(tmp_path):
    run(["point-energy", "--eps", "1e-3"], tmp_path / "p")
    header, row = (tmp_path / "p" / "point_energy.csv").read_text().splitlines()[:2]
    vals = dict(zip(header.split(","), row.split(",")))
    assert len(vals["total"].replace(".", "").lstrip("0")) >= 15
