import pytest

from phasecurv import config as cf


def test_empty_file_is_defaults():
    cfg = cf.parse("", "empty.ini")
    assert cfg.values == cf.defaults()
    assert cfg["recovery"]["eps"] == [0.02, 0.01, 0.005]
    assert cfg["recovery"]["r_eps"] is None


def test_parse_types():
    cfg = cf.parse("[shape]\nname = ellipse\nR = 2\n[run]\nplot = yes\nseed = 4\n[recovery]\neps = 0.1; 0.05\n"
                   "r_eps = 0.01\n")
    assert cfg["shape"]["name"] == "ellipse"
    assert cfg["shape"]["R"] == 2.0
    assert cfg["run"]["plot"] is True and cfg["run"]["seed"] == 4
    assert cfg["recovery"]["eps"] == [0.1, 0.05]
    assert cfg["recovery"]["r_eps"] == 0.01


def test_keys_are_case_sensitive():
    with pytest.raises(cf.ConfigError, match="unknown field shape.r"):
        cf.parse("[shape]\nr = 1\n")


@pytest.mark.parametrize("text,line,field", [
    ("[shape]\nname = circle\n\nR = abc\n", 4, "shape.R"),
    ("# c\n[run]\nseed = 1.5\n", 3, "run.seed"),
    ("[profile]\neps = \n", 2, "profile.eps"),
    ("[recovery]\nn = 64\ntolerance = inf\n", 3, "recovery.tolerance"),
])
def test_errors_name_line_and_field(text, line, field):
    with pytest.raises(cf.ConfigError) as err:
        cf.parse(text, "exp.ini")
    assert f"exp.ini:{line}:" in str(err.value)
    assert field in str(err.value)


def test_unknown_section():
    with pytest.raises(cf.ConfigError, match="unknown section"):
        cf.parse("[nope]\na = 1\n")


def test_syntax_error():
    with pytest.raises(cf.ConfigError):
        cf.parse("key without section = 1\n", "bad.ini")


def test_load_and_override(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[minimize]\nsteps = 12\n")
    cfg = cf.load(p)
    assert cfg["minimize"]["steps"] == 12 and cfg.source == str(p)
    cf.override(cfg, "minimize", "steps", "30", "--steps")
    assert cfg["minimize"]["steps"] == 30
    with pytest.raises(cf.ConfigError, match="option --steps"):
        cf.override(cfg, "minimize", "steps", "x", "--steps")
    with pytest.raises(cf.ConfigError):
        cf.load(tmp_path / "missing.ini")
