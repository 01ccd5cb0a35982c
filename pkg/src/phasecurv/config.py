"""INI run configuration with a typed schema.

Every key has a default, so an empty file is a valid configuration; the resolved
values are echoed into the run manifest.  Errors name the file, line and field.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


def _float(s):
    x = float(s)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _floatlist(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    out = [_float(x) for x in str(s).replace(";", ",").split(",") if x.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def _optfloat(s):
    if s is None or str(s).strip().lower() in ("", "none", "auto", "default"):
        return None
    return _float(s)


def _bool(s):
    if isinstance(s, bool):
        return s
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(s):
    x = float(s)
    if x != int(x):
        raise ValueError("expected an integer")
    return int(x)


TYPES = {"float": _float, "int": _int, "str": str, "floatlist": _floatlist, "optfloat": _optfloat, "bool": _bool}

# section -> key -> (type, default)
SCHEMA = {
    "run": {"seed": ("int", 0), "jobs": ("int", 1), "plot": ("bool", False)},
    "profile": {"eps": ("floatlist", "1e-2,1e-3,1e-4"), "lambda": ("float", 2.0)},
    "anisotropy": {"name": ("str", "iso"), "beta": ("float", 0.3), "s": ("float", 0.1), "a": ("float", 2.0),
                   "b": ("float", 1.0), "n_dirs": ("int", 4096)},
    "shape": {"name": ("str", "circle"), "R": ("float", 1.0), "a": ("float", 2.0), "b": ("float", 1.0),
              "k": ("int", 3), "length": ("float", 0.5), "side": ("float", 1.0)},
    "recovery": {"eps": ("floatlist", "0.02,0.01,0.005"), "lambda": ("float", 2.0), "r_eps": ("optfloat", None),
                 "n": ("int", 1024), "half_width": ("float", 2.0), "tolerance": ("float", 0.05)},
    "point": {"eps": ("floatlist", "1e-3,1e-4,1e-5"), "beta": ("optfloat", None), "lambda": ("float", 2.0),
              "tolerance": ("float", 0.03)},
    "ms": {"state": ("str", "crack"), "eps": ("float", 5e-3), "gamma": ("float", 0.1), "amplitude": ("float", 1.0),
           "length": ("float", 1.0), "R": ("float", 1.0), "beta": ("optfloat", None), "eta": ("optfloat", None),
           "lambda": ("float", 2.0), "n": ("int", 1024), "half_width": ("float", 2.0), "tolerance": ("float", 0.10)},
    "varifold": {"h": ("float", 2e-3), "sweep": ("int", 10)},
    "minimize": {"eps": ("optfloat", None), "n": ("int", 128), "half_width": ("float", 2.5), "R": ("float", 1.5),
                 "dt": ("float", 1.0), "steps": ("int", 200), "record_every": ("int", 10),
                 "perturb": ("float", 0.0), "gtol": ("optfloat", None)},
    "ms_minimize": {"data": ("str", "stripe"), "eps": ("optfloat", None), "n": ("int", 64),
                    "half_width": ("float", 1.0), "gamma": ("float", 0.01), "mu": ("float", 100.0),
                    "cycles": ("int", 30), "vw_steps": ("int", 10), "dip": ("float", 0.5), "noise": ("float", 0.0),
                    "gtol": ("optfloat", None)},
}


@dataclass
class Config:
    values: dict
    source: str | None = None

    def __getitem__(self, section):
        return self.values[section]

    def as_dict(self):
        return {s: dict(v) for s, v in self.values.items()}


def defaults() -> dict:
    return {s: {k: TYPES[t](d) for k, (t, d) in keys.items()} for s, keys in SCHEMA.items()}


def _line_numbers(text):
    """(section, key) -> 1-based line of its definition."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            lines.setdefault((section, None), i)
        elif section is not None and ("=" in s or ":" in s):
            key = s.split("=", 1)[0] if "=" in s else s.split(":", 1)[0]
            lines[(section, key.strip())] = i
    return lines


def coerce(section: str, key: str, raw, where: str = ""):
    if section not in SCHEMA:
        raise ConfigError(f"{where}unknown section [{section}]; expected one of {sorted(SCHEMA)}")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{where}unknown field {section}.{key}; expected one of {sorted(SCHEMA[section])}")
    kind = SCHEMA[section][key][0]
    try:
        return TYPES[kind](raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}field {section}.{key}: cannot read {raw!r} as {kind} ({e})") from None


def parse(text: str, source: str = "<string>") -> Config:
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    cp.optionxform = str  # keys are case sensitive (R vs r)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}".replace("\n", " ")) from None
    lines = _line_numbers(text)
    vals = defaults()
    for section in cp.sections():
        for key, raw in cp.items(section):
            ln = lines.get((section, key), lines.get((section, None), "?"))
            vals.setdefault(section, {})
            vals[section][key] = coerce(section, key, raw, where=f"{source}:{ln}: ")
    return Config(vals, source)


def load(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse(text, str(path))


def override(cfg: Config, section: str, key: str, raw, flag: str) -> None:
    cfg.values[section][key] = coerce(section, key, raw, where=f"option {flag}: ")
