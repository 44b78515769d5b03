"""Sectioned key=value experiment configs with a strict schema.

Every key must be declared below; unknown sections or keys, bad values and
missing files are all reported (with line numbers where possible) before
any computation starts.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


def _float(v: str) -> float:
    x = float(v)
    if math.isnan(x):
        raise ValueError("nan is not allowed")
    return x


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _list(conv):
    def parse(v: str):
        items = [p.strip() for p in v.replace(";", ",").split(",")]
        return [conv(p) for p in items if p]
    return parse


def _choice(*options):
    def parse(v: str):
        t = v.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "model": {
        "n": (_list(_int), [4]),
        "kind": (_choice("ferromagnetic", "frustrated"), "ferromagnetic"),
        "flipped_edge": (_int, 0),
        "chain_file": (str, ""),
    },
    "schedule": {
        "source": (str, "default"),
    },
    "protocol": {
        "direction": (_choice("forward", "reverse"), "forward"),
        "s_p": (_list(_float), [0.2]),
        "t_p": (_float, 2000.0),
        "rate_i": (_float, 1.0),
        "rates": (_list(_float), [1.0]),
        "n_a": (_int, 1),
        "hardware_limits": (_bool, False),
    },
    "solver": {
        "method": (_choice("ed", "fermion", "qmc", "ame"), "ed"),
        "s_grid": (_list(_float), [0.2]),
        "temperatures": (_list(_float), [12.0]),
        "slices": (_int, 0),
        "therm_sweeps": (_int, 500),
        "measure_sweeps": (_int, 5000),
        "bins": (_int, 32),
        "trotter_step": (_float, 0.05),
        "rtol": (_float, 1e-5),
        "atol": (_float, 1e-9),
        "pause_tol": (_float, 1e-6),
        "closed": (_bool, False),
        "epsilon": (_float, 0.1),
        "rate_lo": (_float, 1.0),
        "rate_hi": (_float, 1e9),
        "record_points": (_int, 201),
    },
    "bath": {
        "temperature": (_float, 12.0),
        "coupling": (_float, 1e-4),
        "cutoff": (_float, 8.0 * math.pi),
    },
    "stats": {
        "gauges": (_int, 100),
        "shots": (_int, 1500),
        "resamples": (_int, 10_000),
        "level": (_float, 0.95),
    },
    "output": {
        "directory": (str, "out"),
        "formats": (_list(str), ["csv"]),
    },
    "run": {
        "seed": (_int, 0),
    },
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str = ""
    text: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _line_of(text: str, section: str, key: str | None) -> int | None:
    cur = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None:
            name = line.split("=", 1)[0].split(":", 1)[0].strip().lower()
            if name == key:
                return no
    return None


def parse_config(text: str, source: str = "<config>", base_dir: str | os.PathLike | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       default_section="__none__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    errors = []

    def where(section, key=None):
        no = _line_of(text, section, key)
        return f"{source}:{no}" if no else source

    values = {sec: {k: default for k, (_, default) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            errors.append(f"{where(sec)}: unknown section [{sec}]")
            continue
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                errors.append(f"{where(sec, key)}: unknown key '{key}' in [{sec}]")
                continue
            conv, _ = SCHEMA[sec][key]
            try:
                values[sec][key] = conv(raw)
            except ValueError as exc:
                errors.append(f"{where(sec, key)}: [{sec}] {key} = {raw!r}: {exc}")
    if errors:
        raise ConfigError(errors)

    base = Path(base_dir) if base_dir is not None else Path(".")
    for sec, key in (("schedule", "source"), ("model", "chain_file")):
        v = values[sec][key]
        if v and not (sec == "schedule" and v == "default"):
            p = Path(v)
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                errors.append(f"{where(sec, key)}: [{sec}] {key}: file not found: {v}")
            values[sec][key] = str(p)

    errors += [f"{where(sec, key)}: {msg}" for sec, key, msg in _check_ranges(values)]
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(values, source, text)


def _check_ranges(v):
    m, p, s, b, st = v["model"], v["protocol"], v["solver"], v["bath"], v["stats"]
    if not m["n"]:
        yield "model", "n", "n list is empty"
    if any(n < 1 for n in m["n"]):
        yield "model", "n", "n must be positive"
    if any(not 0.0 <= x <= 1.0 for x in p["s_p"]):
        yield "protocol", "s_p", "s_p values must lie in [0, 1]"
    if p["t_p"] < 0:
        yield "protocol", "t_p", "t_p must be >= 0"
    if not p["rate_i"] > 0:
        yield "protocol", "rate_i", "rate_i must be positive"
    if any(not r > 0 for r in p["rates"]):
        yield "protocol", "rates", "rates must be positive"
    if p["n_a"] < 1:
        yield "protocol", "n_a", "n_a must be >= 1"
    if any(not 0.0 <= x <= 1.0 for x in s["s_grid"]):
        yield "solver", "s_grid", "s_grid values must lie in [0, 1]"
    if any(not t > 0 or math.isinf(t) for t in s["temperatures"]):
        yield "solver", "temperatures", "temperatures must be positive and finite"
    if s["slices"] != 0 and s["slices"] < 2:
        yield "solver", "slices", "slices must be 0 (automatic) or >= 2"
    if s["bins"] < 16:
        yield "solver", "bins", "bins must be >= 16"
    if s["measure_sweeps"] < 2 * s["bins"]:
        yield "solver", "measure_sweeps", "measure_sweeps must be at least twice bins"
    if s["therm_sweeps"] < 0:
        yield "solver", "therm_sweeps", "therm_sweeps must be >= 0"
    for key in ("rtol", "atol"):
        if not 0.0 < s[key] <= 1e-3:
            yield "solver", key, f"{key} must lie in (0, 1e-3]"
    if not s["epsilon"] > 0:
        yield "solver", "epsilon", "epsilon must be positive"
    if not 0 < s["rate_lo"] < s["rate_hi"]:
        yield "solver", "rate_lo", "need 0 < rate_lo < rate_hi"
    if s["record_points"] < 2:
        yield "solver", "record_points", "record_points must be >= 2"
    if not b["temperature"] > 0 or math.isinf(b["temperature"]):
        yield "bath", "temperature", "bath temperature must be positive and finite"
    if b["coupling"] < 0:
        yield "bath", "coupling", "coupling must be >= 0"
    if not b["cutoff"] > 0:
        yield "bath", "cutoff", "cutoff must be positive"
    if st["gauges"] < 2:
        yield "stats", "gauges", "need at least 2 gauges"
    if st["shots"] < 1:
        yield "stats", "shots", "shots must be >= 1"
    if st["resamples"] < 1:
        yield "stats", "resamples", "resamples must be >= 1"
    if not 0 < st["level"] < 1:
        yield "stats", "level", "level must lie in (0, 1)"
    if any(f != "csv" for f in v["output"]["formats"]):
        yield "output", "formats", "only csv output is supported"


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), p.parent)
