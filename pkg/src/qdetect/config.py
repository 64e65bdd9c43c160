"""
Experiment configuration files.

Configs are INI files read with :mod:`configparser`. Every file must state
``schema_version`` in its ``[experiment]`` section; all other keys are
optional and default to the standard parameter set. Unknown sections or
keys and malformed values raise :class:`ConfigError` naming the file line.

Lists are comma separated. The background correlation time may be given
directly (``background_sigma_t``) or in units of the coupling
(``background_j_sigma_t = J * sigma_t``); likewise for the crossover scan.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .optimize import OptimizerConfig
from .scenario import BAND_CENTER, BAND_HALF_WIDTH, DT, NOISE_POWER, SNR, SensingScenario
from .spectra import Lorentzian, NoiseModel, White, WhiteCutoff

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "SCHEMA_VERSION", "SCHEMES"]

SCHEMA_VERSION = 1
SCHEMES = ("spin_lock", "cpmg", "ramsey", "eigen_opt", "gradient_opt")
MODELS = ("white", "lorentzian", "white_cutoff")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


def _float(s: str) -> float:
    v = float(s)
    if not np.isfinite(v):
        raise ValueError("not a finite number")
    return v


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _list(item: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(s: str) -> list:
        parts = [p.strip() for p in s.split(",")]
        return [item(p) for p in parts if p]
    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _schemes(s: str) -> list[str]:
    return _list(_choice(*SCHEMES))(s)


# section -> key -> (parser, default); None means "derived or unset"
SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "experiment": {
        "schema_version": (_int, None),
        "name": (str, "experiment"),
    },
    "scenario": {
        "noise_power": (_float, NOISE_POWER),
        "snr": (_float, SNR),
        "background": (_choice(*MODELS), "white"),
        "background_sigma_t": (_float, None),
        "background_j_sigma_t": (_float, None),
        "background_omega0": (_float, None),
        "background_delta_omega": (_float, None),
        "signal": (_choice("lorentzian", "white_cutoff"), "white_cutoff"),
        "signal_omega0": (_float, BAND_CENTER),
        "signal_delta_omega": (_float, BAND_HALF_WIDTH),
        "signal_sigma_t": (_float, None),
    },
    "grid": {
        "dt": (_float, DT),
        "t_min": (_float, None),
        "t_max": (_float, 10.0),
        "n_points": (_int, 0),
    },
    "control": {
        "scheme": (_choice(*SCHEMES), "spin_lock"),
        "omega0": (_float, None),
        "tau_cpmg": (_float, None),
        "omega_max": (_float, None),
        "omega_sweep": (_list(_float), []),
    },
    "optimizer": {
        "learning_rate": (_float, 1e-2),
        "beta1": (_float, 0.9),
        "beta2": (_float, 0.999),
        "max_iter": (_int, 5000),
        "tol": (_float, 1e-8),
        "patience": (_int, 100),
        "seed": (_int, 0),
    },
    "simulation": {
        "n_real": (_int, 5000),
        "seed": (_int, 0),
        "n_times": (_int, 10),
        "t_max": (_float, None),
        "schemes": (_schemes, None),
        "batch_size": (_int, 500),
    },
    "detection": {
        "source": (_choice("mc", "sca"), "mc"),
        "schemes": (_schemes, None),
        "n_list": (_list(_int), [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]),
    },
    "crossover": {
        "omega0_list": (_list(_float), [5.0, 10.0, 20.0]),
        "sigma_t_list": (_list(_float), None),
        "j_sigma_t_list": (_list(_float), None),
        "t_max": (_float, 40.0),
        "optimize": (_bool, False),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved configuration: every key of :data:`SCHEMA` has a value."""

    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def scenario(self) -> SensingScenario:
        sc = self["scenario"]
        return SensingScenario(sc["noise_power"], sc["snr"], _background(sc), _signal(sc))

    def optimizer(self) -> OptimizerConfig:
        o = self["optimizer"]
        return OptimizerConfig(learning_rate=o["learning_rate"], beta1=o["beta1"], beta2=o["beta2"],
                               max_iter=o["max_iter"], tol=o["tol"], patience=o["patience"],
                               seed=o["seed"])

    def with_seed(self, seed: int) -> "ExperimentConfig":
        values = {s: dict(v) for s, v in self.values.items()}
        values["simulation"]["seed"] = seed
        values["optimizer"]["seed"] = seed
        return ExperimentConfig(values)

    def to_ini(self) -> str:
        """Resolved config as INI text; parsing it back yields an equal config."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in self.values.items():
            parser[section] = {k: _format(v) for k, v in keys.items() if v is not None}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue().rstrip() + "\n"

    def to_dict(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _background(sc: dict) -> NoiseModel:
    kind = sc["background"]
    if kind == "white":
        return White()
    if kind == "lorentzian":
        return Lorentzian(sc["background_sigma_t"])
    return WhiteCutoff(sc["background_omega0"], sc["background_delta_omega"])


def _signal(sc: dict) -> NoiseModel:
    if sc["signal"] == "lorentzian":
        return Lorentzian(sc["signal_sigma_t"])
    return WhiteCutoff(sc["signal_omega0"], sc["signal_delta_omega"])


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to the line where the key is set."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines[(section, "")] = no
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None and not raw[:1].isspace():
            lines[(section, m.group(1).strip().lower())] = no
    return lines


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate INI ``text``; ``source`` labels error messages."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    where = _line_numbers(text)

    def fail(section, key, msg):
        line = where.get((section, key or ""))
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: [{section}] {key + ': ' if key else ''}{msg}")

    for section in parser.sections():
        if section not in SCHEMA:
            fail(section, None, f"unknown section; expected one of {', '.join(SCHEMA)}")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                fail(section, key, "unknown key")
    if not parser.has_option("experiment", "schema_version"):
        raise ConfigError(f"{source}: [experiment] schema_version is required")

    values: dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[section][key] = parse(raw)
                except ValueError as exc:
                    fail(section, key, f"invalid value {raw!r} ({exc})")
            else:
                values[section][key] = list(default) if isinstance(default, list) else default

    if values["experiment"]["schema_version"] != SCHEMA_VERSION:
        fail("experiment", "schema_version",
             f"unsupported version {values['experiment']['schema_version']}; expected {SCHEMA_VERSION}")
    _resolve(values, fail)
    return ExperimentConfig(values)


def _resolve(v: dict, fail) -> None:
    """Fill derived defaults and check cross-key constraints."""
    sc = v["scenario"]
    if not sc["noise_power"] > 0:
        fail("scenario", "noise_power", "must be positive")
    if not sc["snr"] > 0:
        fail("scenario", "snr", "must be positive")
    j = float(np.sqrt(sc["noise_power"]))
    if sc["background"] == "lorentzian":
        if sc["background_sigma_t"] is None and sc["background_j_sigma_t"] is None:
            fail("scenario", "background", "lorentzian needs background_sigma_t or background_j_sigma_t")
        if sc["background_sigma_t"] is not None and sc["background_j_sigma_t"] is not None:
            fail("scenario", "background_j_sigma_t", "give either background_sigma_t or background_j_sigma_t")
        if sc["background_sigma_t"] is None:
            sc["background_sigma_t"] = sc["background_j_sigma_t"] / j
        sc["background_j_sigma_t"] = None
        if not sc["background_sigma_t"] > 0:
            fail("scenario", "background_sigma_t", "must be positive")
    elif sc["background"] == "white_cutoff":
        if sc["background_omega0"] is None or sc["background_delta_omega"] is None:
            fail("scenario", "background", "white_cutoff needs background_omega0 and background_delta_omega")
    if sc["signal"] == "lorentzian" and not (sc["signal_sigma_t"] or 0) > 0:
        fail("scenario", "signal_sigma_t", "lorentzian signal needs a positive signal_sigma_t")
    if sc["signal"] == "white_cutoff" and not sc["signal_delta_omega"] > 0:
        fail("scenario", "signal_delta_omega", "must be positive")

    g = v["grid"]
    if not g["dt"] > 0:
        fail("grid", "dt", "must be positive")
    if g["t_min"] is None:
        g["t_min"] = g["dt"]
    if not g["t_max"] >= g["t_min"] or g["t_max"] < g["dt"]:
        fail("grid", "t_max", f"empty time range [{g['t_min']}, {g['t_max']}]")
    if g["n_points"] < 0:
        fail("grid", "n_points", "must be non-negative")

    c = v["control"]
    if c["omega0"] is None:
        c["omega0"] = sc["signal_omega0"] if sc["signal"] == "white_cutoff" else BAND_CENTER
    if c["tau_cpmg"] is None:
        c["tau_cpmg"] = float(np.pi / c["omega0"]) if c["omega0"] > 0 else None
    if c["omega_max"] is not None and not c["omega_max"] > 0:
        fail("control", "omega_max", "must be positive")

    o = v["optimizer"]
    try:
        OptimizerConfig(learning_rate=o["learning_rate"], beta1=o["beta1"], beta2=o["beta2"],
                        max_iter=o["max_iter"])
    except ValueError as exc:
        fail("optimizer", None, str(exc))

    s = v["simulation"]
    if s["n_real"] < 1:
        fail("simulation", "n_real", "need at least one realization")
    if s["n_times"] < 1:
        fail("simulation", "n_times", "must be at least 1")
    if s["batch_size"] < 1:
        fail("simulation", "batch_size", "must be at least 1")
    if s["t_max"] is None:
        s["t_max"] = g["t_max"]
    if s["schemes"] is None:
        s["schemes"] = [c["scheme"]]

    d = v["detection"]
    if d["schemes"] is None:
        d["schemes"] = list(s["schemes"])
    if not d["n_list"] or any(n < 1 for n in d["n_list"]):
        fail("detection", "n_list", "needs positive shot counts")
    if any(b <= a for a, b in zip(d["n_list"], d["n_list"][1:])):
        fail("detection", "n_list", "must be strictly ascending")

    x = v["crossover"]
    if x["sigma_t_list"] is not None and x["j_sigma_t_list"] is not None:
        fail("crossover", "j_sigma_t_list", "give either sigma_t_list or j_sigma_t_list")
    if x["j_sigma_t_list"] is not None:
        x["sigma_t_list"] = [val / j for val in x["j_sigma_t_list"]]
        x["j_sigma_t_list"] = None
    if x["sigma_t_list"] is None:
        x["sigma_t_list"] = [float(val) for val in np.geomspace(0.01, 3.0, 16)]
    if not x["sigma_t_list"]:
        fail("crossover", "sigma_t_list", "empty correlation-time list")
    if not x["omega0_list"]:
        fail("crossover", "omega0_list", "empty band-center list")
    for key in ("sigma_t_list", "omega0_list"):
        vals = x[key]
        if vals != sorted(vals) or any(val <= 0 for val in vals):
            fail("crossover", key, "must be positive and ascending")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))
