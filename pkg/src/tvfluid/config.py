"""Flat ``key = value`` scenario files.

Lines hold one ``key = value`` pair; ``#`` starts a comment; values may be
quoted.  Nested concepts use dotted keys, e.g.::

    grid.n = 64
    material.regime = P3
    material.g = "concave_rational"
    material.g.a = 2.0
    solver.r = 0.1

Every key is validated on parsing and errors carry the line number and key.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .constitutive import PRESET_NAMES, MaterialFunction, MaterialModel, Regime, preset_model
from .errors import ConfigError
from .grid import BC, Grid
from .scenarios import PRESETS as INIT_PRESETS
from .solver import CflDt, FixedDt, SolverConfig

MATERIAL_FUNCTIONS = ("nu", "kappa", "delta", "g")

# short spellings accepted for the most common keys
ALIASES = {
    "n": "grid.n",
    "bc": "grid.bc",
    "regime": "material.regime",
    "c_v": "material.c_v",
    "epsilon": "solver.epsilon",
    "r": "solver.r",
    "T": "solver.T",
    "dt": "solver.dt",
    "stride": "output.stride",
}


def _positive(v):
    return v > 0


def _open_unit(v):
    return 0.0 < v < 1.0


# key -> (type, check, description of the valid range, default)
SCHEMA = {
    "grid.n": (int, lambda v: v >= 8 and v % 2 == 0, "an even integer >= 8", 64),
    "grid.bc": (str, lambda v: v in ("periodic", "walls"), "'periodic' or 'walls'", "periodic"),
    "material.regime": (str, lambda v: v in ("P1", "P2", "P3"), "one of P1, P2, P3", "P1"),
    "material.c_v": (float, _positive, "a positive number", 1.0),
    "material.C1": (float, _positive, "a positive number", 1.0),
    "material.C2": (float, _positive, "a positive number", 2.0),
    "solver.epsilon": (float, lambda v: 0.0 <= v < 1.0, "the range [0, 1)", 1e-3),
    "solver.r": (float, _open_unit, "the range (0, 1)", 0.1),
    "solver.dt_policy": (str, lambda v: v in ("cfl", "fixed"), "'cfl' or 'fixed'", "cfl"),
    "solver.safety": (float, _open_unit, "the range (0, 1)", 0.4),
    "solver.dt": (float, _positive, "a positive number", None),
    "solver.T": (float, lambda v: v >= 0, "a nonnegative number", 0.1),
    "solver.projection_tol": (float, _positive, "a positive number", 1e-10),
    "solver.temperature_path": (str, lambda v: v in ("auto", "theta", "energy"),
                                "'auto', 'theta' or 'energy'", "auto"),
    "solver.max_steps": (int, _positive, "a positive integer", None),
    "output.stride": (int, _positive, "a positive integer", 10),
    "output.dir": (str, lambda v: bool(v), "a nonempty path", "out"),
    "output.snapshots": (bool, None, "true or false", True),
    "output.pgm": (bool, None, "true or false", False),
    "init.preset": (str, lambda v: v in INIT_PRESETS, f"one of {sorted(INIT_PRESETS)}", "stationary"),
    "init.seed": (int, lambda v: v >= 0, "a nonnegative integer", 0),
    "init.amplitude": (float, lambda v: v >= 0, "a nonnegative number", None),
    "mms.grids": (list, lambda v: len(v) >= 3 and all(n >= 8 and n % 2 == 0 for n in v),
                  "at least three even grid sizes >= 8", [32, 64, 128]),
    "mms.T": (float, _positive, "a positive number", 0.01),
    "mms.a_v": (float, lambda v: v >= 0, "a nonnegative number", 0.1),
    "mms.a_theta": (float, lambda v: 0 <= v < 0.5, "the range [0, 0.5)", 0.3),
    "mms.a_F": (float, lambda v: 0 <= v < 0.3, "the range [0, 0.3)", 0.2),
    "mms.k": (int, lambda v: v >= 1, "a positive integer", 1),
    "mms.order_min": (float, None, "a number", 1.75),
    "mms.order_max": (float, None, "a number", 2.25),
    "mms.order_F_min": (float, None, "a number", 1.8),
    "galerkin.n_flow": (int, lambda v: v >= 1, "a positive integer", 8),
    "galerkin.m_temp": (int, lambda v: v >= 1, "a positive integer", 8),
    "galerkin.T": (float, _positive, "a positive number", 0.05),
    "galerkin.outputs": (int, lambda v: v >= 1, "a positive integer", 5),
    "galerkin.dt": (float, _positive, "a positive number", None),
    "galerkin.max_discrepancy": (float, _positive, "a positive number", 5e-3),
    "validate.sample_max": (float, _positive, "a positive number", 1e3),
    "validate.n_samples": (int, lambda v: v >= 2, "an integer >= 2", 2000),
}

_FN_KEY = re.compile(r"^(galerkin\.)?material\.(nu|kappa|delta|g)(\.(\w+))?$")


def _convert(kind, raw):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected true or false, got '{raw}'")
    if kind is int:
        val = float(raw)
        if not val.is_integer():
            raise ValueError(f"expected an integer, got '{raw}'")
        return int(val)
    if kind is float:
        val = float(raw)
        if not math.isfinite(val):
            raise ValueError(f"expected a finite number, got '{raw}'")
        return val
    if kind is list:
        return [_convert(int, part.strip()) for part in raw.split(",") if part.strip()]
    return raw


def _unquote(raw):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return raw


@dataclass
class SimConfig:
    values: Dict[str, object] = field(default_factory=dict)
    lines: Dict[str, int] = field(default_factory=dict)
    # (prefix, function) -> preset name; (prefix, function, param) -> value
    functions: Dict[Tuple[str, str], str] = field(default_factory=dict)
    params: Dict[Tuple[str, str], Dict[str, float]] = field(default_factory=dict)
    source: Optional[str] = None

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][3]

    def is_set(self, key):
        return key in self.values

    def error(self, key, message):
        return ConfigError(message, key=key, line=self.lines.get(key))

    # -- derived objects ------------------------------------------------

    def grid(self):
        return Grid(self["grid.n"], BC(self["grid.bc"]))

    def model(self, prefix=""):
        """Material model; ``prefix="galerkin."`` applies the Galerkin-side overrides."""
        regime = Regime(self["material.regime"])
        base = preset_model(regime, c_v=self["material.c_v"])
        fns = {}
        for name in MATERIAL_FUNCTIONS:
            preset = self.functions.get((prefix, name)) or self.functions.get(("", name))
            params = dict(self.params.get(("", name), {}))
            if prefix:
                params.update(self.params.get((prefix, name), {}))
            if preset is None and not params:
                fns[name] = getattr(base, name)
                continue
            preset = preset or getattr(base, name).name
            key = f"{prefix}material.{name}"
            try:
                fns[name] = MaterialFunction.make(preset, **params)
            except ValueError as exc:
                raise self.error(key, str(exc)) from None
        return MaterialModel(
            fns["nu"], fns["kappa"], fns["delta"], fns["g"], regime,
            self["material.c_v"], self["material.C1"], self["material.C2"],
        )

    def solver_config(self):
        if self["solver.dt_policy"] == "fixed":
            if not self.is_set("solver.dt"):
                raise self.error("solver.dt_policy", "a fixed step needs solver.dt")
            policy = FixedDt(self["solver.dt"])
        else:
            policy = CflDt(self["solver.safety"])
        return SolverConfig(
            epsilon=self["solver.epsilon"],
            r=self["solver.r"],
            dt_policy=policy,
            projection_tol=self["solver.projection_tol"],
            T=self["solver.T"],
            temperature_path=self["solver.temperature_path"],
        )

    def init_params(self):
        preset = self["init.preset"]
        params = {}
        if preset in ("random_smooth", "wide_theta"):
            params["seed"] = self["init.seed"]
        if self.is_set("init.amplitude"):
            if preset in ("stationary", "relaxation"):
                raise self.error("init.amplitude", f"preset '{preset}' takes no amplitude")
            params["amplitude"] = self["init.amplitude"]
        return params


def parse_config(text, source=None):
    """Parse and validate config text; raises ConfigError with line/key context."""
    cfg = SimConfig(source=source)
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got '{body}'", line=lineno)
        key, raw = (part.strip() for part in body.split("=", 1))
        key = ALIASES.get(key, key)
        raw = _unquote(raw)
        if not key:
            raise ConfigError("missing key", line=lineno)
        if key in cfg.lines:
            raise ConfigError(f"duplicate key (first set on line {cfg.lines[key]})", key=key, line=lineno)
        cfg.lines[key] = lineno
        m = _FN_KEY.match(key)
        if m:
            prefix = m.group(1) or ""
            name, param = m.group(2), m.group(4)
            if param is None:
                if raw not in PRESET_NAMES:
                    raise ConfigError(f"must be one of {list(PRESET_NAMES)}, got '{raw}'", key=key, line=lineno)
                cfg.functions[(prefix, name)] = raw
            else:
                try:
                    cfg.params.setdefault((prefix, name), {})[param] = _convert(float, raw)
                except ValueError as exc:
                    raise ConfigError(str(exc), key=key, line=lineno) from None
            continue
        if key.startswith("galerkin.material."):
            raise ConfigError("unknown Galerkin material key", key=key, line=lineno)
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key, line=lineno)
        kind, check, desc, _ = SCHEMA[key]
        try:
            value = _convert(kind, raw)
        except ValueError as exc:
            raise ConfigError(f"{exc}; must be {desc}", key=key, line=lineno) from None
        if check is not None and not check(value):
            raise ConfigError(f"must be {_range_phrase(desc)}, got {raw}", key=key, line=lineno)
        cfg.values[key] = value
    # cross-key checks
    if cfg.is_set("solver.dt") and cfg["solver.dt_policy"] != "fixed":
        raise cfg.error("solver.dt", "solver.dt needs solver.dt_policy = fixed")
    return cfg


def _range_phrase(desc):
    return f"in {desc}" if desc.startswith("the range") else desc


def _strip_comment(line):
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc.strerror}") from None
    return parse_config(text, source=str(path))


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


def dump_config(cfg) -> List[str]:
    """Canonical lines of the explicitly set keys (for run metadata)."""
    out = [f"{k} = {format_value(v)}" for k, v in sorted(cfg.values.items())]
    for (prefix, name), preset in sorted(cfg.functions.items()):
        out.append(f"{prefix}material.{name} = {preset}")
    for (prefix, name), params in sorted(cfg.params.items()):
        for p, v in sorted(params.items()):
            out.append(f"{prefix}material.{name}.{p} = {v!r}")
    return out
