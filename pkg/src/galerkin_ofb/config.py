"""Run configuration: an INI file with typed sections.

Example::

    [domain]
    width = 1.0
    height = 1.0
    controlled_edge = left

    [model]
    nonlinearity = a*sin(z)+b*z
    a = 50
    b = 50
    L = 100
    z0 = cos(x)

    [design]
    M_modes = 120
    N = 6
    m = 120

    [sensors]
    vertical_lines = 0.5
    horizontal_lines =

    [observer]
    M_sub = 40
    eps0 = projection

    [integrator]
    method = BDF
    rtol = 1e-6
    atol = 1e-9
    t_end = 1.0
    samples = 201

    [output]
    out_dir = out
    seed = 0

Every key is optional; missing keys take the defaults below, which describe
the unit-square scenario with a single measurement line.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from .errors import ConfigError

OUT_DIR_ENV = "GALERKIN_OFB_OUT"

_NL_PARAM_KEYS = ("a", "b")


@dataclass
class RunConfig:
    width: float = 1.0
    height: float = 1.0
    controlled_edge: str = "left"
    nonlinearity: str = "a*sin(z)+b*z"
    nl_params: dict = field(default_factory=lambda: {"a": 50.0, "b": 50.0})
    L: float | None = 100.0
    z0: str = "cos(x)"
    z0_amplitude: float = 1.0
    M_modes: int = 120
    N: int = 6
    m: float = 120.0
    tail_count: int | None = None
    vertical_lines: tuple = (0.5,)
    horizontal_lines: tuple = ()
    M_sub: int = 40
    eps0: str = "projection"
    method: str = "BDF"
    rtol: float = 1e-6
    atol: float = 1e-9
    t_end: float = 1.0
    samples: int = 201
    oversample: int = 4
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("width", "height", "m", "rtol", "atol", "t_end", "z0_amplitude"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        for name in ("M_modes", "N", "M_sub", "samples", "oversample"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.samples < 2:
            raise ConfigError("samples must be at least 2")
        if self.tail_count is not None and self.tail_count < 1:
            raise ConfigError("tail_count must be positive")
        if self.L is not None and self.L < 0:
            raise ConfigError("L must be non-negative")
        if self.method not in ("BDF", "Radau"):
            raise ConfigError(f"method must be BDF or Radau, got {self.method!r}")
        if self.eps0 not in ("projection", "zero"):
            raise ConfigError(f"eps0 must be projection or zero, got {self.eps0!r}")
        if self.controlled_edge not in ("left", "right", "bottom", "top"):
            raise ConfigError(f"unknown controlled edge {self.controlled_edge!r}")
        self.vertical_lines = tuple(float(v) for v in self.vertical_lines)
        self.horizontal_lines = tuple(float(v) for v in self.horizontal_lines)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        return d


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _section_get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "" and conv is not _floats:
        return default
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _opt_int(text):
    return None if text.lower() in ("", "none", "auto") else int(text)


def _opt_float(text):
    return None if text.lower() in ("", "none", "auto") else float(text)


def load_config(path):
    """Parse an INI file into a :class:`RunConfig`.

    The output directory may be overridden by the ``GALERKIN_OFB_OUT``
    environment variable.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    known = {"domain", "model", "design", "sensors", "observer", "integrator", "output"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    d = RunConfig.__dataclass_fields__
    kw = {}

    def take(section, key, conv, attr=None):
        attr = attr or key
        f = d[attr]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        kw[attr] = _section_get(cp, section, key, conv, default)

    take("domain", "width", float)
    take("domain", "height", float)
    take("domain", "controlled_edge", str)
    take("model", "nonlinearity", str)
    take("model", "L", _opt_float)
    take("model", "z0", str)
    take("model", "z0_amplitude", float)
    if cp.has_section("model"):
        params = {k: float(cp.get("model", k)) for k in _NL_PARAM_KEYS if cp.has_option("model", k)}
        if params or cp.has_option("model", "nonlinearity"):
            kw["nl_params"] = params
    take("design", "M_modes", int)
    take("design", "N", int)
    take("design", "m", float)
    take("design", "tail_count", _opt_int)
    take("sensors", "vertical_lines", _floats)
    take("sensors", "horizontal_lines", _floats)
    take("observer", "M_sub", int)
    take("observer", "eps0", str)
    take("integrator", "method", str)
    take("integrator", "rtol", float)
    take("integrator", "atol", float)
    take("integrator", "t_end", float)
    take("integrator", "samples", int)
    take("integrator", "oversample", int)
    take("output", "out_dir", str)
    take("output", "seed", int)
    if os.environ.get(OUT_DIR_ENV):
        kw["out_dir"] = os.environ[OUT_DIR_ENV]
    return RunConfig(**kw)


def dump_config(cfg, path):
    cp = configparser.ConfigParser()
    cp.optionxform = str

    def fmt(v):
        if isinstance(v, tuple):
            return " ".join(repr(x) for x in v)
        return "" if v is None else str(v)

    cp["domain"] = {k: fmt(getattr(cfg, k)) for k in ("width", "height", "controlled_edge")}
    model = {k: fmt(getattr(cfg, k)) for k in ("nonlinearity", "L", "z0", "z0_amplitude")}
    model.update({k: fmt(v) for k, v in cfg.nl_params.items()})
    cp["model"] = model
    cp["design"] = {k: fmt(getattr(cfg, k)) for k in ("M_modes", "N", "m", "tail_count")}
    cp["sensors"] = {k: fmt(getattr(cfg, k)) for k in ("vertical_lines", "horizontal_lines")}
    cp["observer"] = {k: fmt(getattr(cfg, k)) for k in ("M_sub", "eps0")}
    cp["integrator"] = {k: fmt(getattr(cfg, k))
                        for k in ("method", "rtol", "atol", "t_end", "samples", "oversample")}
    cp["output"] = {k: fmt(getattr(cfg, k)) for k in ("out_dir", "seed")}
    with open(path, "w") as fh:
        cp.write(fh)
