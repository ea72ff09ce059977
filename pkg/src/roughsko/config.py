"""Experiment configuration: an INI-style file of ``key = value`` lines under section headers.

Grammar (``;`` or ``#`` start comments; lists are comma separated)::

    [run]     seed, samples, chunk
    [model]   kind (bm | fbm | custom), hurst, T, d, table, rho
    [grid]    fine, coarse, min_ratio_exponent
    [field]   kind (zero | constant | linear | rotation | tanh-bounded), e,
              A, b, C, scale, coef_seed, y0
    [conversion]   p, corr_method
    [isometry]     integrand (rde | terminal), coarse, fine
    [second_level] coarse
    [cm]      t, s, grid
    [output]  format (csv | binary | both), dir
"""
import configparser
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = {
    "run": {"seed", "samples", "chunk"},
    "model": {"kind", "hurst", "T", "d", "table", "rho"},
    "grid": {"fine", "coarse", "min_ratio_exponent"},
    "field": {"kind", "e", "A", "b", "C", "scale", "coef_seed", "y0"},
    "conversion": {"p", "corr_method"},
    "isometry": {"integrand", "coarse", "fine"},
    "second_level": {"coarse"},
    "cm": {"t", "s", "grid"},
    "output": {"format", "dir"},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str = "bm"
    hurst: float = 0.5
    T: float = 1.0
    d: int = 2
    e: int = 2
    table: str = None
    rho: float = None
    field_kind: str = "tanh-bounded"
    field_params: dict = field(default_factory=dict)
    y0: tuple = None
    fine: int = 10
    coarse: tuple = (4, 5, 6)
    min_ratio_exponent: int = 4
    samples: int = 10
    seed: int = 0
    chunk: int = 25
    p: float = None
    corr_method: str = "auto"
    iso_integrand: str = "rde"
    iso_coarse: int = 5
    iso_fine: int = None
    second_level_coarse: tuple = None
    cm_t: float = 0.5
    cm_s: float = 0.3
    cm_grid: int = 8
    out_format: str = "csv"
    out_dir: str = "out"
    source: str = ""
    sha256: str = ""
    echo: dict = field(default_factory=dict)


class _Reader:
    def __init__(self, path, parser, lines):
        self.path, self.cp, self.lines = path, parser, lines

    def err(self, section, key, msg):
        line = self.lines.get((section, key.lower()), self.lines.get((section, None), 0))
        return ConfigError(f"{self.path}:{line}: [{section}] {key}: {msg}")

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def raw(self, section, key):
        return self.cp.get(section, key).strip()

    def get(self, section, key, conv, default):
        if not self.has(section, key):
            return default
        text = self.raw(section, key)
        try:
            return conv(text)
        except (ValueError, TypeError) as exc:
            raise self.err(section, key, f"cannot parse {text!r} ({exc})") from None


def _floats(text):
    return tuple(float(v) for v in text.replace("\n", ",").split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.replace("\n", ",").split(",") if v.strip())


def _line_map(text):
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = re.match(r"\s*([A-Za-z0-9_]+)\s*[=:]", line)
        if m and section is not None:
            lines[(section, m.group(1).lower())] = no
    return lines


def parse_config(text, path="<config>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: expected a [section] header before {exc.line.strip()!r}") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}: cannot parse line {line.strip()!r} (expected key = value)") from None
    lines = _line_map(text)
    r = _Reader(path, cp, lines)
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{lines.get((section, None), 0)}: unknown section [{section}]")
        for key in cp.options(section):
            if key not in SCHEMA[section]:
                raise r.err(section, key, "unknown key")

    c = ExperimentConfig()
    c.seed = r.get("run", "seed", int, 0)
    if not 0 <= c.seed < 2 ** 64:
        raise r.err("run", "seed", "must be an unsigned 64-bit integer")
    c.samples = r.get("run", "samples", int, c.samples)
    c.chunk = r.get("run", "chunk", int, c.chunk)
    if c.samples < 1:
        raise r.err("run", "samples", "must be >= 1")
    if c.chunk < 1:
        raise r.err("run", "chunk", "must be >= 1")

    c.model = r.get("model", "kind", str.lower, c.model)
    if c.model not in ("bm", "fbm", "custom"):
        raise r.err("model", "kind", f"expected bm, fbm or custom, got {c.model!r}")
    c.hurst = r.get("model", "hurst", float, 0.5 if c.model != "fbm" else None)
    if c.model == "fbm":
        if c.hurst is None:
            raise r.err("model", "kind", "fbm needs hurst")
        if not 1 / 3 < c.hurst <= 1:
            raise r.err("model", "hurst", "must lie in (1/3, 1]")
    c.T = r.get("model", "T", float, c.T)
    if not c.T > 0:
        raise r.err("model", "T", "must be positive")
    c.d = r.get("model", "d", int, c.d)
    if c.d < 1:
        raise r.err("model", "d", "must be >= 1")
    c.table = r.get("model", "table", str, None)
    c.rho = r.get("model", "rho", float, None)
    if c.model == "custom" and not c.table:
        raise r.err("model", "kind", "custom model needs a covariance table file")

    c.fine = r.get("grid", "fine", int, c.fine)
    c.coarse = r.get("grid", "coarse", _ints, c.coarse)
    c.min_ratio_exponent = r.get("grid", "min_ratio_exponent", int, c.min_ratio_exponent)
    if not c.coarse:
        raise r.err("grid", "coarse", "needs at least one exponent")
    if min(c.coarse) < 0:
        raise r.err("grid", "coarse", "exponents must be >= 0")
    if c.fine < max(c.coarse) + c.min_ratio_exponent:
        raise r.err("grid", "fine", f"fine exponent {c.fine} must be >= max(coarse) + "
                    f"{c.min_ratio_exponent} = {max(c.coarse) + c.min_ratio_exponent}")
    if c.fine > 16:
        raise r.err("grid", "fine", "fine exponents above 16 are not supported")

    c.field_kind = r.get("field", "kind", str.lower, c.field_kind)
    if c.field_kind not in ("zero", "constant", "linear", "rotation", "tanh-bounded"):
        raise r.err("field", "kind", f"unknown vector field {c.field_kind!r}")
    c.e = r.get("field", "e", int, c.d)
    for key in ("A", "b", "C"):
        if r.has("field", key):
            c.field_params[key] = r.get("field", key, _floats, None)
    for key in ("scale",):
        if r.has("field", key):
            c.field_params[key] = r.get("field", key, float, None)
    if r.has("field", "coef_seed"):
        c.field_params["coef_seed"] = r.get("field", "coef_seed", int, None)
    c.y0 = r.get("field", "y0", _floats, (0.0,) * c.e)
    if len(c.y0) != c.e:
        raise r.err("field", "y0", f"needs {c.e} numbers, got {len(c.y0)}")

    p = r.get("conversion", "p", str, "auto")
    if p != "auto":
        try:
            c.p = float(p)
        except ValueError:
            raise r.err("conversion", "p", f"expected a number or auto, got {p!r}") from None
        if not 1 <= c.p < 3:
            raise r.err("conversion", "p", "must lie in [1, 3)")
    c.corr_method = r.get("conversion", "corr_method", str.lower, c.corr_method)
    if c.corr_method not in ("auto", "fft", "dense"):
        raise r.err("conversion", "corr_method", "expected auto, fft or dense")

    c.iso_integrand = r.get("isometry", "integrand", str.lower, c.iso_integrand)
    if c.iso_integrand not in ("rde", "terminal"):
        raise r.err("isometry", "integrand", "expected rde or terminal")
    c.iso_coarse = r.get("isometry", "coarse", int, c.iso_coarse)
    if c.iso_coarse > 7:
        raise r.err("isometry", "coarse", "isometry grids are limited to 2^7 intervals")
    c.iso_fine = r.get("isometry", "fine", int, None)
    c.second_level_coarse = r.get("second_level", "coarse", _ints, None)

    c.cm_t = r.get("cm", "t", float, c.cm_t)
    c.cm_s = r.get("cm", "s", float, c.cm_s)
    c.cm_grid = r.get("cm", "grid", int, c.cm_grid)
    for key, val in (("t", c.cm_t), ("s", c.cm_s)):
        if not 0 <= val <= c.T:
            raise r.err("cm", key, f"must lie in [0, {c.T}]")

    c.out_format = r.get("output", "format", str.lower, c.out_format)
    if c.out_format not in ("csv", "binary", "both"):
        raise r.err("output", "format", "expected csv, binary or both")
    c.out_dir = r.get("output", "dir", str, c.out_dir)

    c.source = str(path)
    c.sha256 = hashlib.sha256(text.encode()).hexdigest()
    c.echo = {s: dict(cp.items(s)) for s in cp.sections()}
    return c


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config ({exc.strerror})") from None
    cfg = parse_config(text, path)
    if cfg.table and not Path(cfg.table).is_absolute():
        cfg.table = str(path.parent / cfg.table)
    return cfg


def build_model(cfg):
    from .gaussian import BrownianMotion, FractionalBM, table_covariance
    if cfg.model == "bm":
        return BrownianMotion(cfg.T)
    if cfg.model == "fbm":
        return FractionalBM(cfg.hurst, cfg.T)
    table = np.loadtxt(cfg.table, delimiter=",", comments="#")
    n = table.shape[0] - 1
    model = table_covariance(cfg.T * np.arange(n + 1) / n, table, cfg.T)
    model._rho = cfg.rho
    return model


def build_field(cfg):
    from .rde import builtin_field
    return builtin_field(cfg.field_kind, cfg.e, cfg.d, **cfg.field_params)
