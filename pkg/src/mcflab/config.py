"""Scenario configuration: a flat INI key-value file with typed, documented keys.

Every section maps onto a dataclass below; unknown sections or keys are
rejected with the offending name.  Any key can be overridden from the
environment as ``MCFLAB_<SECTION>__<KEY>`` (upper case), e.g.
``MCFLAB_GRID__H=0.01``.

Shapes are written as constructor calls, ``torus(major=1.0, minor=0.35)``,
and parsed through a restricted syntax tree: only the shape names, numeric
literals, tuples and unary minus are accepted, nothing is evaluated.
"""
from __future__ import annotations

import ast
import configparser
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .evolve import ConfigError, EvolveConfig
from .field import GridSpec
from .shapes import SHAPES, Shape, ShapeError

ENV_PREFIX = "MCFLAB_"


# ---------------------------------------------------------------------------
# shape expressions
# ---------------------------------------------------------------------------


def _literal(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _literal(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Tuple):
        return tuple(_literal(e) for e in node.elts)
    if isinstance(node, ast.Call):
        return _shape_call(node)
    raise ConfigError("shape.spec", f"unsupported expression {ast.dump(node)[:60]}")


_INT_ARGS = {"axis", "dim", "samples"}


def _shape_call(node: ast.Call) -> Shape:
    if not isinstance(node.func, ast.Name) or node.func.id not in SHAPES:
        raise ConfigError("shape.spec", f"unknown shape; expected one of {sorted(SHAPES)}")
    name = node.func.id
    if name == "union":
        if node.keywords:
            raise ConfigError("shape.spec", "union takes shapes as positional arguments")
        return SHAPES[name](tuple(_literal(a) for a in node.args))
    args = [_literal(a) for a in node.args]
    kw = {}
    for k in node.keywords:
        if k.arg is None:
            raise ConfigError("shape.spec", "** arguments are not allowed")
        v = _literal(k.value)
        kw[k.arg] = int(v) if k.arg in _INT_ARGS else v
    try:
        return SHAPES[name](*args, **kw)
    except TypeError as e:
        raise ConfigError("shape.spec", f"{name}: {e}") from None
    except ShapeError as e:
        raise ConfigError("shape.spec", f"{name}: {e}") from None


def parse_shape(text: str) -> Shape:
    """Build a shape from ``name(key=value, ...)`` without evaluating code."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as e:
        raise ConfigError("shape.spec", f"syntax error: {e.msg}") from None
    if not isinstance(tree.body, ast.Call):
        raise ConfigError("shape.spec", "expected a shape constructor call")
    return _shape_call(tree.body)


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------


@dataclass
class ScenarioSection:
    name: str = "scenario"
    description: str = ""


@dataclass
class ShapeSection:
    spec: str = "sphere(center=(0, 0), radius=0.8)"   # lengths in domain units


@dataclass
class GridSection:
    mode: str = "full"                 # full | axisymmetric
    lower: tuple = (-1.0, -1.0)        # length, box corner
    upper: tuple = (1.0, 1.0)          # length, box corner
    h: float = 1.0 / 128               # length, analysis grid spacing
    meridian_h: float = 0.0            # length, evolution spacing in (rho, z); 0 -> h
    meridian_rho: float = 0.0          # length, radial extent of the meridian; 0 -> box corner
    meridian_z: tuple = ()             # length, (z_lo, z_hi); z_lo = 0 mirrors across z = 0
    local_h: float = 0.0               # length, spacing of local re-samplings near singular points; 0 -> meridian_h


@dataclass
class EvolveSection:
    dt: Optional[float] = None         # time; unset -> 0.2 h^2 / n
    eps_reg: float = 1e-6              # multiple of h
    reinit_every: int = 5              # steps
    t_max: Optional[float] = None      # time; unset -> diagonal^2
    band: int = 8                      # cells
    reinit_tol: float = 1e-3           # multiple of h


@dataclass
class AnalysisSection:
    classify: bool = True
    lojasiewicz: bool = True
    clearing_out: bool = False
    flowlines: bool = True
    entropy: bool = False
    modulus: bool = True
    cylindrical_scale: bool = False
    set_fit: bool = True
    phi: float = 0.3                   # rad, cone half-angle
    eps: float = 0.05                  # dimensionless closeness
    clearing_m: float = 3.0            # dimensionless ball factor M
    clearing_t: tuple = (1e-4, 3e-4, 1e-3)   # time offsets above u(p)
    flowline_count: int = 8            # lines launched per analysed point
    flowline_radius: float = 0.0       # length, launch distance; 0 -> outer Lojasiewicz radius (16 local h)
    entropy_level: float = 0.0         # time before extinction at which the level set is sampled; 0 -> skip
    max_points: int = 4                # singular points given the full per-point analysis


@dataclass
class OutputSection:
    directory: str = "mcflab-out"
    emit_every: int = 0                # steps between level-function snapshots; 0 -> none
    vtk: bool = True
    csv: bool = True


@dataclass
class AcceptanceSection:
    criteria: tuple = ()               # acceptance criterion ids evaluated for this scenario


SECTIONS = {
    "scenario": ScenarioSection,
    "shape": ShapeSection,
    "grid": GridSection,
    "evolve": EvolveSection,
    "analysis": AnalysisSection,
    "output": OutputSection,
    "acceptance": AcceptanceSection,
}


@dataclass
class ScenarioConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    shape: ShapeSection = field(default_factory=ShapeSection)
    grid: GridSection = field(default_factory=GridSection)
    evolve: EvolveSection = field(default_factory=EvolveSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    output: OutputSection = field(default_factory=OutputSection)
    acceptance: AcceptanceSection = field(default_factory=AcceptanceSection)

    # derived objects -------------------------------------------------------

    def build_shape(self) -> Shape:
        return parse_shape(self.shape.spec)

    def build_grid(self) -> GridSpec:
        g = self.grid
        return GridSpec.from_spacing(g.lower, g.upper, g.h)

    def build_meridian(self) -> GridSpec:
        g = self.grid
        hm = g.meridian_h or g.h
        rho = g.meridian_rho or math.hypot(max(abs(g.lower[0]), abs(g.upper[0])), max(abs(g.lower[1]), abs(g.upper[1])))
        z = g.meridian_z or (g.lower[2], g.upper[2])
        cells = (int(math.ceil(rho / hm - 1e-9)), int(math.ceil((z[1] - z[0]) / hm - 1e-9)))
        return GridSpec((0.0, z[0]), (cells[0] * hm, z[0] + cells[1] * hm), cells)

    def build_evolve(self) -> EvolveConfig:
        e = self.evolve
        return EvolveConfig(dt=e.dt, eps_reg=e.eps_reg, reinit_every=e.reinit_every, t_max=e.t_max,
                            band=e.band, reinit_tol=e.reinit_tol)

    def validate(self) -> "ScenarioConfig":
        """Check every value; raises :class:`ConfigError` naming the key."""
        g = self.grid
        if g.mode not in ("full", "axisymmetric"):
            raise ConfigError("grid.mode", f"expected full or axisymmetric, got {g.mode!r}")
        if len(g.lower) != len(g.upper) or len(g.lower) not in (2, 3):
            raise ConfigError("grid.lower", "lower and upper need 2 or 3 matching entries")
        for key in ("h", "meridian_h", "meridian_rho", "local_h"):
            v = getattr(g, key)
            if v < 0 or (key == "h" and v == 0):
                raise ConfigError(f"grid.{key}", f"must be positive, got {v}")
        if g.meridian_z and (len(g.meridian_z) != 2 or g.meridian_z[1] <= g.meridian_z[0]):
            raise ConfigError("grid.meridian_z", "expected z_lo, z_hi with z_hi > z_lo")
        try:
            grid = self.build_grid()
        except ValueError as e:
            raise ConfigError("grid.h", str(e)) from None
        shape = self.build_shape()
        if shape.dim != grid.dim:
            raise ConfigError("shape.spec", f"shape is {shape.dim}-D but the grid is {grid.dim}-D")
        if g.mode == "axisymmetric":
            if grid.dim != 3:
                raise ConfigError("grid.mode", "axisymmetric mode needs a 3-D box")
            if not shape.axisymmetric:
                raise ConfigError("shape.spec", "axisymmetric mode needs a shape symmetric about the last axis")
            try:
                mer = self.build_meridian()
            except ValueError as e:
                raise ConfigError("grid.meridian_h", str(e)) from None
            self.build_evolve().resolve(mer, 3)
        else:
            self.build_evolve().resolve(grid)
        a = self.analysis
        if not 0 < a.phi < 0.5 * math.pi:
            raise ConfigError("analysis.phi", f"must lie in (0, pi/2), got {a.phi}")
        if a.eps <= 0:
            raise ConfigError("analysis.eps", f"must be positive, got {a.eps}")
        if a.clearing_m <= 0:
            raise ConfigError("analysis.clearing_m", f"must be positive, got {a.clearing_m}")
        if any(t <= 0 for t in a.clearing_t):
            raise ConfigError("analysis.clearing_t", "offsets must be positive")
        for key in ("flowline_count", "max_points"):
            if getattr(a, key) < 0:
                raise ConfigError(f"analysis.{key}", "must be non-negative")
        if a.flowline_radius < 0 or a.entropy_level < 0:
            raise ConfigError("analysis.flowline_radius", "lengths and times must be non-negative")
        if self.output.emit_every < 0:
            raise ConfigError("output.emit_every", "must be non-negative")
        from .scenarios import CRITERIA  # local import: scenarios builds on this module
        for c in self.acceptance.criteria:
            if int(c) not in CRITERIA:
                raise ConfigError("acceptance.criteria", f"unknown criterion {c}; known {sorted(CRITERIA)}")
        return self


# ---------------------------------------------------------------------------
# text conversion
# ---------------------------------------------------------------------------


def _hint(cls, name):
    return {f.name: f for f in fields(cls)}[name]


def _convert(section: str, key: str, raw: str, default):
    text = raw.strip()
    where = f"{section}.{key}"
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or (default is None and key in ("dt", "t_max")):
            if default is None and text.lower() in ("", "auto", "none"):
                return None
            return float(text)
        if isinstance(default, tuple):
            if not text:
                return ()
            items = [s for s in text.replace(";", ",").split(",") if s.strip()]
            if key == "criteria":
                return tuple(int(s) for s in items)
            return tuple(float(s) for s in items)
        return text
    except ValueError as e:
        raise ConfigError(where, str(e)) from None


def _apply(cfg: ScenarioConfig, section: str, key: str, raw: str) -> None:
    if section not in SECTIONS:
        raise ConfigError(section, f"unknown section; expected one of {sorted(SECTIONS)}")
    obj = getattr(cfg, section)
    names = {f.name for f in fields(obj)}
    if key not in names:
        raise ConfigError(f"{section}.{key}", f"unknown key; section [{section}] accepts {sorted(names)}")
    default = getattr(type(obj)(), key)
    setattr(obj, key, _convert(section, key, raw, default))


def env_overrides(environ=None) -> dict:
    """``{(section, key): value}`` from ``MCFLAB_<SECTION>__<KEY>`` variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name[len(ENV_PREFIX):]:
            continue
        section, key = name[len(ENV_PREFIX):].split("__", 1)
        out[(section.lower(), key.lower())] = value
    return out


def loads(text: str, environ=None) -> ScenarioConfig:
    """Parse and validate configuration text; environment overrides apply last."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("file", str(e).splitlines()[0]) from None
    cfg = ScenarioConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            _apply(cfg, section, key, raw)
    for (section, key), raw in env_overrides(environ).items():
        _apply(cfg, section, key, raw)
    return cfg.validate()


def load(path, environ=None) -> ScenarioConfig:
    with open(path) as fh:
        return loads(fh.read(), environ)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(cfg: ScenarioConfig) -> str:
    """Configuration text that :func:`loads` reads back to an equal config."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def schema() -> str:
    """Section and key listing with defaults, as printed by ``mcflab validate --schema``."""
    lines = []
    for section, cls in SECTIONS.items():
        lines.append(f"[{section}]")
        d = cls()
        for f in fields(cls):
            lines.append(f"  {f.name} = {_format(getattr(d, f.name))}")
    lines.append(f"environment overrides: {ENV_PREFIX}<SECTION>__<KEY>")
    return "\n".join(lines)


def with_overrides(cfg: ScenarioConfig, **sections) -> ScenarioConfig:
    """Copy of ``cfg`` with ``section={key: value}`` replacements applied."""
    out = replace(cfg)
    for section, values in sections.items():
        setattr(out, section, replace(getattr(cfg, section), **values))
    return out
