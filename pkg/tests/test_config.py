import pytest

from mcflab.config import ConfigError, dumps, env_overrides, loads, parse_shape, schema, with_overrides
from mcflab.scenarios import BUILTIN, builtin_config
from mcflab.shapes import Sphere, Torus, Union

BASE = """
[shape]
spec = sphere(center=(0, 0), radius=0.5)
[grid]
lower = -1, -1
upper = 1, 1
h = 0.03125
"""


def test_minimal_config_loads():
    cfg = loads(BASE, environ={})
    assert cfg.grid.h == 0.03125 and cfg.grid.lower == (-1.0, -1.0)
    assert isinstance(cfg.build_shape(), Sphere)
    assert cfg.build_grid().cells == (64, 64)


def test_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError) as e:
        loads(BASE + "[grid2]\nh = 1\n", environ={})
    assert e.value.key == "grid2"
    with pytest.raises(ConfigError) as e:
        loads(BASE + "[evolve]\nstep = 1\n", environ={})
    assert e.value.key == "evolve.step"


@pytest.mark.parametrize("extra, key", [
    ("[evolve]\ndt = -0.001\n", "dt"),
    ("[analysis]\nphi = 2.0\n", "analysis.phi"),
    ("[analysis]\neps = 0\n", "analysis.eps"),
    ("[evolve]\nreinit_every = two\n", "evolve.reinit_every"),
    ("[acceptance]\ncriteria = 1, 42\n", "acceptance.criteria"),
])
def test_bad_values_name_their_key(extra, key):
    with pytest.raises(ConfigError) as e:
        loads(BASE + extra, environ={})
    assert e.value.key == key


def test_dimension_mismatch_and_axisymmetric_checks():
    with pytest.raises(ConfigError) as e:
        loads(BASE.replace("center=(0, 0)", "center=(0, 0, 0)"), environ={})
    assert e.value.key == "shape.spec"
    with pytest.raises(ConfigError) as e:
        loads(BASE, environ={"MCFLAB_GRID__MODE": "axisymmetric"})
    assert e.value.key == "grid.mode"
    with pytest.raises(ConfigError) as e:
        loads(BASE, environ={"MCFLAB_GRID__MODE": "radial"})
    assert e.value.key == "grid.mode"


def test_environment_overrides_apply_last():
    env = {"MCFLAB_GRID__H": "0.0625", "MCFLAB_ANALYSIS__FLOWLINE_COUNT": "3", "OTHER": "x", "MCFLAB_NOSEP": "1"}
    assert env_overrides(env) == {("grid", "h"): "0.0625", ("analysis", "flowline_count"): "3"}
    cfg = loads(BASE, environ=env)
    assert cfg.grid.h == 0.0625 and cfg.analysis.flowline_count == 3
    with pytest.raises(ConfigError) as e:
        loads(BASE, environ={"MCFLAB_EVOLVE__DT": "-1"})
    assert e.value.key == "dt"


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtins_validate_and_roundtrip(name):
    cfg = builtin_config(name)
    assert cfg.scenario.name == name
    assert loads(dumps(cfg), environ={}) == cfg


def test_with_overrides_copies():
    cfg = builtin_config("sphere2d")
    other = with_overrides(cfg, analysis={"flowline_count": 0})
    assert other.analysis.flowline_count == 0 and cfg.analysis.flowline_count == 8


def test_parse_shape_examples():
    t = parse_shape("torus(major=1.0, minor=0.35)")
    assert isinstance(t, Torus) and t.minor == 0.35
    u = parse_shape("union(sphere(center=(-0.3, 0), radius=0.2), sphere(center=(0.3, 0), radius=0.2))")
    assert isinstance(u, Union) and len(u.parts) == 2


@pytest.mark.parametrize("text", [
    "__import__('os').system('true')",
    "sphere(center=(0, 0), radius=r)",
    "sphere(**{'radius': 1})",
    "blob(radius=1)",
    "sphere(center=(0, 0), radius=-1)",
    "1 + 2",
    "sphere(",
])
def test_parse_shape_rejects(text):
    with pytest.raises(ConfigError) as e:
        parse_shape(text)
    assert e.value.key == "shape.spec"


def test_schema_lists_every_section():
    s = schema()
    for sec in ("[scenario]", "[shape]", "[grid]", "[evolve]", "[analysis]", "[output]", "[acceptance]"):
        assert sec in s
    assert "MCFLAB_<SECTION>__<KEY>" in s
