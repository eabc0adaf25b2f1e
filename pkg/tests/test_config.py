import math

import pytest

from alefsi.config import PRESETS, RunConfig, parse_config, preset_config
from alefsi.errors import GeometryInfeasible, InconsistentConfig, ParseError
from alefsi.mesh import generate_mesh


def test_heavy_preset_values():
    c = preset_config("heavy_ball")
    assert c.body_density == pytest.approx(200 / math.pi)
    assert c.rigid().mass == pytest.approx(2.0)
    assert c.iteration().n_steps == 200
    assert c.geometry().disk_center0 == (0.5, 0.5)


def test_light_preset_values():
    c = preset_config("light_ball")
    assert c.rigid().mass == pytest.approx(0.1)
    assert c.iteration().n_steps == 100
    assert c.k_max == 10


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    c = preset_config(name)
    c.geometry(), c.fluid(), c.rigid(), c.iteration()


def test_parse_overrides_preset():
    text = """
    # comment line
    preset = light_ball
    tau = 1e-3        # trailing comment
    box = -1 -1 2 2
    exact_boundary_motion = yes
    disk_h = none
    """
    c = parse_config(text)
    assert c.preset == "light_ball"
    assert c.tau == 1e-3
    assert c.T == 0.05
    assert c.box == (-1.0, -1.0, 2.0, 2.0)
    assert c.exact_boundary_motion is True
    assert c.disk_h is None


def test_preset_argument_wins():
    c = parse_config("preset = light_ball\n", preset="heavy_ball")
    assert c.preset == "heavy_ball"


def test_no_preset_is_custom():
    assert parse_config("k_max = 2").preset == "custom"


@pytest.mark.parametrize(
    "text, line",
    [
        ("tau = 1e-3\nbogus = 1\n", 2),
        ("tau = 1e-3\ntau = 2e-3\n", 2),
        ("k_max = two\n", 1),
        ("\n\nbox = 0 0 1\n", 3),
        ("just words\n", 1),
        ("antisymmetric = maybe\n", 1),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line


@pytest.mark.parametrize(
    "text",
    ["tau = 3e-4\n", "body_density = -1\n", "schedule = parallel\n", "collision_fraction = 1\n", "preset = nope\n"],
)
def test_inconsistent(text):
    with pytest.raises(InconsistentConfig):
        parse_config(text)


def test_replace_revalidates():
    with pytest.raises(InconsistentConfig):
        RunConfig().replace(k_max=0)


def test_disk_outside_box_is_a_geometry_error():
    c = parse_config("radius = 4\n")
    with pytest.raises(GeometryInfeasible):
        generate_mesh(c.geometry())
