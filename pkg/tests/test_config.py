import pytest

from morseflow.config import ConfigError, catalog_names, load_config, parse_config, section_hash

BASE = {"name": "t", "manifold": {"kind": "sphere", "dim": 2}, "function": {"expression": "z"}}


def test_catalog_loads():
    names = catalog_names()
    assert {"sphere-height", "sphere-perturbed", "torus-separable", "circle-cos",
            "klein-mod2", "torus-twisted", "sphere17-fme"} <= set(names)
    for name in names:
        cfg = load_config(name)
        assert cfg.name == name


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.currents.int_tol == 1e-4
    assert cfg.complex.modes == ("Z",)
    assert cfg.flow.kind == "gradient"


@pytest.mark.parametrize("patch, fragment", [
    ({"currents": {"int_tl": 1e-4}}, "currents.int_tl"),
    ({"flow": {"rtoll": 1e-9}}, "flow.rtoll"),
    ({"extra": 1}, "unknown key extra"),
    ({"currents": {"int_tol": -1.0}}, "currents.int_tol"),
    ({"manifold": {"kind": "cube"}}, "cube"),
    ({"checks": {"fme": ["nope"]}}, "nope"),
])
def test_rejections(patch, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        parse_config({**BASE, **patch})


def test_function_required_for_gradient_flows():
    with pytest.raises(ConfigError):
        parse_config({"name": "t", "manifold": {"kind": "sphere"}})
    cfg = parse_config({"name": "t", "manifold": {"kind": "sphere"},
                        "flow": {"kind": "sphere17", "direction": [1.0, 0.0]}})
    assert cfg.flow.direction == (1.0, 0.0)


def test_section_hash_tracks_content():
    a = parse_config(BASE)
    b = parse_config({**BASE, "function": {"expression": "z + 0.1*x"}})
    assert section_hash({"f": a.section("function")}, "1") != \
        section_hash({"f": b.section("function")}, "1")
    assert section_hash({"f": a.section("function")}, "1") == \
        section_hash({"f": a.section("function")}, "1")
    assert section_hash({"f": a.section("function")}, "1") != \
        section_hash({"f": a.section("function")}, "2")
