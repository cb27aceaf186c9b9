import pytest

from bergman_lab.config import RunConfig, load_config, parse_config
from bergman_lab.errors import ConfigError


def test_defaults_validate():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.space.condition_holds


def test_typed_values_and_comments():
    cfg = parse_config("# comment\n\nr = 0.2\nseed = 7\nexperimental = yes\nradii = 0.9, 0.95\n")
    assert (cfg.r, cfg.seed, cfg.experimental, cfg.radii) == (0.2, 7, True, (0.9, 0.95))


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "r = 0.2\nr = 0.3",
    "seed = abc",
    "experimental = maybe",
    "r = 1.5",
    "backend = spline",
    "n = 3",  # the zonal backend needs n = 2
    "p = 1\ns = 0",  # condition on s fails
    "just text",
])
def test_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_higher_dimension_needs_experimental():
    with pytest.raises(ConfigError):
        parse_config("n = 4\nbackend = power")
    assert parse_config("n = 4\nbackend = power\nexperimental = true").n == 4


def test_load_with_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("r = 0.3\nseed = 1\n")
    cfg = load_config(path, seed=5, radial_order=None)
    assert (cfg.r, cfg.seed, cfg.radial_order) == (0.3, 5, 200)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
    with pytest.raises(ConfigError):
        load_config(path, radial_order=0)


def test_items_roundtrip():
    cfg = parse_config("schur_r_values = 0.8, 0.9\nfunction = atom:0.5")
    text = "\n".join(f"{k} = {v}" for k, v in cfg.items())
    assert parse_config(text) == cfg
