import pytest

from slabcbs.config import ConfigError, RunConfig, load_config, parse_config


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.alpha, cfg.beta, cfg.k_ell, cfg.b) == (0.01, 0.1, 10.0, 10.0)


def test_comments_and_whitespace():
    cfg = parse_config("# header\n\n  alpha = 0.02   # stronger\nN-CELLS=50\n")
    assert cfg.alpha == 0.02
    assert cfg.n_cells == 50
    assert cfg.explicit == {"alpha", "n_cells"}


def test_negative_thickness_rejected():
    with pytest.raises(ConfigError, match="b must be positive"):
        parse_config("b = -3")


def test_all_unknown_keys_reported():
    with pytest.raises(ConfigError) as info:
        parse_config("alpah = 1\nbeta = 0.1\ngama = 2")
    assert "alpah" in str(info.value) and "gama" in str(info.value)


def test_malformed_lines():
    with pytest.raises(ConfigError, match="expected"):
        parse_config("alpha 0.1")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("alpha = 0.1\nalpha = 0.2")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("n_cells = many")
    with pytest.raises(ConfigError, match="empty"):
        parse_config("alpha =")


def test_multiple_constraint_violations_collected():
    with pytest.raises(ConfigError) as info:
        parse_config("damping = 2\nthreads = 0\nscenario = fig11")
    msg = str(info.value)
    assert "damping" in msg and "threads" in msg and "fig11" in msg


def test_crossed_grid_keys_validated():
    cfg = parse_config("zone_refine = 4\nzone-halfwidth = 0.05\ned_tol = 1e-3")
    assert (cfg.zone_refine, cfg.zone_halfwidth, cfg.ed_tol) == (4, 0.05, 1e-3)
    with pytest.raises(ConfigError) as info:
        parse_config("zone_refine = 0\nzone_halfwidth = -1\ned_tol = 0")
    msg = str(info.value)
    assert "zone_refine" in msg and "zone_halfwidth" in msg and "ed_tol" in msg


def test_bool_parsing():
    assert parse_config("dump_kernels = yes").dump_kernels is True
    assert parse_config("dump_kernels = off").dump_kernels is False
    with pytest.raises(ConfigError):
        parse_config("dump_kernels = maybe")


def test_scenario_defaults_fill_unset_keys():
    cfg = parse_config("scenario = fig9a\nn_cells = 200").resolved()
    assert cfg.b == 40.0 and cfg.n_cells == 200
    assert parse_config("scenario = fig10a").resolved().b == 10.0


def test_overrides_mark_keys_explicit():
    cfg = RunConfig().with_overrides(scenario="fig9b", b=None, threads=2)
    assert cfg.scenario == "fig9b" and cfg.threads == 2
    assert "b" not in cfg.explicit


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_echo_round_trip(tmp_path):
    cfg = parse_config("alpha = 0.03\nscenario = conservation")
    text = "\n".join(f"{k} = {v}" for k, v in cfg.echo().items())
    assert parse_config(text) == cfg
