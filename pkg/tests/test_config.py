import pytest

from strandkit.config import default_config, load_config
from strandkit.errors import ConfigError


def test_defaults_present():
    cfg = default_config()
    assert cfg.get("run", "seed") == 0
    assert cfg.get("scene", "strand_count") == 5000
    assert cfg.get("scene", "views") == 16
    assert cfg.get("volume", "voxel_size") == 2.0
    assert cfg.get("metrics", "voxel_sizes") == "2,3,4"


def test_load_file_and_overrides(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[scene]\nstrand_count = 123\nstyle = curly\n\n[phg]\nstrict = yes\n")
    cfg = load_config(str(ini), overrides=["scene.views=4", "run.seed=9"])
    assert cfg.get("scene", "strand_count") == 123
    assert cfg.get("scene", "style") == "curly"
    assert cfg.get("phg", "strict") is True
    assert cfg.get("scene", "views") == 4
    assert cfg.get("run", "seed") == 9


def test_override_precedence_over_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nseed = 5\n")
    cfg = load_config(str(ini), overrides=["run.seed=11"])
    assert cfg.get("run", "seed") == 11


def test_unknown_section_and_key_rejected(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(ini))
    ini.write_text("[scene]\nnope = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(ini))
    with pytest.raises(ConfigError):
        load_config(None, overrides=["scene.nope=1"])


def test_malformed_override():
    with pytest.raises(ConfigError):
        load_config(None, overrides=["sceneviews=4"])
    with pytest.raises(ConfigError):
        load_config(None, overrides=["scene.views"])


def test_bad_types():
    with pytest.raises(ConfigError):
        load_config(None, overrides=["scene.views=many"])
    with pytest.raises(ConfigError):
        load_config(None, overrides=["phg.strict=perhaps"])


def test_bool_spellings():
    for raw, want in [("1", True), ("true", True), ("ON", True),
                      ("0", False), ("no", False), ("Off", False)]:
        cfg = load_config(None, overrides=[f"phg.strict={raw}"])
        assert cfg.get("phg", "strict") is want


def test_missing_file_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_float_and_int_lists():
    cfg = load_config(None, overrides=["metrics.voxel_sizes=1.5, 2.5 ,3"])
    assert cfg.float_list("metrics", "voxel_sizes") == (1.5, 2.5, 3.0)
    cfg2 = load_config(None, overrides=["bench.workers=1,2,8"])
    assert cfg2.int_list("bench", "workers") == (1, 2, 8)


def test_hash_tracks_values():
    a = default_config()
    b = default_config()
    assert a.hash() == b.hash()
    b.set("run", "seed", 1)
    assert a.hash() != b.hash()
