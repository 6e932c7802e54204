import pytest

from utda.config import Config
from utda.errors import InvalidArgument


def test_defaults_and_types():
    cfg = Config.load()
    assert cfg.int("na", "nx") == 100 and cfg.int("na", "K") == 16
    assert cfg.float("gain", "sigma") == 0.01
    assert cfg.ints("pr", "L") == [3, 5, 8]
    assert cfg.bool("general", "deterministic") is False
    assert not cfg.full_scale


def test_full_scale_overlay():
    cfg = Config.load(full_scale=True)
    assert cfg.full_scale
    assert cfg.ints("pr", "L") == [10, 7, 4]
    assert (cfg.int("pr", "nx"), cfg.int("pr", "ny"), cfg.int("pr", "nyc")) == (1700, 1200, 400)
    # keys without an overlay keep the base value
    assert cfg.int("pr", "K") == Config.load().int("pr", "K")


def test_overrides_and_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[na]\nK = 4\n[extra]\nname = x\n")
    cfg = Config.load(str(path), ["na.L=5", "general.deterministic=yes"])
    assert cfg.int("na", "K") == 4 and cfg.int("na", "L") == 5
    assert cfg.get("extra", "name") == "x"
    assert cfg.bool("general", "deterministic")


def test_errors(tmp_path):
    cfg = Config.load()
    with pytest.raises(InvalidArgument):
        cfg.override("novalue")
    with pytest.raises(InvalidArgument):
        cfg.override("nosection=1")
    with pytest.raises(InvalidArgument):
        cfg.int("na", "missing")
    cfg.override("na.K=four")
    with pytest.raises(InvalidArgument):
        cfg.int("na", "K")
    cfg.override("general.deterministic=maybe")
    with pytest.raises(InvalidArgument):
        cfg.bool("general", "deterministic")
    bad = tmp_path / "bad.ini"
    bad.write_text("no section header\n")
    with pytest.raises(InvalidArgument):
        Config.load(str(bad))


def test_hash_tracks_content():
    a, b = Config.load(), Config.load()
    assert a.hash() == b.hash() and len(a.hash()) == 16
    b.override("na.K=8")
    assert a.hash() != b.hash()
    assert "na.K=16" in a.text()
