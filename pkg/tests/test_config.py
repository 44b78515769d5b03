import pytest

from annealtherm.config import ConfigError, load_config, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg.get("model", "n") == [4]
    assert cfg.get("solver", "method") == "ed"
    assert cfg.seed == 0
    assert len(cfg.digest) == 64


def test_values_parsed():
    cfg = parse_config("[model]\nn = 4, 6 ; comment\nkind = frustrated\n[protocol]\nrates = 1, 1e3\n"
                       "hardware_limits = yes\n[run]\nseed = 9\n")
    assert cfg.get("model", "n") == [4, 6]
    assert cfg.get("model", "kind") == "frustrated"
    assert cfg.get("protocol", "rates") == [1.0, 1000.0]
    assert cfg.get("protocol", "hardware_limits") is True
    assert cfg.seed == 9


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as err:
        parse_config("[model]\nn = 4\ncolour = red\n", source="x.ini")
    assert "x.ini:3" in str(err.value)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[plots]\nstyle = dark\n")


def test_all_errors_collected():
    with pytest.raises(ConfigError) as err:
        parse_config("[solver]\nmethod = magic\nbins = x\n")
    assert len(err.value.messages) == 2


@pytest.mark.parametrize("text", ["[solver]\ntemperatures = 0\n", "[protocol]\nrates = -1\n",
                                  "[protocol]\ns_p = 1.5\n", "[stats]\ngauges = 1\n", "[solver]\nrtol = 0.1\n",
                                  "[output]\nformats = hdf5\n", "[solver]\nepsilon = nan\n"])
def test_range_checks(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_files(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[schedule]\nsource = nowhere.csv\n")
    with pytest.raises(ConfigError, match="file not found"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


def test_relative_paths_resolved(tmp_path):
    (tmp_path / "chain.txt").write_text("n 3\nJ 0 -1\nJ 1 -1\nJ 2 1\n")
    p = tmp_path / "c.ini"
    p.write_text("[model]\nchain_file = chain.txt\n")
    assert load_config(p).get("model", "chain_file") == str(tmp_path / "chain.txt")
