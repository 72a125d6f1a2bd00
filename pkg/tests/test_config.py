from fractions import Fraction

import pytest

from config import Config, RunConfig, load_run_config, read_config_file
from validators import (
    parse_bool,
    parse_fraction_list,
    parse_int,
    parse_int_list,
    validate_collusion,
    validate_priors,
)


class TestParsers:

    def test_parse_int(self):
        assert parse_int('42') == (42, None)
        assert parse_int(' -3 ') == (-3, None)
        value, error = parse_int('4.5')
        assert value is None and 'integer' in error
        assert parse_int(True)[1] is not None

    def test_parse_int_list(self):
        assert parse_int_list('192, 128;64') == ([192, 128, 64], None)
        assert parse_int_list(['9', 9]) == ([9, 9], None)
        values, error = parse_int_list('9,x,y')
        assert values == [] and error == "not integers: x, y"
        assert parse_int_list('')[1] is not None

    def test_parse_fraction_list(self):
        assert parse_fraction_list('1/2,1/3,1/6') == ([Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)], None)
        assert parse_fraction_list('0.99,0.01')[0] == [Fraction(99, 100), Fraction(1, 100)]
        assert parse_fraction_list('1/0')[1] is not None

    def test_parse_bool(self):
        assert parse_bool('yes') == (True, None)
        assert parse_bool('0') == (False, None)
        assert parse_bool('maybe')[0] is None

    def test_validate_priors(self):
        assert validate_priors([Fraction(1, 2)] * 2, 2) is None
        assert 'sum to 1' in validate_priors([Fraction(1, 2), Fraction(1, 3)], 2)
        assert 'positive' in validate_priors([Fraction(1), Fraction(0)], 2)
        assert 'expected 3' in validate_priors([Fraction(1)], 3)

    def test_validate_collusion(self):
        assert validate_collusion(4, 3) is None
        assert validate_collusion(4, 4) is not None
        assert validate_collusion(1, 1) is not None
        assert validate_collusion(None, 2) is not None


class TestRunConfig:

    def test_defaults_come_from_the_environment_config(self):
        config = load_run_config(None, {})
        assert config == RunConfig()
        assert config.field_modulus == Config.FIELD_MODULUS
        assert config.samples == Config.STAT_SAMPLES

    def test_file_then_flags(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("servers = 8\ncollusion = 2\nlengths = 16384,12288\njson-style = true\nfield = 19\n")
        config = load_run_config(str(path), {'collusion': '3', 'lengths': None})
        assert config.servers == 8
        assert config.collusion == 3
        assert config.lengths == [16384, 12288]
        assert config.json_style is True
        assert config.field_modulus == 19

    def test_significance_must_be_one_value(self):
        assert load_run_config(None, {'significance': '1/20'}).significance == Fraction(1, 20)
        with pytest.raises(ValueError, match="Invalid significance"):
            load_run_config(None, {'significance': '1/20,1/10'})

    def test_bad_value_names_the_key(self):
        with pytest.raises(ValueError, match="Invalid servers"):
            load_run_config(None, {'servers': 'four'})

    def test_malformed_file(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("servers 4\n")
        with pytest.raises(ValueError, match="expected key=value"):
            read_config_file(str(path))

    def test_unknown_key(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("# comment\n\nreplicas = 3\n")
        with pytest.raises(ValueError, match="unknown key 'replicas'"):
            read_config_file(str(path))
