import math

import pytest

from errors import ConfigParseError, ConfigurationError
from config import (config_violations, experiment_from_parsed, load_experiment_file,
                    load_run_settings, parse_config_text)

FIG2_LIKE = """\
# lognormal K-factors, M = 32
experiment.name = fig2-m32
experiment.trials = 500
experiment.outputs = c_dpc, c_zf, gap_zf
system.M = 32
system.L = 8
system.snr_db = -10 dB, 0 dB, 10, 20 dB   # mixed suffixes
kappa.law = lognormal
kappa.mean = 9 dB
kappa.variance = 5
"""


def _parse_error(text):
    with pytest.raises(ConfigParseError) as excinfo:
        parse_config_text(text)
    return excinfo.value


class TestParsing:

    def test_scalars_and_lists(self):
        parsed = parse_config_text(FIG2_LIKE)
        assert parsed.get('experiment', 'name') == 'fig2-m32'
        assert parsed.get('experiment', 'trials') == 500
        assert parsed.get('experiment', 'outputs') == ['c_dpc', 'c_zf', 'gap_zf']
        assert parsed.get('system', 'M') == 32
        assert parsed.get('system', 'snr_db') == [-10.0, 0.0, 10.0, 20.0]
        assert parsed.get('kappa', 'mean') == 9
        assert parsed.lines[('system', 'M')] == 5

    def test_comments_and_blank_lines(self):
        parsed = parse_config_text("\n# header\n   \nsystem.M = 8  # antennas\n")
        assert parsed.values == {('system', 'M'): 8}

    def test_pinned_users(self):
        parsed = parse_config_text("kappa.pinned = 9 dB, -, 3\n")
        assert parsed.get('kappa', 'pinned') == [9.0, None, 3.0]

    def test_fractional_values_stay_float(self):
        parsed = parse_config_text("system.d_over_lambda = 0.25\n")
        assert parsed.get('system', 'd_over_lambda') == 0.25


class TestParseErrors:

    def test_non_number_position(self):
        error = _parse_error("system.M = abc\n")
        assert (error.line, error.column) == (1, 12)
        assert "line 1, column 12" in str(error)

    def test_bad_list_entry_position(self):
        error = _parse_error("system.M = 8\nsystem.snr_db = 0 dB, x\n")
        assert (error.line, error.column) == (2, 23)

    def test_missing_equals(self):
        error = _parse_error("  system.M 8\n")
        assert (error.line, error.column) == (1, 3)

    def test_malformed_key(self):
        assert _parse_error("M = 8\n").column == 1

    def test_unknown_section(self):
        error = _parse_error("antenna.M = 8\n")
        assert "unknown section" in str(error)
        assert error.column == 1

    def test_unknown_key(self):
        error = _parse_error("system.Q = 8\n")
        assert "unknown key" in str(error)
        assert error.column == 8

    def test_db_suffix_on_antenna_count(self):
        error = _parse_error("system.M = 8 dB\n")
        assert "dB suffix" in str(error)

    def test_duplicate_key(self):
        error = _parse_error("system.M = 8\nsystem.L = 2\nsystem.M = 16\n")
        assert error.line == 3
        assert "first set on line 1" in str(error)

    def test_empty_value(self):
        assert _parse_error("system.M =\n").line == 1

    def test_is_a_configuration_error(self):
        with pytest.raises(ConfigurationError):
            parse_config_text("system.M = x\n")


class TestViolations:

    def test_valid_file(self):
        assert config_violations(parse_config_text(FIG2_LIKE)) == []

    def test_too_few_antennas(self):
        problems = config_violations(parse_config_text("system.M = 8\nsystem.L = 8\nsystem.N = 2\n"))
        assert len(problems) == 1
        assert "M >= L*N" in problems[0]

    def test_weights_must_sum_to_one(self):
        text = "system.M = 8\nsystem.L = 2\nusers.weights = 0.6, 0.5\n"
        problems = config_violations(parse_config_text(text))
        assert any("sum to 1" in p for p in problems)

    def test_required_dimensions(self):
        problems = config_violations(parse_config_text("system.N = 1\n"))
        assert problems == ["system.M is required", "system.L is required"]

    def test_unknown_metric(self):
        text = "system.M = 8\nsystem.L = 2\nexperiment.outputs = c_dpc, throughput\n"
        problems = config_violations(parse_config_text(text))
        assert any("throughput" in p for p in problems)


class TestExperimentFromFile:

    def test_single_case(self):
        experiment = experiment_from_parsed(parse_config_text(FIG2_LIKE))
        [case] = experiment.cases
        assert experiment.name == 'fig2-m32'
        assert experiment.trials == 500
        assert case.label == 'default'
        assert case.kappa_law.kind == 'lognormal'
        assert case.kappa_law.mean_db == 9.0
        assert case.config.snr_grid_db == (-10.0, 0.0, 10.0, 20.0)

    def test_defaults(self):
        experiment = experiment_from_parsed(parse_config_text("system.M = 8\nsystem.L = 2\n"),
                                            default_trials=7)
        [case] = experiment.cases
        assert experiment.trials == 7
        assert case.outputs == ('c_dpc', 'c_zf')
        assert case.kappa_law.value_db == -math.inf

    def test_fixed_law(self):
        text = "system.M = 8\nsystem.L = 2\nkappa.law = fixed\nkappa.value = 20 dB\n"
        [case] = experiment_from_parsed(parse_config_text(text)).cases
        assert case.kappa_law.kind == 'fixed'
        assert case.kappa_law.value_db == 20.0

    def test_load_file(self, tmp_path):
        path = tmp_path / 'fig2.cfg'
        path.write_text(FIG2_LIKE)
        experiment = load_experiment_file(str(path))
        assert experiment.cases[0].config.M == 32

    def test_load_invalid_file(self, tmp_path):
        path = tmp_path / 'bad.cfg'
        path.write_text("system.M = 4\nsystem.L = 8\n")
        with pytest.raises(ConfigurationError):
            load_experiment_file(str(path))


class TestRunSettings:

    @pytest.fixture(autouse=True)
    def clean_environment(self, monkeypatch):
        for name in ('SIM_SEED', 'SIM_WORKERS', 'SIM_OUTPUT_DIR', 'SIM_TRIALS', 'LOG_LEVEL'):
            monkeypatch.delenv(name, raising=False)

    def test_defaults(self, tmp_path):
        settings = load_run_settings(str(tmp_path / 'missing.env'))
        assert settings.seed is None
        assert settings.workers == 1
        assert settings.output_dir == 'results'
        assert settings.trials is None
        assert settings.log_level == 'INFO'

    def test_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv('SIM_SEED', '42')
        monkeypatch.setenv('SIM_TRIALS', '100')
        monkeypatch.setenv('LOG_LEVEL', 'debug')
        settings = load_run_settings(str(tmp_path / 'missing.env'))
        assert settings.seed == 42
        assert settings.trials == 100
        assert settings.log_level == 'DEBUG'

    def test_env_file(self, tmp_path):
        env_file = tmp_path / '.env'
        env_file.write_text("SIM_WORKERS=4\nSIM_OUTPUT_DIR=out\n")
        settings = load_run_settings(str(env_file))
        assert settings.workers == 4
        assert settings.output_dir == 'out'
