###############################################################################
### Imports
###############################################################################
import json
import logging

import numpy as np
import pytest

from twistlab.config import JsonFormatter, build_config, configure_logging, context_defaults, load_context
from twistlab.errors import ConfigError
from twistlab.report import StageRecord, plain, verdict_of

###############################################################################
### Constants
###############################################################################
CONTEXT = {
    "constants": {"path_grid": 512, "loop_grid": 1024, "chart_scale": 0.05},
    "tolerances": {"residual": 1e-9},
    "pipeline": {"family": "Xd", "params": {"d": 4, "n": 3}, "samples": 300, "seed": 5},
    "logging": {"loglevel": "warning", "logformat": "json"},
}


###############################################################################
### Context and Config
###############################################################################
def test_context_defaults():
    defaults = context_defaults(CONTEXT)
    assert defaults["grid"] == 512
    assert defaults["loop_grid"] == 1024
    assert defaults["samples"] == 300
    assert defaults["tolerances"] == {"residual": 1e-9}


def test_overrides_win_over_config_file_and_context(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"samples": 40, "tolerances": {"local_action": 1e-7}}))
    config = build_config(CONTEXT, str(config_file), {"seed": 9, "samples": None})
    assert config.samples == 40
    assert config.seed == 9
    assert config.tolerances.residual == 1e-9
    assert config.tolerances.local_action == 1e-7
    assert config.chart_scale == 0.05


def test_invalid_settings_raise_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        build_config(CONTEXT, None, {"samples": 0})
    with pytest.raises(ConfigError):
        build_config(CONTEXT, None, {"unknown_field": 1})
    with pytest.raises(ConfigError):
        build_config(CONTEXT, str(tmp_path / "missing.json"))


def test_load_context(tmp_path, monkeypatch):
    path = tmp_path / "context.json"
    path.write_text(json.dumps(CONTEXT))
    assert load_context(str(path)) == CONTEXT
    monkeypatch.setenv("TWISTLAB_CONTEXT", str(path))
    assert load_context()["pipeline"]["samples"] == 300
    with pytest.raises(ConfigError):
        load_context(str(tmp_path / "missing.json"))
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_context(str(path))


###############################################################################
### Logging
###############################################################################
def test_json_log_format():
    record = logging.LogRecord("twistlab.pipeline", logging.INFO, __file__, 1, "stage %s done", ("synth",), None)
    payload = json.loads(JsonFormatter().format(record))
    assert payload == {"level": "INFO", "logger": "twistlab.pipeline", "message": "stage synth done"}


def test_configure_logging_levels():
    configure_logging(CONTEXT)
    assert logging.getLogger().level == logging.WARNING
    configure_logging(CONTEXT, "debug")
    assert logging.getLogger().level == logging.DEBUG
    configure_logging({}, "info")
    assert logging.getLogger().level == logging.INFO
    with pytest.raises(ConfigError):
        configure_logging(CONTEXT, "loud")


###############################################################################
### Report Values
###############################################################################
def test_plain_values():
    assert plain({"a": np.eye(2), 1: (np.float64(0.5), np.int64(3), np.bool_(True))}) == {
        "a": [[1.0, 0.0], [0.0, 1.0]],
        "1": [0.5, 3, True],
    }
    assert plain(1 + 2j) == [1.0, 2.0]
    with pytest.raises(ValueError):
        plain(float("nan"))


def test_verdict_precedence():
    records = [StageRecord(name="a", status="pass"), StageRecord(name="b", status="fail")]
    assert verdict_of(records) == "fail"
    assert verdict_of(records + [StageRecord(name="c", status="error")]) == "error"
    assert verdict_of(records[:1] + [StageRecord(name="d", status="skipped")]) == "pass"
