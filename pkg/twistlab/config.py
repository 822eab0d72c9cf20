###############################################################################
### Imports
###############################################################################
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError

from twistlab.errors import ConfigError

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
CONTEXT_FILE = "twistlab.context.json"
CONTEXT_ENV = "TWISTLAB_CONTEXT"
LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING, "error": logging.ERROR}


###############################################################################
### Models
###############################################################################
class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid")

    residual: PositiveFloat = 1e-8
    local_action: PositiveFloat = 1e-8
    differentials: PositiveFloat = 1e-6
    sigma_threshold: PositiveFloat = 1e-6


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str = "Xd"
    params: dict = Field(default_factory=lambda: {"d": 4, "n": 3})
    family_file: Optional[str] = None
    samples: int = Field(default=1000, ge=1)
    seed: int = 0
    grid: int = Field(default=1024, ge=16)
    loop_grid: int = Field(default=2048, ge=16)
    chart_scale: PositiveFloat = 0.09
    workers: int = Field(default=1, ge=1)
    local_action_samples: int = Field(default=100, ge=1)
    tolerances: Tolerances = Field(default_factory=Tolerances)


###############################################################################
### Functions
###############################################################################
def load_context(path=None):
    """
    Reads the JSON context file.

    Lookup order: explicit path, $TWISTLAB_CONTEXT, ./twistlab.context.json, the
    copy next to the package. A missing file yields an empty context.
    """
    candidates = [path, os.getenv(CONTEXT_ENV), Path.cwd() / CONTEXT_FILE, Path(__file__).parent.parent / CONTEXT_FILE]
    for candidate in candidates:
        if candidate and Path(candidate).is_file():
            try:
                return json.loads(Path(candidate).read_text())
            except json.JSONDecodeError as e:
                logger.error(f"Error reading context file {candidate}: {str(e)}")
                raise ConfigError(f"Context file {candidate} is not valid JSON: {str(e)}")
        if candidate == path and path:
            logger.error(f"Context file {path} does not exist")
            raise ConfigError(f"Context file {path} does not exist")
    return {}


def context_defaults(context):
    """Pipeline settings from the context sections, before any overrides."""
    constants = context.get("constants", {})
    pipeline = context.get("pipeline", {})
    defaults = {
        "family": pipeline.get("family", "Xd"),
        "params": pipeline.get("params", {"d": 4, "n": 3}),
        "samples": pipeline.get("samples", 1000),
        "seed": pipeline.get("seed", 0),
        "workers": pipeline.get("workers", 1),
        "local_action_samples": pipeline.get("local_action_samples", 100),
        "grid": constants.get("path_grid", 1024),
        "loop_grid": constants.get("loop_grid", 2048),
        "chart_scale": constants.get("chart_scale", 0.09),
        "tolerances": dict(context.get("tolerances", {})),
    }
    if pipeline.get("family_file"):
        defaults["family_file"] = pipeline["family_file"]
    return defaults


def _merge(base, overrides):
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key == "tolerances":
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged


def build_config(context=None, config_file=None, overrides=None):
    """
    Context defaults, then an optional JSON config file, then CLI flags.

    :param context: Parsed context (loaded when omitted).
    :param config_file: Path to a JSON file with PipelineConfig fields.
    :param overrides: Flag values; None entries are ignored.
    :return: PipelineConfig
    """
    context = load_context() if context is None else context
    settings = context_defaults(context)
    if config_file:
        logger.info(f"Merging config file {config_file}")
        try:
            settings = _merge(settings, json.loads(Path(config_file).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error reading config file {config_file}: {str(e)}")
            raise ConfigError(f"Cannot read config file {config_file}: {str(e)}")
    settings = _merge(settings, overrides or {})
    try:
        return PipelineConfig.model_validate(settings)
    except ValidationError as e:
        logger.error(f"Invalid pipeline configuration: {str(e)}")
        raise ConfigError(f"Invalid pipeline configuration: {str(e)}")


###############################################################################
### Logging
###############################################################################
class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record):
        payload = {
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, sort_keys=True)


def configure_logging(context=None, level=None):
    """Root logger on stderr from the context's logging section."""
    settings = (context or {}).get("logging", {})
    name = (level or settings.get("loglevel", "info")).lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"Unknown log level {name!r}")
    handler = logging.StreamHandler(sys.stderr)
    if settings.get("logformat", "text") == "json":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=LOG_LEVELS[name], handlers=[handler], force=True)
