###############################################################################
### Imports
###############################################################################
import json
import logging
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
EXIT_CODES = {"pass": 0, "fail": 1, "error": 2}
GLOBAL_ISOTOPY = (
    "The pair (a, c) is isotopic rel boundary to its collar standardization on the "
    "complement of the fixed-point neighbourhood; this global step is not checked numerically."
)
SAMPLING_GENERICITY = (
    "Smoothness is probed by random sampling and exact special points; membership in the "
    "generic locus is not certified."
)


###############################################################################
### Models
###############################################################################
class StageRecord(BaseModel):
    name: str
    status: Literal["pass", "fail", "error", "skipped"]
    details: dict = Field(default_factory=dict)
    message: Optional[str] = None


class VerificationReport(BaseModel):
    config: dict
    stages: list[StageRecord]
    verdict: Literal["pass", "fail", "error"]
    exit_code: int
    unverified_hypotheses: list[str]
    supplementary: dict = Field(default_factory=dict)

    def stage(self, name):
        return next(record for record in self.stages if record.name == name)


###############################################################################
### Functions
###############################################################################
def verdict_of(stages):
    statuses = {record.status for record in stages}
    if "error" in statuses:
        return "error"
    if "fail" in statuses:
        return "fail"
    return "pass"


def plain(value):
    """Converts numpy and complex values into JSON-ready Python values."""
    if isinstance(value, BaseModel):
        return plain(value.model_dump())
    if isinstance(value, dict):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            logger.error(f"Non-finite number {value} in report")
            raise ValueError(f"Report values must be finite, got {value}")
        return value
    if isinstance(value, (complex, np.complexfloating)):
        return [plain(value.real), plain(value.imag)]
    return value


def report_json(report):
    """Deterministic JSON: sorted keys, shortest round-trip floats, no timestamps."""
    return json.dumps(plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report, path):
    logger.info(f"Writing report to {path}")
    Path(path).write_text(report_json(report))


def summarize(report):
    """Human-readable lines for the terminal."""
    lines = [f"verdict: {report.verdict} (exit {report.exit_code})"]
    for record in report.stages:
        suffix = f" - {record.message}" if record.message else ""
        lines.append(f"  {record.name:<18} {record.status}{suffix}")
    for hypothesis in report.unverified_hypotheses:
        lines.append(f"  unverified: {hypothesis}")
    return "\n".join(lines)
