###############################################################################
### Imports
###############################################################################
import logging

import numpy as np

from twistlab.complete_intersections import (
    Chart,
    chart_action,
    differentials_at_fixed_point,
    family_catalog,
    invariance_check,
    local_action_check,
    smoothness_scan,
    surface_invariants,
    symmetry_conditions,
)
from twistlab.errors import TwistlabError
from twistlab.linalg_paths import CommutingPair, negative_parity, path_commutator_residual
from twistlab.local_flows import (
    NumericDiffeo,
    collar_commutator_class,
    standardize_pair,
    twist_profile,
)
from twistlab.report import (
    EXIT_CODES,
    GLOBAL_ISOTOPY,
    SAMPLING_GENERICITY,
    StageRecord,
    VerificationReport,
    verdict_of,
)
from twistlab.spin_lift import spin_obstruction_of_pair

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)


###############################################################################
### Functions
###############################################################################
def scaled_chart_map(chart, which, scale):
    """Chart representative of an involution, rescaled so B_3 sits inside the chart."""
    action = chart_action(chart, which)
    return NumericDiffeo(
        2 * chart.dimension,
        lambda v: action(scale * np.asarray(v, dtype=float)) / scale,
        name=f"{which}_chart",
    )


def _record(name, passed, details, message=None):
    return StageRecord(name=name, status="pass" if passed else "fail", details=details, message=message)


###############################################################################
### Handlers
###############################################################################
def family_handler(state, config):
    params = dict(config.params)
    family = config.family
    if config.family_file:
        family = "custom"
        params["path"] = config.family_file
    system = family_catalog(family, params)
    state["system"] = system
    details = {
        "family": family,
        "factor_dims": list(system.factor_dims),
        "polynomials": system.describe(),
        "notes": list(system.notes),
    }
    return _record("family", True, details)


def symmetry_handler(state, config):
    report = symmetry_conditions(state["system"])
    return _record("symmetry", report.passed, {"per_polynomial": report.as_dict()})


def invariance_handler(state, config):
    passed = invariance_check(state["system"], seed=config.seed)
    return _record("invariance", passed, {"identities_hold": passed})


def smoothness_handler(state, config):
    report = smoothness_scan(
        state["system"],
        config.samples,
        seed=config.seed,
        sigma_threshold=config.tolerances.sigma_threshold,
        workers=config.workers,
    )
    state["smoothness"] = report
    message = None if report.passed else f"{len(report.failures)} point(s) below the sigma threshold"
    return _record("smoothness", report.passed, report.as_dict(), message)


def local_action_handler(state, config):
    res_a, res_c = local_action_check(state["system"], num_samples=config.local_action_samples, seed=config.seed)
    passed = max(res_a, res_c) <= config.tolerances.local_action
    return _record("local_action", passed, {"residual_a": res_a, "residual_c": res_c})


def differentials_handler(state, config):
    differentials = differentials_at_fixed_point(state["system"])
    state["differentials"] = differentials
    orientation_reversing = not differentials.orientation_preserving
    details = {
        "da": differentials.da,
        "dc": differentials.dc,
        "fd_residual": differentials.fd_residual,
        "det_dc": float(np.linalg.det(differentials.dc)),
        "orientation_reversing_regime": orientation_reversing,
    }
    if orientation_reversing:
        logger.warning("Odd complex dimension: conjugation reverses orientation")
        return _record("differentials", False, details, "conjugation reverses orientation (odd complex dimension)")
    return _record("differentials", differentials.fd_residual <= config.tolerances.differentials, details)


def negative_parity_handler(state, config):
    da, dc = state["differentials"]
    pair = CommutingPair(da, dc)
    state["pair"] = pair
    nu = negative_parity(pair)
    state["nu"] = nu
    message = None if nu == 1 else "nu = 0: the boundary twist chain does not apply"
    return _record("negative_parity", nu == 1, {"nu": nu}, message)


def synth_handler(state, config):
    pair = state["pair"]
    chart = Chart(state["system"])
    standardization = standardize_pair(
        pair.a,
        pair.c,
        a_map=scaled_chart_map(chart, "a", config.chart_scale),
        c_map=scaled_chart_map(chart, "c", config.chart_scale),
        grid=config.grid,
    )
    alpha = standardization.alpha_relative.map(lambda value: pair.a @ value)
    gamma = standardization.gamma_relative.map(lambda value: pair.c @ value)
    residual = path_commutator_residual(alpha, gamma)
    passed = (
        standardization.twist_ready
        and residual <= config.tolerances.residual
        and standardization.endpoint_error <= config.tolerances.residual
    )
    details = {
        "nu": standardization.nu,
        "epsilon": standardization.epsilon,
        "endpoint_error": standardization.endpoint_error,
        "commutator_residual": residual,
        "stage_labels": list(alpha.stage_labels),
    }
    return _record("synth", passed, details)


def twist_profile_handler(state, config):
    profile = twist_profile(state["pair"].n, grid=config.loop_grid)
    state["profile"] = profile
    return _record("twist_profile", True, {"n": profile.n})


def collar_class_handler(state, config):
    sign = collar_commutator_class(state["profile"], grid=config.loop_grid)
    return _record("collar_class", sign == -1, {"class": sign})


def spin_obstruction_handler(state, config):
    nu, sign = spin_obstruction_of_pair(state["pair"], grid=config.loop_grid)
    return _record("spin_obstruction", sign == -1, {"nu": nu, "sign": sign})


STAGES = (
    ("family", family_handler),
    ("symmetry", symmetry_handler),
    ("invariance", invariance_handler),
    ("smoothness", smoothness_handler),
    ("local_action", local_action_handler),
    ("differentials", differentials_handler),
    ("negative_parity", negative_parity_handler),
    ("synth", synth_handler),
    ("twist_profile", twist_profile_handler),
    ("collar_class", collar_class_handler),
    ("spin_obstruction", spin_obstruction_handler),
)


###############################################################################
### Pipeline
###############################################################################
def _supplementary(state):
    system = state.get("system")
    if system is None:
        return {}
    supplementary = {"notes": list(system.notes)}
    invariants = surface_invariants(system)
    if invariants is not None:
        supplementary["surface_invariants"] = invariants
    smoothness = state.get("smoothness")
    if smoothness is not None and "first_point_excluded" in smoothness.special_point_results:
        supplementary["first_point_excluded"] = smoothness.special_point_results["first_point_excluded"]
    return supplementary


def run_verify_family(config, stages=STAGES):
    """
    Runs every stage in order, stopping at the first stage that does not pass.

    :param config: PipelineConfig.
    :param stages: (name, handler) pairs.
    :return: VerificationReport
    """
    logger.info(f"Verifying family {config.family} with parameters {config.params}")
    state = {}
    records = []
    stopped = False
    for name, handler in stages:
        if stopped:
            records.append(StageRecord(name=name, status="skipped"))
            continue
        logger.info(f"Running stage {name}")
        try:
            record = handler(state, config)
        except (TwistlabError, np.linalg.LinAlgError) as e:
            logger.error(f"Stage {name} raised: {str(e)}")
            record = StageRecord(name=name, status="error", message=f"{type(e).__name__}: {str(e)}")
        records.append(record)
        if record.status != "pass":
            logger.warning(f"Stage {name} finished with status {record.status}")
            stopped = True

    verdict = verdict_of(records)
    hypotheses = [GLOBAL_ISOTOPY, SAMPLING_GENERICITY]
    if "system" in state:
        hypotheses.extend(f"Exact substitute in use: {note}" for note in state["system"].notes)
    logger.info(f"Verification finished with verdict {verdict}")
    return VerificationReport(
        config=config.model_dump(),
        stages=records,
        verdict=verdict,
        exit_code=EXIT_CODES[verdict],
        unverified_hypotheses=hypotheses,
        supplementary=_supplementary(state),
    )
