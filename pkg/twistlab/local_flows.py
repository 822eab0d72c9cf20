###############################################################################
### Imports
###############################################################################
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from twistlab.errors import (
    DimensionTooSmallError,
    IntegratorFailureError,
    LeftDomainError,
    NegativeRadiusError,
    NotEmbeddingError,
    NotSpecialOrthogonalError,
    PathDegenerateError,
)
from twistlab.linalg_paths import (
    DEFAULT_GRID,
    CommutingPair,
    SampledPath,
    canonical_pair,
    max_norm,
    negative_parity,
    rotation_i,
    rotation_k,
    smooth_step,
    synth_commuting_path,
)
from twistlab.spin_lift import DEFAULT_LOOP_GRID, SOLoop, lift_loop

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
DOMAIN_RADIUS = 3.0
FLOW_TOL = 1e-10
FD_STEP = 1e-5
EPSILON_START = 0.5
EPSILON_FLOOR = 2.0**-20
RADIAL_POINTS = 32
START_TOL = 1e-8


###############################################################################
### Cutoff
###############################################################################
def chi(r):
    """
    Cutoff equal to 1 on [0, 1] and 0 on [2, inf), flat at both junctions.

    :param r: Radius (scalar or array), nonnegative.
    :return: Tuple (value, derivative).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        logger.error("chi evaluated at a negative radius")
        raise NegativeRadiusError("chi is defined for r >= 0 only")
    step, slope = smooth_step(r - 1.0)
    value, derivative = 1.0 - np.asarray(step), -np.asarray(slope)
    if value.ndim == 0:
        return float(value), float(derivative)
    return value, derivative


###############################################################################
### Classes
###############################################################################
@dataclass(frozen=True)
class NumericDiffeo:
    n: int
    forward: Callable
    jacobian_at: Optional[Callable] = field(default=None, repr=False)
    inverse: Optional[Callable] = field(default=None, repr=False)
    identity_near_boundary: bool = False
    name: str = "map"

    def __call__(self, v):
        return np.asarray(self.forward(np.asarray(v, dtype=float)), dtype=float)

    def jacobian(self, v, step=FD_STEP):
        """Closed-form Jacobian when supplied, central differences otherwise."""
        v = np.asarray(v, dtype=float)
        if self.jacobian_at is not None:
            return np.asarray(self.jacobian_at(v), dtype=float)
        return finite_difference_jacobian(self, v, step)


@dataclass(frozen=True)
class TwistProfile:
    n: int
    rho_k: Callable
    rho_i: Callable


@dataclass(frozen=True)
class Standardization:
    nu: int
    alpha_relative: SampledPath
    gamma_relative: SampledPath
    epsilon: float
    local_model: CommutingPair
    twist_ready: bool
    endpoint_error: float


###############################################################################
### Functions
###############################################################################
def finite_difference_jacobian(function, v, step=FD_STEP):
    v = np.asarray(v, dtype=float)
    columns = []
    for index in range(len(v)):
        offset = np.zeros_like(v)
        offset[index] = step
        columns.append((np.asarray(function(v + offset)) - np.asarray(function(v - offset))) / (2 * step))
    return np.column_stack(columns)


def linear_diffeo(matrix, name="linear"):
    matrix = np.asarray(matrix, dtype=float)
    return NumericDiffeo(
        matrix.shape[0],
        lambda v: matrix @ v,
        jacobian_at=lambda v: matrix,
        inverse=lambda w: np.linalg.solve(matrix, w),
        name=name,
    )


def _require_identity_start(rho):
    start_error = max_norm(rho.values[0] - np.eye(rho.n))
    if start_error > START_TOL:
        logger.error(f"Flow path starts {start_error:.3e} away from the identity")
        raise PathDegenerateError(f"Flow path must start at the identity (error {start_error:.3e})")


def deform_by_flow(f, rho, t, v):
    """
    f composed with the time-t flow of u -> chi(|u|) rho'(s) rho(s)^-1 u.

    :param f: NumericDiffeo embedding B_3.
    :param rho: SampledPath in GL+(n) with rho(0) = I.
    :param t: Flow time in [0, 1].
    :param v: Start point with |v| < 3.
    :return: Image point.
    """
    _require_identity_start(rho)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) >= DOMAIN_RADIUS:
        logger.error(f"Flow start point |v|={np.linalg.norm(v):.3f} lies outside B_3")
        raise LeftDomainError("Start point lies outside B_3")
    if t == 0 or np.linalg.norm(v) >= 2.0:
        return f(v)

    def vector_field(s, u):
        weight, _ = chi(np.linalg.norm(u))
        if weight == 0.0:
            return np.zeros_like(u)
        generator = np.linalg.solve(rho.at(s).T, rho.velocity(s).T).T
        return weight * (generator @ u)

    try:
        solution = solve_ivp(vector_field, (0.0, t), v, method="RK45", rtol=FLOW_TOL, atol=FLOW_TOL)
    except Exception as e:
        logger.error(f"Error integrating flow: {str(e)}")
        raise IntegratorFailureError(f"Flow integration failed: {str(e)}")
    if not solution.success:
        logger.error(f"Flow integration failed: {solution.message}")
        raise IntegratorFailureError(solution.message)
    if np.max(np.linalg.norm(solution.y, axis=0)) >= DOMAIN_RADIUS:
        logger.error("Flow trajectory left B_3")
        raise LeftDomainError("Flow trajectory left B_3")
    return f(solution.y[:, -1])


def flow_diffeo(f, rho, t):
    """
    NumericDiffeo of v -> deform_by_flow(f, rho, t, v).

    Points whose whole trajectory stays in the chi = 1 ball move by rho(t) exactly,
    so they skip the integrator.
    """
    _require_identity_start(rho)
    samples = rho.values[rho.times <= t]
    stretch = max(float(np.max(np.linalg.norm(samples, ord=2, axis=(1, 2)))), 1.0) * (1 + 1e-3)
    end = rho.at(t)

    def forward(v):
        v = np.asarray(v, dtype=float)
        if np.linalg.norm(v) * stretch < 1.0:
            return f(end @ v)
        return deform_by_flow(f, rho, t, v)

    return NumericDiffeo(f.n, forward, name=f"{f.name}_flowed")


def linear_localize(f, epsilon, t, v, linear_part=None):
    """
    f(v) - t chi(|v| / eps) (f(v) - Df_0 v).

    :param f: NumericDiffeo with f(0) = 0.
    :param epsilon: Localization radius in (0, 1).
    :param t: Deformation time in [0, 1].
    :param v: Point.
    :param linear_part: Df_0, computed from f when omitted.
    :return: Image point.
    """
    v = np.asarray(v, dtype=float)
    if linear_part is None:
        linear_part = f.jacobian(np.zeros(f.n))
    image = f(v)
    weight, _ = chi(np.linalg.norm(v) / epsilon)
    if weight == 0.0 or t == 0:
        return image
    return image - t * weight * (image - linear_part @ v)


def check_embedding(g, n, radius=DOMAIN_RADIUS, points=RADIAL_POINTS):
    """Jacobian determinant > 0 along a radial grid on every coordinate half-axis."""
    radii = np.linspace(0.0, radius, points + 2)[1:-1]
    for axis in range(n):
        for direction in (1.0, -1.0):
            for r in radii:
                v = np.zeros(n)
                v[axis] = direction * r
                if np.linalg.det(finite_difference_jacobian(g, v)) <= 0:
                    return False
    return True


def localized_map(f, epsilon, t=1.0):
    """NumericDiffeo wrapping linear_localize; raises NotEmbedding when the check fails."""
    linear_part = f.jacobian(np.zeros(f.n))
    localized = NumericDiffeo(
        f.n,
        lambda v: linear_localize(f, epsilon, t, v, linear_part),
        name=f"{f.name}_localized",
    )
    if not check_embedding(localized, f.n, radius=min(DOMAIN_RADIUS, 2 * epsilon)):
        logger.error(f"Localized map at eps={epsilon} is not an embedding")
        raise NotEmbeddingError(f"Localization at eps={epsilon} is not an embedding")
    return localized


def choose_epsilon(f, t=1.0):
    """
    Halving search for the localization radius.

    :param f: NumericDiffeo with f(0) = 0.
    :return: First eps in 0.5, 0.25, ... whose localized map passes the embedding check.
    """
    epsilon = EPSILON_START
    while epsilon >= EPSILON_FLOOR:
        try:
            localized_map(f, epsilon, t)
            logger.info(f"Accepted localization radius eps={epsilon}")
            return epsilon
        except NotEmbeddingError:
            epsilon /= 2
    logger.error("No localization radius passed the embedding check")
    raise NotEmbeddingError("No localization radius passed the embedding check")


def _validate_profile(profile, grid):
    n = profile.n
    identity = np.eye(n)
    end_k, end_i = canonical_pair(n, 1).a, canonical_pair(n, 1).c
    for t in np.linspace(1.0, 2.0, grid // 3 + 1):
        if not (np.array_equal(profile.rho_k(t), identity) and np.array_equal(profile.rho_i(t), identity)):
            logger.error(f"Twist profile is not the identity at t={t}")
            raise PathDegenerateError(f"Twist profile is not the identity at t={t}")
    for t in np.linspace(3.0, 4.0, grid // 3 + 1):
        if not (np.array_equal(profile.rho_k(t), end_k) and np.array_equal(profile.rho_i(t), end_i)):
            logger.error(f"Twist profile is not constant at t={t}")
            raise PathDegenerateError(f"Twist profile is not constant at t={t}")
    for t in np.linspace(1.0, 4.0, grid + 1):
        for rho in (profile.rho_k(t), profile.rho_i(t)):
            if max_norm(rho.T @ rho - identity) > 1e-10 or abs(np.linalg.det(rho) - 1) > 1e-10:
                logger.error(f"Twist profile leaves SO({n}) at t={t}")
                raise NotSpecialOrthogonalError(f"Twist profile leaves SO({n}) at t={t}")


def twist_profile(n, grid=DEFAULT_LOOP_GRID):
    """
    rho_k, rho_i: identity on [1, 2], R_k, R_i along the smooth step on [2, 3],
    the canonical pair on [3, inf).

    :param n: Dimension, at least 3.
    :param grid: Samples used to validate the profile.
    :return: TwistProfile
    """
    if n < 3:
        logger.error(f"Twist profile needs n >= 3, got {n}")
        raise DimensionTooSmallError(f"Twist profile needs n >= 3, got {n}")
    logger.info(f"Building twist profile for n={n}")
    end = canonical_pair(n, 1)

    def build(rotation, constant):
        def rho(t):
            if t <= 2.0:
                return np.eye(n)
            if t >= 3.0:
                return np.array(constant)
            s, _ = smooth_step(t - 2.0)
            return rotation(s, n)

        return rho

    profile = TwistProfile(n, build(rotation_k, end.a), build(rotation_i, end.c))
    _validate_profile(profile, grid)
    return profile


def collar_maps(profile):
    """
    a(v) = rho_k(|v|) v and c(v) = rho_i(|v|) v on the annulus 1 <= |v| <= 4.

    :return: (a, c) NumericDiffeos tagged identity-near-boundary.
    """

    def radial(rho):
        def forward(v):
            return rho(float(np.linalg.norm(v))) @ v

        def backward(w):
            return rho(float(np.linalg.norm(w))).T @ w

        return forward, backward

    forward_a, backward_a = radial(profile.rho_k)
    forward_c, backward_c = radial(profile.rho_i)
    collar_a = NumericDiffeo(profile.n, forward_a, inverse=backward_a, identity_near_boundary=True, name="a_collar")
    collar_c = NumericDiffeo(profile.n, forward_c, inverse=backward_c, identity_near_boundary=True, name="c_collar")
    return collar_a, collar_c


def collar_commutator(profile):
    """[a, c] = a c a^-1 c^-1 on the collar."""
    collar_a, collar_c = collar_maps(profile)

    def forward(v):
        return collar_a(collar_c(collar_a.inverse(collar_c.inverse(v))))

    return NumericDiffeo(profile.n, forward, identity_near_boundary=True, name="collar_commutator")


def collar_commutator_class(profile, grid=DEFAULT_LOOP_GRID):
    """
    Lift sign of t -> [rho_k(t), rho_i(t)] for t in [1, 4].

    :return: -1 when the loop generates pi_1(SO(n)).
    """
    logger.info(f"Computing collar commutator class for n={profile.n}")

    def commutator(t):
        k, i = profile.rho_k(t), profile.rho_i(t)
        return k @ i @ k.T @ i.T

    loop = SOLoop.from_function(commutator, grid=grid, t0=1.0, t1=4.0)
    return lift_loop(loop)


def standardize_pair(a_jac, c_jac, a_map=None, c_map=None, grid=DEFAULT_GRID):
    """
    Paths and radius that deform (a, c) near a fixed point to the local model.

    :param a_jac: Differential of a at the fixed point.
    :param c_jac: Differential of c at the fixed point.
    :param a_map: Optional chart representative of a (NumericDiffeo).
    :param c_map: Optional chart representative of c (NumericDiffeo).
    :return: Standardization
    """
    pair = CommutingPair(a_jac, c_jac)
    logger.info(f"Standardizing commuting pair of dimension {pair.n}")
    alpha, gamma = synth_commuting_path(pair, grid)
    nu = negative_parity(pair)
    model = canonical_pair(pair.n, nu)
    inverse_a, inverse_c = np.linalg.inv(pair.a), np.linalg.inv(pair.c)
    alpha_relative = alpha.map(lambda value: inverse_a @ value)
    gamma_relative = gamma.map(lambda value: inverse_c @ value)
    endpoint_error = max(max_norm(alpha.values[-1] - model.a), max_norm(gamma.values[-1] - model.c))
    if endpoint_error > 1e-8:
        logger.error(f"Standardized endpoint misses the local model by {endpoint_error:.3e}")
        raise PathDegenerateError(f"Local model mismatch {endpoint_error:.3e}")

    maps = (
        a_map if a_map is not None else linear_diffeo(pair.a, "a"),
        c_map if c_map is not None else linear_diffeo(pair.c, "c"),
    )
    epsilon = EPSILON_START
    for f, rho, target in zip(maps, (alpha_relative, gamma_relative), (model.a, model.c)):
        deformed = flow_diffeo(f, rho, 1.0)
        epsilon = min(epsilon, choose_epsilon(deformed))
        jacobian = deformed.jacobian(np.zeros(pair.n))
        if max_norm(jacobian - target) > 1e-5:
            logger.error("Deformed differential does not match the local model")
            raise NotEmbeddingError("Deformed differential does not match the local model")

    if nu == 0:
        logger.warning("Negative parity is 0: the boundary twist chain needs nu = 1")
    return Standardization(nu, alpha_relative, gamma_relative, epsilon, model, nu == 1, endpoint_error)


def connected_sum_check(n, nu_first, nu_second):
    """
    Local prerequisites for gluing two fixed-point models along a neck.

    :return: dict with the neck point, its parity and whether gluing applies.
    """
    logger.info(f"Checking connected-sum prerequisites for n={n}")
    model = canonical_pair(max(n, 3), 1)
    point = np.zeros(max(n, 3))
    if n >= 4:
        point[3] = 2.0
    fixed = bool(np.array_equal(model.a @ point, point) and np.array_equal(model.c @ point, point))
    nu_neck = negative_parity(model)
    ok = n >= 4 and nu_first == 1 and nu_second == 1 and fixed and nu_neck == 1
    if not ok:
        logger.warning(f"Connected-sum prerequisites fail (n={n}, nu={nu_first},{nu_second})")
    return {"n": n, "neck_point": point.tolist(), "neck_fixed": fixed, "neck_nu": nu_neck, "applicable": ok}
