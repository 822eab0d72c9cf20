###############################################################################
### Imports
###############################################################################
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np

from twistlab.errors import (
    DimensionTooLargeError,
    DimensionTooSmallError,
    GridMismatchError,
    NotClosedError,
    NotSpecialOrthogonalError,
    NotUnitError,
    StepTooLargeError,
)
from twistlab.linalg_paths import (
    SampledPath,
    negative_parity,
    plane_rotation,
    rotation_i,
    rotation_k,
)

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
DEFAULT_LOOP_GRID = 2048
MAX_CLIFFORD_DIMENSION = 10
SO_TOL = 1e-9
MAX_STEP = 0.5
SERIES_CUTOFF = 1e-14
CLOSURE_TOL = 1e-6


###############################################################################
### Quaternions
###############################################################################
@dataclass(frozen=True)
class Quaternion:
    w: object = 0
    x: object = 0
    y: object = 0
    z: object = 0

    def __mul__(self, other):
        if not isinstance(other, Quaternion):
            return Quaternion(self.w * other, self.x * other, self.y * other, self.z * other)
        return Quaternion(
            self.w * other.w - self.x * other.x - self.y * other.y - self.z * other.z,
            self.w * other.x + self.x * other.w + self.y * other.z - self.z * other.y,
            self.w * other.y - self.x * other.z + self.y * other.w + self.z * other.x,
            self.w * other.z + self.x * other.y - self.y * other.x + self.z * other.w,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __add__(self, other):
        return Quaternion(self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z)

    def conjugate(self):
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def norm_squared(self):
        return self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z

    def norm(self):
        return math.sqrt(self.norm_squared())

    def inverse(self):
        scale = self.norm_squared()
        if all(isinstance(part, Rational) for part in self.as_tuple()):
            scale = Fraction(scale)
        return self.conjugate() * (1 / scale)

    def as_tuple(self):
        return (self.w, self.x, self.y, self.z)

    def dot(self, other):
        return sum(a * b for a, b in zip(self.as_tuple(), other.as_tuple()))


def _half_turns(t):
    # exact (cos, sin) of pi*t/2 for integral t
    if isinstance(t, Rational) and Fraction(t).denominator == 1:
        return [(1, 0), (0, 1), (-1, 0), (0, -1)][int(t) % 4]
    return math.cos(math.pi * t / 2), math.sin(math.pi * t / 2)


def q_k(t):
    """Q_k(t) = exp(pi k t / 2), exact for integral t."""
    cos, sin = _half_turns(t)
    return Quaternion(cos, 0, 0, sin)


def q_i(t):
    """Q_i(t) = exp(pi i t / 2), exact for integral t."""
    cos, sin = _half_turns(t)
    return Quaternion(cos, sin, 0, 0)


def quaternion_commutator(p, q):
    return p * q * p.inverse() * q.inverse()


def quaternion_commutator_witness():
    """
    [Q_k(1), Q_i(1)] = k i k^-1 i^-1 in exact arithmetic.

    :return: Quaternion, exactly -1.
    """
    witness = quaternion_commutator(q_k(1), q_i(1))
    logger.info(f"Quaternion commutator witness: {witness.as_tuple()}")
    return witness


def require_unit(q, tol=1e-12):
    if abs(float(q.norm_squared()) - 1.0) > tol:
        logger.error(f"Quaternion {q.as_tuple()} is not a unit quaternion")
        raise NotUnitError(f"Quaternion norm {q.norm()} differs from 1")
    return q


def quaternion_rotation(q):
    """
    Matrix of v -> q^-1 v q on Im(H) in the basis (i, j, k).

    :param q: Unit quaternion.
    :return: 3x3 special orthogonal matrix.
    """
    require_unit(q)
    w, x, y, z = (float(part) for part in q.as_tuple())
    # transpose of the matrix of v -> q v q^-1
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)],
            [2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)],
            [2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quaternion_from_rotation(rotation):
    """One of the two unit quaternions q with quaternion_rotation(q) = rotation."""
    m = np.asarray(rotation, dtype=float).T
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = 2 * math.sqrt(trace + 1)
        parts = (s / 4, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = 2 * math.sqrt(1 + m[0, 0] - m[1, 1] - m[2, 2])
        parts = ((m[2, 1] - m[1, 2]) / s, s / 4, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] >= m[2, 2]:
        s = 2 * math.sqrt(1 + m[1, 1] - m[0, 0] - m[2, 2])
        parts = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, s / 4, (m[1, 2] + m[2, 1]) / s)
    else:
        s = 2 * math.sqrt(1 + m[2, 2] - m[0, 0] - m[1, 1])
        parts = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, s / 4)
    q = Quaternion(*(float(part) for part in parts))
    return q * (1 / q.norm())


###############################################################################
### Clifford Algebra
###############################################################################
@lru_cache(maxsize=None)
def _blade_product(left, right):
    """Sign and blade of e_left * e_right for bitmask blades, e_i^2 = -1."""
    swaps = 0
    shifted = left >> 1
    while shifted:
        swaps += bin(shifted & right).count("1")
        shifted >>= 1
    swaps += bin(left & right).count("1")
    return (-1.0 if swaps % 2 else 1.0), left ^ right


@dataclass(frozen=True)
class CliffordElement:
    n: int
    coeffs: dict = field(default_factory=dict)

    @classmethod
    def scalar_one(cls, n):
        return cls(n, {0: 1.0})

    @classmethod
    def generator(cls, n, index):
        """e_{index + 1}"""
        return cls(n, {1 << index: 1.0})

    def __mul__(self, other):
        if not isinstance(other, CliffordElement):
            return CliffordElement(self.n, {blade: value * other for blade, value in self.coeffs.items()})
        if other.n != self.n:
            raise GridMismatchError("Clifford elements live in different dimensions")
        product = {}
        for left, left_value in self.coeffs.items():
            for right, right_value in other.coeffs.items():
                sign, blade = _blade_product(left, right)
                product[blade] = product.get(blade, 0.0) + sign * left_value * right_value
        return CliffordElement(self.n, _prune(product))

    __rmul__ = __mul__

    def __add__(self, other):
        total = dict(self.coeffs)
        for blade, value in other.coeffs.items():
            total[blade] = total.get(blade, 0.0) + value
        return CliffordElement(self.n, _prune(total))

    def __sub__(self, other):
        return self + other * -1.0

    @property
    def scalar(self):
        return self.coeffs.get(0, 0.0)

    def max_abs(self):
        return max((abs(value) for value in self.coeffs.values()), default=0.0)

    def max_nonscalar(self):
        return max((abs(value) for blade, value in self.coeffs.items() if blade), default=0.0)

    def close_to(self, other, tol=1e-12):
        return (self - other).max_abs() <= tol


def _prune(coeffs, relative=1e-16):
    largest = max((abs(value) for value in coeffs.values()), default=0.0)
    return {blade: value for blade, value in coeffs.items() if abs(value) > relative * largest}


def bivector_exp(omega):
    """
    exp(1/2 sum_{i<j} omega_ij e_i e_j) by scaling and squaring of the series.

    :param omega: Skew-symmetric n x n matrix.
    :return: CliffordElement
    """
    omega = np.asarray(omega, dtype=float)
    n = omega.shape[0]
    coeffs = {}
    for i in range(n):
        for j in range(i + 1, n):
            if omega[i, j] != 0.0:
                coeffs[(1 << i) | (1 << j)] = 0.5 * omega[i, j]
    one = CliffordElement.scalar_one(n)
    if not coeffs:
        return one
    size = sum(abs(value) for value in coeffs.values())
    squarings = 0
    while size > 0.5:
        size /= 2
        squarings += 1
    bivector = CliffordElement(n, coeffs) * (0.5**squarings)
    result = one
    term = one
    order = 1
    while True:
        term = term * bivector * (1.0 / order)
        result = result + term
        if term.max_abs() < SERIES_CUTOFF:
            break
        order += 1
    for _ in range(squarings):
        result = result * result
    return result


def clifford_to_quaternion(element):
    """Even element of Cl(3) as a quaternion: e2e3 -> i, e3e1 -> j, e1e2 -> k."""
    coeffs = element.coeffs
    return Quaternion(coeffs.get(0, 0.0), coeffs.get(0b110, 0.0), -coeffs.get(0b101, 0.0), coeffs.get(0b011, 0.0))


###############################################################################
### Loops
###############################################################################
@dataclass(frozen=True)
class SOLoop:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
            raise GridMismatchError("Loop times must be strictly increasing")
        if values.ndim != 3 or values.shape[0] != len(times) or values.shape[1] != values.shape[2]:
            raise GridMismatchError("Loop values do not match the time grid")
        n = values.shape[1]
        orthogonality = np.max(np.abs(np.transpose(values, (0, 2, 1)) @ values - np.eye(n)))
        determinant = np.max(np.abs(np.linalg.det(values) - 1.0))
        if max(orthogonality, determinant) > SO_TOL:
            logger.error(f"Loop leaves SO({n}): residual {max(orthogonality, determinant):.3e}")
            raise NotSpecialOrthogonalError(f"Loop samples are not special orthogonal")
        closure = float(np.max(np.abs(values[0] - values[-1])))
        if closure > SO_TOL:
            logger.error(f"Loop is not closed: endpoint gap {closure:.3e}")
            raise NotClosedError(f"Loop endpoint gap {closure:.3e} exceeds {SO_TOL}")
        steps = np.linalg.norm(np.diff(values, axis=0), ord=2, axis=(1, 2))
        if np.max(steps) > MAX_STEP:
            logger.error(f"Loop step {np.max(steps):.3f} exceeds {MAX_STEP}")
            raise StepTooLargeError(f"Loop step {np.max(steps):.3f} exceeds {MAX_STEP}; refine the grid")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, function, grid=DEFAULT_LOOP_GRID, t0=0.0, t1=1.0):
        times = np.linspace(t0, t1, grid + 1)
        return cls(times, np.array([function(t) for t in times]))

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.values))


def constant_loop(n, grid=DEFAULT_LOOP_GRID):
    return SOLoop.from_function(lambda t: np.eye(n), grid=grid)


def concatenate_loops(first, second):
    """First loop on [0, 1/2], second on [1/2, 1]."""
    if first.n != second.n or np.max(np.abs(first.values[-1] - second.values[0])) > SO_TOL:
        raise NotClosedError("Loops do not share a base point")
    span_first = first.times[-1] - first.times[0]
    span_second = second.times[-1] - second.times[0]
    times = np.concatenate(
        [
            0.5 * (first.times - first.times[0]) / span_first,
            0.5 + 0.5 * (second.times[1:] - second.times[0]) / span_second,
        ]
    )
    return SOLoop(times, np.concatenate([first.values, second.values[1:]]))


def reverse_loop(loop):
    return SOLoop(loop.times[-1] + loop.times[0] - loop.times[::-1], loop.values[::-1])


def conjugate_loop(loop, rotation):
    rotation = np.asarray(rotation, dtype=float)
    return SOLoop(loop.times, rotation @ loop.values @ rotation.T)


def plane_rotation_loop(n, first, second, turns=1, grid=DEFAULT_LOOP_GRID):
    """t -> rotation by 2*pi*turns*t in the plane of coordinates (first, second)."""

    def value(t):
        matrix = np.eye(n)
        block = plane_rotation(2 * np.pi * turns * t)
        matrix[np.ix_([first, second], [first, second])] = block
        return matrix

    return SOLoop.from_function(value, grid=grid)


def generator_loops(n, grid=DEFAULT_LOOP_GRID):
    """
    Sampled R_k(t) (+) I, R_i(t) (+) I and their pointwise commutator loop.

    :param n: Dimension, at least 3.
    :param grid: Samples per unit time.
    :return: (SampledPath, SampledPath, SOLoop)
    """
    if n < 3:
        logger.error(f"Generator loops need n >= 3, got {n}")
        raise DimensionTooSmallError(f"Generator loops need n >= 3, got {n}")
    labels = ((0.0, 1.0, "custom"),)
    path_k = SampledPath.from_function(lambda t: rotation_k(t, n), grid=grid, stage_labels=labels)
    path_i = SampledPath.from_function(lambda t: rotation_i(t, n), grid=grid, stage_labels=labels)
    commutator = path_k.values @ path_i.values @ np.transpose(path_k.values, (0, 2, 1)) @ np.transpose(
        path_i.values, (0, 2, 1)
    )
    return path_k, path_i, SOLoop(path_k.times, commutator)


def so_log_small(rotation):
    """
    Skew logarithm of a rotation near the identity via log(I + X).

    :param rotation: Special orthogonal matrix with |R - I| <= 0.5.
    :return: Skew-symmetric matrix.
    """
    rotation = np.asarray(rotation, dtype=float)
    n = rotation.shape[0]
    if np.max(np.abs(rotation.T @ rotation - np.eye(n))) > SO_TOL:
        logger.error("so_log_small received a non-orthogonal matrix")
        raise NotSpecialOrthogonalError("Matrix is not special orthogonal")
    offset = rotation - np.eye(n)
    if np.linalg.norm(offset, ord=2) > MAX_STEP:
        logger.error(f"Rotation step {np.linalg.norm(offset, ord=2):.3f} is too large for the series")
        raise StepTooLargeError(f"|R - I| = {np.linalg.norm(offset, ord=2):.3f} exceeds {MAX_STEP}")
    result = offset.copy()
    power = offset.copy()
    order = 1
    while order < 200:
        order += 1
        power = power @ offset
        term = power / order
        result += term if order % 2 else -term
        if np.max(np.abs(term)) < 1e-17:
            break
    return 0.5 * (result - result.T)


def lift_loop(loop):
    """
    Lifts a loop in SO(n) to Spin(n) step by step and returns the endpoint sign.

    Under v -> g^-1 v g the covering map reverses products, so increments
    multiply the running element on the right.

    :param loop: SOLoop with n <= 10.
    :return: +1 (null-homotopic) or -1 (generator of pi_1).
    """
    n = loop.n
    if n > MAX_CLIFFORD_DIMENSION:
        logger.error(f"Clifford lifting is limited to n <= {MAX_CLIFFORD_DIMENSION}, got {n}")
        raise DimensionTooLargeError(f"Clifford lifting is limited to n <= {MAX_CLIFFORD_DIMENSION}, got {n}")
    logger.info(f"Lifting loop in SO({n}) with {len(loop.times)} samples")
    element = CliffordElement.scalar_one(n)
    values = loop.values
    for index in range(len(values) - 1):
        delta = np.linalg.solve(values[index].T, values[index + 1].T).T
        element = element * bivector_exp(so_log_small(delta))
    scalar = element.scalar
    residual = max(abs(abs(scalar) - 1.0), element.max_nonscalar())
    if residual > CLOSURE_TOL:
        logger.error(f"Lifted loop did not close: scalar {scalar:.6f}, residual {residual:.3e}")
        raise NotClosedError(f"Lift endpoint is not +-1 (residual {residual:.3e})")
    sign = 1 if scalar > 0 else -1
    logger.info(f"Loop lift sign {sign:+d} (closure residual {residual:.3e})")
    return sign


def quaternion_lift_sign(loop):
    """Endpoint sign of the quaternion continuation lift of a loop in SO(3)."""
    if loop.n != 3:
        error = DimensionTooSmallError if loop.n < 3 else DimensionTooLargeError
        logger.error(f"Quaternion continuation needs n = 3, got {loop.n}")
        raise error(f"Quaternion continuation needs n = 3, got {loop.n}")
    start = quaternion_from_rotation(loop.values[0])
    current = start
    for value in loop.values[1:]:
        candidate = quaternion_from_rotation(value)
        current = candidate if candidate.dot(current) >= 0 else -candidate
    return 1 if current.dot(start) > 0 else -1


def spin_obstruction_of_pair(pair, grid=DEFAULT_LOOP_GRID):
    """
    (nu, lift sign) of the loop [R_k (+) I, R_i (+) I]^nu for a commuting pair.

    :param pair: CommutingPair with n >= 3.
    :return: (nu, sign); sign is -1 exactly when nu is 1.
    """
    if pair.n < 3:
        raise DimensionTooSmallError(f"Spin obstruction needs n >= 3, got {pair.n}")
    nu = negative_parity(pair)
    loop = generator_loops(pair.n, grid)[2] if nu else constant_loop(pair.n, grid)
    sign = lift_loop(loop)
    if (sign == -1) != (nu == 1):
        logger.warning(f"Spin obstruction disagrees with parity: nu={nu}, sign={sign}")
    return nu, sign
