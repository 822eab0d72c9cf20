###############################################################################
### Imports
###############################################################################
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from twistlab.errors import (
    BadShapeError,
    ClusterAmbiguityError,
    DimensionTooSmallError,
    GridMismatchError,
    NonCommutingError,
    NotSymplecticError,
    PathDegenerateError,
)

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
DEFAULT_GRID = 1024
DEFAULT_PAIR_TOL = 1e-8
CLUSTER_TOL_FACTOR = 1e-7
CLUSTER_TOL_STEPS = 4
STAGE_LABELS = ("S", "N", "O", "R")

# Weight of c in the generic combination a + w*c whose spectrum separates joint eigenvalues
MIX_WEIGHT = 0.7548776662466927

INVARIANCE_TOL = 1e-8
RESIDUAL_TOL = 1e-8
MIN_DETERMINANT = 1e-12


###############################################################################
### Smoothing
###############################################################################
def _sigma(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    positive = u > 0
    out[positive] = np.exp(-1.0 / u[positive])
    return out


def smooth_step(u):
    """
    Evaluates the flat smooth step s(u) = sigma(u) / (sigma(u) + sigma(1 - u)),
    sigma(u) = exp(-1/u), on [0, 1] (inputs are clamped).

    :param u: Scalar or array of parameters.
    :return: Tuple (value, derivative), floats for scalar input.
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    a = _sigma(u)
    b = _sigma(1.0 - u)
    safe_u = np.where(u > 0, u, 1.0)
    safe_w = np.where(u < 1, 1.0 - u, 1.0)
    da = np.where(u > 0, a / safe_u**2, 0.0)
    db = np.where(u < 1, b / safe_w**2, 0.0)
    total = a + b
    value = a / total
    derivative = (da * b + a * db) / total**2
    if value.ndim == 0:
        return float(value), float(derivative)
    return value, derivative


###############################################################################
### Matrix Helpers
###############################################################################
def as_matrix(values, n=None, orientation_preserving=False, tol=1e-10):
    """
    Validates and freezes a dense real square matrix.

    :param values: Nested sequence or array.
    :param n: Expected dimension, if known.
    :param orientation_preserving: Require det > tol.
    :return: Read-only float64 array.
    """
    matrix = np.array(values, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        logger.error(f"Expected a square matrix, got shape {matrix.shape}")
        raise BadShapeError(f"Expected a square matrix, got shape {matrix.shape}")
    if n is not None and matrix.shape[0] != n:
        logger.error(f"Expected dimension {n}, got {matrix.shape[0]}")
        raise BadShapeError(f"Expected dimension {n}, got {matrix.shape[0]}")
    if not np.all(np.isfinite(matrix)):
        logger.error("Matrix has non-finite entries")
        raise BadShapeError("Matrix has non-finite entries")
    if orientation_preserving and np.linalg.det(matrix) <= tol:
        logger.error(f"Matrix is not orientation-preserving (det={np.linalg.det(matrix)})")
        raise BadShapeError("Matrix is not orientation-preserving")
    matrix.setflags(write=False)
    return matrix


def max_norm(matrix):
    return float(np.max(np.abs(matrix))) if np.size(matrix) else 0.0


def commutator_norm(a, c):
    return max_norm(a @ c - c @ a)


def plane_rotation(angle):
    cos, sin = np.cos(angle), np.sin(angle)
    return np.array([[cos, -sin], [sin, cos]])


def rotation_k(t, n=3):
    """R_k(t) (+) I: rotation by pi*t in the first coordinate plane."""
    matrix = np.eye(n)
    matrix[:2, :2] = plane_rotation(np.pi * t)
    return matrix


def rotation_i(t, n=3):
    """R_i(t) (+) I: rotation by -pi*t in the plane of coordinates 2 and 3."""
    matrix = np.eye(n)
    matrix[1:3, 1:3] = plane_rotation(-np.pi * t)
    return matrix


def so_log(rotation):
    """
    Real logarithm of a special orthogonal matrix through its real Schur form.
    Eigenvalues -1 are paired into planes rotated by pi.

    :param rotation: Special orthogonal matrix.
    :return: Skew-symmetric matrix L with expm(L) = rotation.
    """
    schur_form, basis = linalg.schur(np.asarray(rotation, dtype=float), output="real")
    n = schur_form.shape[0]
    log_form = np.zeros((n, n))
    flipped = []
    index = 0
    while index < n:
        if index + 1 < n and abs(schur_form[index + 1, index]) > 1e-12:
            theta = np.arctan2(schur_form[index + 1, index], schur_form[index, index])
            log_form[index, index + 1] = -theta
            log_form[index + 1, index] = theta
            index += 2
        else:
            if schur_form[index, index] < 0:
                flipped.append(index)
            index += 1
    if len(flipped) % 2:
        logger.error("Rotation has an odd number of -1 eigenvalues")
        raise PathDegenerateError("Matrix is not special orthogonal (odd -1 multiplicity)")
    for first, second in zip(flipped[0::2], flipped[1::2]):
        log_form[first, second] = -np.pi
        log_form[second, first] = np.pi
    log_matrix = basis @ log_form @ basis.T
    return 0.5 * (log_matrix - log_matrix.T)


###############################################################################
### Classes
###############################################################################
@dataclass(frozen=True)
class CommutingPair:
    a: np.ndarray
    c: np.ndarray
    tol: float = DEFAULT_PAIR_TOL

    def __post_init__(self):
        a = as_matrix(self.a, orientation_preserving=True)
        c = as_matrix(self.c, n=a.shape[0], orientation_preserving=True)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        if self.tol < 0:
            raise BadShapeError("Commutation tolerance must be nonnegative")
        residual = commutator_norm(a, c)
        if residual > self.tol:
            logger.error(f"Matrices do not commute: residual {residual:.3e} > {self.tol:.3e}")
            raise NonCommutingError(f"Commutation residual {residual:.3e} exceeds {self.tol:.3e}")

    @property
    def n(self):
        return self.a.shape[0]

    def conjugate(self, basis):
        """Simultaneous conjugation B^-1 (a, c) B."""
        inverse = np.linalg.inv(basis)
        return CommutingPair(inverse @ self.a @ basis, inverse @ self.c @ basis, self.tol)


@dataclass(frozen=True)
class SampledPath:
    times: np.ndarray
    values: np.ndarray
    stage_labels: tuple = ()
    lipschitz: Optional[float] = None
    evaluator: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
            logger.error("Sample times must be strictly increasing")
            raise GridMismatchError("Sample times must be strictly increasing")
        if values.ndim != 3 or values.shape[0] != len(times) or values.shape[1] != values.shape[2]:
            logger.error(f"Sample values have shape {values.shape} for {len(times)} times")
            raise GridMismatchError("Sample values do not match the time grid")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        steps = np.max(np.abs(np.diff(values, axis=0)), axis=(1, 2)) / np.diff(times)
        bound = float(np.max(steps))
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", bound)
        elif bound > self.lipschitz * (1 + 1e-12):
            raise GridMismatchError(f"Samples violate the recorded Lipschitz bound {self.lipschitz}")

    @classmethod
    def from_function(cls, function, t0=0.0, t1=1.0, grid=DEFAULT_GRID, stage_labels=()):
        count = max(int(round(grid * (t1 - t0))), 1) + 1
        times = np.linspace(t0, t1, count)
        values = np.array([function(t) for t in times])
        return cls(times, values, tuple(stage_labels), evaluator=function)

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.values))

    def at(self, t):
        """Closed-form value when available, piecewise-linear interpolation otherwise."""
        t = float(np.clip(t, self.t0, self.t1))
        if self.evaluator is not None:
            return np.asarray(self.evaluator(t), dtype=float)
        index = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        t_left, t_right = self.times[index], self.times[index + 1]
        weight = (t - t_left) / (t_right - t_left)
        return (1 - weight) * self.values[index] + weight * self.values[index + 1]

    def velocity(self, t, step=1e-6):
        t = float(np.clip(t, self.t0, self.t1))
        if self.evaluator is None:
            index = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
            return (self.values[index + 1] - self.values[index]) / (
                self.times[index + 1] - self.times[index]
            )
        left = max(t - step, self.t0)
        right = min(t + step, self.t1)
        return (self.at(right) - self.at(left)) / (right - left)

    def map(self, function):
        """Pointwise transform, keeping labels and the closed form."""
        evaluator = None
        if self.evaluator is not None:
            source = self.evaluator
            evaluator = lambda t: function(source(t))
        values = np.array([function(value) for value in self.values])
        return SampledPath(self.times, values, self.stage_labels, evaluator=evaluator)


@dataclass(frozen=True)
class EigenBlock:
    lam_a: complex
    lam_c: complex
    basis: np.ndarray

    @property
    def multiplicity(self):
        return self.basis.shape[1]


@dataclass(frozen=True)
class EigenStructure:
    blocks: tuple
    cluster_tol: float

    @property
    def dimensions(self):
        return [block.multiplicity for block in self.blocks]

    def block_diagonal_approximation(self, matrix):
        """Rebuilds a matrix from its restrictions to the blocks."""
        basis = np.hstack([block.basis for block in self.blocks])
        inverse = np.linalg.inv(basis)
        restricted = inverse @ np.asarray(matrix, dtype=float) @ basis
        approximation = np.zeros_like(restricted)
        start = 0
        for size in self.dimensions:
            approximation[start : start + size, start : start + size] = restricted[
                start : start + size, start : start + size
            ]
            start += size
        return basis @ approximation @ inverse


@dataclass
class _Cluster:
    omega: complex
    basis: np.ndarray
    lam_a: complex
    lam_c: complex


###############################################################################
### Eigenstructure
###############################################################################
def _partition(values, tol):
    parent = list(range(len(values)))

    def find(index):
        while parent[index] != index:
            parent[index] = parent[parent[index]]
            index = parent[index]
        return index

    for first in range(len(values)):
        for second in range(first + 1, len(values)):
            if abs(values[first] - values[second]) <= tol:
                parent[find(first)] = find(second)
    groups = {}
    for index in range(len(values)):
        groups.setdefault(find(index), []).append(index)
    return sorted(groups.values())


def _normalize_columns(basis):
    # Deterministic phase: the largest entry of every column is real positive
    basis = basis.copy()
    for column in range(basis.shape[1]):
        pivot = basis[np.argmax(np.abs(basis[:, column])), column]
        basis[:, column] *= np.conj(pivot) / abs(pivot)
    return basis


def _generalized_eigenspace(matrix, omega, size):
    n = matrix.shape[0]
    if size == n:
        return np.eye(n, dtype=matrix.dtype)
    scale = max(max_norm(matrix), 1.0)
    shifted = (matrix - omega * np.eye(n)) / scale
    power = np.eye(n, dtype=shifted.dtype)
    for exponent in range(1, size + 1):
        power = power @ shifted
        _, singular, vh = np.linalg.svd(power)
        if singular[n - size] <= 1e-6 * singular[n - size - 1]:
            break
    return _normalize_columns(vh[n - size :].conj().T)


def _spectral_radius(matrix):
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def _joint_clusters(pair, cluster_tol=None):
    residual = commutator_norm(pair.a, pair.c)
    if residual > pair.tol:
        logger.error(f"Commutation residual {residual:.3e} exceeds {pair.tol:.3e}")
        raise NonCommutingError(f"Commutation residual {residual:.3e} exceeds {pair.tol:.3e}")
    mixed = pair.a + MIX_WEIGHT * pair.c
    explicit = cluster_tol is not None
    if cluster_tol is None:
        cluster_tol = CLUSTER_TOL_FACTOR * _spectral_radius(mixed)
    if cluster_tol <= 0:
        raise ClusterAmbiguityError("cluster_tol must be positive")

    # A conjugated Jordan block splits its eigenvalue by about sqrt(eps) * cond * |B|,
    # so the default radius widens tenfold per step until both clusterings agree.
    eigenvalues = np.linalg.eigvals(mixed)
    attempts = 1 if explicit else CLUSTER_TOL_STEPS
    for attempt in range(attempts):
        groups = _partition(eigenvalues, cluster_tol)
        finer = _partition(eigenvalues, cluster_tol / 2)
        if {tuple(group) for group in groups} == {tuple(group) for group in finer}:
            break
        if attempt == attempts - 1:
            logger.error(f"Eigenvalue clustering is unstable at tolerance {cluster_tol:.3e}")
            raise ClusterAmbiguityError(
                f"Clusterings at {cluster_tol:.3e} and {cluster_tol / 2:.3e} disagree"
            )
        logger.warning(f"Eigenvalue clustering is unstable at {cluster_tol:.3e}, widening the radius")
        cluster_tol *= 10

    scale_a = max(max_norm(pair.a), 1.0)
    scale_c = max(max_norm(pair.c), 1.0)
    clusters = []
    conjugates = 0
    for group in groups:
        omega = complex(np.mean(eigenvalues[group]))
        size = len(group)
        if omega.imag < -cluster_tol:
            conjugates += size
            continue
        real = abs(omega.imag) <= cluster_tol
        if real:
            basis = _generalized_eigenspace(mixed, omega.real, size)
        else:
            basis = _generalized_eigenspace(mixed.astype(complex), omega, size)
        lams = []
        for matrix, scale in ((pair.a, scale_a), (pair.c, scale_c)):
            restricted = basis.conj().T @ matrix @ basis
            lam = complex(np.trace(restricted)) / size
            if max_norm(matrix @ basis - basis @ restricted) > INVARIANCE_TOL * scale:
                logger.error("Block subspace is not invariant to tolerance")
                raise ClusterAmbiguityError("Block subspace is not invariant (ill-conditioned input)")
            if np.max(np.abs(np.linalg.eigvals(restricted) - lam)) > 1e-5 * scale:
                logger.error("Block mixes distinct joint eigenvalues")
                raise ClusterAmbiguityError("Block mixes distinct joint eigenvalues")
            lams.append(lam)
        if real:
            lams = [complex(lam.real, 0.0) for lam in lams]
            clusters.append(_Cluster(complex(omega.real, 0.0), basis.real, lams[0], lams[1]))
        else:
            clusters.append(_Cluster(omega, basis, lams[0], lams[1]))
            clusters.append(
                _Cluster(omega.conjugate(), basis.conj(), lams[0].conjugate(), lams[1].conjugate())
            )
            conjugates -= size
    if conjugates != 0:
        logger.error("Complex eigenvalue clusters are not closed under conjugation")
        raise ClusterAmbiguityError("Complex eigenvalue clusters are not closed under conjugation")
    return clusters, cluster_tol


###############################################################################
### Functions
###############################################################################
def common_eigenstructure(pair, cluster_tol=None):
    """
    Common refinement of the generalized eigenspace decompositions of a and c.

    :param pair: CommutingPair.
    :param cluster_tol: Merge radius for eigenvalues (default 1e-7 * spectral radius, widened up to 1e-4 when unstable).
    :return: EigenStructure with real bases; conjugate eigenvalue pairs share one block.
    """
    logger.info(f"Computing common eigenstructure for n={pair.n}")
    clusters, cluster_tol = _joint_clusters(pair, cluster_tol)
    blocks = []
    for cluster in clusters:
        if abs(cluster.omega.imag) <= cluster_tol:
            blocks.append(EigenBlock(cluster.lam_a, cluster.lam_c, cluster.basis))
        elif cluster.omega.imag > 0:
            real_basis, _ = np.linalg.qr(np.hstack([cluster.basis.real, cluster.basis.imag]))
            blocks.append(EigenBlock(cluster.lam_a, cluster.lam_c, real_basis))
    logger.debug(f"Block dimensions: {[block.multiplicity for block in blocks]}")
    return EigenStructure(tuple(blocks), cluster_tol)


def _is_negative_real(lam, tol):
    return abs(lam.imag) <= tol and lam.real < -tol


def negative_parity(pair, cluster_tol=None):
    """
    Parity of the dimension on which both matrices have negative real eigenvalues.

    :param pair: CommutingPair.
    :return: 0 or 1.
    """
    structure = common_eigenstructure(pair, cluster_tol)
    tol = structure.cluster_tol
    dimension = sum(
        block.multiplicity
        for block in structure.blocks
        if _is_negative_real(block.lam_a, tol) and _is_negative_real(block.lam_c, tol)
    )
    return dimension % 2


def canonical_pair(n, nu):
    """(r_k^nu (+) I, r_i^nu (+) I) with exact entries."""
    if n < 3:
        logger.error(f"Canonical pair needs n >= 3, got {n}")
        raise DimensionTooSmallError(f"Canonical pair needs n >= 3, got {n}")
    a = np.eye(n)
    c = np.eye(n)
    if nu:
        a[:3, :3] = np.diag([-1.0, -1.0, 1.0])
        c[:3, :3] = np.diag([1.0, -1.0, -1.0])
    return CommutingPair(a, c)


def _wrap_angle(angle):
    angle = (angle + np.pi) % (2 * np.pi) - np.pi
    if angle <= -np.pi + 1e-12:
        angle = np.pi
    return angle


def _angle_path(angle, s):
    # Shortest rotation back to 0; a half turn continues in the positive direction
    if abs(angle - np.pi) <= 1e-12:
        return np.pi * (1 + s)
    return angle * (1 - s)


def _normal_form(clusters, cluster_tol, n):
    """
    Columns of B and the block data of the rotation stage.

    :return: (basis, nu, planes) where planes lists (column offset, angle_a, angle_c).
    """
    classes = {(-1, 1): [], (-1, -1): [], (1, -1): [], (1, 1): []}
    complex_planes = []
    for cluster in clusters:
        if abs(cluster.omega.imag) <= cluster_tol:
            key = (int(np.sign(cluster.lam_a.real)), int(np.sign(cluster.lam_c.real)))
            classes[key].extend(cluster.basis.T)
        elif cluster.omega.imag > 0:
            angle_a = _wrap_angle(-np.angle(cluster.lam_a))
            angle_c = _wrap_angle(-np.angle(cluster.lam_c))
            for column in cluster.basis.T:
                complex_planes.append(([column.real, column.imag], angle_a, angle_c))

    nu = len(classes[(-1, -1)]) % 2
    if any(len(classes[key]) % 2 != nu for key in ((-1, 1), (1, -1))):
        logger.error("Negative eigenspace dimensions have inconsistent parity")
        raise PathDegenerateError("Negative eigenspace dimensions have inconsistent parity")

    columns = []
    if nu:
        for key in ((-1, 1), (-1, -1), (1, -1)):
            columns.append(classes[key].pop(0))
    planes = []
    for key in ((-1, -1), (-1, 1), (1, -1)):
        vectors = classes[key]
        for first, second in zip(vectors[0::2], vectors[1::2]):
            planes.append([len(columns), np.pi if key[0] < 0 else 0.0, np.pi if key[1] < 0 else 0.0])
            columns.extend([first, second])
    for vectors, angle_a, angle_c in complex_planes:
        planes.append([len(columns), angle_a, angle_c])
        columns.extend(vectors)
    columns.extend(classes[(1, 1)])

    basis = np.column_stack(columns)
    if basis.shape != (n, n):
        raise PathDegenerateError("Normal-form basis is incomplete")
    if np.linalg.det(basis) < 0:
        basis[:, 0] = -basis[:, 0]
        if planes and planes[0][0] == 0:
            planes[0][1] = _wrap_angle(-planes[0][1])
            planes[0][2] = _wrap_angle(-planes[0][2])
    return basis, nu, [tuple(plane) for plane in planes]


def _rotation_stage(n, nu, planes, which, s):
    matrix = np.eye(n)
    if nu:
        matrix[:3, :3] = np.diag([-1.0, -1.0, 1.0] if which == 0 else [1.0, -1.0, -1.0])
    for offset, angle_a, angle_c in planes:
        angle = angle_a if which == 0 else angle_c
        matrix[offset : offset + 2, offset : offset + 2] = plane_rotation(_angle_path(angle, s))
    return matrix


def synth_commuting_path(pair, grid=DEFAULT_GRID, cluster_tol=None):
    """
    Smooth paths through commuting pairs from (a, c) to the canonical pair.

    Stages on [0, 1/4], ..., [3/4, 1], each reparametrized by smooth_step:
    S drops the nilpotent parts, N rescales the spectra onto the unit circle,
    O conjugates by a GL+ path from I to the normal-form basis B,
    R rotates the SO(2) blocks back to the identity.

    :param pair: CommutingPair with n >= 3.
    :param grid: Samples per unit parameter (>= 16).
    :return: (alpha, gamma) SampledPaths.
    """
    n = pair.n
    if n < 3:
        logger.error(f"Path synthesis needs n >= 3, got {n}")
        raise DimensionTooSmallError(f"Path synthesis needs n >= 3, got {n}")
    if grid < 16:
        raise GridMismatchError(f"Grid must be at least 16, got {grid}")
    logger.info(f"Synthesizing commuting path for n={n} on a grid of {grid}")

    clusters, cluster_tol = _joint_clusters(pair, cluster_tol)
    eigenbasis = np.hstack([cluster.basis.astype(complex) for cluster in clusters])
    inverse = np.linalg.inv(eigenbasis)
    spectra = []
    for index in (0, 1):
        lams = np.concatenate(
            [np.full(cluster.basis.shape[1], (cluster.lam_a, cluster.lam_c)[index]) for cluster in clusters]
        )
        spectra.append(lams)

    def diagonal(lams):
        return ((eigenbasis * lams) @ inverse).real

    semisimple = [diagonal(lams) for lams in spectra]
    unitary = [diagonal(lams / np.abs(lams)) for lams in spectra]
    originals = [pair.a, pair.c]

    basis, nu, planes = _normal_form(clusters, cluster_tol, n)
    orthogonal, positive = linalg.polar(basis)
    generator = so_log(orthogonal)
    for which in (0, 1):
        target = _rotation_stage(n, nu, planes, which, 0.0)
        mismatch = max_norm(np.linalg.solve(basis, unitary[which] @ basis) - target)
        logger.debug(f"Normal form mismatch for matrix {which}: {mismatch:.3e}")
        if mismatch > 1e-6:
            logger.error(f"Normal form does not match the conjugated matrix ({mismatch:.3e})")
            raise PathDegenerateError(f"Normal form mismatch {mismatch:.3e}")

    def conjugation(s):
        return linalg.expm(s * generator) @ ((1 - s) * np.eye(n) + s * positive)

    def stage(which, index, s):
        if index == 0:
            return (1 - s) * originals[which] + s * semisimple[which]
        if index == 1:
            lams = spectra[which]
            return diagonal(lams * np.abs(lams) ** (-s))
        if index == 2:
            path = conjugation(s)
            return np.linalg.solve(path, unitary[which] @ path)
        return _rotation_stage(n, nu, planes, which, s)

    def make_evaluator(which):
        def evaluate(t):
            index = min(int(t * 4), 3)
            s, _ = smooth_step(t * 4 - index)
            return stage(which, index, s)

        return evaluate

    labels = tuple((k / 4, (k + 1) / 4, label) for k, label in enumerate(STAGE_LABELS))
    alpha = SampledPath.from_function(make_evaluator(0), grid=grid, stage_labels=labels)
    gamma = SampledPath.from_function(make_evaluator(1), grid=grid, stage_labels=labels)

    for path in (alpha, gamma):
        determinants = np.linalg.det(path.values)
        if np.min(determinants) < MIN_DETERMINANT:
            index = int(np.argmin(determinants))
            logger.error(f"Determinant dropped to {determinants[index]:.3e} at t={path.times[index]}")
            raise PathDegenerateError(f"Determinant dropped to {determinants[index]:.3e}")
    residual = float(
        np.max(np.abs(alpha.values @ gamma.values - gamma.values @ alpha.values))
    )
    if residual > RESIDUAL_TOL:
        logger.error(f"Synthesized paths stopped commuting (residual {residual:.3e})")
        raise PathDegenerateError(f"Commutation residual {residual:.3e} along the path")
    logger.info(f"Synthesized paths with nu={nu}, commutator residual {residual:.3e}")
    return alpha, gamma


def path_commutator_residual(alpha, gamma):
    """
    Max over samples of |alpha gamma alpha^-1 gamma^-1 - I|.

    :param alpha: SampledPath.
    :param gamma: SampledPath on the same grid.
    :return: float
    """
    if alpha.times.shape != gamma.times.shape or not np.array_equal(alpha.times, gamma.times):
        logger.error("Paths are sampled on different grids")
        raise GridMismatchError("Paths are sampled on different grids")
    forward = alpha.values @ gamma.values
    backward = gamma.values @ alpha.values
    # forward @ backward^-1 = alpha gamma alpha^-1 gamma^-1
    group_commutator = np.linalg.solve(
        np.transpose(backward, (0, 2, 1)), np.transpose(forward, (0, 2, 1))
    ).transpose(0, 2, 1)
    identity = np.eye(alpha.n)
    return float(np.max(np.abs(group_commutator - identity)))


def standard_skew_form(n):
    half = n // 2
    form = np.zeros((n, n))
    form[:half, half:] = np.eye(half)
    form[half:, :half] = -np.eye(half)
    return form


def symplectic_parity_check(pair, form=None):
    """
    True iff negative_parity(pair) == 0 for a pair preserving a skew form.

    :param pair: CommutingPair of even dimension.
    :param form: Nondegenerate skew form (default: the standard one).
    :return: bool
    """
    if pair.n % 2:
        logger.error(f"Symplectic pairs need even dimension, got {pair.n}")
        raise NotSymplecticError(f"Symplectic pairs need even dimension, got {pair.n}")
    form = standard_skew_form(pair.n) if form is None else np.asarray(form, dtype=float)
    residual = max(max_norm(m.T @ form @ m - form) for m in (pair.a, pair.c))
    if residual > 1e-8:
        logger.error(f"Pair does not preserve the skew form (residual {residual:.3e})")
        raise NotSymplecticError(f"Skew-form residual {residual:.3e} exceeds 1e-8")
    return negative_parity(pair) == 0
