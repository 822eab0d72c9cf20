###############################################################################
### Imports
###############################################################################
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import linalg

from tests.unit.helpers import (
    complex_parity_one_pair,
    jordan_parity_one_pair,
    jordan_parity_zero_pair,
    parity_one_pair,
    polynomial_pair,
    random_invertible,
    random_rotation,
)
from twistlab.errors import (
    BadShapeError,
    ClusterAmbiguityError,
    DimensionTooSmallError,
    GridMismatchError,
    NonCommutingError,
    NotSymplecticError,
)
from twistlab.linalg_paths import (
    MIX_WEIGHT,
    CommutingPair,
    SampledPath,
    canonical_pair,
    common_eigenstructure,
    negative_parity,
    path_commutator_residual,
    smooth_step,
    so_log,
    symplectic_parity_check,
    synth_commuting_path,
)


###############################################################################
### Smoothing and Logarithms
###############################################################################
def test_smooth_step_endpoints_and_midpoint():
    assert smooth_step(0.0) == (0.0, 0.0)
    assert smooth_step(1.0) == (1.0, 0.0)
    value, derivative = smooth_step(0.5)
    assert value == pytest.approx(0.5)
    assert derivative > 0


def test_smooth_step_is_monotone():
    values, derivatives = smooth_step(np.linspace(0, 1, 201))
    assert np.all(np.diff(values) >= 0)
    assert np.all(derivatives >= 0)


def test_so_log_inverts_expm(rng):
    for n in (3, 4, 5):
        rotation = random_rotation(rng, n)
        generator = so_log(rotation)
        assert_allclose(generator, -generator.T, atol=1e-12)
        assert_allclose(linalg.expm(generator), rotation, atol=1e-10)


def test_so_log_pairs_half_turns():
    rotation = np.diag([-1.0, -1.0, 1.0])
    assert_allclose(linalg.expm(so_log(rotation)), rotation, atol=1e-12)


###############################################################################
### Commuting Pairs
###############################################################################
def test_pair_rejects_non_commuting_matrices():
    a = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    c = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(NonCommutingError):
        CommutingPair(a, c)


def test_pair_rejects_orientation_reversing_matrix():
    with pytest.raises(BadShapeError):
        CommutingPair(np.diag([-1.0, 1.0, 1.0]), np.eye(3))


def test_eigenstructure_reassembles_matrices(rng):
    pair = polynomial_pair(rng, 5)
    structure = common_eigenstructure(pair)
    assert sum(structure.dimensions) == 5
    assert_allclose(structure.block_diagonal_approximation(pair.a), pair.a, atol=1e-8)
    assert_allclose(structure.block_diagonal_approximation(pair.c), pair.c, atol=1e-8)


def test_unstable_default_clustering_widens_the_radius():
    # eigenvalues 2 and 2 + delta sit between the default radius and half of it
    pair = CommutingPair(np.diag([2.0, 2.0 + 2.5e-7, 3.0]), np.eye(3))
    structure = common_eigenstructure(pair)
    assert sorted(structure.dimensions) == [1, 2]
    assert structure.cluster_tol == pytest.approx(1e-6 * (3.0 + MIX_WEIGHT))
    assert negative_parity(pair) == 0
    with pytest.raises(ClusterAmbiguityError):
        common_eigenstructure(pair, cluster_tol=1e-7 * (3.0 + MIX_WEIGHT))


@pytest.mark.parametrize("n", [3, 4, 6])
def test_canonical_pair_parity(n):
    assert negative_parity(canonical_pair(n, 1)) == 1
    assert negative_parity(canonical_pair(n, 0)) == 0


def test_negative_parity_of_polynomial_pairs_is_zero(rng):
    for n in (3, 4, 5):
        assert negative_parity(polynomial_pair(rng, n)) == 0


def test_negative_parity_is_conjugation_invariant(rng):
    pair = parity_one_pair(rng, 4)
    for _ in range(50):
        assert negative_parity(pair.conjugate(random_invertible(rng, 4))) == 1


def test_canonical_pair_needs_three_dimensions():
    with pytest.raises(DimensionTooSmallError):
        canonical_pair(2, 1)


###############################################################################
### Path Synthesis
###############################################################################
def test_identity_pair_gives_constant_paths():
    pair = CommutingPair(np.eye(4), np.eye(4))
    alpha, gamma = synth_commuting_path(pair)
    for path in (alpha, gamma):
        assert_allclose(path.values, np.broadcast_to(np.eye(4), path.values.shape), atol=1e-15)
    assert path_commutator_residual(alpha, gamma) <= 1e-15


def assert_reaches_canonical_pair(pair, grid=1024):
    alpha, gamma = synth_commuting_path(pair, grid=grid)
    model = canonical_pair(pair.n, negative_parity(pair))
    assert_allclose(alpha.values[0], pair.a, atol=1e-12)
    assert_allclose(gamma.values[0], pair.c, atol=1e-12)
    assert np.max(np.abs(alpha.values[-1] - model.a)) <= 1e-8
    assert np.max(np.abs(gamma.values[-1] - model.c)) <= 1e-8
    assert path_commutator_residual(alpha, gamma) <= 1e-8
    assert np.min(np.linalg.det(alpha.values)) > 0
    assert np.min(np.linalg.det(gamma.values)) > 0
    return alpha, gamma


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_random_pairs_reach_the_canonical_pair(rng, n):
    for _ in range(100):
        assert_reaches_canonical_pair(polynomial_pair(rng, n))


@pytest.mark.parametrize(
    "build, nu",
    [(jordan_parity_one_pair, 1), (jordan_parity_zero_pair, 0), (complex_parity_one_pair, 1)],
)
def test_defective_and_complex_pairs_reach_the_canonical_pair(rng, build, nu):
    for _ in range(20):
        pair = build(rng)
        assert negative_parity(pair) == nu
        assert_reaches_canonical_pair(pair, grid=512)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_parity_one_pairs_reach_the_twisted_model(rng, n):
    pair = parity_one_pair(rng, n)
    alpha, gamma = synth_commuting_path(pair, grid=512)
    model = canonical_pair(n, 1)
    assert np.max(np.abs(alpha.values[-1] - model.a)) <= 1e-8
    assert np.max(np.abs(gamma.values[-1] - model.c)) <= 1e-8
    assert path_commutator_residual(alpha, gamma) <= 1e-8
    assert [label for _, _, label in alpha.stage_labels] == ["S", "N", "O", "R"]


def test_closed_form_matches_samples(rng):
    alpha, _ = synth_commuting_path(polynomial_pair(rng, 4), grid=256)
    for index in (0, 37, 128, 256):
        assert_allclose(alpha.at(alpha.times[index]), alpha.values[index], atol=1e-12)


def test_synthesis_needs_three_dimensions():
    with pytest.raises(DimensionTooSmallError):
        synth_commuting_path(CommutingPair(np.eye(2), np.eye(2)))


def test_residual_rejects_mismatched_grids():
    first = SampledPath.from_function(lambda t: np.eye(3), grid=16)
    second = SampledPath.from_function(lambda t: np.eye(3), grid=32)
    with pytest.raises(GridMismatchError):
        path_commutator_residual(first, second)


###############################################################################
### Symplectic Pairs
###############################################################################
def test_symplectic_pairs_have_even_parity():
    a = np.diag([2.0, 3.0, 0.5, 1.0 / 3.0])
    c = -np.eye(4)
    assert symplectic_parity_check(CommutingPair(a, c)) is True
    assert symplectic_parity_check(CommutingPair(-np.eye(4), -np.eye(4))) is True


def test_symplectic_check_rejects_non_symplectic_pairs():
    with pytest.raises(NotSymplecticError):
        symplectic_parity_check(CommutingPair(np.diag([2.0, 1.0, 1.0, 1.0]), np.eye(4)))
    with pytest.raises(NotSymplecticError):
        symplectic_parity_check(canonical_pair(3, 1))
