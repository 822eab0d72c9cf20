###############################################################################
### Imports
###############################################################################
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import linalg

from tests.unit.helpers import random_rotation
from twistlab.errors import (
    DimensionTooLargeError,
    NotClosedError,
    NotSpecialOrthogonalError,
    NotUnitError,
    StepTooLargeError,
)
from twistlab.linalg_paths import canonical_pair, rotation_i, rotation_k
from twistlab.spin_lift import (
    CliffordElement,
    Quaternion,
    SOLoop,
    bivector_exp,
    clifford_to_quaternion,
    concatenate_loops,
    conjugate_loop,
    constant_loop,
    generator_loops,
    lift_loop,
    plane_rotation_loop,
    q_i,
    q_k,
    quaternion_commutator_witness,
    quaternion_from_rotation,
    quaternion_lift_sign,
    quaternion_rotation,
    reverse_loop,
    so_log_small,
    spin_obstruction_of_pair,
)


###############################################################################
### Quaternions
###############################################################################
def test_commutator_witness_is_exactly_minus_one():
    assert quaternion_commutator_witness() == Quaternion(-1, 0, 0, 0)


@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 1.0, 1.5])
def test_quaternion_rotations_match_generator_paths(t):
    assert_allclose(quaternion_rotation(q_i(t)), rotation_i(t), atol=1e-12)
    assert_allclose(quaternion_rotation(q_k(t)), rotation_k(-t), atol=1e-12)


def test_quaternion_from_rotation_recovers_rotation(rng):
    for _ in range(20):
        rotation = random_rotation(rng, 3)
        assert_allclose(quaternion_rotation(quaternion_from_rotation(rotation)), rotation, atol=1e-12)


def test_quaternion_rotation_requires_unit_norm():
    with pytest.raises(NotUnitError):
        quaternion_rotation(Quaternion(2.0, 0.0, 0.0, 0.0))


def test_rotation_matrix_acts_by_inverse_conjugation(rng):
    for _ in range(200):
        parts = rng.standard_normal(4)
        q = Quaternion(*(float(part) for part in parts / np.linalg.norm(parts)))
        v = rng.standard_normal(3)
        image = q.inverse() * Quaternion(0.0, *(float(part) for part in v)) * q
        assert_allclose(quaternion_rotation(q) @ v, image.as_tuple()[1:], atol=1e-10)
        assert image.w == pytest.approx(0.0, abs=1e-10)


###############################################################################
### Clifford Algebra
###############################################################################
def test_generators_square_to_minus_one_and_anticommute():
    e1, e2 = CliffordElement.generator(3, 0), CliffordElement.generator(3, 1)
    assert (e1 * e1).close_to(CliffordElement.scalar_one(3) * -1.0)
    assert (e1 * e2 + e2 * e1).max_abs() == 0.0


def test_even_subalgebra_of_cl3_is_the_quaternions():
    e1, e2, e3 = (CliffordElement.generator(3, k) for k in range(3))
    e23, e31 = e2 * e3, e3 * e1
    assert clifford_to_quaternion(e23) == Quaternion(0.0, 1.0, 0.0, 0.0)
    assert clifford_to_quaternion(e31) == Quaternion(0.0, 0.0, 1.0, 0.0)
    assert clifford_to_quaternion(e23 * e31) == clifford_to_quaternion(e23) * clifford_to_quaternion(e31)


def test_full_turn_exponentiates_to_minus_one():
    omega = np.zeros((3, 3))
    omega[0, 1], omega[1, 0] = 2 * np.pi, -2 * np.pi
    element = bivector_exp(omega)
    assert element.scalar == pytest.approx(-1.0, abs=1e-12)
    assert element.max_nonscalar() <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_clifford_product_is_associative(rng, n):
    def random_element():
        return CliffordElement(n, {blade: float(rng.standard_normal()) for blade in range(2**n)})

    for _ in range(5):
        x, y, z = random_element(), random_element(), random_element()
        assert ((x * y) * z).close_to(x * (y * z), tol=1e-9)


###############################################################################
### Loops
###############################################################################
@pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
def test_generator_commutator_lifts_to_minus_one(n):
    _, _, loop = generator_loops(n, 2048)
    assert lift_loop(loop) == -1


def test_constant_loop_lifts_to_plus_one():
    assert lift_loop(constant_loop(4, grid=64)) == 1


def test_loop_followed_by_its_reverse_is_trivial():
    _, _, loop = generator_loops(3, 512)
    assert lift_loop(concatenate_loops(loop, reverse_loop(loop))) == 1


def test_concatenated_generators_cancel():
    _, _, loop = generator_loops(4, 512)
    assert lift_loop(concatenate_loops(loop, loop)) == 1


@pytest.mark.parametrize("turns, sign", [(1, -1), (2, 1), (3, -1)])
def test_plane_rotation_loops(turns, sign):
    assert lift_loop(plane_rotation_loop(4, 1, 3, turns=turns, grid=128)) == sign


def test_lift_sign_is_conjugation_invariant(rng):
    _, _, loop = generator_loops(5, 256)
    for _ in range(5):
        assert lift_loop(conjugate_loop(loop, random_rotation(rng, 5))) == -1


def test_quaternion_continuation_agrees_with_clifford_lift():
    _, _, loop = generator_loops(3, 512)
    assert quaternion_lift_sign(loop) == lift_loop(loop) == -1
    assert quaternion_lift_sign(plane_rotation_loop(3, 0, 2, turns=2, grid=128)) == 1


def test_loop_validation():
    times = np.linspace(0.0, 1.0, 3)
    with pytest.raises(NotClosedError):
        SOLoop(times, np.array([np.eye(3), rotation_k(0.05), rotation_k(0.1)]))
    with pytest.raises(NotSpecialOrthogonalError):
        SOLoop(times, np.array([np.eye(3), 2 * np.eye(3), np.eye(3)]))
    with pytest.raises(StepTooLargeError):
        SOLoop(times, np.array([np.eye(3), rotation_k(1.0), np.eye(3)]))


def test_small_logarithm_of_a_plane_rotation():
    expected = np.zeros((3, 3))
    expected[0, 1], expected[1, 0] = -0.05 * np.pi, 0.05 * np.pi
    assert_allclose(so_log_small(rotation_k(0.05)), expected, atol=1e-12)
    assert_allclose(so_log_small(np.eye(4)), np.zeros((4, 4)))


def test_small_logarithm_inverts_the_exponential(rng):
    for _ in range(10):
        m = rng.standard_normal((4, 4))
        skew = m - m.T
        skew *= 0.1 / np.linalg.norm(skew, ord=2)
        assert_allclose(so_log_small(linalg.expm(skew)), skew, atol=1e-10)


def test_small_logarithm_rejects_large_steps():
    with pytest.raises(StepTooLargeError):
        so_log_small(rotation_k(0.5))


def test_lift_is_limited_to_ten_dimensions():
    with pytest.raises(DimensionTooLargeError):
        lift_loop(constant_loop(11, grid=4))
    with pytest.raises(DimensionTooLargeError):
        quaternion_lift_sign(constant_loop(4, grid=4))


def random_product_loop(rng, grid):
    """Pointwise product of conjugated plane-rotation loops, with its total turn count."""
    values = np.array([np.eye(3)] * (grid + 1))
    total_turns = 0
    for _ in range(int(rng.integers(1, 4))):
        first, second = (int(index) for index in rng.choice(3, size=2, replace=False))
        turns = int(rng.integers(-2, 3))
        total_turns += turns
        factor = conjugate_loop(plane_rotation_loop(3, first, second, turns=turns, grid=grid), random_rotation(rng, 3))
        values = values @ factor.values
    return SOLoop(np.linspace(0.0, 1.0, grid + 1), values), total_turns


def test_quaternion_and_clifford_lifts_agree_on_random_loops(rng):
    for _ in range(50):
        loop, total_turns = random_product_loop(rng, 256)
        expected = -1 if total_turns % 2 else 1
        assert lift_loop(loop) == quaternion_lift_sign(loop) == expected


@pytest.mark.parametrize("n", [3, 5])
def test_refining_the_grid_keeps_the_sign(n):
    for grid in (256, 512):
        _, _, coarse = generator_loops(n, grid)
        _, _, fine = generator_loops(n, 2 * grid)
        assert lift_loop(coarse) == lift_loop(fine) == -1
    for turns in (1, 2):
        coarse = plane_rotation_loop(n, 0, n - 1, turns=turns, grid=128)
        fine = plane_rotation_loop(n, 0, n - 1, turns=turns, grid=256)
        assert lift_loop(coarse) == lift_loop(fine)


###############################################################################
### Pairs
###############################################################################
@pytest.mark.parametrize("nu, sign", [(1, -1), (0, 1)])
def test_spin_obstruction_of_canonical_pairs(nu, sign):
    assert spin_obstruction_of_pair(canonical_pair(4, nu), grid=512) == (nu, sign)
