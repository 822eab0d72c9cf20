###############################################################################
### Imports
###############################################################################
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import linalg

from tests.unit.helpers import random_invertible
from twistlab import local_flows
from twistlab.errors import (
    DimensionTooSmallError,
    LeftDomainError,
    NegativeRadiusError,
    NotEmbeddingError,
    NotSpecialOrthogonalError,
    PathDegenerateError,
)
from twistlab.linalg_paths import SampledPath, canonical_pair, rotation_k
from twistlab.local_flows import (
    NumericDiffeo,
    check_embedding,
    chi,
    choose_epsilon,
    collar_commutator,
    collar_commutator_class,
    collar_maps,
    connected_sum_check,
    deform_by_flow,
    finite_difference_jacobian,
    flow_diffeo,
    linear_diffeo,
    linear_localize,
    localized_map,
    standardize_pair,
    twist_profile,
)


###############################################################################
### Helpers
###############################################################################
def exponential_path(generator, grid=64):
    return SampledPath.from_function(lambda t: linalg.expm(t * generator), grid=grid)


def bent_map(n):
    """A nonlinear embedding of B_3 fixing 0 with derivative diag(2, 1, ...)."""
    scale = np.ones(n)
    scale[0] = 2.0

    def forward(v):
        image = scale * v
        image[1] += 0.05 * v[0] ** 2
        return image

    return NumericDiffeo(n, forward, name="bent")


###############################################################################
### Cutoff
###############################################################################
def test_chi_plateaus():
    assert chi(0.0) == (1.0, 0.0)
    assert chi(0.9) == (1.0, 0.0)
    assert chi(2.0) == (0.0, 0.0)
    assert chi(2.7) == (0.0, 0.0)
    value, derivative = chi(1.5)
    assert 0.0 < value < 1.0
    assert derivative < 0.0


def test_chi_rejects_negative_radius():
    with pytest.raises(NegativeRadiusError):
        chi(-0.1)


###############################################################################
### Flows
###############################################################################
def test_flow_jacobian_at_origin_is_df_times_rho(rng):
    n = 3
    for _ in range(5):
        f = linear_diffeo(random_invertible(rng, n))
        generator = 0.3 * rng.standard_normal((n, n))
        rho = exponential_path(generator)
        t = float(rng.uniform(0.2, 1.0))
        jacobian = finite_difference_jacobian(lambda v: deform_by_flow(f, rho, t, v), np.zeros(n))
        assert_allclose(jacobian, f.jacobian(np.zeros(n)) @ rho.at(t), atol=1e-4)


def test_flow_leaves_the_outer_shell_alone(rng):
    n = 4
    f = bent_map(n)
    rho = exponential_path(0.5 * rng.standard_normal((n, n)))
    for _ in range(200):
        direction = rng.standard_normal(n)
        v = direction / np.linalg.norm(direction) * rng.uniform(2.0, 3.0)
        assert_allclose(deform_by_flow(f, rho, 1.0, v), f(v), atol=1e-9)


def test_flow_shortcut_agrees_with_integration(rng):
    n = 3
    f = bent_map(n)
    rho = exponential_path(0.4 * rng.standard_normal((n, n)))
    flowed = flow_diffeo(f, rho, 1.0)
    for _ in range(5):
        direction = rng.standard_normal(n)
        v = direction / np.linalg.norm(direction) * 0.2
        assert_allclose(flowed(v), deform_by_flow(f, rho, 1.0, v), atol=1e-8)


def test_flow_rejects_points_outside_the_domain():
    rho = exponential_path(np.zeros((3, 3)))
    with pytest.raises(LeftDomainError):
        deform_by_flow(linear_diffeo(np.eye(3)), rho, 1.0, np.array([3.5, 0.0, 0.0]))


def test_flow_needs_a_path_from_the_identity():
    shifted = SampledPath.from_function(lambda t: np.diag([2.0, 1.0, 1.0]) + t * np.eye(3), grid=16)
    with pytest.raises(PathDegenerateError):
        deform_by_flow(linear_diffeo(np.eye(3)), shifted, 0.5, np.zeros(3))
    with pytest.raises(PathDegenerateError):
        flow_diffeo(linear_diffeo(np.eye(3)), shifted, 0.5)


###############################################################################
### Localization
###############################################################################
def test_linear_localize_interpolates_between_f_and_its_differential():
    f = bent_map(3)
    linear_part = f.jacobian(np.zeros(3))
    inner = np.array([0.1, 0.05, 0.0])
    outer = np.array([0.7, 0.2, 0.1])
    assert_allclose(linear_localize(f, 0.25, 1.0, inner), linear_part @ inner, atol=1e-9)
    assert_allclose(linear_localize(f, 0.25, 1.0, outer), f(outer))
    assert_allclose(linear_localize(f, 0.25, 0.0, inner), f(inner))


def test_epsilon_search_accepts_mild_maps():
    assert choose_epsilon(linear_diffeo(np.diag([2.0, 1.0, 0.5]))) == 0.5
    assert choose_epsilon(bent_map(3)) == 0.5
    localized = localized_map(bent_map(3), 0.5)
    assert check_embedding(localized, 3, radius=1.0)


def test_embedding_check_detects_folds():
    fold = NumericDiffeo(2, lambda v: np.array([v[0] ** 2 - 0.25, v[1]]), name="fold")
    assert not check_embedding(fold, 2, radius=1.0)
    with pytest.raises(NotEmbeddingError):
        choose_epsilon(NumericDiffeo(2, lambda v: np.array([-abs(v[0]), v[1]]), name="crease"))


###############################################################################
### Collar
###############################################################################
def test_profile_needs_three_dimensions():
    with pytest.raises(DimensionTooSmallError):
        twist_profile(2)


def test_profile_leaving_so_n_is_rejected(monkeypatch):
    monkeypatch.setattr(local_flows, "rotation_k", lambda s, n=3: 1.01 * rotation_k(s, n))
    with pytest.raises(NotSpecialOrthogonalError):
        twist_profile(3, grid=96)


def test_collar_maps_are_identity_near_the_inner_boundary(rng):
    collar_a, collar_c = collar_maps(twist_profile(4, grid=256))
    for _ in range(1000):
        direction = rng.standard_normal(4)
        v = direction / np.linalg.norm(direction) * rng.uniform(1.0, 2.0)
        assert np.array_equal(collar_a(v), v)
        assert np.array_equal(collar_c(v), v)


def test_collar_maps_reach_the_local_model_outside():
    profile = twist_profile(3, grid=256)
    collar_a, collar_c = collar_maps(profile)
    model = canonical_pair(3, 1)
    v = np.array([3.2, 0.4, -0.1])
    assert_allclose(collar_a(v), model.a @ v)
    assert_allclose(collar_c(v), model.c @ v)
    assert_allclose(collar_a.inverse(collar_a(v)), v, atol=1e-12)


def test_collar_commutator_is_radial_rotation():
    profile = twist_profile(3, grid=256)
    commutator = collar_commutator(profile)
    v = np.array([0.0, 1.2, 1.2])
    assert_allclose(commutator(v), v, atol=1e-12)
    w = np.array([3.5, 0.0, 0.0])
    assert_allclose(commutator(w), w, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
def test_collar_commutator_generates_pi_one(n):
    assert collar_commutator_class(twist_profile(n)) == -1


###############################################################################
### Standardization
###############################################################################
def test_standardize_fixed_point_differentials():
    da = np.diag([-1.0, -1.0, 1.0, 1.0])
    dc = np.diag([1.0, -1.0, 1.0, -1.0])
    standardization = standardize_pair(da, dc, grid=256)
    assert standardization.nu == 1
    assert standardization.twist_ready
    assert standardization.epsilon == 0.5
    assert standardization.endpoint_error <= 1e-8
    model = canonical_pair(4, 1)
    assert_allclose(da @ standardization.alpha_relative.values[-1], model.a, atol=1e-8)
    assert_allclose(dc @ standardization.gamma_relative.values[-1], model.c, atol=1e-8)


@pytest.mark.parametrize(
    "n, first, second, applicable",
    [(4, 1, 1, True), (6, 1, 1, True), (3, 1, 1, False), (4, 0, 1, False)],
)
def test_connected_sum_prerequisites(n, first, second, applicable):
    result = connected_sum_check(n, first, second)
    assert result["applicable"] is applicable
    if n >= 4:
        assert result["neck_fixed"]
        assert result["neck_nu"] == 1
