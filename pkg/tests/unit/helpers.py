###############################################################################
### Imports
###############################################################################
import numpy as np
from scipy import linalg

from twistlab.linalg_paths import CommutingPair


###############################################################################
### Helpers
###############################################################################
def random_rotation(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_invertible(rng, n):
    """Positive-determinant matrix with condition number at most 4."""
    return random_rotation(rng, n) @ np.diag(rng.uniform(0.5, 2.0, n)) @ random_rotation(rng, n)


def polynomial_pair(rng, n):
    """Commuting pair built as polynomials in one random matrix."""
    m = rng.standard_normal((n, n))
    identity = np.eye(n)
    a = m @ m + identity
    shifted = m - 0.5 * identity
    c = shifted @ shifted + 0.3 * identity
    return CommutingPair(a, c)


def parity_one_pair(rng, n):
    """Conjugated diagonal pair with one joint negative direction."""
    a = np.diag([-2.0, -3.0, 1.5] + [2.5 + k for k in range(n - 3)])
    c = np.diag([1.2, -0.7, -1.1] + [0.9 + 0.25 * k for k in range(n - 3)])
    basis = random_invertible(rng, n)
    inverse = np.linalg.inv(basis)
    return CommutingPair(basis @ a @ inverse, basis @ c @ inverse)




def conjugated_pair(rng, a, c):
    basis = random_invertible(rng, len(a))
    inverse = np.linalg.inv(basis)
    return CommutingPair(basis @ a @ inverse, basis @ c @ inverse)


def jordan_parity_one_pair(rng):
    """Defective pair: a 2x2 Jordan block on the joint negative part, which has dimension 3."""
    nilpotent = np.array([[0.0, 1.0], [0.0, 0.0]])
    a = linalg.block_diag(-2.0 * np.eye(2) + nilpotent, np.diag([-4.0, -3.0, 1.5]))
    c = linalg.block_diag(-0.7 * np.eye(2) + 0.3 * nilpotent, np.diag([-0.5, 1.1, -1.3]))
    return conjugated_pair(rng, a, c)


def jordan_parity_zero_pair(rng):
    """Defective pair whose only joint negative part is a 2x2 Jordan block."""
    nilpotent = np.array([[0.0, 1.0], [0.0, 0.0]])
    a = linalg.block_diag(-2.0 * np.eye(2) + nilpotent, np.diag([1.5, 2.5]))
    c = linalg.block_diag(-0.7 * np.eye(2) + 0.3 * nilpotent, np.diag([0.8, 1.2]))
    return conjugated_pair(rng, a, c)


def complex_parity_one_pair(rng):
    """Pair with a complex conjugate block next to one joint negative direction."""
    a = linalg.block_diag([[-2.0]], [[1.0, -2.0], [2.0, 1.0]], np.diag([-3.0, 1.5]))
    c = linalg.block_diag([[-0.7]], [[0.5, -1.0], [1.0, 0.5]], np.diag([1.1, -1.3]))
    return conjugated_pair(rng, a, c)
