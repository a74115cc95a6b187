import numpy as np
import pytest

from clobs.linalg import (
    kron_row_block,
    min_eigenvalue_symmetric,
    theta_dim,
    theta_split,
    unvectorize,
    vectorize,
)


def test_vectorize_column_stacking():
    assert np.array_equal(vectorize(np.array([[1.0, 3.0], [0.0, 1.0]])), [1, 0, 3, 1])


def test_vectorize_zero_matrix():
    assert np.array_equal(vectorize(np.zeros((2, 2))), np.zeros(4))


def test_vectorize_identity():
    assert np.array_equal(vectorize(np.eye(2)), [1, 0, 0, 1])


def test_vectorize_rejects_nonfinite():
    with pytest.raises(ValueError):
        vectorize(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_unvectorize_roundtrip():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 4))
    assert np.array_equal(unvectorize(vectorize(m), 3, 4), m)


def test_kron_row_block_reproduces_matvec():
    v = np.array([1.0, 1.0])
    a1 = np.array([[2.0, 3.0], [1.0, 2.0]])
    assert np.allclose(kron_row_block(v, 2) @ vectorize(a1), [5.0, 3.0], rtol=0, atol=1e-14)


def test_kron_row_block_zero_vector():
    a = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(kron_row_block(np.zeros(2), 2) @ vectorize(a), np.zeros(2))


def test_kron_row_block_basis_vector_selects_column():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    e1 = np.zeros(4)
    e1[0] = 1.0
    assert np.allclose(kron_row_block(e1, 3) @ vectorize(a), a[:, 0], rtol=0, atol=1e-15)


def test_kron_identity_random_sweep():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(1, 5))
        a = rng.normal(size=(n, k))
        v = rng.normal(size=k)
        direct = a @ v
        scale = max(1.0, np.abs(direct).max())
        assert np.abs(kron_row_block(v, n) @ vectorize(a) - direct).max() <= 1e-12 * scale


def test_min_eig_identity():
    assert min_eigenvalue_symmetric(np.eye(12)) == pytest.approx(1.0, abs=1e-12)


def test_min_eig_diagonal():
    assert min_eigenvalue_symmetric(np.diag([3.0, 1.0, 2.0])) == pytest.approx(1.0, abs=1e-12)


def _charpoly_min_root(m):
    """Smallest real root of det(lambda I - m) via Newton's trace identities.

    The characteristic-polynomial coefficients come from power traces and the
    roots from the companion matrix: a path fully independent of the
    symmetric eigensolver under test.
    """
    size = m.shape[0]
    power_traces = []
    mk = np.eye(size)
    for _ in range(size):
        mk = mk @ m
        power_traces.append(np.trace(mk))
    coeffs = [1.0]
    for k in range(1, size + 1):
        ck = -sum(power_traces[j - 1] * coeffs[k - j] for j in range(1, k + 1)) / k
        coeffs.append(ck)
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) < 1e-8 * max(1.0, np.abs(roots).max())].real
    return real.min()


def test_min_eig_matches_characteristic_polynomial_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = rng.normal(size=(5, 3))
        gram = g.T @ g
        expected = _charpoly_min_root(gram)
        got = min_eigenvalue_symmetric(gram)
        assert got == pytest.approx(expected, rel=1e-8, abs=1e-10)


def test_min_eig_psd_floor():
    rng = np.random.default_rng(4)
    for _ in range(50):
        q = rng.normal(size=(6, 4))
        assert min_eigenvalue_symmetric(q.T @ q) >= -1e-9


def test_min_eig_permutation_invariant():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(7, 7))
    m = (m + m.T) / 2
    base = min_eigenvalue_symmetric(m)
    for _ in range(10):
        perm = rng.permutation(7)
        p = np.eye(7)[perm]
        assert min_eigenvalue_symmetric(p.T @ m @ p) == pytest.approx(base, abs=1e-9)


def test_min_eig_rejects_nonsquare():
    with pytest.raises(ValueError):
        min_eigenvalue_symmetric(np.ones((2, 3)))


def test_min_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        min_eigenvalue_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_theta_split_roundtrip():
    rng = np.random.default_rng(6)
    n, m = 2, 2
    a1 = rng.normal(size=(n, n))
    a2 = rng.normal(size=(n, n))
    b = rng.normal(size=(n, m))
    theta = np.concatenate([vectorize(a1), vectorize(a2), vectorize(b)])
    assert theta.size == theta_dim(n, m)
    got_a1, got_a2, got_b = theta_split(theta, n, m)
    assert np.array_equal(got_a1, a1)
    assert np.array_equal(got_a2, a2)
    assert np.array_equal(got_b, b)


def test_theta_split_rejects_bad_length():
    with pytest.raises(ValueError):
        theta_split(np.zeros(11), 2, 2)
