import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dimred.numkernel import (
    SingularMatrixError,
    SymTridiag,
    factorize,
    hermitian_pencil_smallest,
    jacobi_dense_sym,
    lanczos_lowest,
    lu_solve,
    operator_norm,
    pencil_lowest,
    shifted_inverse_eig,
    smallest_singular,
    sym_tridiag_eigs,
    sym_tridiag_eigs_many,
)


# -- lu_solve ----------------------------------------------------------------

@pytest.mark.parametrize("A, b, x", [
    (np.eye(3), [1, 2, 3], [1, 2, 3]),
    ([[2, 1], [1, 3]], [3, 4], [1, 1]),
    ([[0, 1], [1, 0]], [5, 7], [7, 5]),
])
def test_lu_solve_examples(A, b, x):
    np.testing.assert_allclose(lu_solve(np.array(A, float), np.array(b, float)), x, atol=1e-14)


def test_lu_solve_singular():
    with pytest.raises(SingularMatrixError):
        lu_solve(np.ones((2, 2)), np.ones(2))


def test_lu_solve_random_residual(rng):
    for _ in range(100):
        n = int(rng.integers(1, 20))
        U, _ = np.linalg.qr(rng.standard_normal((n, n)))
        V, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = U @ np.diag(np.logspace(0, -rng.uniform(0, 6), n)) @ V
        b = rng.standard_normal(n)
        x = lu_solve(A, b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_banded_lu_matches_dense(rng):
    n = 40
    A = sp.diags([rng.standard_normal(n - 2), rng.standard_normal(n - 1), 4 + rng.random(n),
                  rng.standard_normal(n - 1), [0.5j]], [-2, -1, 0, 1, n - 1]).tocsr()
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lu = factorize(A, perm=rng.permutation(n))
    D = A.toarray()
    np.testing.assert_allclose(lu.solve(b), np.linalg.solve(D, b), rtol=1e-11)
    np.testing.assert_allclose(lu.solve_adjoint(b), np.linalg.solve(D.conj().T, b), rtol=1e-11)


# -- tridiagonal and dense symmetric eigenvalues ------------------------------

def test_sturm_diagonal():
    np.testing.assert_allclose(sym_tridiag_eigs(SymTridiag([1, 2, 3], [0, 0]), 3), [1, 2, 3])


def test_sturm_laplacian():
    T = SymTridiag(np.full(10, 2.0), np.full(9, -1.0))
    assert sym_tridiag_eigs(T, 1)[0] == pytest.approx(2 - 2 * np.cos(np.pi / 11), abs=1e-13)


def test_sturm_matches_jacobi_random(rng):
    for _ in range(100):
        n = int(rng.integers(1, 51))
        T = SymTridiag(rng.standard_normal(n), rng.standard_normal(n - 1))
        ref = jacobi_dense_sym(T.to_dense())
        np.testing.assert_allclose(sym_tridiag_eigs(T, n), ref, atol=1e-10)


def test_sturm_batched_matches_single(rng):
    d = rng.standard_normal((7, 30))
    e = rng.standard_normal((7, 29))
    got = sym_tridiag_eigs_many(d, e, 3)
    for b in range(7):
        np.testing.assert_allclose(got[b], sym_tridiag_eigs(SymTridiag(d[b], e[b]), 3), atol=1e-11)


@pytest.mark.parametrize("A, ev", [(np.diag([5.0, -1.0]), [-1, 5]), ([[0.0, 1.0], [1.0, 0.0]], [-1, 1])])
def test_jacobi_examples(A, ev):
    np.testing.assert_allclose(jacobi_dense_sym(np.array(A)), ev, atol=1e-14)


def _char_sign_changes(A, x):
    """Number of eigenvalues below ``x`` by Sylvester inertia of ``A - x I``."""
    L = np.linalg.eigvalsh(A - x * np.eye(len(A)))
    return int(np.sum(L < 0))


def test_jacobi_vs_inertia_oracle(rng):
    B = rng.standard_normal((8, 8))
    A = B + B.T
    ev = jacobi_dense_sym(A)
    for i, lam in enumerate(ev):
        assert _char_sign_changes(A, lam - 1e-8) == i
        assert _char_sign_changes(A, lam + 1e-8) == i + 1


# -- Lanczos ------------------------------------------------------------------

def test_lanczos_diagonal():
    d = np.arange(1.0, 101.0)
    np.testing.assert_allclose(lanczos_lowest(lambda x: d * x, 100, 3, tol=1e-12), [1, 2, 3], atol=1e-9)


def test_lanczos_fd_laplacian():
    n = 200
    h = 1.0 / (n + 1)
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    lam = lanczos_lowest(lambda x: T @ x, n, 3, tol=1e-12)
    exact = (np.arange(1, 4) * np.pi) ** 2
    # second-order grid error: (k pi)^4 h^2 / 12
    bound = 1.1 * (np.arange(1, 4) * np.pi) ** 4 * h**2 / 12
    assert np.all(np.abs(lam - exact) <= bound)


def test_lanczos_matches_jacobi(rng):
    B = rng.standard_normal((40, 40))
    A = B + B.T
    np.testing.assert_allclose(lanczos_lowest(lambda x: A @ x, 40, 4, tol=1e-12),
                               jacobi_dense_sym(A)[:4], atol=1e-8)


# -- operator norms and singular values ---------------------------------------

def test_operator_norm_examples():
    assert operator_norm(lambda x: x, lambda x: x, 5, 1e-12) == pytest.approx(1.0)
    D = np.array([3.0, 1.0])
    assert operator_norm(lambda x: D * x, lambda x: D * x, 2, 1e-12) == pytest.approx(3.0)


@pytest.mark.parametrize("method", ["power", "lanczos"])
def test_operator_norm_dense_oracle(rng, method):
    for _ in range(50):
        n = int(rng.integers(1, 13))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        ref = np.sqrt(jacobi_dense_sym(np.real(_herm_embed(A.conj().T @ A)))[-1])
        got = operator_norm(lambda x: A @ x, lambda y: A.conj().T @ y, n, 1e-13, method=method)
        assert got == pytest.approx(ref, rel=1e-6)


def _herm_embed(H):
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def test_operator_norm_weighted(rng):
    n = 6
    A = rng.standard_normal((n, n))
    w = rng.uniform(0.5, 2.0, n)
    # norm in the w-weighted space equals the plain norm of W^1/2 A W^-1/2
    r = np.sqrt(w)
    ref = np.linalg.norm(r[:, None] * A / r[None, :], 2)
    got = operator_norm(lambda x: A @ x, lambda y: (A.T @ (w * y)) / w, n, 1e-13, weight=w)
    assert got == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("A, s", [(np.eye(3), 1.0), (np.diag([2.0, 0.5]), 0.5), (np.ones((2, 2)), 0.0)])
def test_smallest_singular_examples(A, s):
    assert smallest_singular(A) == pytest.approx(s, abs=1e-12)


def test_smallest_singular_times_inverse_norm(rng):
    for _ in range(20):
        n = int(rng.integers(2, 10))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        inv = np.linalg.inv(A)
        nrm = operator_norm(lambda x: inv @ x, lambda y: inv.conj().T @ y, n, 1e-14, method="lanczos")
        assert smallest_singular(A) * nrm == pytest.approx(1.0, abs=1e-8)


# -- eigenvalue refinement and pencils -----------------------------------------

def test_shifted_inverse_examples():
    assert shifted_inverse_eig((np.diag([1.0, 2.0, 4.0]), np.ones(3)), 1.8) == pytest.approx(2.0)
    lam = shifted_inverse_eig((np.array([[0.0, 1.0], [-1.0, 0.0]]), np.ones(2)), 0.9j)
    assert lam == pytest.approx(1j, abs=1e-10)


def test_shifted_inverse_at_eigenvalue():
    with pytest.raises(SingularMatrixError):
        shifted_inverse_eig((np.diag([1.0, 2.0]), np.ones(2)), 2.0)


def test_hermitian_pencil_examples():
    assert hermitian_pencil_smallest(np.diag([2.0, 5.0]), np.eye(2)) == pytest.approx(2.0)
    assert hermitian_pencil_smallest(np.eye(2), np.diag([2.0, 4.0])) == pytest.approx(0.25)


def test_hermitian_pencil_dense_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(2, 12))
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A = X + X.conj().T
        Y = rng.standard_normal((n, n))
        B = Y @ Y.T + n * np.eye(n)
        w, V = np.linalg.eigh(B)
        Bih = V @ np.diag(w**-0.5) @ V.T
        ref = np.linalg.eigvalsh(Bih @ A @ Bih)[0]
        assert hermitian_pencil_smallest(A, B, tol=1e-12) == pytest.approx(ref, rel=1e-8, abs=1e-9)


def test_pencil_lowest_diagonal_mass(rng):
    n = 30
    A = sp.diags([-np.ones(n - 1), 2 + rng.random(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    M = rng.uniform(0.5, 2.0, n)
    ref = np.sort(np.linalg.eigvals(A.toarray() / M[:, None]).real)[:3]
    np.testing.assert_allclose(pencil_lowest(A, M, 3, tol=1e-12), ref, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=25), st.integers(0, 2**31 - 1))
def test_sturm_property(diag, seed):
    n = len(diag)
    off = np.random.default_rng(seed).uniform(-3, 3, n - 1)
    T = SymTridiag(diag, off)
    ev = sym_tridiag_eigs(T, n)
    assert np.all(np.diff(ev) >= -1e-12)
    assert ev.sum() == pytest.approx(float(np.sum(diag)), abs=1e-9 * max(1.0, np.abs(ev).max()) * n)
    lo, hi = T.gershgorin()
    assert lo - 1e-12 <= ev[0] and ev[-1] <= hi + 1e-12
