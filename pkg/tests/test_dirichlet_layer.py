import math

import numpy as np
import pytest

from dimred import dirichlet_layer as dl
from dimred.geometry import CurveProfile, TubularError
from dimred.numkernel import jacobi_dense_sym

from oracles import dirichlet_fiber, fourier_schroedinger, layer_potential_coeffs

P = CurveProfile(1.0, 0.3)
FLAT = CurveProfile()


@pytest.mark.parametrize("j", [1, 2, 3])
def test_transverse_flat(j):
    eps = 0.1
    t = dl.transverse_eig(FLAT, 0.0, eps, j)
    exact = j**2 * math.pi**2 / (4 * eps**2)
    assert t.value == pytest.approx(exact, rel=1e-6 if j <= 2 else 1e-5)
    assert t.extrapolated == pytest.approx(exact, rel=1e-9)
    assert abs(t.extrapolated - exact) <= 2 * t.error


def test_transverse_curved_vs_chebyshev():
    eps = 0.05
    ref = dirichlet_fiber(1.3, eps)
    t = dl.transverse_eig(P, 0.0, eps, 1)
    assert t.extrapolated == pytest.approx(ref[0], rel=1e-7)
    # V(0) = -0.4225 plus an O(eps) remainder
    assert t.extrapolated - math.pi**2 / (4 * eps**2) == pytest.approx(-0.4232, abs=2e-4)


def test_transverse_bad_index():
    with pytest.raises(ValueError):
        dl.transverse_eig(P, 0.0, 0.1, 20, n_t=64)


def test_curvature_potential():
    assert dl.curvature_potential(FLAT, 1.0) == 0
    assert dl.curvature_potential(CurveProfile(1.0), 0.3) == pytest.approx(-0.25)
    assert dl.curvature_potential(P, 0.0) == pytest.approx(-0.4225)


def test_flat_layer_separates():
    eps = 0.1
    lam = dl.full_eigs(dl.LayerModel(FLAT, eps, 64, 32), 5)
    c = math.pi**2 / (4 * eps**2)
    np.testing.assert_allclose(lam, c + np.array([0, 1, 1, 4, 4]), rtol=1e-4)


def test_pencil_structure():
    pen = dl.assemble_full(dl.LayerModel(P, 0.1, 32, 16))
    assert pen.asymmetry() == 0
    assert np.all(pen.M > 0)
    ev = np.linalg.eigvals(pen.A.toarray() / pen.M[:, None])
    assert np.max(np.abs(ev.imag)) < 1e-8 * np.max(np.abs(ev))


def test_tubular_violation():
    with pytest.raises(TubularError):
        dl.LayerModel(P, 0.8)


def _discrete_circle(n_s, k):
    ds = 2 * math.pi / n_s
    m = np.array([0, 1, 1, 2, 2, 3, 3])[:k]
    return (2 - 2 * np.cos(m * ds)) / ds**2


def test_sigma_eigs_flat_and_constant():
    # exact spectrum of the periodic difference Laplacian, which tends to {0, 1, 1, 4, 4}
    np.testing.assert_allclose(dl.effective_sigma_eigs(FLAT, 5), _discrete_circle(128, 5), atol=1e-10)
    np.testing.assert_allclose(dl.effective_sigma_eigs(CurveProfile(1.0), 3),
                               _discrete_circle(128, 3) - 0.25, atol=1e-10)
    np.testing.assert_allclose(_discrete_circle(128, 5), [0, 1, 1, 4, 4], atol=4 * 4**2 * (2 * math.pi / 128) ** 2 / 12)


def test_sigma_eigs_vs_fourier():
    ref = fourier_schroedinger(layer_potential_coeffs(1.0, 0.3))
    coarse = dl.effective_sigma_eigs(P, 3, n_s=256)
    fine = dl.effective_sigma_eigs(P, 3, n_s=512)
    np.testing.assert_allclose((4 * fine - coarse) / 3, ref, atol=1e-8)


def test_frozen_fiber_consistency():
    # constant curvature: the s-constant mode of the full pencil is the fiber ground state
    prof = CurveProfile(float(P.kappa(0.7)))
    eps = 0.1
    lam = dl.full_eigs(dl.LayerModel(prof, eps, 16, 64), 1)[0]
    mu = dl.transverse_eig(prof, 0.0, eps, 1, n_t=64).value
    assert lam == pytest.approx(mu, rel=1e-8)


def test_full_eigs_ordered():
    lam = dl.full_eigs(dl.LayerModel(P, 0.1, 64, 32), 4)
    assert np.all(np.diff(lam) >= 0)


def test_residuals_refine_and_small():
    r = dl.residuals(P, 0.1, 2)
    for rec in r:
        assert rec.grid_error <= 0.1 * abs(rec.residual)
        assert abs(rec.residual) < 0.05


def test_flat_fit_is_degenerate():
    f = dl.asymptotic_fit(FLAT, [0.2, 0.1, 0.05], 1, n_s=32, n_t=32)
    assert f.degenerate and f.fit is None
    assert np.all(np.abs(f.residual) < 1e-4 * math.pi**2 / (4 * 0.05**2))


def test_fit_rejects_bad_lists():
    with pytest.raises(ValueError):
        dl.asymptotic_fit(P, [0.2, 0.1], 1)
    with pytest.raises(ValueError):
        dl.asymptotic_fit(P, [0.2, 0.1, 0.07], 1)


def test_window_check_scaling():
    recs = []
    for eps in (0.2, 0.1, 0.05):
        m = dl.LayerModel(P, eps, 64, 32)
        eff = jacobi_dense_sym(dl.effective_matrix(m))
        z = m.mu - 1.0
        recs.append(dl.resolvent_window_check(m, z, eff_eigs=eff))
    ratios = [r.a / r.eps**2 for r in recs]
    assert max(ratios) < 2 * min(ratios)
    margins = [r.margin for r in recs]
    assert np.all(np.diff(margins) > 0) and margins[-1] > 0.9
    assert all(r.gate for r in recs)


def test_window_check_too_close():
    m = dl.LayerModel(P, 0.1, 32, 16)
    eff = jacobi_dense_sym(dl.effective_matrix(m))
    with pytest.raises(dl.WindowError):
        dl.resolvent_window_check(m, eff[0] + 0.05, eff_eigs=eff)


def test_mass_positive_definite_cholesky():
    pen = dl.assemble_full(dl.LayerModel(P, 0.1, 16, 16))
    np.linalg.cholesky(np.diag(pen.M))
