import math

import numpy as np
import pytest

from dimred import robin_shell as rs
from dimred.geometry import CurveProfile
from dimred.numkernel import jacobi_dense_sym, shifted_inverse_eig

from oracles import fourier_schroedinger, robin_fiber

P = CurveProfile(0.5, 0.3)
FLAT = CurveProfile()


def test_closed_form_roundtrip():
    alpha = 2 / math.tanh(2)
    assert alpha == pytest.approx(2.0746294, abs=1e-6)
    assert rs.closed_form_k(alpha) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        rs.closed_form_k(0.9)


def test_flat_fiber_closed_form():
    alpha = rs.closed_form_alpha(2.0)
    assert rs.transverse_eig_robin(FLAT, 0.0, alpha, 1).extrapolated == pytest.approx(-4.0, abs=1e-8)


@pytest.mark.parametrize("alpha", [10.0, 80.0])
def test_fiber_vs_chebyshev(alpha):
    ref = robin_fiber(P.kappa_max, alpha)
    for j in (1, 2):
        assert rs.transverse_eig_robin(P, 0.0, alpha, j).extrapolated == pytest.approx(ref[j - 1], rel=1e-9)


def test_fiber_large_alpha():
    vals = []
    for alpha in (10.0, 20.0, 40.0, 80.0):
        mu1 = rs.transverse_eig_robin(P, 0.0, alpha, 1).extrapolated
        mu2 = rs.transverse_eig_robin(P, 0.0, alpha, 2).extrapolated
        vals.append(mu1 + alpha**2 + alpha * P.kappa_max)
        assert mu2 > 1.0 and mu1 < mu2
    assert max(abs(v) for v in vals) < 2.0
    sep = (rs.transverse_eig_robin(P, 0.0, 80.0, 1).extrapolated + 80.0**2) / 80.0
    assert sep == pytest.approx(-P.kappa_max, rel=0.05)


def test_fiber_ordering_all_s():
    s = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    for alpha in (10.0, 40.0):
        mu = rs.fiber_eigs(P, alpha, s, 160, 2)
        assert np.all(mu[:, 0] < mu[:, 1])


def test_effective_constant_curvature():
    prof = CurveProfile(0.5)
    nu = rs.effective_eigs(prof, 4.0, 5)
    np.testing.assert_allclose(nu, np.array([0, 1, 1, 4, 4]) - 2.0, atol=1e-8)
    np.testing.assert_allclose(rs.effective_eigs(FLAT, 0.0, 3), [0, 1, 1], atol=1e-8)


def test_effective_vs_fourier():
    alpha = 10.0
    ref = fourier_schroedinger([-alpha * 0.5, -alpha * 0.3], k=3)
    np.testing.assert_allclose(rs.effective_eigs(P, alpha, 3), ref, atol=1e-7)


def test_effective_harmonic_limit():
    nu = rs.effective_eigs(P, 400.0, 1)[0]
    scaled = (nu + 400.0 * P.kappa_max) / 20.0
    assert scaled == pytest.approx(math.sqrt(0.15), rel=0.1)
    assert np.all(np.diff(rs.effective_eigs(P, 400.0, 4)) >= 0)


def test_harmonic_fit():
    f = rs.harmonic_fit(P, [50.0, 100.0, 200.0, 400.0], 1)
    assert f.target == pytest.approx(0.38730, abs=5e-6)
    assert not f.degenerate
    assert f.fit.slope <= -0.25
    g = rs.harmonic_fit(CurveProfile(0.5), [50.0, 100.0, 200.0, 400.0], 1)
    assert g.degenerate and g.fit is None


def test_weight_error():
    with pytest.raises(rs.WeightError):
        rs.ShellModel(CurveProfile(1.0, 0.3), 10.0)


def test_flat_shell_separates():
    alpha = rs.closed_form_alpha(2.0)
    ev = rs.full_eigs_extrapolated(rs.ShellModel(FLAT, alpha, 32, 80), 3).extrapolated
    ds = 2 * np.pi / 32
    m1 = (2 * np.sin(ds / 2) / ds) ** 2
    np.testing.assert_allclose(ev, -4.0 + np.array([0, m1, m1]), atol=1e-6)
    assert ev[0] == pytest.approx(-4.0, abs=1e-6)


def test_pencil_symmetric_real_spectrum():
    pen = rs.assemble_full(rs.ShellModel(P, 10.0, 16, 16))
    assert pen.asymmetry() == 0
    ev = np.linalg.eigvals(pen.A.toarray() / pen.M[:, None])
    assert np.max(np.abs(ev.imag)) < 1e-8 * np.max(np.abs(ev))


def test_full_eigs_cross_check():
    m = rs.ShellModel(P, 10.0, 32, 40)
    pen = rs.assemble_full(m)
    lam = rs.full_eigs(m, 2, pen)
    ref = shifted_inverse_eig((pen.A, pen.M), lam[0] - 0.3, tol=1e-13, weight=pen.M)
    assert ref.real == pytest.approx(lam[0], rel=1e-10)


def test_shifted_residual_bounded():
    recs = {a: rs.shell_records(P, a, 2, n_s=64, n_t=80) for a in (10.0, 20.0, 40.0)}
    for j in (0, 1):
        vals = [abs(recs[a][j].shifted_residual) for a in recs]
        assert max(vals) < 1.0


def test_window_check_scaling():
    out = []
    for alpha in (10.0, 20.0, 40.0):
        m = rs.ShellModel(P, alpha, 64, 80)
        eff = jacobi_dense_sym(rs.effective_matrix(m))
        out.append(rs.resolvent_window_check(m, eff[0] - 2.0, eff_eigs=eff))
    assert all(r.gate for r in out)
    assert max(r.a * r.alpha**2 for r in out) < 2.0
    assert max(r.certified_diff_alpha for r in out) < 2.0
    m = rs.ShellModel(P, 10.0, 32, 40)
    eff = jacobi_dense_sym(rs.effective_matrix(m))
    with pytest.raises(rs.WindowError):
        rs.resolvent_window_check(m, eff[0], eff_eigs=eff)
