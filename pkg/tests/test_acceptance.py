"""End-to-end acceptance criteria, each at its stated tolerance and runtime."""

import math
import time

import numpy as np
import pytest

from dimred import born_oppenheimer as bo
from dimred import dirichlet_layer as dl
from dimred import ns_robin_layer as nr
from dimred import robin_shell as rs
from dimred import toymodel as toy
from dimred.geometry import CurveProfile
from dimred.numkernel import SymTridiag, jacobi_dense_sym, operator_norm, sym_tridiag_eigs

pytestmark = pytest.mark.slow


def report(capsys, name, ok, detail, elapsed, limit):
    ok = ok and elapsed <= limit
    with capsys.disabled():
        print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f} s / {limit} s)")
    return ok


def test_c1_inequality_soundness(capsys):
    t0 = time.perf_counter()
    bad, worst = 0, 0.0
    for i in range(10_000):
        rng = np.random.default_rng([2024, i])
        inst = toy.random_instance(rng)
        phi, psi = toy.random_pair(inst, rng)
        grid = toy.z_grid(inst.gamma)
        checks = [toy.check_variational_bound(inst, phi, psi),
                  toy.check_form_bound(inst, grid[rng.integers(grid.size)], phi, psi)]
        for c in checks:
            bad += not c.holds
            if c.rhs > 0:
                worst = max(worst, c.lhs / c.rhs)
    dt = time.perf_counter() - t0
    ok = report(capsys, "1 inequality soundness", bad == 0,
                f"{bad} violations in 10^4 samples, worst lhs/rhs {worst:.3g}", dt, 60)
    assert ok


def test_c2_certificate_soundness(capsys):
    t0 = time.perf_counter()
    bad = gated = 0
    for i in range(1000):
        inst = toy.random_instance(np.random.default_rng([77, i]))
        cache = toy.spectra(inst)
        for z in toy.z_grid(inst.gamma, 5):
            try:
                r = toy.check_certificates(inst, z, spectra_cache=cache)
            except toy.InSpectrumError:
                continue
            gated += r.gate
            bad += not r.sound
    dt = time.perf_counter() - t0
    ok = report(capsys, "2 certificate soundness", bad == 0 and gated > 0,
                f"{bad} violations, {gated} gated points", dt, 120)
    assert ok


def test_c3_born_oppenheimer(capsys):
    t0 = time.perf_counter()
    hs = [0.2, 0.1, 0.05, 0.025]
    tmpl = bo.TwoLevelBOModel(0.2, theta0=0.3, n_s=255)
    res = [bo.lowest_eigs(bo.TwoLevelBOModel(h, theta0=0.3, n_s=255), 3) for h in hs]
    fits = [bo.asymptotic_fit(tmpl, hs, k, results=res) for k in (1, 2, 3)]
    slopes = [f.fit.slope for f in fits if not f.degenerate]
    lead = fits[0].leading[-1]
    exact = max(np.max(np.abs(e.full - e.eff))
                for e in (bo.lowest_eigs(bo.TwoLevelBOModel(h, theta0=0.0, n_s=255), 3) for h in hs))
    dt = time.perf_counter() - t0
    ok = (len(slopes) == 3 and min(slopes) >= 1.8 and abs(lead - 1) <= 0.05 and exact <= 1e-10)
    ok = report(capsys, "3 Born-Oppenheimer orders", ok,
                f"slopes {', '.join(f'{s:.3f}' for s in slopes)}; lambda_eff1/h {lead:.4f}; "
                f"theta0 = 0 diff {exact:.2g}", dt, 300)
    assert ok


def test_c4_dirichlet_layer(capsys):
    t0 = time.perf_counter()
    flat = CurveProfile()
    worst = 0.0
    for eps in (0.2, 0.1, 0.05):
        lam = dl.full_eigs(dl.LayerModel(flat, eps, 128, 64), 5)
        ref = math.pi**2 / (4 * eps**2) + np.array([0, 1, 1, 4, 4])
        worst = max(worst, float(np.max(np.abs(lam - ref) / ref)))
    prof = CurveProfile(1.0, 0.3)
    eps = [0.2, 0.1, 0.05]
    slopes = {}
    for grid in ((128, 64), (256, 129)):
        recs = [dl.residuals(prof, e, 2, n_s=grid[0], n_t=grid[1]) for e in eps]
        slopes[grid] = [dl.asymptotic_fit(prof, eps, k, records=recs).fit.slope for k in (1, 2)]
    base, fine = slopes[(128, 64)], slopes[(256, 129)]
    drift = max(abs(a - b) for a, b in zip(base, fine))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and min(base) >= 0.9 and min(fine) >= 0.9 and drift <= 0.05
    ok = report(capsys, "4 Dirichlet layer", ok,
                f"flat rel {worst:.2g}; slopes {base[0]:.3f}, {base[1]:.3f}; doubled "
                f"{fine[0]:.3f}, {fine[1]:.3f}", dt, 600)
    assert ok


def test_c5_robin_shell(capsys):
    t0 = time.perf_counter()
    flat = CurveProfile()
    closed = max(abs(rs.transverse_eig_robin(flat, 0.0, rs.closed_form_alpha(k), 1).extrapolated + k * k)
                 for k in (0.5, 1.0, 2.0, 3.0))
    prof = CurveProfile(0.5, 0.3)
    nu = rs.effective_eigs(prof, 400.0, 1)[0]
    scaled = (nu + 400.0 * prof.kappa_max) / math.sqrt(400.0)
    recs = {a: rs.shell_records(prof, a, 2) for a in (10.0, 20.0, 40.0, 80.0)}
    growth = []
    for j in (0, 1):
        prev = max(abs(recs[a][j].shifted_residual) for a in (10.0, 20.0, 40.0))
        growth.append(abs(recs[80.0][j].shifted_residual) / prev)
    dt = time.perf_counter() - t0
    ok = closed <= 1e-8 and abs(scaled / math.sqrt(0.15) - 1) <= 0.1 and max(growth) <= 1.5
    ok = report(capsys, "5 Robin shell", ok,
                f"closed form {closed:.2g}; scaled nu1 {scaled:.4f} vs {math.sqrt(0.15):.4f}; "
                f"growth {growth[0]:.3f}, {growth[1]:.3f}", dt, 600)
    assert ok


def test_c6_non_self_adjoint_layer(capsys):
    t0 = time.perf_counter()
    prof, alpha = CurveProfile(1.0, 0.3), nr.RobinCoefficient()
    tmpl = nr.ComplexRobinModel(prof, alpha, 0.05, 64, 16)
    eps = [0.1, 0.05, 0.025]
    zs = [-2.0, 0.5 + 1j, 4.5 + 1j]
    eff_spec = nr.effective_spectrum(tmpl)
    assert all(np.min(np.abs(eff_spec - z)) > 0.1 for z in zs)
    slopes = [nr.resolvent_fit(tmpl, eps, z).fit.slope for z in zs]
    conj = nr.conjugation_symmetry_check(tmpl)
    acc = [nr.accretivity_check(nr.ComplexRobinModel(prof, alpha, e, 64, 16))
           for e in (0.05, 0.025)]
    var = nr.variational_fit(tmpl, eps, trials=200).fit.slope
    dt = time.perf_counter() - t0
    ok = (min(slopes) >= 0.9 and conj.max_entry_diff <= 1e-14 and conj.holds
          and all(a.c0_estimate > 0 for a in acc) and var >= 0.9)
    ok = report(capsys, "6 non-self-adjoint layer", ok,
                f"resolvent slopes {', '.join(f'{s:.3f}' for s in slopes)}; conjugation "
                f"{conj.max_entry_diff:.1g}; accretivity {', '.join(f'{a.c0_estimate:.3f}' for a in acc)} "
                f"(M = {acc[0].M:g}); variational slope {var:.3f}", dt, 900)
    assert ok


def test_c7_kernel_oracles(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    sturm = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 51))
        T = SymTridiag(rng.standard_normal(n), rng.standard_normal(n - 1))
        sturm = max(sturm, float(np.max(np.abs(sym_tridiag_eigs(T, n) - jacobi_dense_sym(T.to_dense())))))
    onorm = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 13))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        got = operator_norm(lambda x: A @ x, lambda y: A.conj().T @ y, n, 1e-12, method="lanczos")
        onorm = max(onorm, abs(got - np.linalg.norm(A, 2)) / np.linalg.norm(A, 2))
    dt = time.perf_counter() - t0
    ok = report(capsys, "7 kernel oracles", sturm <= 1e-10 and onorm <= 1e-6,
                f"Sturm vs Jacobi {sturm:.2g}; operator norm rel {onorm:.2g}", dt, 30)
    assert ok


def test_c8_cross_model(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for a0 in (0.3, 1.0, 1.5):
        for prof in (CurveProfile(1.0, 0.3), CurveProfile(0.5, 0.3)):
            m = nr.ComplexRobinModel(prof, nr.RobinCoefficient(a0, 0.0), 0.05, 64, 16)
            P = nr.assemble_all(m)
            A = P.A_eff.toarray() / P.M_eff[:, None]
            ref = rs.effective_matrix_1d(prof, a0, m.n_s).toarray() - a0**2 * np.eye(m.n_s)
            worst = max(worst, float(np.abs(A - ref).max()))
    dt = time.perf_counter() - t0
    ok = report(capsys, "8 cross-model consistency", worst <= 1e-12, f"max entry diff {worst:.2g}", dt, 60)
    assert ok
