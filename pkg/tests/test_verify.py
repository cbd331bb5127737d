import numpy as np
import pytest

from amfem.adapt import ConvergenceHistory
from amfem.fespace import DofVector
from amfem.mesh import uniform_refine
from amfem.verify import (SUITES, benchmark, benchmark_names, check_helmholtz,
                          fit_points, fit_rate, helmholtz_split, lshape_f,
                          lshape_mesh, lshape_sigma, lshape_u, run_suite,
                          smooth_f, smooth_sigma, smooth_u, suite_csv,
                          uniform_study, unit_square_mesh)


def interior_lshape_points(rng, n):
    pts = []
    while len(pts) < n:
        x, y = rng.uniform(-0.97, 0.97, 2)
        if x > 0.03 and y < -0.03:
            continue                      # removed quadrant
        if np.hypot(x, y) < 0.05:
            continue                      # singular corner
        if x > 0 and abs(y) < 0.03:
            continue                      # next to the branch cut
        if abs(x) < 0.03 and y < 0:
            continue
        pts.append((x, y))
    return np.array(pts)


def test_smooth_solution_identities():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.0, 1.0, 50)
    y = rng.uniform(0.0, 1.0, 50)
    lap = -2.0 * np.pi ** 2 * smooth_u(x, y)
    assert np.allclose(-lap, smooth_f(x, y), atol=1e-12)
    h = 1e-6
    gx = (smooth_u(x + h, y) - smooth_u(x - h, y)) / (2.0 * h)
    gy = (smooth_u(x, y + h) - smooth_u(x, y - h)) / (2.0 * h)
    sx, sy = smooth_sigma(x, y)
    assert np.max(np.abs(sx + gx)) < 1e-8
    assert np.max(np.abs(sy + gy)) < 1e-8


def test_lshape_f_matches_fd_laplacian():
    rng = np.random.default_rng(2)
    pts = interior_lshape_points(rng, 20)
    h = 1e-5
    x, y = pts[:, 0], pts[:, 1]
    lap = (lshape_u(x + h, y) + lshape_u(x - h, y) + lshape_u(x, y + h)
           + lshape_u(x, y - h) - 4.0 * lshape_u(x, y)) / h ** 2
    assert np.max(np.abs(-lap - lshape_f(x, y))) < 5e-5


def test_lshape_sigma_matches_fd_gradient():
    rng = np.random.default_rng(3)
    pts = interior_lshape_points(rng, 20)
    h = 1e-6
    x, y = pts[:, 0], pts[:, 1]
    gx = (lshape_u(x + h, y) - lshape_u(x - h, y)) / (2.0 * h)
    gy = (lshape_u(x, y + h) - lshape_u(x, y - h)) / (2.0 * h)
    sx, sy = lshape_sigma(x, y)
    assert np.max(np.abs(sx + gx)) < 1e-6
    assert np.max(np.abs(sy + gy)) < 1e-6


def test_lshape_u_vanishes_on_boundary():
    t = np.linspace(0.0, 1.0, 41)
    segs = [
        ((0.0, 0.0), (1.0, 0.0)),       # reentrant edge along +x
        ((0.0, 0.0), (0.0, -1.0)),      # reentrant edge along -y
        ((1.0, 0.0), (1.0, 1.0)),
        ((1.0, 1.0), (-1.0, 1.0)),
        ((-1.0, 1.0), (-1.0, -1.0)),
        ((-1.0, -1.0), (0.0, -1.0)),
    ]
    for (x0, y0), (x1, y1) in segs:
        x = x0 + t * (x1 - x0)
        y = y0 + t * (y1 - y0)
        assert np.max(np.abs(lshape_u(x, y))) < 1e-13


def test_benchmark_registry():
    names = benchmark_names()
    assert set(names) == {"smooth_square", "lshape_sing", "checker_const"}
    b = benchmark("SMOOTH_SQUARE")        # case-insensitive
    m1, p1 = b.make()
    m2, p2 = b.make()
    assert m1 is not m2                   # factories give fresh meshes
    assert p1.sigma_exact is not None
    with pytest.raises(KeyError):
        benchmark("no_such_benchmark")


def test_checker_benchmark_source_is_p0():
    m, prob = benchmark("checker_const").make()
    vals = prob.f.cell_means(m)
    assert sorted(vals.tolist()) == [-1.0, 1.0]
    assert prob.sigma_exact is None


def test_fit_rate_recovers_synthetic_slope():
    h = ConvergenceHistory()
    for k in range(6):
        n = 4 * 2 ** k
        h.add(k=k, stage="amfem", nT=n, nE=n, eta2=(3.0 * n ** -0.5) ** 2,
              osc2=0.0, err=3.0 * n ** -0.5, n_marked=0, n_bisected=0,
              wall_ms=0.0)
    fit = fit_rate(h, "err")
    assert fit.s == pytest.approx(0.5, abs=1e-12)
    assert fit.residual < 1e-12
    fit_eta = fit_rate(h, "eta")
    assert fit_eta.s == pytest.approx(0.5, abs=1e-12)


def test_fit_points_requires_two_points():
    with pytest.raises(ValueError):
        fit_points([10.0], [1.0])


def test_fit_rate_tail_window():
    ns = [2, 4, 8, 16, 32, 64]
    errs = [100.0, 100.0, 8.0, 4.0, 2.0, 1.0]   # clean rate only in the tail
    fit = fit_points(ns[-4:], errs[-4:])
    assert fit.s == pytest.approx(1.0, abs=1e-12)


def test_uniform_study_structure():
    mesh0, prob = benchmark("smooth_square").make()
    hist = uniform_study(mesh0, prob, 3)
    assert len(hist.records) == 4
    assert np.array_equal(hist.column("nT"), [2, 8, 32, 128])
    assert all(r.stage == "uniform" for r in hist.records)
    # the two-triangle start is preasymptotic; decay is clean from there on
    errs = hist.column("err")
    assert np.all(np.diff(errs[1:]) < 0)


def test_helmholtz_split_reconstructs():
    m = uniform_refine(unit_square_mesh(), 2)
    rng = np.random.default_rng(11)
    sigma = DofVector("RT", rng.standard_normal(m.ne), m)
    psi, phi, curl_part, grad_part = helmholtz_split(sigma)
    assert psi.kind == "P1" and phi.kind == "P0"
    assert curl_part.kind == "RT" and grad_part.kind == "RT"
    recon = curl_part.values + grad_part.values
    assert np.max(np.abs(recon - sigma.values)) < 1e-10
    # dimensions: ne = (nv - 1) + nt
    assert m.ne == (m.nv - 1) + m.nt


def test_check_helmholtz_clean_on_square():
    results = check_helmholtz(uniform_refine(unit_square_mesh()), seed=3)
    assert all(r.passed for r in results)


def test_all_suites_pass():
    for name in sorted(SUITES):
        results = run_suite(name, seed=7)
        bad = [r.check for r in results if not r.passed]
        assert not bad, "failed checks in %s: %s" % (name, bad)


def test_suite_csv_deterministic_and_parsable():
    a = suite_csv(run_suite("marking", seed=7))
    b = suite_csv(run_suite("marking", seed=7))
    assert a == b
    lines = a.strip().splitlines()
    assert lines[0] == "check,value,threshold,pass"
    for line in lines[1:]:
        check, value, threshold, ok = line.split(",")
        float(value), float(threshold)
        assert ok in ("0", "1")


def test_suite_seed_changes_recorded_values():
    a = suite_csv(run_suite("helmholtz", seed=1))
    b = suite_csv(run_suite("helmholtz", seed=2))
    assert a != b                # seed row differs even if checks all pass
