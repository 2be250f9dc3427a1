import math

import numpy as np
import pytest
from scipy.integrate import quad

from toricmaps.bergman import (NormingTable, QuadratureError, bargmann_fock_peak,
                               bergman_potential, harmonic_norming, delta_k,
                               load_norming_table, localization_gap,
                               log_normalized_monomial, normalized_monomial,
                               norming_constants, peak_asymptotics_check,
                               peak_value, ratio_report, save_norming_table,
                               szego_sum)
from toricmaps.dirichlet import make_disc, make_interval
from toricmaps.polytope import lattice_points, preset_polytope
from toricmaps.potentials import (default_margin, make_polytope_grid,
                                  make_radial_grid, preset_kahler,
                                  preset_symplectic, to_kahler)

P = preset_polytope("interval")
XG = make_polytope_grid(P, 801, default_margin(64))
U0 = preset_symplectic("guillemin", P, XG)
PHI_FS = preset_kahler("fubini-study", make_radial_grid([-6.0], [6.0], [601]))


@pytest.fixture(scope="module")
def table_k2():
    return norming_constants(U0, 2)


def beta_oracle(alpha: int, k: int) -> float:
    """Independent quadrature of int_0^inf t^alpha (1+t)^(-k-2) dt = B(alpha+1, k+1-alpha)."""
    val, err = quad(lambda t: t**alpha * (1 + t) ** (-k - 2), 0, np.inf)
    assert err < 1e-12
    return val


@pytest.mark.parametrize("k,alpha", [(1, 0), (2, 1), (3, 2), (5, 5), (8, 3)])
def test_norming_matches_independent_quadrature(k, alpha):
    table = norming_constants(U0, k)
    oracle = beta_oracle(alpha, k)
    assert math.exp(table.log_q_of([alpha])) == pytest.approx(oracle, rel=1e-9)
    # and the closed Beta form agrees with the quadrature oracle
    closed = math.exp(math.lgamma(alpha + 1) + math.lgamma(k - alpha + 1)
                      - math.lgamma(k + 2))
    assert oracle == pytest.approx(closed, rel=1e-10)


def test_norming_k2_values(table_k2):
    np.testing.assert_allclose(np.exp(table_k2.log_q), [1 / 3, 1 / 6, 1 / 3],
                               rtol=1e-10)


def test_vertex_monomials_finite_any_metric():
    u = preset_symplectic("perturbed(0.1)", P, XG)
    t = norming_constants(u, 1)
    assert np.all(np.isfinite(t.log_q)) and np.all(np.exp(t.log_q) > 0)


def test_constant_shift_scales_norming():
    u = preset_symplectic("perturbed(0.1)", P, XG)
    k = 5
    base = norming_constants(u, k)
    shifted = norming_constants(u.shift(0.37), k)
    np.testing.assert_allclose(shifted.log_q, base.log_q + k * 0.37, atol=1e-10)


def test_quadrature_validation_reports_alpha():
    # the standard-metric integrand is a polynomial (Gauss-exact at any panel
    # count), so the perturbed metric is needed to exercise the validator
    u = preset_symplectic("perturbed(0.1)", P, XG)
    with pytest.raises(QuadratureError, match="panel"):
        norming_constants(u, 32, n_panels=1, check_tol=1e-13)


def test_normalized_monomial_value(table_k2):
    val = normalized_monomial(table_k2, PHI_FS, [1], np.asarray(0.0))
    assert float(val) == pytest.approx(1.5, rel=1e-10)
    assert np.all(normalized_monomial(table_k2, PHI_FS, [1],
                                      np.linspace(-3, 3, 11)) > 0)


def test_normalized_monomial_scaling(table_k2):
    doubled = NormingTable(level=2, alphas=table_k2.alphas,
                           log_q=table_k2.log_q + math.log(2))
    a = normalized_monomial(table_k2, PHI_FS, [1], np.asarray(0.3))
    b = normalized_monomial(doubled, PHI_FS, [1], np.asarray(0.3))
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_peak_value_duality_and_brute_force(table_k2):
    # duality route
    assert peak_value(table_k2, U0, [1]) == pytest.approx(1.5, rel=1e-10)
    # independent oracle: brute-force maximization over a fine rho grid
    rho = np.linspace(-8, 8, 20001)
    vals = normalized_monomial(table_k2, PHI_FS, [1], rho)
    assert float(np.max(vals)) == pytest.approx(1.5, rel=1e-6)
    # the grid argmax sits at the moment-map preimage of alpha/k
    rho_star = float(np.asarray(U0.grad(np.asarray(0.5))))
    assert abs(rho[np.argmax(vals)] - rho_star) <= rho[1] - rho[0]


def test_peak_value_rejects_boundary(table_k2):
    with pytest.raises(ValueError):
        peak_value(table_k2, U0, [0])
    with pytest.raises(ValueError):
        peak_value(table_k2, U0, [2])


def test_duality_identity_direct(table_k2):
    # log Q + log P = k u(alpha/k) with P evaluated directly at grad u(alpha/k)
    rho_star = float(np.asarray(U0.grad(np.asarray(0.5))))
    log_p = log_normalized_monomial(table_k2, PHI_FS, [1], np.asarray(rho_star))
    lhs = table_k2.log_q_of([1]) + float(log_p)
    assert lhs == pytest.approx(2 * float(U0.value(np.asarray(0.5))), abs=1e-10)


def test_bargmann_fock_values():
    assert bargmann_fock_peak(5, 0) == pytest.approx(5.0, rel=1e-14)
    assert bargmann_fock_peak(5, 1) == pytest.approx(5 / math.e, rel=1e-14)
    stirling = 5 / math.sqrt(2 * math.pi * 400)
    assert bargmann_fock_peak(5, 400) == pytest.approx(stirling, rel=1e-3)
    with pytest.raises(ValueError):
        bargmann_fock_peak(0, 1)
    with pytest.raises(ValueError):
        bargmann_fock_peak(3, -1)


def test_szego_sum_small_levels():
    # fit the constant on k in {2,4,8}: k|sum-1| = 1 for the standard metric
    cs = []
    for k in (2, 4, 8):
        t = norming_constants(U0, k)
        dev = abs(szego_sum(t, PHI_FS, np.asarray(0.0)) - 1.0)
        cs.append(k * dev)
    c = max(cs)
    assert c == pytest.approx(1.0, rel=1e-10)
    for k in (16, 32):
        t = norming_constants(U0, k)
        dev = abs(szego_sum(t, PHI_FS, np.asarray(0.0)) - 1.0)
        assert dev <= 1.1 * c / k


def test_szego_shift_invariance():
    u = preset_symplectic("perturbed(0.1)", P, XG)
    k = 8
    grid = make_radial_grid([-4.0], [4.0], [401])
    phi = to_kahler(u, grid)
    phi_s = to_kahler(u.shift(0.2), grid)
    t = norming_constants(u, k)
    t_s = norming_constants(u.shift(0.2), k)
    a = szego_sum(t, phi, np.asarray(0.4))
    b = szego_sum(t_s, phi_s, np.asarray(0.4))
    assert b == pytest.approx(a, rel=1e-9)


def test_localization_gap_vacuous_and_bounded():
    t8 = norming_constants(U0, 8)
    # window radius 8^(delta - 1/2) with delta near 1/2 covers all of P
    assert localization_gap(t8, PHI_FS, np.asarray(0.0), 0.45) == 0.0
    rho = math.log(0.15 / 0.85)
    gap = localization_gap(t8, PHI_FS, np.asarray(rho), 0.25)
    assert 0 < gap <= szego_sum(t8, PHI_FS, np.asarray(rho))
    with pytest.raises(ValueError):
        localization_gap(t8, PHI_FS, np.asarray(0.0), 0.6)


def test_harmonic_norming_interval():
    dom = make_interval(9)
    t2 = norming_constants(U0, 2)
    hn = harmonic_norming(dom, [t2, t2])
    assert np.max(np.abs(hn.lam - hn.lam[:, :1])) == 0.0     # constant in t
    # synthetic linear exponents
    base = NormingTable(level=2, alphas=t2.alphas, log_q=t2.log_q)
    bumped = NormingTable(level=2, alphas=t2.alphas, log_q=t2.log_q + 2.0)
    hn2 = harmonic_norming(dom, [base, bumped])
    assert hn2.lam[1, 4] == pytest.approx(-math.log(6) + 1.0, abs=1e-12)
    # exponents are exactly linear in t (term-for-term reduction to the segment formula)
    t = dom.nodes
    for i in range(hn2.count):
        expected = (1.0 - t) * base.log_q[i] + t * bumped.log_q[i]
        np.testing.assert_array_equal(hn2.lam[i], expected)
    # boundary restriction equals the boundary tables exactly
    np.testing.assert_array_equal(hn2.lam[:, 0], base.log_q)
    np.testing.assert_array_equal(hn2.lam[:, -1], bumped.log_q)


def test_harmonic_norming_fields_are_discretely_harmonic():
    from toricmaps.dirichlet import laplace_residual
    dom = make_interval(9)
    t2 = norming_constants(U0, 2)
    bumped = NormingTable(level=2, alphas=t2.alphas, log_q=t2.log_q + 1.3)
    hn = harmonic_norming(dom, [t2, bumped])
    for i in range(hn.count):
        assert laplace_residual(dom, hn.field(i)) < 1e-10


def test_harmonic_norming_disc_constant():
    dom = make_disc(5, 256)    # kernel aliasing ~ 2 * 0.9^n_angles
    t2 = norming_constants(U0, 2)
    hn = harmonic_norming(dom, [t2] * 256)
    assert np.max(np.abs(hn.lam - hn.lam[:, :1, :1])) < 1e-9


def test_harmonic_norming_rejects_mismatch():
    dom = make_interval(5)
    t2 = norming_constants(U0, 2)
    t3 = norming_constants(U0, 3)
    with pytest.raises(ValueError):
        harmonic_norming(dom, [t2, t3])
    sub = NormingTable(level=2, alphas=t2.alphas[:2], log_q=t2.log_q[:2])
    with pytest.raises(ValueError):
        harmonic_norming(dom, [t2, sub])


def test_bergman_potential_values(table_k2):
    dom = make_interval(9)
    hn = harmonic_norming(dom, [table_k2, table_k2])
    # log-sum-exp of the Beta values at rho = 0: (1/2) log(3 + 6 + 3)
    val = bergman_potential(hn, (0,), np.asarray(0.0))
    assert val == pytest.approx(0.5 * math.log(12.0), abs=1e-12)
    # equal endpoint tables: independent of t
    v_mid = bergman_potential(hn, (4,), np.asarray(0.0))
    assert v_mid == val
    # boundary consistency: identical floating-point expression
    rho = np.linspace(-2, 2, 17)
    direct = np.max(np.stack([t2a * rho - lq for t2a, lq in
                              zip(table_k2.alphas[:, 0], table_k2.log_q)]), axis=0)
    lse = bergman_potential(hn, (0,), rho)
    terms = np.stack([a * rho - lq for a, lq in
                      zip(table_k2.alphas[:, 0].astype(float), table_k2.log_q)])
    peak = terms.max(axis=0)
    expected = (peak + np.log(np.exp(terms - peak).sum(axis=0))) / 2
    np.testing.assert_array_equal(lse, expected)


def test_bergman_potential_single_alpha_affine():
    dom = make_interval(5)
    t = NormingTable(level=3, alphas=np.array([[2]]), log_q=np.array([0.7]))
    hn = harmonic_norming(dom, [t, t])
    rho = np.linspace(-1, 1, 9)
    vals = np.asarray(bergman_potential(hn, (2,), rho))
    np.testing.assert_allclose(vals, (2 * rho - 0.7) / 3, atol=1e-14)


def test_bergman_convexity_in_rho(table_k2):
    dom = make_interval(5)
    hn = harmonic_norming(dom, [table_k2, table_k2])
    rho = np.linspace(-3, 3, 101)
    vals = np.asarray(bergman_potential(hn, (2,), rho))
    assert np.min(np.diff(vals, 2)) > -1e-12


def test_ratio_report_boundary_and_constant(table_k2):
    dom = make_interval(9)
    hn = harmonic_norming(dom, [table_k2, table_k2])
    rep = ratio_report(hn, table_k2, U0, [U0, U0], (0,))
    np.testing.assert_array_equal(rep.r_k, 1.0)        # boundary node: exact
    rep_mid = ratio_report(hn, table_k2, U0, [U0, U0], (4,))
    np.testing.assert_allclose(rep_mid.r_k, 1.0, atol=1e-12)
    np.testing.assert_allclose(rep_mid.r_inf, 1.0, atol=1e-12)
    assert rep_mid.bound_constant == pytest.approx(1.0, abs=1e-12)


def test_peak_asymptotics_fit():
    k = 64
    alphas = np.arange(24, 41)
    t = norming_constants(U0, k, alphas=alphas)
    fit = peak_asymptotics_check(t, U0)
    # leading constant of the peak law is 1/sqrt(2 pi) in one dimension
    assert fit.mean == pytest.approx(1 / math.sqrt(2 * math.pi), rel=0.02)
    assert fit.dispersion < 0.05
    near = norming_constants(U0, k, alphas=[[1]])
    with pytest.raises(ValueError, match="facet"):
        peak_asymptotics_check(near, U0)
    assert delta_k(64) == pytest.approx(1 / (8 * math.log(64)))


def test_peak_constant_metric_independent():
    k = 64
    alphas = np.arange(24, 41)
    u_p = preset_symplectic("perturbed(0.1)", P, XG)
    c_fs = peak_asymptotics_check(norming_constants(U0, k, alphas=alphas), U0).mean
    c_p = peak_asymptotics_check(norming_constants(u_p, k, alphas=alphas), u_p).mean
    assert c_p == pytest.approx(c_fs, rel=0.02)


def test_csv_round_trip(tmp_path, table_k2):
    path = tmp_path / "table.csv"
    save_norming_table(table_k2, path)
    back = load_norming_table(path)
    assert back.level == table_k2.level
    np.testing.assert_array_equal(back.alphas, table_k2.alphas)
    np.testing.assert_array_equal(back.log_q, table_k2.log_q)


def test_csv_round_trip_2d(tmp_path):
    S = preset_polytope("simplex2")
    alphas = lattice_points(S, 2).points
    t = NormingTable(level=2, alphas=alphas, log_q=np.linspace(-1, 1, len(alphas)))
    path = tmp_path / "t2.csv"
    save_norming_table(t, path)
    back = load_norming_table(path)
    np.testing.assert_array_equal(back.alphas, alphas)
    np.testing.assert_array_equal(back.log_q, t.log_q)


def test_family_constant_shift_equivariance():
    # shifting every u(y, .) by c shifts Phi_k and Phi by the same constant,
    # leaving the comparison invariant
    from toricmaps.harness import (build_approximants, kahler_field,
                                   solve_harmonic_map)
    dom = make_interval(5)
    c = 0.3
    u0 = preset_symplectic("guillemin", P, XG)
    u1 = preset_symplectic("perturbed(0.1)", P, XG)
    fam = solve_harmonic_map(dom, XG, [u0, u1])
    fam_s = solve_harmonic_map(dom, XG, [u0.shift(c), u1.shift(c)])
    rho = np.linspace(-2, 2, 101)
    phi = kahler_field(fam, rho)
    phi_s = kahler_field(fam_s, rho)
    np.testing.assert_allclose(phi_s.values, phi.values - c, atol=1e-10)
    k = 4
    fk = build_approximants(fam, (k,))[k].field(rho)
    fk_s = build_approximants(fam_s, (k,))[k].field(rho)
    np.testing.assert_allclose(fk_s, fk - c, atol=1e-10)
    np.testing.assert_allclose(fk_s - phi_s.values, fk - phi.values, atol=1e-10)
