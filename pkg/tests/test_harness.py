import json
import math

import numpy as np
import pytest

from toricmaps.dirichlet import make_interval
from toricmaps.harness import (ERROR_COLUMNS, ExperimentConfig,
                               build_approximants, error_norms, error_report,
                               geodesic_family, kahler_field, loop_family,
                               rate_fit, solve_harmonic_map, window_rho_bounds,
                               write_error_csv, write_error_dat)
from toricmaps.polytope import preset_polytope
from toricmaps.potentials import (ConvexityError, guillemin_potential,
                                  make_polytope_grid, preset_symplectic)

P = preset_polytope("interval")


@pytest.fixture(scope="module")
def geo():
    family = geodesic_family(a=0.1, n_t=9, n_x=401, k_max=32)
    rho = np.linspace(-3.0, 3.0, 401)
    field = kahler_field(family, rho)
    approx = build_approximants(family, (4, 8, 16, 32))
    return family, rho, field, approx


def test_geodesic_cross_check(geo):
    # the solved family matches the segment formula u0 + t a prod(ell) nodewise
    family, _, _, _ = geo
    t = family.domain.nodes
    x = family.xgrid.axes[0]
    direct = t[:, None] * (0.1 * x * (1 - x))[None, :]
    assert np.max(np.abs(family.f - direct)) < 1e-10
    u_mid = family.potential_at((4,))
    expected = guillemin_potential(P, 0.3) + t[4] * 0.1 * 0.3 * 0.7
    assert float(u_mid.value(np.asarray(0.3))) == pytest.approx(expected, abs=1e-10)


def test_disc_family_closed_form():
    family = loop_family(a=0.05, n_radii=7, n_angles=256, n_x=201, k_max=8)
    dom = family.domain
    x = family.xgrid.axes[0]
    r = dom.radii[:, None, None]
    g = dom.angles[None, :, None]
    direct = 0.05 * (1.0 + r * np.cos(g)) * (x * (1 - x))[None, None, :]
    assert np.max(np.abs(family.f - direct)) < 1e-9


def test_solve_harmonic_map_validation():
    dom = make_interval(5)
    xg = make_polytope_grid(P, 101, 1e-2)
    u = preset_symplectic("guillemin", P, xg)
    with pytest.raises(ValueError, match="boundary"):
        solve_harmonic_map(dom, xg, [u])
    other = make_polytope_grid(P, 99, 1e-2)
    u2 = preset_symplectic("guillemin", P, other)
    with pytest.raises(ValueError, match="common grid"):
        solve_harmonic_map(dom, xg, [u, u2])


def test_extension_convexity_guard():
    # boundary potentials convex, but a forged interior slice is flagged
    dom = make_interval(5)
    xg = make_polytope_grid(P, 101, 1e-2)
    u = preset_symplectic("guillemin", P, xg)
    fam = solve_harmonic_map(dom, xg, [u, u])
    from toricmaps.harness import HarmonicPotentialFamily, _assert_family_convexity
    bad_f = fam.f.copy()
    bad_f[2] = -5.0 * xg.axes[0] ** 2
    bad = HarmonicPotentialFamily(domain=dom, xgrid=xg,
                                  boundary_potentials=fam.boundary_potentials,
                                  f=bad_f)
    with pytest.raises(ConvexityError):
        _assert_family_convexity(bad)


def test_error_norms_zero_and_constant_shift(geo):
    family, rho, field, _ = geo
    bounds = window_rho_bounds(family.boundary_potentials[0], 0.1)
    mask = (rho >= bounds[0]) & (rho <= bounds[1])
    zeros = error_norms(np.zeros_like(field.values), family.domain, rho, mask, (0,))
    assert all(v == 0.0 for v in zeros.values())
    const = error_norms(np.full_like(field.values, 1.5), family.domain, rho,
                        mask, (0,))
    assert const["C0"] == 0.0
    assert const["C1_y"] == 0.0 and const["C2_rhorho"] == 0.0


def test_error_report_monotone_window(geo):
    family, rho, field, approx = geo
    rep_narrow = error_report(family, field, approx, window=0.2)
    rep_wide = error_report(family, field, approx, window=0.1)
    for col in ERROR_COLUMNS:
        assert np.all(rep_narrow.column(col) <= rep_wide.column(col) * (1 + 1e-12))


def test_error_report_decreasing(geo):
    family, rho, field, approx = geo
    rep = error_report(family, field, approx, window=0.1)
    assert np.all(np.diff(rep.column("C0")) < 0)


def test_rate_fit_models():
    ks = (8, 16, 32, 64)
    logk = [math.log(k) / k for k in ks]
    fit = rate_fit(ks, logk)
    assert fit.statistic_spread < 1e-10
    fit2 = rate_fit(ks, [k ** -0.5 for k in ks])
    assert fit2.slope == pytest.approx(-0.5, abs=1e-10)
    fit3 = rate_fit(ks, [0.0, 0.0, 0.0, 0.0])
    assert fit3.exact_match
    with pytest.raises(ValueError):
        rate_fit((8, 16, 32), [1, 2, 3])


def test_measured_rate_slope(geo):
    family, rho, field, approx = geo
    rep = error_report(family, field, approx, window=0.1)
    fit = rate_fit(rep.levels, rep.column("C0"))
    assert fit.slope <= -0.8
    assert fit.power_model_rmse <= fit.logk_model_rmse * 10


def test_pipeline_determinism(tmp_path):
    outputs = []
    for run in range(2):
        family = geodesic_family(a=0.1, n_t=5, n_x=201, k_max=8)
        rho = np.linspace(-2.0, 2.0, 201)
        field = kahler_field(family, rho)
        approx = build_approximants(family, (4, 8))
        rep = error_report(family, field, approx, window=0.1)
        path = tmp_path / f"run{run}.csv"
        write_error_csv(rep, path)
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


def test_output_files(tmp_path, geo):
    family, rho, field, approx = geo
    rep = error_report(family, field, approx, window=0.1)
    csv_path = tmp_path / "errors.csv"
    dat_path = tmp_path / "errors.dat"
    write_error_csv(rep, csv_path)
    write_error_dat(rep, dat_path)
    header = csv_path.read_text().splitlines()[0]
    assert header == "k,C0,C1_y,C1_rho,C2_rhorho,C2_yrho,C2_yy"
    assert dat_path.read_text().startswith("# k C0")
    assert len(csv_path.read_text().splitlines()) == 1 + len(rep.levels)


def test_config_parsing():
    cfg = ExperimentConfig.from_json(json.dumps(
        {"levels": [8, 16, 32, 64], "n_x": 801, "window": 0.12}))
    assert cfg.levels == (8, 16, 32, 64)
    assert cfg.window == 0.12
    assert cfg.build_polytope().dim == 1
    with pytest.raises(ValueError, match="unknown config"):
        ExperimentConfig.from_json(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError, match="strictly increasing"):
        ExperimentConfig(levels=(8, 8))
    with pytest.raises(ValueError, match="coarse"):
        ExperimentConfig(levels=(8, 16, 32, 64), n_x=100)
    cfg2 = ExperimentConfig.from_json(json.dumps(
        {"polytope": {"dim": 1, "facets": [{"normal": [1], "offset": 0},
                                           {"normal": [-1], "offset": 2}]}}))
    assert cfg2.build_polytope().bounding_box()[1][0] == 2.0


def test_window_rho_bounds():
    u = preset_symplectic("guillemin", P)
    lo, hi = window_rho_bounds(u, 0.1)
    assert lo == pytest.approx(math.log(1 / 9), abs=1e-12)
    assert hi == pytest.approx(math.log(9), abs=1e-12)


def test_equal_endpoints_give_constant_family():
    dom = make_interval(7)
    xg = make_polytope_grid(P, 201, 1e-2)
    u = preset_symplectic("perturbed(0.05)", P, xg)
    fam = solve_harmonic_map(dom, xg, [u, u])
    # (1-t) v + t v re-rounds at the last ulp for generic t
    assert np.max(np.abs(fam.f - fam.f[:1])) < 1e-15
    rho = np.linspace(-2, 2, 51)
    field = kahler_field(fam, rho)
    assert np.max(np.abs(field.values - field.values[:1])) < 1e-11
