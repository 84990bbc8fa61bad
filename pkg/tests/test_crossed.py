import numpy as np
import pytest

from slabcbs.crossed import (
    ConsistencyError,
    CrossedConfig,
    crossed_bistatic,
    crossed_spectrum,
    detected_energies,
    enhancement_factor,
    gp_sweep,
    peak_summary,
    solve_crossed,
)
from slabcbs.grids import build_ladder_matrix, build_source, projection_weights
from slabcbs.kernels import InteractionParams
from slabcbs.ladder import LadderConfig, ladder_bistatic, solve_ladder


def test_config_validation():
    with pytest.raises(ValueError):
        CrossedConfig(E_d=0)
    with pytest.raises(ValueError):
        CrossedConfig(method="newton")


def test_reciprocity_without_interactions(linear_ladder):
    sol = solve_crossed(linear_ladder)
    cb = crossed_bistatic(sol, imag_tol=1e-12)
    lb = ladder_bistatic(linear_ladder)
    assert cb.gamma_el == pytest.approx(lb.gamma - lb.gamma_single, rel=1e-12)
    assert cb.gamma_E == 0.0


def test_mean_field_limit():
    cfg = LadderConfig(params=InteractionParams(alpha=0.0, beta=0.15), b=4.0, n_cells=40,
                       n_energy=40, e_max=4.0)
    lad = solve_ladder(cfg)
    sol = solve_crossed(lad)
    dens = sol.a1 + sol.x[sol.index_ref]
    K = build_ladder_matrix(lad.spatial_grid)
    # the mean-field phase enters as a local complex rate
    ref = np.linalg.solve(np.eye(40) - K - np.diag(1j * 0.15 * lad.A),
                          build_source(lad.spatial_grid))
    np.testing.assert_allclose(dens.real, ref.real, rtol=1e-8, atol=1e-10)
    cb = crossed_bistatic(sol, imag_tol=1e-8)
    w = projection_weights(lad.spatial_grid)
    assert cb.gamma_el == pytest.approx(w @ (ref.real - build_source(lad.spatial_grid)),
                                        rel=1e-8)


def test_mean_field_reduces_backscattering():
    betas = [0.0, 0.1]
    base = LadderConfig(b=4.0, n_cells=40, n_energy=40, e_max=4.0)
    sweep = gp_sweep(betas, base)
    assert sweep["gamma_C"][1] < sweep["gamma_C"][0]
    np.testing.assert_allclose(sweep["gamma_L"], sweep["gamma_L"][0])


def test_krylov_and_jacobi_agree(small_ladder):
    a = solve_crossed(small_ladder, E_d=1.1, tol=1e-12)
    b = solve_crossed(small_ladder, E_d=1.1, method="jacobi", tol=1e-12)
    assert a.converged and b.converged
    np.testing.assert_allclose(a.c1, b.c1, atol=1e-9)
    np.testing.assert_allclose(a.c2, b.c2, atol=1e-9)
    assert a.residual <= 1e-10


def test_elastic_sector_only_at_incident_energy(small_ladder):
    assert solve_crossed(small_ladder, E_d=1.0).x is not None
    off = solve_crossed(small_ladder, E_d=1.2)
    assert off.x is None
    assert crossed_bistatic(off).gamma_el == 0.0


def test_imaginary_part_reported_and_enforced(small_ladder):
    sol = solve_crossed(small_ladder, E_d=1.0)
    cb = crossed_bistatic(sol)
    assert 0 < cb.imag_residual < 0.5
    with pytest.raises(ConsistencyError):
        crossed_bistatic(sol, imag_tol=1e-12)


def test_graded_grid_matches_uniform_refinement(small_ladder):
    fine = crossed_bistatic(solve_crossed(small_ladder, E_d=1.0, refine=8))
    graded = solve_crossed(small_ladder, E_d=1.0, zone_refine=8, zone_halfwidth=0.3)
    assert graded.energies.size < 80
    cb = crossed_bistatic(graded)
    assert cb.gamma_el == pytest.approx(fine.gamma_el, rel=1e-3)
    assert cb.gamma_E == pytest.approx(fine.gamma_E, rel=1e-3)


def test_adaptive_detected_energies(small_ladder):
    cfg = CrossedConfig(zone_refine=4, zone_halfwidth=0.2)
    spec = crossed_spectrum(small_ladder, cfg=cfg)
    base = crossed_spectrum(small_ladder)
    h = small_ladder.energy_grid.spacing
    assert set(np.round(base.E_d, 9)) <= set(np.round(spec.E_d, 9))
    extra = spec.E_d[~np.isin(np.round(spec.E_d, 9), np.round(base.E_d, 9))]
    assert extra.size > 0
    # refined points lie on the zone lattice and give valid crossed grids
    for e in extra:
        small_ladder.energy_grid.crossed(e, 1, 4, 0.2)
    np.testing.assert_allclose(extra / (h / 4), np.round(extra / (h / 4)), atol=1e-9)
    assert spec.gamma_C == pytest.approx(
        spec.gamma_C_el + np.trapezoid(spec.gamma_C_E, spec.E_d))


def test_detected_energies_layout():
    e = detected_energies(0.05)
    assert 1.0 in np.round(e, 12)
    assert e[0] == pytest.approx(0.1)
    assert e[-1] == pytest.approx(2.0)
    assert np.all(np.diff(e) > 0)
    dense = e[np.abs(e - 1) <= 0.3]
    np.testing.assert_allclose(np.diff(dense), 0.05)


def test_spectrum_and_peak(small_ladder):
    spec = crossed_spectrum(small_ladder, E_d=np.arange(0.8, 1.25, 0.1))
    assert spec.E_d.size == 5
    assert spec.gamma_C == pytest.approx(
        spec.gamma_C_el + np.trapezoid(spec.gamma_C_E, spec.E_d))
    eta = enhancement_factor(spec)
    assert eta.shape == spec.E_d.shape
    pk = peak_summary(spec)
    assert pk["E_peak"] in spec.E_d
    assert pk["eta_max"] == pytest.approx(np.nanmax(eta))


def test_enhancement_is_nan_without_background():
    class S:
        gamma_L_E = np.array([0.0, 1.0])
        gamma_C_E = np.array([0.5, 0.5])

    eta = enhancement_factor(S())
    assert np.isnan(eta[0]) and eta[1] == 1.5


def test_sign_change_located():
    from slabcbs.crossed import first_sign_change

    assert first_sign_change(np.array([0.0, 1.0, 2.0]), np.array([2.0, 1.0, -1.0])) == pytest.approx(1.5)
    assert first_sign_change(np.array([0.0, 1.0]), np.array([1.0, 2.0])) is None
