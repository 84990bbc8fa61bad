import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slabcbs.grids import EnergyGrid
from slabcbs.kernels import (
    InteractionParams,
    build_crossed_tables,
    build_ladder_tables,
    check_energy_conservation,
    check_particle_conservation,
    check_reversibility,
    crossed_fC,
    crossed_gC,
    crossed_h,
    ladder_f,
    ladder_g,
    maxwell_boltzmann,
)

P = InteractionParams(alpha=0.01, beta=0.1, k_ell=10.0)
energy = st.floats(0.05, 3.0)


def fC_loop(e1, e2, e3, E_d, p):
    """Term-by-term evaluation of the crossed inelastic kernel."""
    e2t, e3t, e4 = 1 + E_d - e2, 1 + E_d - e3, e1 + e2 - e3
    if min(e2t, e3t, e4) < 0:
        return 0j
    total = 0j
    for s in itertools.product((1, -1), repeat=4):
        k = (s[0] * np.sqrt(e1) + s[1] * np.sqrt(e2t if s[1] > 0 else e2)
             + s[2] * np.sqrt(e3t if s[2] > 0 else e3) + s[3] * np.sqrt(e4))
        if k == 0:
            continue
        sign = np.prod(s)
        total += -sign * (abs(k) + 2j / np.pi * k * np.log(abs(k)))
    pair = lambda e, et: np.sqrt(e) + np.sqrt(et) - 1j * p.k_ell * (e - et)
    return p.alpha * total / (np.sqrt(e1) * pair(e2, e2t) * pair(e3, e3t))


def test_parameter_validation():
    with pytest.raises(ValueError):
        InteractionParams(alpha=-1)
    with pytest.raises(ValueError):
        InteractionParams(k_ell=0.5)


def test_from_scattering_length_ratio():
    p = InteractionParams.from_scattering_length(a_s=0.01, ell_dis=10.0, rho0=1.0, E_i=1.0)
    # alpha/beta = a_s sqrt(E_i)
    assert p.alpha / p.beta == pytest.approx(0.01)
    assert p.k_ell == 10.0


def test_ladder_spot_values():
    assert ladder_g(1.0, 1.0, P) == pytest.approx(-4 / 3 * P.alpha, rel=1e-14)
    # f(E,E,E3) = alpha sqrt(min)/sqrt(E E E3)
    assert ladder_f(1.0, 1.0, 0.5, P) == pytest.approx(P.alpha, rel=1e-14)
    assert ladder_f(1.0, 1.0, 1.5, P) == pytest.approx(P.alpha / np.sqrt(3), rel=1e-14)
    assert ladder_f(1.0, 1.0, 2.5, P) == 0.0


def test_energies_must_be_positive():
    with pytest.raises(ValueError):
        ladder_g(0.0, 1.0, P)
    with pytest.raises(ValueError):
        ladder_f(1.0, -1.0, 0.5, P)


def test_fC_frozen_value():
    # independent evaluation frozen at the reference point
    ref = -7.787806983229898e-4 - 1.7351253590109014e-3j
    assert crossed_fC(1.0, 0.8, 0.6, 1.0, P) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(energy, energy, energy, st.floats(0.3, 2.0))
def test_fC_matches_loop(e1, e2, e3, E_d):
    assert crossed_fC(e1, e2, e3, E_d, P) == pytest.approx(fC_loop(e1, e2, e3, E_d, P),
                                                          rel=1e-10, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(energy, st.floats(0.3, 2.0))
def test_gC_reduces_to_ladder_on_the_diagonal(e1, e2):
    # at E2 = E2~ the dephasing drops out and the beta part is imaginary
    E_d = 2 * e2 - 1
    if E_d <= 0:
        return
    assert crossed_gC(e1, e2, E_d, P) == pytest.approx(ladder_g(e1, e2, P), rel=1e-12)


def test_h_on_the_diagonal():
    E_d = 1.0
    h = crossed_h(1.0, 1.0, E_d, P)
    assert h == pytest.approx(-1j * P.beta - P.alpha, rel=1e-14)


def test_crossed_kernels_vanish_outside_kinematics():
    assert crossed_gC(1.0, 2.5, 1.0, P) == 0.0
    assert crossed_h(2.5, 1.0, 1.0, P) == 0.0
    assert crossed_fC(0.5, 0.5, 1.5, 1.0, P) == 0.0


def test_linearity_in_couplings():
    p2 = InteractionParams(alpha=0.02, beta=0.2, k_ell=10.0)
    assert crossed_gC(0.7, 1.1, 1.0, p2) == pytest.approx(2 * crossed_gC(0.7, 1.1, 1.0, P))
    assert crossed_h(0.7, 1.1, 1.0, p2) == pytest.approx(2 * crossed_h(0.7, 1.1, 1.0, P))
    assert crossed_fC(0.7, 1.1, 0.4, 1.0, p2) == pytest.approx(
        2 * crossed_fC(0.7, 1.1, 0.4, 1.0, P))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_continuum_conservation(e1, e2):
    assert abs(check_particle_conservation(e1, e2, P)) <= 1e-6 * P.alpha
    assert abs(check_energy_conservation(e1, e2, P)) <= 1e-6 * P.alpha


@settings(max_examples=200, deadline=None)
@given(energy, energy, energy)
def test_reversibility(e1, e2, e3):
    assert abs(check_reversibility(e1, e2, e3, P)) <= 1e-14


def test_maxwell_boltzmann_normalised():
    e = np.linspace(0, 30, 300001)
    assert np.trapezoid(maxwell_boltzmann(e), e) == pytest.approx(1.0, rel=1e-7)
    assert np.trapezoid(e * maxwell_boltzmann(e), e) == pytest.approx(1.0, rel=1e-7)


class TestLadderTables:
    grid = EnergyGrid.uniform(e_max=4.0, n_per_unit=10)
    tabs = build_ladder_tables(grid, P)

    def test_discrete_particle_conservation(self):
        e, w = self.grid.nodes, self.grid.weights
        gain = np.einsum("ijk,k->ij", self.tabs.f, w * np.sqrt(e))
        np.testing.assert_allclose(gain + np.sqrt(e)[None, :] * self.tabs.g, 0, atol=1e-16)

    def test_discrete_energy_conservation(self):
        e, w = self.grid.nodes, self.grid.weights
        gain = 2 * np.einsum("ijk,k->ij", self.tabs.f, w * e * np.sqrt(e))
        loss = (e[:, None] + e[None, :]) * np.sqrt(e)[None, :] * self.tabs.g
        np.testing.assert_allclose(gain + loss, 0, atol=1e-15)

    def test_loss_close_to_closed_form_near_reference(self):
        m = self.grid.i_ref
        assert self.tabs.g[m, m] == pytest.approx(self.tabs.g_closed[m, m], rel=0.05)

    def test_loss_nonpositive(self):
        assert np.all(self.tabs.g <= 0)


def test_crossed_tables_match_scalar_api():
    el = np.array([0.5, 1.0, 1.5])
    ec = np.array([0.25, 0.75, 1.0, 1.5])
    t = build_crossed_tables(el, ec, 1.0, P)
    assert t.gC[1, 2] == pytest.approx(crossed_gC(1.0, 1.0, 1.0, P))
    assert t.h_c2[0, 3] == pytest.approx(crossed_h(0.25, 1.5, 1.0, P))
    assert t.h_c1[0, 3] == pytest.approx(np.conj(crossed_h(1.75, 0.5, 1.0, P)))
    assert t.fC_slice(0.5)[1, 0] == pytest.approx(crossed_fC(0.5, 0.75, 0.25, 1.0, P))
    np.testing.assert_allclose(t.fC_block([0, 2])[1], t.fC_slice(1.5))
