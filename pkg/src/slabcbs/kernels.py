"""Contact-approximated s-wave collision kernels.

Internal units: energies in units of the incident energy E_i, lengths in units
of the disorder mean free path, densities in units of the incident density.
With these units the only physics inputs are ``alpha`` (inelastic collision
rate per mean free path), ``beta`` (mean-field phase per mean free path) and
``k_ell`` (weak-disorder parameter).

The scalar functions (``ladder_g`` ...) are the closed forms.  The table
builders at the bottom produce the arrays the solvers actually use.  The
ladder tables are built so that particle and energy conservation and
microscopic reversibility hold exactly on the energy grid (see
:func:`build_ladder_tables`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import xlogy

__all__ = [
    "InteractionParams",
    "ladder_g",
    "ladder_f",
    "crossed_gC",
    "crossed_h",
    "crossed_fC",
    "check_particle_conservation",
    "check_energy_conservation",
    "check_reversibility",
    "maxwell_boltzmann",
    "LadderKernelTables",
    "CrossedKernelTables",
    "build_ladder_tables",
    "build_crossed_tables",
    "write_table_csv",
]


@dataclass(frozen=True)
class InteractionParams:
    """Dimensionless couplings.

    alpha : ratio of disorder to collision mean free path (proportional to a_s^2)
    beta  : crossed mean-field coupling (proportional to a_s)
    k_ell : ell_dis * sqrt(E_i), the weak-disorder parameter
    """

    alpha: float = 0.01
    beta: float = 0.1
    k_ell: float = 10.0

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise ValueError("alpha and beta must be non-negative")
        if not self.k_ell > 1:
            raise ValueError("k_ell must exceed 1 (weak disorder)")

    @classmethod
    def from_scattering_length(cls, a_s, ell_dis, rho0, E_i):
        """Build from physical s-wave parameters (hbar^2/2m = 1)."""
        alpha = 8 * np.pi * a_s**2 * ell_dis * rho0
        beta = 8 * np.pi * a_s * ell_dis * rho0 / np.sqrt(E_i)
        return cls(alpha=alpha, beta=beta, k_ell=ell_dis * np.sqrt(E_i))


# ---------------------------------------------------------------------------
# vectorised closed forms (no argument checking)


def _cubic(s1, s2):
    return (s1 + s2) ** 3 - np.abs(s1 - s2) ** 3


def _g_closed(e1, e2, alpha):
    s1, s2 = np.sqrt(e1), np.sqrt(e2)
    return -alpha * _cubic(s1, s2) / (6.0 * s1 * e2)


def _f_closed(e1, e2, e3, alpha):
    e1, e2, e3 = np.broadcast_arrays(
        np.asarray(e1, float), np.asarray(e2, float), np.asarray(e3, float)
    )
    e4 = e1 + e2 - e3
    ok = e4 > 0
    m = np.minimum(np.minimum(e1, e2), np.minimum(e3, np.where(ok, e4, 0.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = alpha * np.sqrt(m) / np.sqrt(e1 * e2 * e3)
    return np.where(ok, out, 0.0)


def _dephasing(s, st, k_ell):
    """1 - i k_ell (sqrt(E) - sqrt(E~))."""
    return 1.0 - 1j * k_ell * (s - st)


def _pair_factor(e, et, k_ell):
    """sqrt(E) + sqrt(E~) - i k_ell (E - E~)."""
    return np.sqrt(e) + np.sqrt(et) - 1j * k_ell * (e - et)


def _gC_closed(e1, e2, E_d, p):
    e1, e2 = np.broadcast_arrays(np.asarray(e1, float), np.asarray(e2, float))
    e2t = 1.0 + E_d - e2
    ok = e2t >= 0
    e2t = np.where(ok, e2t, 0.0)
    s1, s2 = np.sqrt(e1), np.sqrt(e2)
    num = 1j * p.beta + p.alpha * _cubic(s1, s2) / (12.0 * s1 * s2)
    d = _dephasing(s2, np.sqrt(e2t), p.k_ell)
    out = -2.0 * np.real(num / d**2) / s2
    return np.where(ok, out, 0.0)


def _h_closed(e1, e2, E_d, p):
    e1, e2 = np.broadcast_arrays(np.asarray(e1, float), np.asarray(e2, float))
    e1t = 1.0 + E_d - e1
    e2t = 1.0 + E_d - e2
    ok = (e1 >= 0) & (e2 >= 0) & (e1t >= 0) & (e2t >= 0)
    e1, e2 = np.where(ok, e1, 0.0), np.where(ok, e2, 0.0)
    e1t, e2t = np.where(ok, e1t, 0.0), np.where(ok, e2t, 0.0)
    num = -2j * p.beta - p.alpha * np.sqrt(2.0 + 2.0 * E_d)
    den = _dephasing(np.sqrt(e2), np.sqrt(e2t), p.k_ell) * _pair_factor(e1, e1t, p.k_ell)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(ok, out, 0.0)


def _ks_sum(r1, r2, r2t, r3, r3t, r4):
    """Signed 16-term sum of |k| + (2i k / pi) ln|k| over the k_s combinations."""
    # real arithmetic throughout: k ln|k| = sign(k) xlogy(|k|, |k|), zero at k = 0
    re = 0.0
    im = 0.0
    for s1, s2, s3, s4 in itertools.product((0, 1), repeat=4):
        k = (
            (-1) ** s1 * r1
            + (-1) ** s2 * (r2 if s2 else r2t)
            + (-1) ** s3 * (r3 if s3 else r3t)
            + (-1) ** s4 * r4
        )
        ak = np.abs(k)
        klogk = np.sign(k) * xlogy(ak, ak)
        if (s1 + s2 + s3 + s4) % 2 == 0:
            re = re - ak
            im = im - klogk
        else:
            re = re + ak
            im = im + klogk
    return re + (2j / np.pi) * im


def _fC_closed(e1, e2, e3, E_d, p):
    e1, e2, e3 = np.broadcast_arrays(
        np.asarray(e1, float), np.asarray(e2, float), np.asarray(e3, float)
    )
    e2t = 1.0 + E_d - e2
    e3t = 1.0 + E_d - e3
    e4 = e1 + e2 - e3
    ok = (e2t >= 0) & (e3t >= 0) & (e4 >= 0)
    e2t, e3t, e4 = (np.where(ok, x, 0.0) for x in (e2t, e3t, e4))
    r1, r2, r3 = np.sqrt(e1), np.sqrt(e2), np.sqrt(e3)
    r2t, r3t, r4 = np.sqrt(e2t), np.sqrt(e3t), np.sqrt(e4)
    pref = p.alpha / (
        r1 * _pair_factor(e2, e2t, p.k_ell) * _pair_factor(e3, e3t, p.k_ell)
    )
    out = pref * _ks_sum(r1, r2, r2t, r3, r3t, r4)
    return np.where(ok, out, 0.0)


# ---------------------------------------------------------------------------
# public scalar API


def _require_positive(*energies):
    for e in energies:
        if not e > 0:
            raise ValueError(f"energies must be positive, got {e!r}")


def ladder_g(E1, E2, p):
    """Elastic loss kernel g_{E1,E2} (always <= 0)."""
    _require_positive(E1, E2)
    return float(_g_closed(E1, E2, p.alpha))


def ladder_f(E1, E2, E3, p):
    """Inelastic gain kernel f_{E1,E2,E3} (zero unless E3 < E1 + E2)."""
    _require_positive(E1, E2, E3)
    return float(_f_closed(E1, E2, E3, p.alpha))


def crossed_gC(E1, E2, E_d, p):
    """Crossed elastic kernel g^C_{E1,E2} at detected energy ``E_d``.

    Real-valued (the closed form takes -2 Re{...}).  Zero when the partner
    energy 1 + E_d - E2 is negative.
    """
    _require_positive(E1, E2)
    return float(_gC_closed(E1, E2, E_d, p))


def crossed_h(E1, E2, E_d, p):
    """Crossed collision h^C_{E1,E2}; zero if any tilde energy is negative."""
    return complex(_h_closed(E1, E2, E_d, p))


def crossed_fC(E1, E2, E3, E_d, p):
    """Crossed inelastic kernel f^C_{E1,E2,E3}; zero if kinematically closed."""
    _require_positive(E1, E2, E3)
    return complex(_fC_closed(E1, E2, E3, E_d, p))


def maxwell_boltzmann(E):
    """Thermal flux spectrum 4E exp(-2E) (units of E_i), unit integral."""
    E = np.asarray(E, dtype=float)
    return 4.0 * E * np.exp(-2.0 * E)


# ---------------------------------------------------------------------------
# conservation and reversibility oracles


def _f_moment(E1, E2, p, power, quadrature):
    """int_0^{E1+E2} dE E^power sqrt(E) f(E1, E2, E), split at the kinks."""
    quad_kw = {"epsabs": 1e-13, "epsrel": 1e-12, "limit": 200}
    if quadrature:
        quad_kw.update(quadrature)
    top = E1 + E2
    pts = sorted({0.0, min(E1, E2), max(E1, E2), top})
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        val, _ = integrate.quad(
            lambda e: e**power * np.sqrt(e) * _f_closed(E1, E2, e, p.alpha),
            lo,
            hi,
            **quad_kw,
        )
        total += val
    return total


def check_particle_conservation(E1, E2, p, quadrature=None):
    """sqrt(E2) g(E1,E2) + int dE sqrt(E) f(E1,E2,E); zero for exact kernels."""
    _require_positive(E1, E2)
    return np.sqrt(E2) * ladder_g(E1, E2, p) + _f_moment(E1, E2, p, 0, quadrature)


def check_energy_conservation(E1, E2, p, quadrature=None):
    """(E1+E2) sqrt(E2) g(E1,E2) + int dE 2E sqrt(E) f(E1,E2,E)."""
    _require_positive(E1, E2)
    return (E1 + E2) * np.sqrt(E2) * ladder_g(E1, E2, p) + 2.0 * _f_moment(
        E1, E2, p, 1, quadrature
    )


def check_reversibility(E1, E2, E3, p=None):
    """f(E1,E2,E3)/sqrt(E4) - f(E3,E4,E1)/sqrt(E2), with E4 = E1+E2-E3."""
    p = p or InteractionParams(alpha=1.0)
    E4 = E1 + E2 - E3
    if E4 <= 0:
        return 0.0
    lhs = _f_closed(E1, E2, E3, p.alpha) / np.sqrt(E4)
    rhs = _f_closed(E3, E4, E1, p.alpha) / np.sqrt(E2)
    return float(lhs - rhs)


# ---------------------------------------------------------------------------
# tables on the energy grid


@dataclass(frozen=True)
class LadderKernelTables:
    """Ladder collision tables on an :class:`~slabcbs.grids.EnergyGrid`.

    ``f[i, j, k] = f(E_i, E_j, E_k)``; ``g[i, j] = g(E_i, E_j)`` where ``j``
    is the energy of the particle that is scattered out and ``i`` its partner.
    ``g`` is the grid-consistent loss (see :func:`build_ladder_tables`);
    ``g_closed`` keeps the analytic values for comparison.
    """

    energies: np.ndarray
    weights: np.ndarray
    f: np.ndarray
    g: np.ndarray
    g_closed: np.ndarray
    params: InteractionParams


def build_ladder_tables(grid, p):
    """Tabulate f and a loss table g that conserves particles on the grid.

    ``f`` is zeroed whenever the partner energy ``E1 + E2 - E3`` falls
    outside the grid, so both outgoing energies stay representable.  The loss
    is then defined by ``sqrt(E2) g(E1, E2) = -sum_k w_k sqrt(E_k) f(E1, E2, E_k)``.
    On a uniform grid starting at one spacing this makes particle and energy
    conservation and detailed balance exact in the discrete sums.
    """
    e = grid.nodes
    w = grid.weights
    E1 = e[:, None, None]
    E2 = e[None, :, None]
    E3 = e[None, None, :]
    f = _f_closed(E1, E2, E3, p.alpha)
    e4 = E1 + E2 - E3
    # partner must be a grid node; round-off can leave E4 ~ 1e-16 instead of 0
    f = np.where((e4 <= grid.e_max * (1 + 1e-12)) & (e4 > 0.5 * grid.spacing), f, 0.0)
    g = -np.einsum("ijk,k->ij", f, w * np.sqrt(e)) / np.sqrt(e)[None, :]
    g_closed = _g_closed(e[:, None], e[None, :], p.alpha)
    return LadderKernelTables(e, w, f, g, g_closed, p)


@dataclass(frozen=True)
class CrossedKernelTables:
    """Crossed kernels for one detected energy.

    Axes: ``lad`` indexes the ladder energy grid (incoming ladder particle),
    ``crs`` the crossed internal grid.  ``gC[lad, crs]`` is the crossed loss
    kernel, ``h_c1[E, E'] = conj(h(E~, E~'))`` the C1 gain, ``h_c2[E', E] =
    h(E', E)`` the C2 gain, and ``fC(lad_index)`` evaluates f^C slices lazily.
    """

    E_d: float
    lad_energies: np.ndarray
    crs_energies: np.ndarray
    gC: np.ndarray
    h_c1: np.ndarray
    h_c2: np.ndarray
    params: InteractionParams

    def fC_slice(self, e_lad):
        """f^C(e_lad, E'', E) as an (n_crs, n_crs) array [E'', E]."""
        ec = self.crs_energies
        return _fC_closed(e_lad, ec[:, None], ec[None, :], self.E_d, self.params)

    def fC_block(self, lad_idx):
        """f^C over a block of ladder energies: shape (len(idx), n_crs, n_crs)."""
        el = self.lad_energies[lad_idx]
        ec = self.crs_energies
        return _fC_closed(
            el[:, None, None], ec[None, :, None], ec[None, None, :], self.E_d, self.params
        )


def build_crossed_tables(lad_energies, crs_energies, E_d, p):
    """Tabulate g^C and both h^C variants for detected energy ``E_d``."""
    el = np.asarray(lad_energies, float)
    ec = np.asarray(crs_energies, float)
    gC = _gC_closed(el[:, None], ec[None, :], E_d, p)
    et = 1.0 + E_d - ec
    h_c1 = np.conj(_h_closed(et[:, None], et[None, :], E_d, p))
    h_c2 = _h_closed(ec[:, None], ec[None, :], E_d, p)
    return CrossedKernelTables(E_d, el, ec, gC, h_c1, h_c2, p)


def write_table_csv(path, axes, values):
    """Dump a kernel table: a header naming the axes, then row-major values.

    ``axes`` is a sequence of (name, coordinates) pairs, one per array axis.
    Each row lists the coordinates followed by the value (real and imaginary
    parts for complex tables).
    """
    values = np.asarray(values)
    names = [name for name, _ in axes]
    cplx = np.iscomplexobj(values)
    header = names + (["value_re", "value_im"] if cplx else ["value"])
    coords = [np.asarray(c, float) for _, c in axes]
    if values.shape != tuple(len(c) for c in coords):
        raise ValueError("axis coordinates do not match table shape")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for idx in np.ndindex(values.shape):
            row = [f"{coords[d][i]:.12g}" for d, i in enumerate(idx)]
            v = values[idx]
            if cplx:
                row += [f"{v.real:.12g}", f"{v.imag:.12g}"]
            else:
                row.append(f"{v:.12g}")
            fh.write(",".join(row) + "\n")
