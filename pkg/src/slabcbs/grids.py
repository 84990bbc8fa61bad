"""Energy and depth grids, spectral fields and slab propagation matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .special import e1_antiderivative, e3_real

__all__ = [
    "EnergyGrid",
    "SpatialGrid",
    "SpectralField",
    "build_ladder_matrix",
    "build_crossed_matrix",
    "crossed_decay_rate",
    "build_source",
    "build_crossed_source",
    "projection_weights",
    "crossed_projection_weights",
    "escape_weights",
]


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform energy nodes ``h, 2h, ..., N h`` with equal weights ``h``.

    Energies are in units of E_i and ``1/h`` is an integer, so E_i is the node
    with index ``i_ref``.  The integrands met by the solvers vanish at E = 0,
    so no node is placed there; the weights sum to ``e_max``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    spacing: float
    i_ref: int

    @classmethod
    def uniform(cls, e_max=5.0, n_per_unit=20):
        n_per_unit = int(n_per_unit)
        if n_per_unit < 1:
            raise ValueError("need at least one node per E_i")
        n = int(round(e_max * n_per_unit))
        if n < n_per_unit:
            raise ValueError("e_max must be at least E_i")
        h = 1.0 / n_per_unit
        nodes = h * np.arange(1, n + 1)
        return cls(nodes, np.full(n, h), h, n_per_unit - 1)

    @classmethod
    def from_size(cls, n_energy, e_max=5.0):
        """Grid with roughly ``n_energy`` nodes on (0, e_max]."""
        return cls.uniform(e_max, max(1, int(round(n_energy / e_max))))

    @property
    def e_max(self):
        return float(self.nodes[-1])

    @property
    def size(self):
        return self.nodes.size

    def __len__(self):
        return self.nodes.size

    def index_of(self, energy):
        """Index of the node equal to ``energy``; raises if off-grid."""
        k = int(np.argmin(np.abs(self.nodes - energy)))
        if abs(self.nodes[k] - energy) > 1e-9:
            raise ValueError(f"energy {energy} is not a grid node")
        return k

    def snap(self, energy):
        """Nearest node value."""
        return float(self.nodes[np.argmin(np.abs(self.nodes - energy))])

    def crossed(self, E_d, refine=1, zone_refine=1, zone_halfwidth=0.0):
        """Internal grid for a crossed solve at detected energy ``E_d``.

        Base spacing is ``spacing / refine``; nodes lie strictly inside
        (0, 1 + E_d).  Within about ``zone_halfwidth`` of the mirror point
        (1 + E_d) / 2 the spacing is further divided by ``zone_refine``.
        The node set is mapped onto itself by E -> 1 + E_d - E and contains
        both 1 and ``E_d``.  ``E_d`` must be a multiple of the base spacing,
        or of the zone spacing when the zone covers both 1 and ``E_d``.
        Weights are the widths of the node-centred cells.
        """
        refine, zr = int(refine), int(zone_refine)
        if refine < 1 or zr < 1 or zone_halfwidth < 0:
            raise ValueError("invalid crossed grid refinement")
        h = self.spacing / refine
        hf = h / zr
        top = 1.0 + E_d
        if top > self.e_max + 1e-9:
            raise ValueError("1 + E_d exceeds the ladder energy range")
        # zone edges are base nodes, mirrored about top / 2
        k_lo = max(1, int(np.floor((0.5 * top - zone_halfwidth) / h + 1e-9)))
        lo = k_lo * h
        on_base = abs(E_d / h - round(E_d / h)) < 1e-9
        if zr == 1 or top - lo <= lo + 1e-12:
            lo = top
        elif min(1.0, E_d) < lo - 1e-12:
            if not on_base:
                raise ValueError(f"E_d = {E_d} is not a multiple of {h}")
        elif abs(E_d / hf - round(E_d / hf)) > 1e-9:
            raise ValueError(f"E_d = {E_d} is not a multiple of {hf}")
        if lo == top:
            if not on_base or round(E_d / h) < 1:
                raise ValueError(f"E_d = {E_d} is not a multiple of {h}")
            nodes = h * np.arange(1, int(round(top / h)))
        else:
            low = h * np.arange(1, k_lo)
            n_f = int(round((top - 2 * lo) / hf))
            nodes = np.concatenate([low, lo + hf * np.arange(n_f + 1), top - low[::-1]])
        pad = np.concatenate([[nodes[0] - h], nodes, [nodes[-1] + h]])
        weights = 0.5 * (pad[2:] - pad[:-2])
        return EnergyGrid(nodes, weights, h, int(np.argmin(np.abs(nodes - 1.0))))


@dataclass(frozen=True)
class SpatialGrid:
    """``n_cells`` uniform cells across a slab of optical thickness ``b``."""

    b: float
    n_cells: int

    def __post_init__(self):
        if not (self.b > 0 and self.n_cells >= 1):
            raise ValueError("need b > 0 and at least one cell")

    @property
    def width(self):
        return self.b / self.n_cells

    @property
    def edges(self):
        return np.linspace(0.0, self.b, self.n_cells + 1)

    @property
    def centers(self):
        return (np.arange(self.n_cells) + 0.5) * self.width

    def refined(self, factor=2):
        return SpatialGrid(self.b, self.n_cells * factor)


@dataclass
class SpectralField:
    """Spectral density split as ``elastic(z) * delta(E - E_i) + smooth[E, z]``."""

    elastic: np.ndarray
    smooth: np.ndarray

    def copy(self):
        return SpectralField(self.elastic.copy(), self.smooth.copy())


def _toeplitz_row(grid, mu):
    h = grid.width
    n = grid.n_cells
    d = np.arange(n) * h
    upper = e1_antiderivative(mu, d + h / 2)
    lower = e1_antiderivative(mu, np.maximum(d - h / 2, 0.0))
    row = 0.5 * (upper - lower)
    # self cell: both halves of the log singularity
    row[0] = upper[0] - e1_antiderivative(mu, np.array([0.0]))[0]
    return row


def build_ladder_matrix(grid):
    """K[i, j] = integral over cell j of E1(|z_i - z'|)/2, exactly."""
    return toeplitz(_toeplitz_row(grid, 1.0))


def crossed_decay_rate(E, E_d, k_ell):
    """mu = 1 - i k_ell (sqrt(E) - sqrt(1 + E_d - E))."""
    Et = 1.0 + E_d - E
    if E < 0 or Et < 0:
        raise ValueError("internal energy outside [0, 1 + E_d]")
    return 1.0 - 1j * k_ell * (np.sqrt(E) - np.sqrt(Et))


def build_crossed_matrix(grid, E, E_d, k_ell):
    """Propagation matrix for amplitudes at energies E and 1 + E_d - E."""
    mu = crossed_decay_rate(E, E_d, k_ell)
    row = _toeplitz_row(grid, mu)
    return toeplitz(row).astype(complex)


def _cell_average(grid, kappa):
    """Average of exp(-kappa z) over each cell."""
    e = grid.edges
    return (np.exp(-kappa * e[:-1]) - np.exp(-kappa * e[1:])) / (kappa * grid.width)


def build_source(grid):
    """Unscattered incident density exp(-z), averaged over each cell.

    Cell averages pair exactly with the cell-integrated projection weights,
    which keeps the discrete crossed signal real.
    """
    return _cell_average(grid, 1.0)


def _q_z(E_d, k_ell, theta):
    return k_ell * (1.0 - np.sqrt(E_d) * np.cos(theta))


def build_crossed_source(grid, theta, E_d, k_ell):
    """exp(i q_z z - (z + z/cos theta)/2), averaged over each cell.

    Only the longitudinal part of q is kept; the transverse part is dropped,
    which is exact at theta = 0.
    """
    _check_angle(theta)
    kappa = 0.5 * (1.0 + 1.0 / np.cos(theta)) - 1j * _q_z(E_d, k_ell, theta)
    return _cell_average(grid, kappa)


def _check_angle(theta):
    if not abs(theta) < np.pi / 2:
        raise ValueError("theta must lie in the backscattering hemisphere")


def projection_weights(grid, theta=0.0):
    """Integral of exp(-z/cos theta) over each cell."""
    _check_angle(theta)
    c = np.cos(theta)
    e = grid.edges
    return c * (np.exp(-e[:-1] / c) - np.exp(-e[1:] / c))


def crossed_projection_weights(grid, theta, E_d, k_ell):
    """Integral of exp(-i q_z z - (z + z/cos theta)/2) over each cell."""
    _check_angle(theta)
    kappa = 0.5 * (1.0 + 1.0 / np.cos(theta)) + 1j * _q_z(E_d, k_ell, theta)
    e = grid.edges
    return (np.exp(-kappa * e[:-1]) - np.exp(-kappa * e[1:])) / kappa


def escape_weights(grid):
    """Probabilities (per unit density in a cell) of leaving through each face.

    Returns ``(front, back)``: the integral over each cell of E2(z)/2 and
    E2(b - z)/2 respectively.
    """
    e = grid.edges
    front = 0.5 * (e3_real(e[:-1]) - e3_real(e[1:]))
    back = 0.5 * (e3_real(grid.b - e[1:]) - e3_real(grid.b - e[:-1]))
    return front, back
