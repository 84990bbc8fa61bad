"""Nonlinear ladder transport on the slab and its incoherent observables.

The ladder density is stored as ``A(z) delta(E - E_i) + B[E, z]``.  Each
sweep of the fixed-point map solves, for every energy channel, the linear
slab problem with the current collision loss rate treated implicitly and the
collision gain taken from the previous iterate:

    (1 - K - L_E(z)) B_E = gain_E(z),      (1 - K - L_{E_i}(z)) A = I0

Loss rates are non-positive and gains non-negative, so every sweep maps
non-negative fields to non-negative fields.  Sweeps are relaxed with a
damping factor and accelerated by Anderson mixing.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .grids import (
    EnergyGrid,
    SpatialGrid,
    SpectralField,
    build_ladder_matrix,
    build_source,
    escape_weights,
    projection_weights,
)
from .kernels import InteractionParams, build_ladder_tables, maxwell_boltzmann

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceError",
    "InstabilityError",
    "LadderConfig",
    "LadderSolution",
    "LadderBistatic",
    "solve_linear",
    "solve_ladder",
    "flux_profiles",
    "flux_balance",
    "spectral_distribution",
    "single_collision_spectrum",
    "ladder_bistatic",
    "collision_operator",
    "mb_fixed_point_residual",
    "thermal_distance",
]


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the tolerance."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class InstabilityError(ConvergenceError):
    """Iteration diverged or produced negative densities; lower the damping."""


@dataclass(frozen=True)
class LadderConfig:
    params: InteractionParams = InteractionParams()
    b: float = 10.0
    n_cells: int = 200
    n_energy: int = 100
    e_max: float = 5.0
    damping: float = 0.5
    tol: float = 1e-8
    max_iters: int = 500
    anderson_depth: int = 5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.b <= 0 or self.n_cells < 1 or self.n_energy < 1:
            raise ValueError("b, n_cells and n_energy must be positive")

    def energy_grid(self):
        return EnergyGrid.from_size(self.n_energy, self.e_max)

    def spatial_grid(self):
        return SpatialGrid(self.b, self.n_cells)


@dataclass
class LadderSolution:
    field: SpectralField
    energy_grid: EnergyGrid
    spatial_grid: SpatialGrid
    params: InteractionParams
    J_linear: np.ndarray
    iterations: int
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list)
    tables: object = None
    propagator: np.ndarray = None

    @property
    def A(self):
        return self.field.elastic

    @property
    def B(self):
        return self.field.smooth


def solve_linear(cfg, K=None):
    """Solve J = J0 + K J for the collision-free slab; returns J at cell centres."""
    sg = cfg.spatial_grid() if isinstance(cfg, LadderConfig) else cfg
    if K is None:
        K = build_ladder_matrix(sg)
    I0 = build_source(sg)
    return np.linalg.solve(np.eye(sg.n_cells) - K, I0)


def collision_operator(tables, A, B):
    """Loss rates ``L[E, z]`` and gains ``G[E, z]`` for the split density.

    ``A`` has shape (nz,) and ``B`` shape (ne, nz).  The collision term of the
    smooth channel E is ``L[E] * B[E] + G[E]``; the elastic channel sees the
    rate ``L[i_ref]``.
    """
    w = tables.weights
    f, g = tables.f, tables.g
    ne = w.size
    m = _ref_index(tables)
    wB = w[:, None] * B
    L = np.outer(g[m], A) + g.T @ wB
    # f is symmetric in its first two energies
    G = f[m, m][:, None] * A**2 + 2.0 * A * (f[m].T @ wB)
    T = (f.reshape(ne, ne * ne).T @ wB).reshape(ne, ne, -1)
    G += np.einsum("pez,pz->ez", T, wB)
    return L, G


def _ref_index(tables):
    return int(round(1.0 / tables.energies[0])) - 1


def _channel_solve(K, L, rhs, chunk=32):
    """Solve (1 - K - diag(L[e])) x[e] = rhs[e] for every channel e."""
    nz = K.shape[0]
    base = np.eye(nz) - K
    out = np.empty(rhs.shape, dtype=np.result_type(K, L, rhs))
    diag = np.arange(nz)
    for s in range(0, L.shape[0], chunk):
        sl = slice(s, s + chunk)
        M = np.repeat(base[None], L[sl].shape[0], axis=0).astype(out.dtype)
        M[:, diag, diag] -= L[sl]
        out[sl] = np.linalg.solve(M, rhs[sl][..., None])[..., 0]
    return out


def _anderson_step(xs, rs, x, r, damping):
    if len(xs) < 2:
        return x + damping * r
    dX = np.diff(np.array(xs), axis=0).T
    dR = np.diff(np.array(rs), axis=0).T
    gamma = np.linalg.lstsq(dR, r, rcond=None)[0]
    return x + damping * r - (dX + damping * dR) @ gamma


def solve_ladder(cfg, tables=None, K=None):
    """Damped, Anderson-accelerated fixed point of the split ladder equation.

    Raises :class:`ConvergenceError` after ``cfg.max_iters`` sweeps and
    :class:`InstabilityError` if the residual blows up or a plain damped
    update turns negative.
    """
    eg, sg = cfg.energy_grid(), cfg.spatial_grid()
    if tables is None:
        tables = build_ladder_tables(eg, cfg.params)
    if K is None:
        K = build_ladder_matrix(sg)
    nz, ne, m = sg.n_cells, eg.size, eg.i_ref
    I0 = build_source(sg)
    J_lin = solve_linear(sg, K)
    scale = float(J_lin.max())

    A = J_lin.copy()
    B = np.zeros((ne, nz))
    history = []
    if cfg.params.alpha == 0:
        fld = SpectralField(A, B)
        return LadderSolution(fld, eg, sg, cfg.params, J_lin, 0, 0.0, True,
                              history, tables, K)

    x = np.concatenate([A, B.ravel()])
    xs, rs = [], []
    t0 = time.perf_counter()
    best = np.inf
    for it in range(1, cfg.max_iters + 1):
        A, B = x[:nz], x[nz:].reshape(ne, nz)
        L, G = collision_operator(tables, A, B)
        rhs = G.copy()
        sol = _channel_solve(K, L, rhs)
        A_new = _channel_solve(K, L[m:m + 1], I0[None])[0]
        r = np.concatenate([A_new, sol.ravel()]) - x
        res = (np.abs(r[:nz]).max() + np.abs(r[nz:]).max()) / scale
        history.append(res)
        log.debug("ladder iter %d residual %.3e t=%.2fs", it, res,
                  time.perf_counter() - t0)
        if res <= cfg.tol:
            x = x + r
            break
        best = min(best, res)
        if it > 5 and res > 1e3 * best:
            raise InstabilityError(
                f"ladder residual grew to {res:.3e} (best {best:.3e})", history
            )
        if cfg.anderson_depth > 0:
            xs.append(x.copy())
            rs.append(r.copy())
            del xs[:-(cfg.anderson_depth + 1)], rs[:-(cfg.anderson_depth + 1)]
            x_next = _anderson_step(xs, rs, x, r, cfg.damping)
            if x_next.min() < -cfg.tol * scale:
                xs.clear()
                rs.clear()
                x_next = x + cfg.damping * r
        else:
            x_next = x + cfg.damping * r
        if x_next.min() < -cfg.tol * scale:
            raise InstabilityError("negative density during iteration", history)
        x = x_next
    else:
        raise ConvergenceError(
            f"ladder solve did not converge in {cfg.max_iters} sweeps "
            f"(residual {history[-1]:.3e})",
            history,
        )
    A, B = x[:nz].copy(), x[nz:].reshape(ne, nz).copy()
    log.info("ladder converged in %d sweeps (residual %.2e)", it, history[-1])
    return LadderSolution(SpectralField(A, B), eg, sg, cfg.params, J_lin, it,
                          history[-1], True, history, tables, K)


# ---------------------------------------------------------------------------
# observables


def flux_profiles(sol):
    """Particle flux (total, elastic, inelastic) and energy flux vs depth."""
    e, w = sol.energy_grid.nodes, sol.energy_grid.weights
    J_el = sol.A.copy()
    J_inel = (w * np.sqrt(e)) @ sol.B
    K_energy = sol.A + (w * e * np.sqrt(e)) @ sol.B
    return {
        "z": sol.spatial_grid.centers,
        "J": J_el + J_inel,
        "J_el": J_el,
        "J_inel": J_inel,
        "K_energy": K_energy,
        "J_linear": sol.J_linear,
    }


def spectral_distribution(sol, z):
    """Normalised inelastic flux spectrum sqrt(E) B_E(z) at the cell nearest ``z``."""
    sg = sol.spatial_grid
    iz = int(np.clip(np.floor(z / sg.width), 0, sg.n_cells - 1))
    e, w = sol.energy_grid.nodes, sol.energy_grid.weights
    s = np.sqrt(e) * sol.B[:, iz]
    norm = w @ s
    if norm <= 0:
        raise ValueError("no inelastic flux at this depth")
    return s / norm


def single_collision_spectrum(tables):
    """sqrt(E) f(E_i, E_i, E) / (-g(E_i, E_i)): spectrum after one collision."""
    m = _ref_index(tables)
    e = tables.energies
    return np.sqrt(e) * tables.f[m, m] / (-tables.g[m, m])


def flux_balance(sol):
    """Reflected, transmitted and unscattered fractions of the incident flux."""
    sg = sol.spatial_grid
    front, back = escape_weights(sg)
    J = flux_profiles(sol)["J"]
    return {
        "reflected": float(front @ J),
        "transmitted": float(back @ J),
        "coherent": float(np.exp(-sg.b)),
    }


@dataclass
class LadderBistatic:
    theta: float
    energies: np.ndarray
    gamma_E: np.ndarray
    gamma: float
    gamma_el: float
    gamma_inel: float
    gamma_single: float


def ladder_bistatic(sol, theta=0.0):
    """Ladder bistatic coefficient, its spectrum and elastic/inelastic split."""
    wz = projection_weights(sol.spatial_grid, theta)
    e = sol.energy_grid.nodes
    w = sol.energy_grid.weights
    gamma_el = float(wz @ sol.A)
    gamma_E = np.sqrt(e) * (sol.B @ wz)
    gamma_inel = float(w @ gamma_E)
    single = float(wz @ build_source(sol.spatial_grid))
    return LadderBistatic(theta, e, gamma_E, gamma_el + gamma_inel, gamma_el,
                          gamma_inel, single)


def mb_fixed_point_residual(tables):
    """Relative residual of the collision operator on the thermal spectrum.

    Inserts I_E proportional to sqrt(E) exp(-2E) (no elastic part) and returns
    max |loss + gain| / max |gain|.
    """
    e = tables.energies
    I = np.sqrt(e) * np.exp(-2.0 * e)
    L, G = collision_operator(tables, np.zeros(1), I[:, None])
    total = L[:, 0] * I + G[:, 0]
    return float(np.abs(total).max() / np.abs(G).max())


def thermal_distance(sol, z):
    """L1 distance between the inelastic spectrum at ``z`` and 4E exp(-2E)."""
    s = spectral_distribution(sol, z)
    e, w = sol.energy_grid.nodes, sol.energy_grid.weights
    return float(w @ np.abs(s - maxwell_boltzmann(e)))
