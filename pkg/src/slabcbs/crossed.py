"""Crossed (coherent-backscattering) transport on top of a ladder solution.

For a detected energy ``E_d`` the crossed density is split into the part fed
by the source (C1) and the part generated through the crossed mean-field
vertex (C2).  With the ladder density ``I = A delta(E - 1) + B_E`` the
unknowns are

* ``a1(z)``: weight of ``delta(E - 1)`` in C1 (carries the source),
* ``c1[E, z]``, ``c2[E, z]``: smooth parts on the crossed internal grid,
* ``x[E, z]``: only for ``E_d = 1``; C2 then also holds a term
  ``x_E delta(E_d - 1)`` fed by ``A * a1`` (a delta in the detected energy).

Given the ladder fields the equations are linear.  They are assembled as a
matrix-free operator and solved with GMRES, preconditioned by the exact
per-channel inverse of ``1 - P_E - diag(rate_E)``.  A damped block-Jacobi
iteration with the same splitting is available as a fallback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .grids import (
    _toeplitz_row,
    build_crossed_source,
    crossed_decay_rate,
    crossed_projection_weights,
)
from .kernels import build_crossed_tables
from .ladder import ConvergenceError, LadderConfig, ladder_bistatic, solve_ladder

log = logging.getLogger(__name__)

__all__ = [
    "CrossedConfig",
    "CrossedSolution",
    "CrossedBistatic",
    "CrossedSpectrum",
    "ConsistencyError",
    "solve_crossed",
    "crossed_bistatic",
    "crossed_spectrum",
    "detected_energies",
    "enhancement_factor",
    "peak_summary",
    "gp_sweep",
    "first_sign_change",
]


class ConsistencyError(RuntimeError):
    """A quantity that must be real came out with a sizeable imaginary part."""


@dataclass(frozen=True)
class CrossedConfig:
    """Solver controls for one crossed solve.

    ``refine`` subdivides the ladder energy spacing for the crossed internal
    grid; ``E_d`` must be a multiple of the resulting spacing.  Within
    ``zone_halfwidth`` of (1 + E_d) / 2, where the two amplitudes carry the
    same energy and the response is resonant, the spacing is divided again
    by ``zone_refine``.  ``ed_tol`` controls the adaptive detected-energy
    sampling of :func:`crossed_spectrum`.
    """

    E_d: float = 1.0
    theta: float = 0.0
    refine: int = 1
    zone_refine: int = 1
    zone_halfwidth: float = 0.0
    ed_tol: float = 1e-4
    method: str = "krylov"
    tol: float = 1e-10
    max_iters: int = 500
    damping: float = 0.7
    restart: int = 60
    imag_tol: float | None = None

    def __post_init__(self):
        if not self.E_d > 0:
            raise ValueError("E_d must be positive")
        if self.method not in ("krylov", "jacobi"):
            raise ValueError("method must be 'krylov' or 'jacobi'")
        if not 0 < self.damping <= 1 or not self.tol > 0 or self.refine < 1 \
                or self.zone_refine < 1 or self.zone_halfwidth < 0 or not self.ed_tol > 0:
            raise ValueError("invalid solver controls")


@dataclass
class CrossedSolution:
    E_d: float
    theta: float
    energies: np.ndarray
    spacing: float
    spatial_grid: object
    params: object
    a1: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    x: np.ndarray | None
    source: np.ndarray
    iterations: int
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list)

    @property
    def index_E_d(self):
        return int(np.argmin(np.abs(self.energies - self.E_d)))

    @property
    def index_ref(self):
        return int(np.argmin(np.abs(self.energies - 1.0)))


class _ToeplitzBank:
    """Symmetric Toeplitz matrices applied to many channels at once via FFT."""

    def __init__(self, rows):
        n = rows.shape[1]
        circ = np.concatenate([rows, np.zeros((rows.shape[0], 1)), rows[:, :0:-1]], axis=1)
        self.n = n
        self.hat = np.fft.fft(circ, axis=1)

    def apply(self, x):
        y = np.fft.ifft(self.hat * np.fft.fft(x, n=2 * self.n, axis=1), axis=1)
        return y[:, : self.n]


def _interp_rows(x_new, x, y):
    """Linear interpolation of y[E, z] along E (clamped at the ends)."""
    idx = np.clip(np.searchsorted(x, x_new) - 1, 0, x.size - 2)
    t = np.clip((x_new - x[idx]) / (x[idx + 1] - x[idx]), 0.0, 1.0)
    return (1 - t)[:, None] * y[idx] + t[:, None] * y[idx + 1]


class _CrossedSystem:
    """Assembled blocks of the crossed equations for one detected energy."""

    def __init__(self, ladder, cfg, block=8):
        p = ladder.params
        sg = ladder.spatial_grid
        eg = ladder.energy_grid
        cg = eg.crossed(cfg.E_d, cfg.refine, cfg.zone_refine, cfg.zone_halfwidth)
        self.E_d = cfg.E_d
        self.cg, self.sg = cg, sg
        nz, nc = sg.n_cells, cg.size
        self.nz, self.nc = nz, nc
        ec, wc = cg.nodes, cg.weights
        self.wc = wc
        m = cg.i_ref
        idd = cg.index_of(cfg.E_d)
        self.m, self.idd = m, idd
        self.has_x = idd == m
        A, B = ladder.A, ladder.B
        self.A = A

        el, wl = eg.nodes, eg.weights
        tabs = build_crossed_tables(el, ec, cfg.E_d, p)
        self.tables = tabs
        wB = wl[:, None] * B
        self.G = tabs.gC.T @ wB + np.outer(tabs.gC[eg.i_ref], A)
        self.F1 = tabs.fC_slice(1.0)
        M = np.zeros((nc, nc, nz), complex)
        if p.alpha > 0:
            for s in range(0, el.size, block):
                idx = np.arange(s, min(s + block, el.size))
                blk = tabs.fC_block(idx)
                # two real products are cheaper than one complex-by-real one
                M.real += np.tensordot(blk.real, wB[idx], axes=(0, 0))
                M.imag += np.tensordot(blk.imag, wB[idx], axes=(0, 0))
        self.M = M
        self.Hc1, self.Hc2 = tabs.h_c1, tabs.h_c2
        Bc = _interp_rows(ec, el, B) if p.alpha > 0 else np.zeros((nc, nz))
        self.Bc = Bc
        self.Bt = Bc[::-1]

        rows = np.array([_toeplitz_row(sg, crossed_decay_rate(e, cfg.E_d, p.k_ell)) for e in ec])
        self.nf = 1 + 2 * nc + (nc if self.has_x else 0)
        ch_rows = [rows[m:m + 1], rows, rows] + ([rows] if self.has_x else [])
        self.bank = _ToeplitzBank(np.concatenate(ch_rows))
        rate = [self.G[m:m + 1], self.G, self.G] + ([self.G] if self.has_x else [])
        self.rate = np.concatenate(rate).astype(complex)

        # self-coupling terms moved into the block diagonal
        extra = np.zeros((self.nf, nz), complex)
        extra[0] = A * self.Hc1[m, m]
        extra[1 + nc + idd] += A * self.Hc2[idd, idd]
        if self.has_x:
            extra[1 + 2 * nc + m] += A * self.Hc2[m, m]
        self.extra = extra
        self.inv = self._block_inverses(np.concatenate(ch_rows), self.rate + extra)

        self.source = build_crossed_source(sg, cfg.theta, cfg.E_d, p.k_ell)
        self.rhs = np.zeros((self.nf, nz), complex)
        self.rhs[0] = self.source

    def _block_inverses(self, rows, diag, chunk=16):
        nz = self.nz
        out = np.empty((rows.shape[0], nz, nz), complex)
        ii = np.arange(nz)
        j = np.abs(ii[:, None] - ii[None, :])
        for s in range(0, rows.shape[0], chunk):
            r = rows[s:s + chunk]
            mats = -r[:, j]
            mats[:, ii, ii] += 1.0 - diag[s:s + chunk]
            out[s:s + chunk] = np.linalg.inv(mats)
        return out

    def split(self, u):
        nc = self.nc
        u = u.reshape(self.nf, self.nz)
        a1, c1, c2 = u[0], u[1:1 + nc], u[1 + nc:1 + 2 * nc]
        x = u[1 + 2 * nc:] if self.has_x else None
        return a1, c1, c2, x

    def _smooth_gain(self, c):
        """A * int F1 c + int M c, both over the internal energy."""
        wc = self.wc[:, None] * c
        out = self.A * (self.F1.T @ wc)
        out += np.einsum("pez,pz->ez", self.M, wc)
        return out

    def coupling(self, u):
        """All collision terms that mix channels or energies."""
        a1, c1, c2, x = self.split(u)
        A, m, idd, wc = self.A, self.m, self.idd, self.wc
        Hc1, Hc2, Bc, Bt = self.Hc1, self.Hc2, self.Bc, self.Bt
        out = np.empty((self.nf, self.nz), complex)
        wc1 = wc[:, None] * c1
        out[0] = A * (Hc1[m, m] * a1 + Hc1[m] @ wc1)
        o1 = self.F1[m][:, None] * (A * a1) + self.M[m] * a1
        o1 += self._smooth_gain(c1)
        o1 += Bc * (Hc1[:, m][:, None] * a1 + Hc1 @ wc1)
        out[1:1 + self.nc] = o1
        C = c1 + c2
        o2 = self._smooth_gain(c2)
        o2 += Hc2.T @ (wc[:, None] * Bt * C)
        o2 += Hc2[m][:, None] * (Bc[idd] * a1)
        o2 += Hc2[idd][:, None] * (A * C[idd])
        out[1 + self.nc:1 + 2 * self.nc] = o2
        if self.has_x:
            ox = self._smooth_gain(x)
            ox += Hc2[m][:, None] * (A * (a1 + x[m]))
            ox += Hc2.T @ (wc[:, None] * Bt * x)
            out[1 + 2 * self.nc:] = ox
        return out

    def matvec(self, u):
        U = u.reshape(self.nf, self.nz)
        return (U - self.bank.apply(U) - self.rate * U - self.coupling(u)).ravel()

    def precondition(self, r):
        R = r.reshape(self.nf, self.nz)
        return np.einsum("fij,fj->fi", self.inv, R).ravel()

    def jacobi_map(self, u):
        U = u.reshape(self.nf, self.nz)
        rhs = self.rhs + self.coupling(u) - self.extra * U
        return self.precondition(rhs.ravel())


def solve_crossed(ladder, cfg=None, **overrides):
    """Solve the coupled crossed equations for one detected energy.

    ``ladder`` is a converged :class:`~slabcbs.ladder.LadderSolution`.
    Raises :class:`ConvergenceError` if the linear solve stalls.
    """
    cfg = cfg or CrossedConfig(**overrides)
    if not ladder.converged:
        raise ValueError("crossed solve needs a converged ladder solution")
    sysm = _CrossedSystem(ladder, cfg)
    n = sysm.nf * sysm.nz
    b = sysm.rhs.ravel()
    bnorm = np.linalg.norm(b)
    history = []
    if cfg.method == "krylov":
        op = LinearOperator((n, n), matvec=sysm.matvec, dtype=complex)
        pc = LinearOperator((n, n), matvec=sysm.precondition, dtype=complex)
        u, info = gmres(op, b, x0=sysm.precondition(b), rtol=cfg.tol, atol=0.0,
                        restart=cfg.restart, maxiter=cfg.max_iters, M=pc,
                        callback=history.append, callback_type="pr_norm")
        res = np.linalg.norm(b - sysm.matvec(u)) / bnorm
        iters = len(history)
        ok = info == 0 or res <= cfg.tol
    else:
        u = sysm.precondition(b)
        ok = False
        for iters in range(1, cfg.max_iters + 1):
            du = sysm.jacobi_map(u) - u
            res = np.abs(du).max() / np.abs(u).max()
            history.append(res)
            u = u + cfg.damping * du
            if res <= cfg.tol:
                ok = True
                break
        res = np.linalg.norm(b - sysm.matvec(u)) / bnorm
    if not ok:
        raise ConvergenceError(
            f"crossed solve at E_d={cfg.E_d} stalled (residual {res:.3e})", history
        )
    log.debug("crossed E_d=%.4f: %d iterations, residual %.2e", cfg.E_d, iters, res)
    a1, c1, c2, x = sysm.split(u)
    return CrossedSolution(
        cfg.E_d, cfg.theta, sysm.cg.nodes, sysm.cg.spacing, sysm.sg, ladder.params,
        a1.copy(), c1.copy(), c2.copy(), None if x is None else x.copy(),
        sysm.source, iters, float(res), True, history,
    )


@dataclass
class CrossedBistatic:
    """Crossed bistatic coefficient at one detected energy.

    ``gamma_E`` is the smooth spectral density at ``E_d``; ``gamma_el`` the
    weight of ``delta(E_d - 1)`` (zero unless ``E_d = 1``), single
    scattering removed.
    """

    E_d: float
    theta: float
    gamma_E: float
    gamma_el: float
    imag_residual: float


def crossed_bistatic(sol, imag_tol=None):
    """Project the crossed density onto the detector and return its real part.

    The relative imaginary part is always reported.  It vanishes when the
    kernels are symmetric under reversal of the path (``alpha = 0``, or to
    first order in ``alpha`` at ``beta = 0``); away from that it is a
    property of the equations, not of the discretization.  With
    ``imag_tol`` set, exceeding it raises :class:`ConsistencyError`.
    """
    p = sol.params
    wq = crossed_projection_weights(sol.spatial_grid, sol.theta, sol.E_d, p.k_ell)
    pref = np.sqrt(sol.E_d)
    i = sol.index_E_d
    dens = sol.c1[i] + sol.c2[i]
    g_E = pref * (wq @ dens)
    scale = pref * (np.abs(wq) @ np.abs(dens))
    g_el = 0.0
    if sol.x is not None:
        el = sol.a1 + sol.x[sol.index_ref] - sol.source
        g_el = pref * (wq @ el)
        scale = max(scale, pref * (np.abs(wq) @ (np.abs(sol.a1) + np.abs(sol.source))))
    imag = max(abs(np.imag(g_E)), abs(np.imag(g_el)))
    rel = imag / scale if scale > 0 else 0.0
    if imag_tol is not None and rel > imag_tol:
        raise ConsistencyError(
            f"crossed signal at E_d={sol.E_d} has relative imaginary part {rel:.2e}"
        )
    return CrossedBistatic(sol.E_d, sol.theta, float(np.real(g_E)),
                           float(np.real(g_el)), float(rel))


def detected_energies(spacing, e_d_max=2.0, dense_halfwidth=0.3, tail_step=0.1):
    """Detected-energy sample: every node near E_i, coarse in the tails.

    Points within ``dense_halfwidth`` of 1 are spaced by ``spacing``; beyond
    that by the multiple of ``spacing`` closest to ``tail_step``.  All
    points are multiples of ``spacing``.
    """
    coarse = spacing * max(1, int(round(tail_step / spacing)))
    n_half = int(np.floor(dense_halfwidth / spacing + 1e-9))
    dense = 1.0 + spacing * np.arange(-n_half, n_half + 1)
    lo = dense[0] - coarse * np.arange(1, int(dense[0] / coarse + 1e-9) + 1)
    hi = dense[-1] + coarse * np.arange(1, int((e_d_max - dense[-1]) / coarse + 1e-9) + 1)
    pts = np.concatenate([lo[::-1], dense, hi])
    pts = spacing * np.round(pts / spacing)
    return np.unique(pts[(pts >= spacing - 1e-12) & (pts <= e_d_max + 1e-12)])


@dataclass
class CrossedSpectrum:
    """Spectral crossed and ladder signals at exact backscattering."""

    E_d: np.ndarray
    gamma_C_E: np.ndarray
    gamma_L_E: np.ndarray
    gamma_C_el: float
    gamma_L_el: float
    gamma_L_single: float
    gamma_C: float
    gamma_L: float
    gamma_L_inel: float
    iterations: list
    residuals: list
    imag_residuals: list


def _valid_E_d(grid, ed, cfg):
    try:
        grid.crossed(ed, cfg.refine, cfg.zone_refine, cfg.zone_halfwidth)
    except ValueError:
        return False
    return True


def crossed_spectrum(ladder, E_d=None, cfg=None):
    """Solve the crossed equations over detected energies and integrate.

    ``E_d`` defaults to :func:`detected_energies` on the ladder spacing.
    Intervals of that sample are then bisected while the midpoint's
    departure from the linear interpolant, times the interval length,
    exceeds ``cfg.ed_tol`` times the ladder total, as far as the crossed
    grid allows.  The crossed spectrum has resonances of width well below the
    ladder spacing just above E_i, which this resolves.  An explicit ``E_d``
    is used as given.  The elastic point ``E_d = 1`` is always solved.
    Totals integrate the smooth spectra with the trapezoid rule over the
    sampled ``E_d`` and add the elastic weights.
    """
    cfg = cfg or CrossedConfig()
    p = ladder.params
    eg = ladder.energy_grid
    adaptive = E_d is None
    if adaptive:
        E_d = detected_energies(eg.spacing, e_d_max=min(2.0, eg.e_max - 1.0))
    E_d = np.unique(np.append(np.asarray(E_d, float), 1.0))
    lb = ladder_bistatic(ladder, cfg.theta)
    found = {}
    g_el = 0.0

    def solve_at(ed):
        nonlocal g_el
        if p.alpha == 0 and abs(ed - 1.0) > 1e-12:
            found[ed] = (0.0, 0, 0.0, 0.0)
            return 0.0
        sol = solve_crossed(ladder, CrossedConfig(**{**cfg.__dict__, "E_d": float(ed)}))
        cb = crossed_bistatic(sol, cfg.imag_tol)
        if sol.x is not None:
            g_el = cb.gamma_el
        found[ed] = (cb.gamma_E, sol.iterations, sol.residual, cb.imag_residual)
        log.info("E_d=%.5f gamma_C_E=%.4e (%d iterations)", ed, cb.gamma_E, sol.iterations)
        return cb.gamma_E

    for ed in E_d:
        solve_at(float(ed))
    if adaptive and p.alpha > 0:
        tol = cfg.ed_tol * abs(lb.gamma)
        todo = list(zip(E_d[:-1], E_d[1:]))
        while todo:
            a, b = todo.pop()
            mid = 0.5 * (a + b)
            if not _valid_E_d(eg, mid, cfg):
                continue
            gm = solve_at(float(mid))
            if abs(gm - 0.5 * (found[a][0] + found[b][0])) * (b - a) > tol:
                todo += [(a, mid), (mid, b)]
    E_d = np.array(sorted(found))
    gC, iters, res, imag = (list(v) for v in zip(*(found[e] for e in E_d)))
    gC = np.array(gC)
    gL = np.interp(E_d, lb.energies, lb.gamma_E)
    total_C = g_el + float(np.trapezoid(gC, E_d)) if E_d.size > 1 else g_el
    return CrossedSpectrum(E_d, gC, gL, g_el, lb.gamma_el, lb.gamma_single,
                           total_C, lb.gamma, lb.gamma_inel, iters, res, imag)


def enhancement_factor(spectrum, floor=0.0):
    """(gamma_C + gamma_L) / gamma_L per detected energy; NaN where undefined."""
    gL = spectrum.gamma_L_E
    out = np.full(gL.shape, np.nan)
    ok = gL > floor
    out[ok] = (spectrum.gamma_C_E[ok] + gL[ok]) / gL[ok]
    return out


def peak_summary(spectrum):
    """Location, height and full width at half maximum of the crossed peak."""
    e, g = spectrum.E_d, spectrum.gamma_C_E
    k = int(np.argmax(g))
    half = 0.5 * g[k]

    def crossing(indices):
        prev = k
        for j in indices:
            if g[j] < half:
                t = (g[prev] - half) / (g[prev] - g[j])
                return e[prev] + t * (e[j] - e[prev])
            prev = j
        return np.nan

    left = crossing(range(k - 1, -1, -1))
    right = crossing(range(k + 1, e.size))
    eta = enhancement_factor(spectrum)
    return {
        "E_peak": float(e[k]),
        "gamma_peak": float(g[k]),
        "fwhm": float(right - left),
        "eta_max": float(np.nanmax(eta)),
        "E_eta_max": float(e[int(np.nanargmax(eta))]),
    }


def first_sign_change(betas, values):
    """First crossing from positive to non-positive, linearly interpolated; None if absent."""
    s = np.sign(values)
    for j in range(len(values) - 1):
        if s[j] > 0 and s[j + 1] <= 0:
            b0, b1, g0, g1 = betas[j], betas[j + 1], values[j], values[j + 1]
            return float(b0 - g0 * (b1 - b0) / (g1 - g0))
    return None


def gp_sweep(betas, ladder_cfg=None, alpha_ratio=0.0, crossed_cfg=None, E_d=None):
    """gamma_L(0) and gamma_C(0) along a beta sweep with alpha = alpha_ratio * beta.

    Returns a dict of arrays plus ``beta_star``, the first sign change of
    gamma_C located by linear interpolation (None if there is none).
    """
    base = ladder_cfg or LadderConfig()
    rows = {k: [] for k in ("beta", "alpha", "gamma_L", "gamma_L_inel",
                            "gamma_L_single", "gamma_C", "gamma_C_el")}
    for beta in betas:
        params = type(base.params)(alpha=alpha_ratio * beta, beta=beta,
                                   k_ell=base.params.k_ell)
        lad = solve_ladder(LadderConfig(**{**base.__dict__, "params": params}))
        spec = crossed_spectrum(lad, E_d, crossed_cfg)
        rows["beta"].append(beta)
        rows["alpha"].append(params.alpha)
        rows["gamma_L"].append(spec.gamma_L)
        rows["gamma_L_inel"].append(spec.gamma_L_inel)
        rows["gamma_L_single"].append(spec.gamma_L_single)
        rows["gamma_C"].append(spec.gamma_C)
        rows["gamma_C_el"].append(spec.gamma_C_el)
        log.info("sweep beta=%.4f gamma_L=%.6f gamma_C=%.6f", beta, spec.gamma_L,
                 spec.gamma_C)
    out = {k: np.array(v) for k, v in rows.items()}
    out["beta_star"] = first_sign_change(out["beta"], out["gamma_C"])
    return out
