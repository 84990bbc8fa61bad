"""Named scenarios: figure reproductions and property suites.

Each scenario returns a :class:`ScenarioResult` holding plot-ready curves, a
flat dict of scalar results, convergence diagnostics and the acceptance
checks that ``--check`` enforces.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .config import RunConfig
from .crossed import (
    CrossedConfig,
    first_sign_change,
    crossed_bistatic,
    crossed_spectrum,
    enhancement_factor,
    gp_sweep,
    peak_summary,
    solve_crossed,
)
from .grids import EnergyGrid
from .kernels import (
    InteractionParams,
    _f_closed,
    build_ladder_tables,
    check_energy_conservation,
    check_particle_conservation,
    check_reversibility,
    ladder_g,
    maxwell_boltzmann,
)
from .ladder import (
    LadderConfig,
    flux_balance,
    flux_profiles,
    ladder_bistatic,
    mb_fixed_point_residual,
    single_collision_spectrum,
    solve_ladder,
    spectral_distribution,
    thermal_distance,
)
from .output import Curve

log = logging.getLogger(__name__)

__all__ = ["Check", "ScenarioResult", "run_scenario", "SCENARIO_FUNCS", "crossed_config",
           "dump_kernel_tables"]


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: str

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.6g} (required {self.threshold})"


@dataclass
class ScenarioResult:
    curves: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)


class _Timer:
    def __init__(self, timings, name):
        self.timings, self.name = timings, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.name] = time.perf_counter() - self.t0


def _params(cfg, alpha=None, beta=None):
    return InteractionParams(
        alpha=cfg.alpha if alpha is None else alpha,
        beta=cfg.beta if beta is None else beta,
        k_ell=cfg.k_ell,
    )


def _ladder_cfg(cfg, params):
    return LadderConfig(params=params, b=cfg.b, n_cells=cfg.n_cells,
                        n_energy=cfg.n_energy, e_max=cfg.e_max, damping=cfg.damping,
                        tol=cfg.tol, max_iters=cfg.max_iters)


def crossed_config(cfg):
    """Crossed solver controls from a run configuration."""
    return CrossedConfig(refine=cfg.crossed_refine, zone_refine=cfg.zone_refine,
                         zone_halfwidth=cfg.zone_halfwidth, ed_tol=cfg.ed_tol)


def _ladder_convergence(sol):
    return {"ladder_iterations": sol.iterations, "ladder_residual": sol.residual}


# ---------------------------------------------------------------------------
# scenarios


def conservation_suite(cfg, res):
    """Kernel conservation, reversibility and closed-form spot checks."""
    alpha = cfg.alpha if cfg.alpha > 0 else 0.01
    p = InteractionParams(alpha=alpha, beta=cfg.beta, k_ell=cfg.k_ell)
    grid = np.linspace(0.2, 3.0, 20)
    E1, E2 = np.meshgrid(grid, grid, indexing="ij")
    part = np.vectorize(lambda a, b: check_particle_conservation(a, b, p))(E1, E2)
    ener = np.vectorize(lambda a, b: check_energy_conservation(a, b, p))(E1, E2)
    rng = np.random.default_rng(cfg.seed)
    triples = rng.uniform(0.05, 3.0, size=(1000, 3))
    rev = np.array([abs(check_reversibility(*t, p)) for t in triples])
    g11 = ladder_g(1.0, 1.0, p)
    pieces = [integrate.quad(lambda e: np.sqrt(e) * _f_closed(1.0, 1.0, e, alpha), lo, hi,
                             epsabs=1e-14, epsrel=1e-13)[0] for lo, hi in ((0, 1), (1, 2))]
    f_moment = sum(pieces)
    res.curves.append(Curve("conservation", ["E1", "E2", "particle_residual", "energy_residual"],
                            {"E1": E1, "E2": E2, "particle_residual": part,
                             "energy_residual": ener}))
    res.units.update({"E1": "E_i", "E2": "E_i", "particle_residual": "alpha",
                      "energy_residual": "alpha E_i"})
    s = {
        "alpha": alpha,
        "particle_residual_max": float(np.abs(part).max()),
        "energy_residual_max": float(np.abs(ener).max()),
        "reversibility_residual_max": float(rev.max()),
        "g_ref": g11,
        "g_ref_error": abs(g11 + 4.0 / 3.0 * alpha),
        "f_moment_ref": f_moment,
        "f_moment_ref_error": abs(f_moment - 4.0 / 3.0 * alpha),
    }
    res.summary.update(s)
    tol = 1e-6 * alpha
    res.checks += [
        Check("particle conservation", s["particle_residual_max"] <= tol,
              s["particle_residual_max"], f"<= {tol:g}"),
        Check("energy conservation", s["energy_residual_max"] <= tol,
              s["energy_residual_max"], f"<= {tol:g}"),
        Check("reversibility", s["reversibility_residual_max"] <= 1e-14,
              s["reversibility_residual_max"], "<= 1e-14"),
        Check("closed-form g(E_i,E_i)", s["g_ref_error"] <= 1e-8, s["g_ref_error"], "<= 1e-8"),
        Check("closed-form f moment", s["f_moment_ref_error"] <= 1e-8,
              s["f_moment_ref_error"], "<= 1e-8"),
    ]


def _thick_ladder(cfg, res):
    with _Timer(res.timings, "ladder"):
        sol = solve_ladder(_ladder_cfg(cfg, _params(cfg)))
    res.convergence.update(_ladder_convergence(sol))
    return sol


def fig9a(cfg, res):
    """Flux decomposition through a thick slab."""
    sol = _thick_ladder(cfg, res)
    prof = flux_profiles(sol)
    z, J, Jl = prof["z"], prof["J"], prof["J_linear"]
    res.curves.append(Curve("fig9a_flux",
                            ["z", "J_total", "J_elastic", "J_inelastic", "J_linear", "K_energy"],
                            {"z": z, "J_total": J, "J_elastic": prof["J_el"],
                             "J_inelastic": prof["J_inel"], "J_linear": Jl,
                             "K_energy": prof["K_energy"]}))
    res.units.update({"z": "l_dis", "J_total": "rho0 sqrt(E_i)", "J_elastic": "rho0 sqrt(E_i)",
                      "J_inelastic": "rho0 sqrt(E_i)", "J_linear": "rho0 sqrt(E_i)",
                      "K_energy": "rho0 E_i^(3/2)"})
    deep = z >= cfg.b / 2
    fb = flux_balance(sol)
    s = {
        "J_deviation_max": float(np.max(np.abs(J - Jl) / Jl)),
        "K_deviation_max": float(np.max(np.abs(prof["K_energy"] - J) / J)),
        "inelastic_fraction_min_deep": float(np.min(prof["J_inel"][deep] / J[deep])),
        "inelastic_fraction_end": float(prof["J_inel"][-1] / J[-1]),
        "reflected": fb["reflected"],
        "transmitted": fb["transmitted"],
        "coherent": fb["coherent"],
        "flux_sum": fb["reflected"] + fb["transmitted"] + fb["coherent"],
    }
    res.summary.update(s)
    res.checks += [
        Check("total flux equals linear flux", s["J_deviation_max"] <= 1e-3,
              s["J_deviation_max"], "<= 1e-3"),
        Check("energy flux equals E_i J", s["K_deviation_max"] <= 1e-3,
              s["K_deviation_max"], "<= 1e-3"),
        Check("inelastic dominance for z >= L/2", s["inelastic_fraction_min_deep"] > 0.5,
              s["inelastic_fraction_min_deep"], "> 0.5"),
    ]


def fig9b(cfg, res):
    """Inelastic spectra at several depths against the thermal law."""
    sol = _thick_ladder(cfg, res)
    e = sol.energy_grid.nodes
    depths = {"z_0": 0.0, "z_L4": cfg.b / 4, "z_L2": cfg.b / 2, "z_L": cfg.b}
    data = {"E": e, "maxwell_boltzmann": maxwell_boltzmann(e),
            "single_collision": single_collision_spectrum(sol.tables)}
    for k, z in depths.items():
        data[k] = spectral_distribution(sol, z)
    res.curves.append(Curve("fig9b_spectra", list(data), data))
    res.units.update({k: "1/E_i" for k in data})
    res.units["E"] = "E_i"
    s = {f"l1_{k}": thermal_distance(sol, z) for k, z in depths.items()}
    s["mb_fixed_point_residual"] = mb_fixed_point_residual(sol.tables)
    res.summary.update(s)
    res.checks += [
        Check("thermal at z = L/4", s["l1_z_L4"] <= 0.05, s["l1_z_L4"], "<= 0.05"),
        Check("thermal at z = L", s["l1_z_L"] <= 0.05, s["l1_z_L"], "<= 0.05"),
        Check("MB fixed point", s["mb_fixed_point_residual"] <= 1e-4,
              s["mb_fixed_point_residual"], "<= 1e-4"),
    ]


def linear_cbs(cfg, res):
    """Reciprocity of the crossed and ladder signals without interactions."""
    params = _params(cfg, alpha=0.0, beta=0.0)
    with _Timer(res.timings, "ladder"):
        lad = solve_ladder(_ladder_cfg(cfg, params))
    with _Timer(res.timings, "crossed"):
        sol = solve_crossed(lad, CrossedConfig(E_d=1.0))
        cb = crossed_bistatic(sol, imag_tol=1e-8)
    lb = ladder_bistatic(lad)
    res.convergence.update(_ladder_convergence(lad))
    res.convergence.update({"crossed_iterations": sol.iterations,
                            "crossed_residual": sol.residual})
    dens = (sol.a1 + sol.x[sol.index_ref]).real
    res.curves.append(Curve("linear_cbs_profile", ["z", "ladder_density", "crossed_density"],
                            {"z": lad.spatial_grid.centers, "ladder_density": lad.A,
                             "crossed_density": dens}))
    res.units.update({"z": "l_dis", "ladder_density": "rho0", "crossed_density": "rho0"})
    rel = abs(cb.gamma_el - (lb.gamma - lb.gamma_single)) / lb.gamma
    res.summary.update({"gamma_L": lb.gamma, "gamma_L_single": lb.gamma_single,
                        "gamma_C": cb.gamma_el, "reciprocity_error": rel,
                        "imag_residual": cb.imag_residual})
    res.checks.append(Check("linear reciprocity", rel <= 1e-3, rel, "<= 1e-3"))


def _betas(cfg):
    return np.linspace(cfg.beta_min, cfg.beta_max, cfg.n_beta)


def fig10a(cfg, res):
    """beta sweep of the backscattering signals with and without inelasticity."""
    betas = _betas(cfg)
    base = _ladder_cfg(cfg, _params(cfg))
    with _Timer(res.timings, "sweep_alpha0"):
        gp = gp_sweep(betas, base, alpha_ratio=0.0, crossed_cfg=crossed_config(cfg))
    with _Timer(res.timings, "sweep_inelastic"):
        inel = gp_sweep(betas, base, alpha_ratio=cfg.alpha_ratio,
                        crossed_cfg=crossed_config(cfg))
    data = {
        "beta": betas,
        "gamma_L": gp["gamma_L"],
        "gamma_C_alpha0": gp["gamma_C"],
        "gamma_C_alphaBover10": inel["gamma_C"],
        "gamma_L_inel": inel["gamma_L_inel"],
        "gamma_C_inel": inel["gamma_C"] - inel["gamma_C_el"],
    }
    res.curves.append(Curve("fig10a_sweep", list(data), data))
    res.units.update({k: "1" for k in data})
    res.summary.update({
        "beta_star": gp["beta_star"],
        "beta_crossover": first_sign_change(betas, gp["gamma_C"] - inel["gamma_C"]),
        "beta_star_inelastic": inel["beta_star"],
        "alpha_ratio": cfg.alpha_ratio,
    })
    res.convergence["sweep_points"] = len(betas)
    bstar = gp["beta_star"]
    ok8 = bstar is not None and 0.11 <= bstar <= 0.15
    res.checks.append(Check("GP crossover beta*", ok8, np.nan if bstar is None else bstar,
                            "in [0.11, 0.15]"))
    res.checks.append(_slowed_decrease_check(betas, gp["gamma_C"], inel["gamma_C"]))


def _slowed_decrease_check(betas, g0, g1):
    """Inelastic curve starts below the elastic one and ends above it.

    "Small beta" is the smallest sampled beta; the crossover is reported as
    the check value so its location stays visible.
    """
    large = betas >= 0.1
    upto = betas <= 0.2 + 1e-12
    below = bool(g1[0] < g0[0])
    above = bool(np.all(g1[large] > g0[large])) if large.any() else False
    no_sign = bool(np.all(g1[upto] > 0))
    crossover = first_sign_change(betas, g0 - g1)
    return Check("inelastic curve below/above elastic, no sign change",
                 below and above and no_sign, np.nan if crossover is None else crossover,
                 "below at smallest beta, above for beta>=0.1, positive to 0.2")


FIG10B_BETAS = (0.02, 0.08, 0.2)


def fig10b(cfg, res):
    """Spectral crossed and ladder signals for three interaction strengths."""
    for beta in FIG10B_BETAS:
        params = _params(cfg, alpha=cfg.alpha_ratio * beta, beta=beta)
        with _Timer(res.timings, f"beta_{beta:g}"):
            lad = solve_ladder(_ladder_cfg(cfg, params))
            spec = crossed_spectrum(lad, cfg=crossed_config(cfg))
        eta = enhancement_factor(spec)
        ok = np.isfinite(eta)
        tag = f"beta{beta:g}"
        res.curves.append(Curve(f"fig10b_{tag}", ["E_d", "gamma_C_inel", "gamma_L_inel", "eta"],
                                {"E_d": spec.E_d[ok], "gamma_C_inel": spec.gamma_C_E[ok],
                                 "gamma_L_inel": spec.gamma_L_E[ok], "eta": eta[ok]}))
        pk = peak_summary(spec)
        res.summary.update({f"{tag}_{k}": v for k, v in pk.items()})
        res.summary[f"{tag}_gamma_C"] = spec.gamma_C
        res.summary[f"{tag}_gamma_L"] = spec.gamma_L
        res.convergence[f"{tag}_ladder_iterations"] = lad.iterations
        res.convergence[f"{tag}_crossed_iterations_max"] = int(max(spec.iterations))
        res.convergence[f"{tag}_crossed_residual_max"] = float(max(spec.residuals))
        res.convergence[f"{tag}_imag_residual_max"] = float(max(spec.imag_residuals))
    res.units.update({"E_d": "E_i", "gamma_C_inel": "1/E_i", "gamma_L_inel": "1/E_i",
                      "eta": "1"})
    s = res.summary
    res.checks += [
        Check("enhancement above two (beta = 0.2)", s["beta0.2_eta_max"] > 2,
              s["beta0.2_eta_max"], "> 2"),
        Check("peak within 0.3 of E_i", abs(s["beta0.2_E_peak"] - 1) <= 0.3,
              abs(s["beta0.2_E_peak"] - 1), "<= 0.3"),
        Check("peak width within factor 2 of 1/k_ell", 0.5 / cfg.k_ell <= s["beta0.2_fwhm"]
              <= 2.0 / cfg.k_ell, s["beta0.2_fwhm"],
              f"in [{0.5 / cfg.k_ell:g}, {2 / cfg.k_ell:g}]"),
    ]


SCENARIO_FUNCS = {
    "fig9a": fig9a,
    "fig9b": fig9b,
    "fig10a": fig10a,
    "fig10b": fig10b,
    "conservation": conservation_suite,
    "linear-cbs": linear_cbs,
}


def run_scenario(cfg: RunConfig):
    """Run the configured scenario and return its :class:`ScenarioResult`.

    Solver failures propagate as exceptions; the caller decides how to report.
    """
    cfg = cfg.resolved()
    res = ScenarioResult()
    t0 = time.perf_counter()
    SCENARIO_FUNCS[cfg.scenario](cfg, res)
    res.timings["total"] = time.perf_counter() - t0
    return res


def dump_kernel_tables(cfg, out_dir):
    """Write the ladder g and f tables for the configured grid; returns file names."""
    from .kernels import write_table_csv
    import os

    grid = EnergyGrid.from_size(cfg.n_energy, cfg.e_max)
    tabs = build_ladder_tables(grid, _params(cfg))
    e = grid.nodes
    os.makedirs(out_dir, exist_ok=True)
    write_table_csv(os.path.join(out_dir, "kernel_g.csv"), [("E1", e), ("E2", e)], tabs.g)
    write_table_csv(os.path.join(out_dir, "kernel_f.csv"), [("E1", e), ("E2", e), ("E3", e)],
                    tabs.f)
    return ["kernel_g.csv", "kernel_f.csv"]
