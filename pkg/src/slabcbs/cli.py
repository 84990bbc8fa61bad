"""Command-line entry point.

Exit codes: 0 success, 1 ``--check`` failed, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .config import SCENARIOS, ConfigError, RunConfig, load_config
from .crossed import ConsistencyError
from .ladder import ConvergenceError
from .output import emit_plot_data, sha256_file, write_json
from .scenarios import dump_kernel_tables, run_scenario

log = logging.getLogger("slabcbs")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def build_parser():
    ap = argparse.ArgumentParser(
        prog="slabcbs",
        description="Ladder and crossed transport of interacting bosons in a disordered slab.",
    )
    ap.add_argument("--config", metavar="PATH", help="flat 'key = value' configuration file")
    ap.add_argument("--scenario", choices=SCENARIOS, help="scenario to run")
    ap.add_argument("--output-dir", metavar="PATH", help="directory for CSV/JSON output")
    ap.add_argument("--check", action="store_true",
                    help="evaluate the scenario's acceptance checks; exit 1 on failure")
    ap.add_argument("--threads", type=int, metavar="N", help="BLAS thread limit")
    ap.add_argument("--verbose", action="store_true", help="log solver progress")
    return ap


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(scenario=args.scenario, output_dir=args.output_dir,
                              threads=args.threads)


def _manifest(cfg, status, reason, result=None, files=None, started=None):
    return {
        "status": status,
        "reason": reason,
        "version": __version__,
        "config": cfg.resolved().echo(),
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
        "timings": dict(result.timings) if result else {},
        "convergence": dict(result.convergence) if result else {},
        "checks": [c.__dict__ for c in result.checks] if result else [],
        "files": files or {},
        "wall_time": time.perf_counter() - started if started else None,
    }


def run(cfg, check=False, stream=None):
    """Run one configured scenario, write its outputs and return an exit code."""
    stream = stream or sys.stdout
    out = cfg.output_dir
    started = time.perf_counter()
    try:
        with threadpool_limits(limits=cfg.threads):
            result = run_scenario(cfg)
    except (ConvergenceError, ConsistencyError, FloatingPointError) as exc:
        log.error("solver failure: %s", exc)
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "manifest.json"),
                   _manifest(cfg, "failed", f"{type(exc).__name__}: {exc}", started=started))
        return EXIT_SOLVER
    try:
        files = emit_plot_data(result.curves, out)
    except ValueError as exc:
        log.error("refusing to write output: %s", exc)
        write_json(os.path.join(out, "manifest.json"),
                   _manifest(cfg, "failed", str(exc), result, started=started))
        return EXIT_SOLVER
    if cfg.dump_kernels:
        for name in dump_kernel_tables(cfg.resolved(), out):
            files[name] = sha256_file(os.path.join(out, name))
    write_json(os.path.join(out, "summary.json"),
               {"scenario": cfg.scenario, "results": result.summary,
                "convergence": result.convergence, "units": result.units})
    files["summary.json"] = sha256_file(os.path.join(out, "summary.json"))
    failed = [c for c in result.checks if not c.passed]
    if check:
        for c in result.checks:
            print(c.line(), file=stream)
    status, reason, code = "ok", "", EXIT_OK
    if check and failed:
        status = "check_failed"
        reason = "; ".join(c.name for c in failed)
        code = EXIT_CHECK
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, status, reason, result, files, started))
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running scenario %s into %s", cfg.scenario, cfg.output_dir)
    return run(cfg, check=args.check)


if __name__ == "__main__":
    sys.exit(main())
