"""Flat ``key = value`` run configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

__all__ = ["ConfigError", "RunConfig", "SCENARIOS", "load_config", "parse_config"]

SCENARIOS = ("fig9a", "fig9b", "fig10a", "fig10b", "conservation", "linear-cbs")

# thick-slab settings used by the ladder figures unless set explicitly
_FIG9_DEFAULTS = {"b": 40.0, "n_cells": 400, "n_energy": 100, "e_max": 5.0}


class ConfigError(ValueError):
    """Unreadable, malformed or inconsistent configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Physics, numerics and bookkeeping for one scenario run.

    ``explicit`` records which keys were set by the user, so scenario
    defaults only fill the rest.
    """

    alpha: float = 0.01
    beta: float = 0.1
    k_ell: float = 10.0
    b: float = 10.0
    n_cells: int = 100
    n_energy: int = 160
    e_max: float = 4.0
    crossed_refine: int = 1
    zone_refine: int = 8
    zone_halfwidth: float = 0.1
    ed_tol: float = 1e-4
    damping: float = 0.5
    tol: float = 1e-8
    max_iters: int = 500
    threads: int = 1
    seed: int = 0
    scenario: str = "linear-cbs"
    output_dir: str = "results"
    beta_min: float = 0.005
    beta_max: float = 0.3
    n_beta: int = 12
    alpha_ratio: float = 0.1
    dump_kernels: bool = False
    explicit: frozenset = field(default=frozenset(), compare=False)

    def __post_init__(self):
        problems = []
        if self.alpha < 0 or self.beta < 0:
            problems.append("alpha and beta must be non-negative")
        if not self.k_ell > 1:
            problems.append("k_ell must exceed 1")
        for name in ("b", "tol", "beta_min", "ed_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("n_cells", "n_energy", "max_iters", "threads", "crossed_refine",
                     "zone_refine"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be at least 1")
        if self.zone_halfwidth < 0:
            problems.append("zone_halfwidth must be non-negative")
        if not self.e_max >= 1:
            problems.append("e_max must be at least 1 (the incident energy)")
        if not 0 < self.damping <= 1:
            problems.append("damping must lie in (0, 1]")
        if self.seed < 0:
            problems.append("seed must be non-negative")
        if not self.beta_max > self.beta_min:
            problems.append("beta_max must exceed beta_min")
        if self.n_beta < 2:
            problems.append("n_beta must be at least 2")
        if self.alpha_ratio < 0:
            problems.append("alpha_ratio must be non-negative")
        if self.scenario not in SCENARIOS:
            problems.append(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if problems:
            raise ConfigError("; ".join(problems))

    def resolved(self):
        """Config with scenario-specific defaults filled in for unset keys."""
        if self.scenario in ("fig9a", "fig9b"):
            upd = {k: v for k, v in _FIG9_DEFAULTS.items() if k not in self.explicit}
            return replace(self, **upd)
        return self

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, explicit=self.explicit | set(kw), **kw)

    def echo(self):
        d = asdict(self)
        d.pop("explicit")
        return d


_TYPES = {f.name: f.type for f in fields(RunConfig) if f.name != "explicit"}


def _convert(key, raw):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config(text, source="<string>"):
    """Parse configuration text; see :func:`load_config`."""
    values = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        key = key.lower().replace("-", "_")
        if not key or not raw:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key not in _TYPES:
            unknown.append(key)
            continue
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return RunConfig(**values, explicit=frozenset(values))


def load_config(path):
    """Read a flat ``key = value`` file (``#`` starts a comment).

    Missing keys take the documented defaults; unknown keys, malformed lines
    and constraint violations raise :class:`ConfigError`.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
